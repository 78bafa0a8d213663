#pragma once

#include "discrete_fdr.hpp"
#include "error_model.hpp"
#include "pileup.hpp"
#include "simgen.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ebmut {

enum class EmpiricalNullMode { off, on, automatic };

const char* to_string(EmpiricalNullMode m);
EmpiricalNullMode parse_empirical_null_mode(const std::string& s);
const char* to_string(PValueMode m);
PValueMode parse_pvalue_mode(const std::string& s);

struct PipelineConfig {
    double fdr_threshold = 0.1;
    double delta_threshold = 0.25;
    PValueMode mode = PValueMode::randomized;
    std::uint64_t seed = 0;
    int marginal_df = 7;
    int marginal_bins = 120;
    EmpiricalNullMode empirical_null = EmpiricalNullMode::automatic;
    std::size_t empirical_null_min = 100;
    std::size_t marginal_min = 200;
    // Multiply the rate difference by fdr instead of 1 − fdr.
    bool literal_delta = false;
    int histogram_bins = 50;
    FitOptions fit;

    void validate() const;
};

struct CallRecord {
    PositionId position;
    std::size_t position_index = 0;
    std::string sample;
    std::size_t sample_index = 0;
    // Normal counts; absent in the unmatched design.
    std::optional<std::int64_t> x;
    std::optional<std::int64_t> n;
    std::int64_t y = 0;  // clinical / tumor counts
    std::int64_t m = 0;
    double rate_normal = 0.0;  // x/N, or the fitted null rate when unmatched
    double rate_tumor = 0.0;   // y/M (NaN at zero depth)
    double r = 0.0;
    double r_tilde = 0.0;
    double fdr = 1.0;
    double delta_hat = 0.0;
    bool defined = false;
    bool called = false;
    std::vector<std::string> reasons;

    std::string reason_string() const;
};

struct QQPoint {
    double theoretical;
    double observed;
};

struct Diagnostics {
    int bins = 50;
    std::vector<std::size_t> r_hist;
    std::vector<std::size_t> r_tilde_hist;
    std::vector<QQPoint> qq_r;
    std::vector<QQPoint> qq_r_tilde;
    double qq_slope_r = 1.0;
    double qq_slope_r_tilde = 1.0;
    std::size_t count = 0;
};

// Binned r and r̃ over defined rows plus probit QQ series (thinned to at most
// max_qq points). Throws ValidationError on an empty table.
Diagnostics diagnostics(const FdrTable& table, int bins = 50, std::size_t max_qq = 1000);

// IQR of probit(values) over the IQR of the standard normal.
double qq_slope(std::span<const double> values);

struct CallResult {
    std::vector<CallRecord> records;
    FdrAnalysis fdr;
    Diagnostics diag;
    std::optional<ErrorModelParams> unmatched_model;
    std::optional<MatchedModelParams> matched_model;
    std::vector<std::string> notes;

    std::size_t num_called() const;
};

CallResult call_unmatched(const PileupMatrix& reference, const PileupMatrix& clinical, const PipelineConfig& cfg,
                          const ErrorModelParams* fitted_reference = nullptr, const RegionMap* regions = nullptr);

CallResult call_matched(const MatchedPileup& data, const PipelineConfig& cfg,
                        const MatchedModelParams* fitted = nullptr, const RegionMap* regions = nullptr);

// Throws NumericError if any record breaks called ⟺ thresholds.
void check_decisions(const std::vector<CallRecord>& records, const PipelineConfig& cfg, bool matched);

struct DetectionSummary {
    double fdr_threshold = 0.0;
    std::size_t planted = 0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
};

// Counts records with fdr <= threshold (and the effect filter in matched mode)
// against the truth table.
DetectionSummary summarize_detection(const std::vector<CallRecord>& records, const TruthTable& truth,
                                     double fdr_threshold, bool matched, double delta_threshold = 0.25);

}  // namespace ebmut
