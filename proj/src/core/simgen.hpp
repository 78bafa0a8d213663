#pragma once

#include "pileup.hpp"
#include "statfun.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ebmut {

struct DepthLaw {
    enum class Kind { constant, log_uniform, quantile_table };
    Kind kind = Kind::constant;
    double value = 1000.0;          // constant
    double lo = 100.0, hi = 1000.0;  // log_uniform
    // (cumulative probability, depth) pairs with increasing probability;
    // log-linear interpolation between them.
    std::vector<std::pair<double, double>> table;
    double zero_fraction = 0.0;
    // Correlation, on the probit scale of the depth quantile, between samples
    // at the same position.
    double position_correlation = 0.0;

    std::int64_t draw(double u) const;
};

// μ ~ log-uniform on [lo, hi]
struct RateLaw {
    double lo = 1e-3;
    double hi = 1e-3;
};

enum class SampleRole { reference, clinical, pair, control };

const char* to_string(SampleRole r);
SampleRole parse_sample_role(const std::string& s);

struct SampleSpec {
    std::string name;
    SampleRole role = SampleRole::clinical;
    double delta = 0.0;
    double sigma = 0.0;
    double eta = 0.0;  // matched only
    double tau = 0.0;
};

struct PlantedMutation {
    std::size_t position = 0;
    std::vector<std::string> samples;  // empty: every clinical / tumor sample
    double prevalence = 0.0;
};

enum class Design { unmatched, matched };

struct SimScenario {
    std::string name = "custom";
    Design design = Design::unmatched;
    std::size_t positions = 0;
    std::string contig = "chr1";
    std::uint64_t seed = 0;
    DepthLaw depth;
    RateLaw mu;
    double snp_fraction = 0.0;  // matched: germline het/hom-alt share per (position, sample)
    std::vector<SampleSpec> samples;
    std::vector<PlantedMutation> planted;
    // Additional planted mutations at `random_planted_count` positions. The
    // positions come from `layout_seed`, so reseeding redraws counts only.
    std::size_t random_planted_count = 0;
    double random_planted_prevalence = 0.0;
    std::size_t random_planted_per_sample = 0;  // matched: positions per tumor sample
    std::uint64_t layout_seed = 0;

    void validate() const;
};

std::vector<std::string> scenario_presets();
// Throws ValidationError listing the presets for an unknown name.
SimScenario preset_scenario(const std::string& name, std::uint64_t seed);

struct TruthEntry {
    PositionId position;
    std::size_t position_index = 0;
    std::string sample;
    double prevalence = 0.0;
};

struct TruthTable {
    std::vector<TruthEntry> entries;

    bool planted(std::size_t position_index, const std::string& sample) const;
};

struct SimResult {
    // Unmatched: reference and clinical columns split; matched: normal/tumor pairs.
    std::optional<PileupMatrix> reference;
    std::optional<PileupMatrix> clinical;
    std::optional<MatchedPileup> matched;
    TruthTable truth;
    std::vector<double> mu;  // true positional rates
};

SimResult simulate(const SimScenario& s);

// Exact local fdr of the two-group model w·F + (1−w)·A over the union support.
// nullopt where both laws put zero mass.
struct OracleFdr {
    std::int64_t lo = 0;
    std::vector<std::optional<double>> fdr;

    std::optional<double> at(std::int64_t x) const;
};

OracleFdr exact_fdr_oracle(const DiscreteDist& null, const DiscreteDist& alt, double w);

// Random pairs of finite pmfs with full support on a shared range of 2 to 30 points.
std::vector<std::pair<DiscreteDist, DiscreteDist>> random_distribution_pairs(std::uint64_t seed, std::size_t count);

// Inverse-cdf draw from a finite discrete law (truncated mass goes to the top point).
std::int64_t draw_discrete(const DiscreteDist& d, double u);

}  // namespace ebmut
