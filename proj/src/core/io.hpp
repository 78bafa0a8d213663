#pragma once

#include "caller.hpp"
#include "discrete_fdr.hpp"
#include "error_model.hpp"
#include "simgen.hpp"

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ebmut {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// Shortest text that parses back to the same double; "NA" for NaN.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
// Digest of a file's bytes; IoError naming the path if it cannot be read.
std::uint64_t file_digest(const std::string& path);

// ---------------------------------------------------------------------------
// Model documents
// ---------------------------------------------------------------------------

struct ModelDocument {
    std::optional<ErrorModelParams> unmatched;
    std::optional<MatchedModelParams> matched;
    std::vector<EmpiricalNull> empirical_nulls;
    std::optional<MarginalDensity> marginal;
};

std::string model_to_json(const ModelDocument& doc);
ModelDocument model_from_json(const std::string& text, const std::string& source = "<model>");
void save_model(const std::string& path, const ModelDocument& doc);
ModelDocument load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

// `# ebmut <version> manifest=<digest> config=<fingerprint> seed=<seed>`
struct OutputHeader {
    std::string manifest_digest;
    std::string config_fingerprint;
    std::uint64_t seed = 0;

    std::string line() const;
};

void write_fdr_table(std::ostream& out, const FdrTable& table, const OutputHeader* header = nullptr);
void write_calls(std::ostream& out, const std::vector<CallRecord>& records, const OutputHeader* header = nullptr);
void write_histogram(std::ostream& out, const Diagnostics& d, const OutputHeader* header = nullptr);
void write_qq(std::ostream& out, const Diagnostics& d, const OutputHeader* header = nullptr);

FdrTable read_fdr_table(std::istream& in, const std::string& source = "<fdr table>");

void write_truth(std::ostream& out, const TruthTable& truth, const OutputHeader* header = nullptr);
// Resolves each row to a position index of `positions`.
TruthTable read_truth(std::istream& in, const std::vector<PositionId>& positions, const std::string& source = "<truth>");
TruthTable load_truth(const std::string& path, const std::vector<PositionId>& positions);

// Opens for writing, IoError naming the path on failure.
std::ofstream open_output(const std::string& path);

// ---------------------------------------------------------------------------
// Scenarios and configuration
// ---------------------------------------------------------------------------

// A "preset" key starts from that preset; remaining keys override it.
SimScenario scenario_from_json(const std::string& text, std::uint64_t default_seed = 0,
                               const std::string& source = "<scenario>");
SimScenario load_scenario(const std::string& path, std::uint64_t default_seed = 0);
std::string scenario_to_json(const SimScenario& s);

// Applies keys of a flat JSON object onto cfg; unknown keys are rejected.
void apply_config_json(PipelineConfig& cfg, const std::string& text, const std::string& source = "<config>");
std::string config_to_json(const PipelineConfig& cfg);
std::string config_fingerprint(const PipelineConfig& cfg);

// "poisson:<lambda>", "binomial:<n>:<p>", "betabinomial:<n>:<alpha>:<beta>" or
// "pmf:<p0>,<p1>,...". Poisson supports extend at least to min_hi.
DiscreteDist parse_distribution(const std::string& spec, std::int64_t min_hi = 0);

}  // namespace ebmut
