#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ebmut {

struct PositionId {
    std::string contig;
    std::int64_t coord = 0;

    auto operator<=>(const PositionId&) const = default;
    std::string label() const { return contig + ":" + std::to_string(coord); }
};

// Nonreference counts x and depths n, positions × samples, row-major.
// Immutable once constructed.
class PileupMatrix {
public:
    PileupMatrix() = default;
    // Validates shapes and 0 <= x <= n; sorts rows by position and rejects
    // duplicate positions.
    PileupMatrix(std::vector<PositionId> positions, std::vector<std::string> samples,
                 std::vector<char> reference_base, std::vector<std::int64_t> x,
                 std::vector<std::int64_t> n);

    std::size_t num_positions() const { return positions_.size(); }
    std::size_t num_samples() const { return samples_.size(); }

    const std::vector<PositionId>& positions() const { return positions_; }
    const std::vector<std::string>& samples() const { return samples_; }
    char reference_base(std::size_t i) const { return reference_base_[i]; }

    std::int64_t x(std::size_t i, std::size_t j) const { return x_[i * samples_.size() + j]; }
    std::int64_t n(std::size_t i, std::size_t j) const { return n_[i * samples_.size() + j]; }

    // x/n, or nullopt at zero depth.
    std::optional<double> observed_error_rate(std::size_t i, std::size_t j) const;

    PileupMatrix select_samples(const std::vector<std::size_t>& columns) const;

    bool same_positions(const PileupMatrix& other) const { return positions_ == other.positions_; }

private:
    std::vector<PositionId> positions_;
    std::vector<std::string> samples_;
    std::vector<char> reference_base_;
    std::vector<std::int64_t> x_;
    std::vector<std::int64_t> n_;
};

// Normal/tumor pair sharing positions and sample identifiers.
struct MatchedPileup {
    PileupMatrix normal;
    PileupMatrix tumor;
};

MatchedPileup make_matched(PileupMatrix normal, PileupMatrix tumor);

// Region partition of a pileup's positions, with optional genotype-candidate flags.
struct RegionMap {
    std::vector<int> region_id;
    std::vector<std::uint8_t> genotype_candidate;

    int num_regions() const;
};

enum class PileupFormat { unmatched, matched };

PileupMatrix read_pileup(std::istream& in, const std::string& source = "<stream>");
MatchedPileup read_matched_pileup(std::istream& in, const std::string& source = "<stream>");
PileupMatrix load_pileup(const std::string& path);
MatchedPileup load_matched_pileup(const std::string& path);
std::variant<PileupMatrix, MatchedPileup> load_pileup(const std::string& path, PileupFormat format);

void write_pileup(std::ostream& out, const PileupMatrix& m);
void write_matched_pileup(std::ostream& out, const MatchedPileup& m);

// `contig pos region_id` rows; every position of `m` must be covered.
RegionMap read_region_map(std::istream& in, const PileupMatrix& m, const std::string& source = "<stream>");
RegionMap load_region_map(const std::string& path, const PileupMatrix& m);

}  // namespace ebmut
