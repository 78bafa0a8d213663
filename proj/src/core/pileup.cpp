#include "pileup.hpp"

#include "errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace ebmut {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& what) {
    throw ValidationError(source + ":" + std::to_string(line) + ": " + what);
}

std::int64_t parse_count(std::string_view field, const std::string& source, std::size_t line) {
    std::int64_t v = 0;
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(field.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        fail_at(source, line, "malformed integer '" + std::string(field) + "'");
    }
    if (v < 0) fail_at(source, line, "negative count");
    return v;
}

bool is_missing(std::string_view field) { return field == "NA" || field == "."; }

char parse_base(std::string_view field, const std::string& source, std::size_t line) {
    if (field.size() == 1) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(field[0])));
        if (c == 'A' || c == 'C' || c == 'G' || c == 'T') return c;
    }
    fail_at(source, line, "reference base must be one of A, C, G, T");
}

bool skip_line(const std::string& line) { return line.empty() || line[0] == '#'; }

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

struct ColumnSpec {
    std::string kind;  // x, n, xn, nn, xt, nt
    std::size_t sample;
};

// Maps header columns 3.. to (kind, sample index); samples in first-seen order.
std::vector<ColumnSpec> parse_header(const std::vector<std::string_view>& cols,
                                     const std::vector<std::string>& kinds,
                                     std::vector<std::string>& samples, const std::string& source) {
    if (cols.size() < 3 || cols[0] != "contig" || cols[1] != "pos" || cols[2] != "ref") {
        fail_at(source, 1, "header must start with contig, pos, ref");
    }
    std::unordered_map<std::string, std::size_t> index;
    std::vector<ColumnSpec> specs;
    std::set<std::pair<std::string, std::size_t>> seen;
    for (std::size_t c = 3; c < cols.size(); ++c) {
        const std::string_view col = cols[c];
        const std::size_t us = col.find('_');
        if (us == std::string_view::npos || us + 1 >= col.size()) {
            fail_at(source, 1, "unrecognised column '" + std::string(col) + "'");
        }
        const std::string kind(col.substr(0, us));
        const std::string name(col.substr(us + 1));
        if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
            fail_at(source, 1, "unrecognised column '" + std::string(col) + "'");
        }
        auto it = index.find(name);
        if (it == index.end()) {
            it = index.emplace(name, samples.size()).first;
            samples.push_back(name);
        }
        if (!seen.insert({kind, it->second}).second) {
            fail_at(source, 1, "duplicate column '" + std::string(col) + "'");
        }
        specs.push_back({kind, it->second});
    }
    if (samples.empty()) fail_at(source, 1, "no sample columns");
    for (std::size_t s = 0; s < samples.size(); ++s) {
        for (const auto& k : kinds) {
            if (!seen.count({k, s})) {
                fail_at(source, 1, "inconsistent sample columns: sample '" + samples[s] +
                                       "' lacks column " + k + "_" + samples[s]);
            }
        }
    }
    return specs;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open input file: " + path);
    return in;
}

}  // namespace

PileupMatrix::PileupMatrix(std::vector<PositionId> positions, std::vector<std::string> samples,
                           std::vector<char> reference_base, std::vector<std::int64_t> x,
                           std::vector<std::int64_t> n) {
    const std::size_t P = positions.size();
    const std::size_t S = samples.size();
    if (reference_base.size() != P || x.size() != P * S || n.size() != P * S) {
        throw ValidationError("pileup: matrix dimensions do not match positions x samples");
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k] < 0 || n[k] < 0) throw ValidationError("pileup: negative count");
        if (x[k] > n[k]) {
            throw ValidationError("pileup: count exceeds depth at " + positions[k / S].label() +
                                  " sample " + samples[k % S]);
        }
    }
    std::vector<std::size_t> order(P);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return positions[a] < positions[b]; });
    for (std::size_t k = 1; k < P; ++k) {
        if (positions[order[k]] == positions[order[k - 1]]) {
            throw ValidationError("pileup: duplicate position " + positions[order[k]].label());
        }
    }
    positions_.reserve(P);
    reference_base_.reserve(P);
    x_.reserve(P * S);
    n_.reserve(P * S);
    for (std::size_t i : order) {
        positions_.push_back(std::move(positions[i]));
        reference_base_.push_back(reference_base[i]);
        x_.insert(x_.end(), x.begin() + static_cast<std::ptrdiff_t>(i * S),
                  x.begin() + static_cast<std::ptrdiff_t>((i + 1) * S));
        n_.insert(n_.end(), n.begin() + static_cast<std::ptrdiff_t>(i * S),
                  n.begin() + static_cast<std::ptrdiff_t>((i + 1) * S));
    }
    samples_ = std::move(samples);
}

std::optional<double> PileupMatrix::observed_error_rate(std::size_t i, std::size_t j) const {
    const std::int64_t depth = n(i, j);
    if (depth == 0) return std::nullopt;
    return static_cast<double>(x(i, j)) / static_cast<double>(depth);
}

PileupMatrix PileupMatrix::select_samples(const std::vector<std::size_t>& columns) const {
    const std::size_t P = num_positions();
    std::vector<std::string> names;
    for (std::size_t c : columns) {
        if (c >= num_samples()) throw ValidationError("pileup: sample column out of range");
        names.push_back(samples_[c]);
    }
    std::vector<std::int64_t> xs, ns;
    xs.reserve(P * columns.size());
    ns.reserve(P * columns.size());
    for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t c : columns) {
            xs.push_back(x(i, c));
            ns.push_back(n(i, c));
        }
    }
    return PileupMatrix(positions_, std::move(names), reference_base_, std::move(xs), std::move(ns));
}

MatchedPileup make_matched(PileupMatrix normal, PileupMatrix tumor) {
    if (!normal.same_positions(tumor)) {
        throw ValidationError("matched pileup: position sets differ between normal and tumor");
    }
    if (normal.samples() != tumor.samples()) {
        throw ValidationError("matched pileup: normal and tumor samples are not paired");
    }
    for (std::size_t i = 0; i < normal.num_positions(); ++i) {
        if (normal.reference_base(i) != tumor.reference_base(i)) {
            throw ValidationError("matched pileup: reference bases differ at " +
                                  normal.positions()[i].label());
        }
    }
    return MatchedPileup{std::move(normal), std::move(tumor)};
}

int RegionMap::num_regions() const {
    int top = -1;
    for (int r : region_id) top = std::max(top, r);
    return top + 1;
}

PileupMatrix read_pileup(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> samples;
    std::vector<ColumnSpec> specs;
    bool have_header = false;
    std::vector<PositionId> positions;
    std::vector<char> bases;
    std::vector<std::int64_t> xs, ns;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(std::move(line));
        if (skip_line(line)) continue;
        const auto cols = split_tabs(line);
        if (!have_header) {
            specs = parse_header(cols, {"x", "n"}, samples, source);
            have_header = true;
            continue;
        }
        if (cols.size() != specs.size() + 3) {
            fail_at(source, line_no, "expected " + std::to_string(specs.size() + 3) + " fields, found " +
                                         std::to_string(cols.size()));
        }
        PositionId id{std::string(cols[0]), parse_count(cols[1], source, line_no)};
        const std::size_t S = samples.size();
        std::vector<std::int64_t> rx(S), rn(S);
        for (std::size_t c = 0; c < specs.size(); ++c) {
            const std::int64_t v = parse_count(cols[c + 3], source, line_no);
            (specs[c].kind == "x" ? rx : rn)[specs[c].sample] = v;
        }
        for (std::size_t s = 0; s < S; ++s) {
            if (rx[s] > rn[s]) fail_at(source, line_no, "count exceeds depth for sample " + samples[s]);
        }
        positions.push_back(std::move(id));
        bases.push_back(parse_base(cols[2], source, line_no));
        xs.insert(xs.end(), rx.begin(), rx.end());
        ns.insert(ns.end(), rn.begin(), rn.end());
    }
    if (!have_header) throw ValidationError(source + ": missing header");
    try {
        return PileupMatrix(std::move(positions), std::move(samples), std::move(bases), std::move(xs),
                            std::move(ns));
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
}

MatchedPileup read_matched_pileup(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> samples;
    std::vector<ColumnSpec> specs;
    bool have_header = false;
    std::vector<PositionId> normal_pos, tumor_pos;
    std::vector<char> normal_base, tumor_base;
    std::vector<std::int64_t> xn, nn, xt, nt;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(std::move(line));
        if (skip_line(line)) continue;
        const auto cols = split_tabs(line);
        if (!have_header) {
            specs = parse_header(cols, {"xn", "nn", "xt", "nt"}, samples, source);
            have_header = true;
            continue;
        }
        if (cols.size() != specs.size() + 3) {
            fail_at(source, line_no, "expected " + std::to_string(specs.size() + 3) + " fields, found " +
                                         std::to_string(cols.size()));
        }
        PositionId id{std::string(cols[0]), parse_count(cols[1], source, line_no)};
        const char base = parse_base(cols[2], source, line_no);
        const std::size_t S = samples.size();
        std::map<std::string, std::vector<std::int64_t>> row;
        for (const char* k : {"xn", "nn", "xt", "nt"}) row[k].assign(S, 0);
        bool normal_missing = false, tumor_missing = false, normal_present = false, tumor_present = false;
        for (std::size_t c = 0; c < specs.size(); ++c) {
            const bool tumor = specs[c].kind[1] == 't';
            if (is_missing(cols[c + 3])) {
                (tumor ? tumor_missing : normal_missing) = true;
                continue;
            }
            (tumor ? tumor_present : normal_present) = true;
            row[specs[c].kind][specs[c].sample] = parse_count(cols[c + 3], source, line_no);
        }
        if ((normal_missing && normal_present) || (tumor_missing && tumor_present)) {
            fail_at(source, line_no, "partially missing counts");
        }
        for (std::size_t s = 0; s < S; ++s) {
            if (row["xn"][s] > row["nn"][s] || row["xt"][s] > row["nt"][s]) {
                fail_at(source, line_no, "count exceeds depth for sample " + samples[s]);
            }
        }
        if (!normal_missing) {
            normal_pos.push_back(id);
            normal_base.push_back(base);
            xn.insert(xn.end(), row["xn"].begin(), row["xn"].end());
            nn.insert(nn.end(), row["nn"].begin(), row["nn"].end());
        }
        if (!tumor_missing) {
            tumor_pos.push_back(id);
            tumor_base.push_back(base);
            xt.insert(xt.end(), row["xt"].begin(), row["xt"].end());
            nt.insert(nt.end(), row["nt"].begin(), row["nt"].end());
        }
    }
    if (!have_header) throw ValidationError(source + ": missing header");
    try {
        PileupMatrix normal(std::move(normal_pos), samples, std::move(normal_base), std::move(xn),
                            std::move(nn));
        PileupMatrix tumor(std::move(tumor_pos), samples, std::move(tumor_base), std::move(xt),
                           std::move(nt));
        return make_matched(std::move(normal), std::move(tumor));
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
}

PileupMatrix load_pileup(const std::string& path) {
    auto in = open_input(path);
    return read_pileup(in, path);
}

MatchedPileup load_matched_pileup(const std::string& path) {
    auto in = open_input(path);
    return read_matched_pileup(in, path);
}

std::variant<PileupMatrix, MatchedPileup> load_pileup(const std::string& path, PileupFormat format) {
    if (format == PileupFormat::matched) return load_matched_pileup(path);
    return load_pileup(path);
}

void write_pileup(std::ostream& out, const PileupMatrix& m) {
    out << "contig\tpos\tref";
    for (const auto& s : m.samples()) out << "\tx_" << s << "\tn_" << s;
    out << '\n';
    for (std::size_t i = 0; i < m.num_positions(); ++i) {
        out << m.positions()[i].contig << '\t' << m.positions()[i].coord << '\t' << m.reference_base(i);
        for (std::size_t j = 0; j < m.num_samples(); ++j) out << '\t' << m.x(i, j) << '\t' << m.n(i, j);
        out << '\n';
    }
}

void write_matched_pileup(std::ostream& out, const MatchedPileup& m) {
    out << "contig\tpos\tref";
    for (const auto& s : m.normal.samples()) out << "\txn_" << s << "\tnn_" << s << "\txt_" << s << "\tnt_" << s;
    out << '\n';
    for (std::size_t i = 0; i < m.normal.num_positions(); ++i) {
        out << m.normal.positions()[i].contig << '\t' << m.normal.positions()[i].coord << '\t'
            << m.normal.reference_base(i);
        for (std::size_t j = 0; j < m.normal.num_samples(); ++j) {
            out << '\t' << m.normal.x(i, j) << '\t' << m.normal.n(i, j) << '\t' << m.tumor.x(i, j) << '\t'
                << m.tumor.n(i, j);
        }
        out << '\n';
    }
}

RegionMap read_region_map(std::istream& in, const PileupMatrix& m, const std::string& source) {
    std::map<PositionId, int> lookup;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(std::move(line));
        if (skip_line(line)) continue;
        const auto cols = split_tabs(line);
        if (!header_seen && cols.size() >= 1 && cols[0] == "contig") {
            header_seen = true;
            continue;
        }
        if (cols.size() != 3) fail_at(source, line_no, "expected 3 fields: contig pos region_id");
        PositionId id{std::string(cols[0]), parse_count(cols[1], source, line_no)};
        const auto region = static_cast<int>(parse_count(cols[2], source, line_no));
        if (!lookup.emplace(std::move(id), region).second) fail_at(source, line_no, "duplicate position");
    }
    RegionMap map;
    map.region_id.reserve(m.num_positions());
    for (const auto& pos : m.positions()) {
        const auto it = lookup.find(pos);
        if (it == lookup.end()) {
            throw ValidationError(source + ": no region for position " + pos.label());
        }
        map.region_id.push_back(it->second);
    }
    return map;
}

RegionMap load_region_map(const std::string& path, const PileupMatrix& m) {
    auto in = open_input(path);
    return read_region_map(in, m, path);
}

}  // namespace ebmut
