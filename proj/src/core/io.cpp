#include "io.hpp"

#include "errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace ebmut {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(source + ": invalid JSON: " + e.what());
    }
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t at = line.find(sep, start);
        if (at == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, at - start));
        start = at + 1;
    }
}

double parse_number(std::string_view field, const std::string& source, std::size_t line) {
    if (field == "NA") return kNaN;
    double v = 0.0;
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(field.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ValidationError(source + ":" + std::to_string(line) + ": malformed number '" + std::string(field) + "'");
    }
    return v;
}

void write_header(std::ostream& out, const OutputHeader* header) {
    if (header) out << header->line() << '\n';
}

// --- model pieces ---------------------------------------------------------

json params_to_json(const ErrorModelParams& p) {
    json pos = json::object();
    json contig = json::array(), coord = json::array(), mu = json::array(), est = json::array(), var = json::array();
    for (std::size_t i = 0; i < p.positions.size(); ++i) {
        contig.push_back(p.positions[i].contig);
        coord.push_back(p.positions[i].coord);
        mu.push_back(number_or_null(p.mu[i]));
        est.push_back(static_cast<bool>(p.estimable[i]));
        var.push_back(p.extra_var[i]);
    }
    pos["contig"] = contig;
    pos["pos"] = coord;
    pos["mu"] = mu;
    pos["estimable"] = est;
    pos["consensus_var"] = var;

    json samples = json::array();
    for (std::size_t j = 0; j < p.samples.size(); ++j) {
        json region = json::array();
        if (j < p.region_sigma.size()) {
            for (double v : p.region_sigma[j]) region.push_back(number_or_null(v));
        }
        samples.push_back({{"name", p.samples[j]},
                           {"delta", p.delta[j]},
                           {"sigma", p.sigma[j]},
                           {"sigma_method", j < p.sigma_method.size() ? p.sigma_method[j] : std::string()},
                           {"region_sigma", region}});
    }
    json fit = {{"method", p.meta.method},
                {"pseudocount", p.meta.pseudocount},
                {"region_quantile", p.meta.region_quantile},
                {"seed", p.meta.seed},
                {"notes", p.meta.notes}};
    return {{"fit", fit}, {"positions", pos}, {"samples", samples}};
}

ErrorModelParams params_from_json(const json& j) {
    ErrorModelParams p;
    const json& fit = j.at("fit");
    p.meta.method = fit.at("method").get<std::string>();
    p.meta.pseudocount = fit.at("pseudocount").get<double>();
    p.meta.region_quantile = fit.at("region_quantile").get<double>();
    p.meta.seed = fit.at("seed").get<std::uint64_t>();
    p.meta.notes = fit.value("notes", std::vector<std::string>{});

    const json& pos = j.at("positions");
    const auto& contig = pos.at("contig");
    const std::size_t P = contig.size();
    for (const char* key : {"pos", "mu", "estimable", "consensus_var"}) {
        if (pos.at(key).size() != P) throw ValidationError(std::string("model: positions.") + key + " has the wrong length");
    }
    for (std::size_t i = 0; i < P; ++i) {
        p.positions.push_back({contig[i].get<std::string>(), pos["pos"][i].get<std::int64_t>()});
        p.mu.push_back(number_or_nan(pos["mu"][i]));
        p.estimable.push_back(pos["estimable"][i].get<bool>() ? 1 : 0);
        p.extra_var.push_back(pos["consensus_var"][i].get<double>());
        if (p.estimable.back() && !(p.mu.back() > 0.0 && p.mu.back() < 1.0)) {
            throw ValidationError("model: mu must lie in (0, 1) at estimable positions");
        }
    }
    for (const auto& s : j.at("samples")) {
        p.samples.push_back(s.at("name").get<std::string>());
        p.delta.push_back(s.at("delta").get<double>());
        p.sigma.push_back(s.at("sigma").get<double>());
        p.sigma_method.push_back(s.value("sigma_method", std::string()));
        std::vector<double> region;
        for (const auto& v : s.value("region_sigma", json::array())) region.push_back(number_or_nan(v));
        p.region_sigma.push_back(std::move(region));
        if (!(p.sigma.back() >= 0.0)) throw ValidationError("model: sigma must be nonnegative");
    }
    return p;
}

json genotypes_to_json(const GenotypeAssignment& g) {
    json calls = json::array(), post = json::array();
    for (std::size_t k = 0; k < g.genotype.size(); ++k) {
        calls.push_back(static_cast<int>(g.genotype[k]));
        post.push_back(g.posterior[k]);
    }
    return {{"num_samples", g.num_samples}, {"candidates", g.candidates}, {"genotype", calls},
            {"posterior", post},           {"genotype_mu", g.genotype_mu}, {"inflated", g.inflated}};
}

GenotypeAssignment genotypes_from_json(const json& j) {
    GenotypeAssignment g;
    g.num_samples = j.at("num_samples").get<std::size_t>();
    g.candidates = j.at("candidates").get<std::vector<std::size_t>>();
    for (const auto& v : j.at("genotype")) {
        const int k = v.get<int>();
        if (k < 0 || k > 2) throw ValidationError("model: genotype code must be 0, 1 or 2");
        g.genotype.push_back(static_cast<Genotype>(k));
    }
    g.posterior = j.at("posterior").get<std::vector<std::array<double, 3>>>();
    g.genotype_mu = j.at("genotype_mu").get<std::vector<std::array<double, 3>>>();
    g.inflated = j.at("inflated").get<std::vector<std::uint8_t>>();
    const std::size_t C = g.candidates.size();
    if (g.genotype.size() != C * g.num_samples || g.posterior.size() != C * g.num_samples ||
        g.genotype_mu.size() != C || g.inflated.size() != C) {
        throw ValidationError("model: genotype arrays have inconsistent lengths");
    }
    return g;
}

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) v = 0.0;
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t file_digest(const std::string& path) { return fnv1a64(read_file(path)); }

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    return out;
}

// ---------------------------------------------------------------------------

std::string model_to_json(const ModelDocument& doc) {
    json j;
    j["format_version"] = kModelFormatVersion;
    j["tool_version"] = kToolVersion;
    if (doc.matched) {
        const MatchedModelParams& m = *doc.matched;
        j["design"] = "matched";
        j["normal"] = params_to_json(m.base);
        json tumor = json::array();
        for (std::size_t k = 0; k < m.eta.size(); ++k) {
            json region = json::array();
            if (k < m.region_tau.size()) {
                for (double v : m.region_tau[k]) region.push_back(number_or_null(v));
            }
            tumor.push_back({{"name", m.base.samples[k]}, {"eta", m.eta[k]}, {"tau", m.tau[k]}, {"region_tau", region}});
        }
        j["tumor"] = tumor;
        j["genotypes"] = genotypes_to_json(m.genotypes);
        j["genotype_inflation"] = m.genotype_inflation;
        j["quadrature_nodes"] = m.quadrature_nodes;
    } else if (doc.unmatched) {
        j["design"] = "unmatched";
        j["model"] = params_to_json(*doc.unmatched);
    } else {
        throw ValidationError("model document holds no parameters");
    }
    if (!doc.empirical_nulls.empty()) {
        json en = json::array();
        for (const auto& e : doc.empirical_nulls) en.push_back({{"location", e.location}, {"scale", e.scale}});
        j["empirical_nulls"] = en;
    }
    if (doc.marginal) {
        const MarginalDensity& m = *doc.marginal;
        j["marginal"] = {{"z_lo", m.z_lo()},
                         {"z_hi", m.z_hi()},
                         {"knots", m.knots()},
                         {"coefficients", m.coefficients()},
                         {"df", m.df()},
                         {"bins", m.bins()},
                         {"log_normalizer", m.log_normalizer()}};
    }
    return j.dump(2) + "\n";
}

ModelDocument model_from_json(const std::string& text, const std::string& source) {
    const json j = parse_json(text, source);
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw ValidationError(source + ": unsupported model format version " + std::to_string(version));
        }
        ModelDocument doc;
        const std::string design = j.at("design").get<std::string>();
        if (design == "unmatched") {
            doc.unmatched = params_from_json(j.at("model"));
        } else if (design == "matched") {
            MatchedModelParams m;
            m.base = params_from_json(j.at("normal"));
            for (const auto& t : j.at("tumor")) {
                m.eta.push_back(t.at("eta").get<double>());
                m.tau.push_back(t.at("tau").get<double>());
                std::vector<double> region;
                for (const auto& v : t.value("region_tau", json::array())) region.push_back(number_or_nan(v));
                m.region_tau.push_back(std::move(region));
            }
            if (m.eta.size() != m.base.samples.size()) throw ValidationError("model: tumor and normal sample counts differ");
            m.genotypes = genotypes_from_json(j.at("genotypes"));
            m.genotype_inflation = j.value("genotype_inflation", 1.5);
            m.quadrature_nodes = j.value("quadrature_nodes", 32);
            doc.matched = std::move(m);
        } else {
            throw ValidationError(source + ": unknown design '" + design + "'");
        }
        if (j.contains("empirical_nulls")) {
            for (const auto& e : j["empirical_nulls"]) {
                const double scale = e.at("scale").get<double>();
                if (!(scale > 0.0)) throw ValidationError(source + ": empirical null scale must be positive");
                doc.empirical_nulls.push_back({e.at("location").get<double>(), scale});
            }
        }
        if (j.contains("marginal")) {
            const json& m = j["marginal"];
            doc.marginal = MarginalDensity(m.at("z_lo").get<double>(), m.at("z_hi").get<double>(),
                                           m.at("knots").get<std::vector<double>>(),
                                           m.at("coefficients").get<std::vector<double>>(), m.at("df").get<int>(),
                                           m.at("bins").get<int>());
        }
        return doc;
    } catch (const json::exception& e) {
        throw ValidationError(source + ": malformed model: " + e.what());
    }
}

void save_model(const std::string& path, const ModelDocument& doc) {
    auto out = open_output(path);
    out << model_to_json(doc);
    if (!out) throw IoError("failed writing '" + path + "'");
}

ModelDocument load_model(const std::string& path) { return model_from_json(read_file(path), path); }

// ---------------------------------------------------------------------------

std::string OutputHeader::line() const {
    return std::string("# ebmut ") + kToolVersion + " manifest=" + manifest_digest + " config=" + config_fingerprint +
           " seed=" + std::to_string(seed);
}

void write_fdr_table(std::ostream& out, const FdrTable& t, const OutputHeader* header) {
    write_header(out, header);
    out << "id,r,r_tilde,interval_lo,interval_hi,f_marg,fdr\n";
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const FdrRow& r = t.rows[k];
        out << (k < t.ids.size() ? t.ids[k] : std::to_string(k)) << ',';
        if (r.defined) {
            out << format_double(r.r) << ',' << format_double(r.r_tilde) << ',' << format_double(r.interval_lo) << ','
                << format_double(r.interval_hi) << ',' << format_double(r.f_marg) << ',' << format_double(r.fdr) << '\n';
        } else {
            out << "NA,NA,NA,NA,NA," << format_double(r.fdr) << '\n';
        }
    }
}

FdrTable read_fdr_table(std::istream& in, const std::string& source) {
    FdrTable t;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto f = split(line, ',');
        if (!header) {
            if (f.size() < 7 || f[0] != "id" || f[1] != "r" || f[2] != "r_tilde") {
                throw ValidationError(source + ":" + std::to_string(lineno) + ": expected an fdr table header");
            }
            header = true;
            continue;
        }
        if (f.size() != 7) throw ValidationError(source + ":" + std::to_string(lineno) + ": expected 7 fields");
        FdrRow r;
        r.r = parse_number(f[1], source, lineno);
        r.r_tilde = parse_number(f[2], source, lineno);
        r.interval_lo = parse_number(f[3], source, lineno);
        r.interval_hi = parse_number(f[4], source, lineno);
        r.f_marg = parse_number(f[5], source, lineno);
        r.fdr = parse_number(f[6], source, lineno);
        r.defined = !std::isnan(r.r);
        if (r.defined && !(r.r >= 0.0 && r.r <= 1.0 && r.r_tilde >= 0.0 && r.r_tilde <= 1.0)) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": p-values must lie in [0, 1]");
        }
        t.ids.emplace_back(f[0]);
        t.rows.push_back(r);
    }
    if (!header) throw ValidationError(source + ": empty fdr table");
    return t;
}

void write_calls(std::ostream& out, const std::vector<CallRecord>& records, const OutputHeader* header) {
    write_header(out, header);
    out << "contig,pos,sample,x,n,y,m,rate_normal,rate_tumor,r,r_tilde,fdr,delta_hat,called,reasons\n";
    for (const auto& r : records) {
        out << r.position.contig << ',' << r.position.coord << ',' << r.sample << ','
            << (r.x ? std::to_string(*r.x) : "NA") << ',' << (r.n ? std::to_string(*r.n) : "NA") << ',' << r.y << ','
            << r.m << ',' << format_double(r.rate_normal) << ',' << format_double(r.rate_tumor) << ','
            << format_double(r.r) << ',' << format_double(r.r_tilde) << ',' << format_double(r.fdr) << ','
            << format_double(r.delta_hat) << ',' << (r.called ? 1 : 0) << ',' << r.reason_string() << '\n';
    }
}

void write_histogram(std::ostream& out, const Diagnostics& d, const OutputHeader* header) {
    write_header(out, header);
    out << "bin,lo,hi,r_count,r_tilde_count\n";
    for (int k = 0; k < d.bins; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        out << k << ',' << format_double(static_cast<double>(k) / d.bins) << ','
            << format_double(static_cast<double>(k + 1) / d.bins) << ',' << d.r_hist[uk] << ',' << d.r_tilde_hist[uk]
            << '\n';
    }
}

void write_qq(std::ostream& out, const Diagnostics& d, const OutputHeader* header) {
    write_header(out, header);
    out << "series,theoretical,observed\n";
    for (const auto& q : d.qq_r) out << "r," << format_double(q.theoretical) << ',' << format_double(q.observed) << '\n';
    for (const auto& q : d.qq_r_tilde) {
        out << "r_tilde," << format_double(q.theoretical) << ',' << format_double(q.observed) << '\n';
    }
}

void write_truth(std::ostream& out, const TruthTable& truth, const OutputHeader* header) {
    write_header(out, header);
    out << "contig,pos,sample,prevalence\n";
    for (const auto& e : truth.entries) {
        out << e.position.contig << ',' << e.position.coord << ',' << e.sample << ',' << format_double(e.prevalence)
            << '\n';
    }
}

TruthTable read_truth(std::istream& in, const std::vector<PositionId>& positions, const std::string& source) {
    std::map<PositionId, std::size_t> index;
    for (std::size_t i = 0; i < positions.size(); ++i) index[positions[i]] = i;
    TruthTable t;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto f = split(line, ',');
        if (!header) {
            if (f.size() != 4 || f[0] != "contig") throw ValidationError(source + ":" + std::to_string(lineno) + ": expected truth header");
            header = true;
            continue;
        }
        if (f.size() != 4) throw ValidationError(source + ":" + std::to_string(lineno) + ": expected 4 fields");
        const PositionId id{std::string(f[0]), static_cast<std::int64_t>(parse_number(f[1], source, lineno))};
        const auto it = index.find(id);
        if (it == index.end()) throw ValidationError(source + ":" + std::to_string(lineno) + ": unknown position " + id.label());
        t.entries.push_back({id, it->second, std::string(f[2]), parse_number(f[3], source, lineno)});
    }
    return t;
}

TruthTable load_truth(const std::string& path, const std::vector<PositionId>& positions) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_truth(in, positions, path);
}

// ---------------------------------------------------------------------------

SimScenario scenario_from_json(const std::string& text, std::uint64_t default_seed, const std::string& source) {
    const json j = parse_json(text, source);
    if (!j.is_object()) throw ValidationError(source + ": scenario must be a JSON object");
    try {
        const std::uint64_t seed = j.value("seed", default_seed);
        SimScenario s = j.contains("preset") ? preset_scenario(j["preset"].get<std::string>(), seed) : SimScenario{};
        s.seed = seed;
        for (const auto& [key, v] : j.items()) {
            if (key == "preset" || key == "seed") continue;
            if (key == "name") s.name = v.get<std::string>();
            else if (key == "design") {
                const auto d = v.get<std::string>();
                if (d != "unmatched" && d != "matched") throw ValidationError(source + ": design must be unmatched or matched");
                s.design = d == "matched" ? Design::matched : Design::unmatched;
            } else if (key == "positions") s.positions = v.get<std::size_t>();
            else if (key == "contig") s.contig = v.get<std::string>();
            else if (key == "snp_fraction") s.snp_fraction = v.get<double>();
            else if (key == "mu") {
                s.mu.lo = v.at("lo").get<double>();
                s.mu.hi = v.at("hi").get<double>();
            } else if (key == "depth") {
                const auto kind = v.at("kind").get<std::string>();
                DepthLaw d;
                if (kind == "constant") {
                    d.kind = DepthLaw::Kind::constant;
                    d.value = v.at("value").get<double>();
                } else if (kind == "log_uniform") {
                    d.kind = DepthLaw::Kind::log_uniform;
                    d.lo = v.at("lo").get<double>();
                    d.hi = v.at("hi").get<double>();
                } else if (kind == "quantile_table") {
                    d.kind = DepthLaw::Kind::quantile_table;
                    for (const auto& row : v.at("table")) d.table.emplace_back(row.at(0).get<double>(), row.at(1).get<double>());
                } else {
                    throw ValidationError(source + ": depth kind must be constant, log_uniform or quantile_table");
                }
                d.zero_fraction = v.value("zero_fraction", 0.0);
                d.position_correlation = v.value("position_correlation", 0.0);
                s.depth = d;
            } else if (key == "samples") {
                s.samples.clear();
                for (const auto& sp : v) {
                    SampleSpec x;
                    x.name = sp.at("name").get<std::string>();
                    x.role = parse_sample_role(sp.at("role").get<std::string>());
                    x.delta = sp.value("delta", 0.0);
                    x.sigma = sp.value("sigma", 0.0);
                    x.eta = sp.value("eta", 0.0);
                    x.tau = sp.value("tau", 0.0);
                    s.samples.push_back(x);
                }
            } else if (key == "planted") {
                s.planted.clear();
                for (const auto& pm : v) {
                    PlantedMutation m;
                    m.position = pm.at("position").get<std::size_t>();
                    m.prevalence = pm.at("prevalence").get<double>();
                    m.samples = pm.value("samples", std::vector<std::string>{});
                    s.planted.push_back(m);
                }
            } else if (key == "random_planted") {
                s.random_planted_count = v.value("count", std::size_t{0});
                s.random_planted_per_sample = v.value("per_sample", std::size_t{0});
                s.random_planted_prevalence = v.at("prevalence").get<double>();
                s.layout_seed = v.value("layout_seed", std::uint64_t{0});
            } else {
                throw ValidationError(source + ": unknown scenario key '" + key + "'");
            }
        }
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw ValidationError(source + ": malformed scenario: " + e.what());
    }
}

SimScenario load_scenario(const std::string& path, std::uint64_t default_seed) {
    return scenario_from_json(read_file(path), default_seed, path);
}

std::string scenario_to_json(const SimScenario& s) {
    json j;
    j["name"] = s.name;
    j["design"] = s.design == Design::matched ? "matched" : "unmatched";
    j["positions"] = s.positions;
    j["contig"] = s.contig;
    j["seed"] = s.seed;
    j["snp_fraction"] = s.snp_fraction;
    j["mu"] = {{"lo", s.mu.lo}, {"hi", s.mu.hi}};
    json d;
    switch (s.depth.kind) {
    case DepthLaw::Kind::constant:
        d = {{"kind", "constant"}, {"value", s.depth.value}};
        break;
    case DepthLaw::Kind::log_uniform:
        d = {{"kind", "log_uniform"}, {"lo", s.depth.lo}, {"hi", s.depth.hi}};
        break;
    case DepthLaw::Kind::quantile_table: {
        json table = json::array();
        for (const auto& [q, v] : s.depth.table) table.push_back({q, v});
        d = {{"kind", "quantile_table"}, {"table", table}};
        break;
    }
    }
    d["zero_fraction"] = s.depth.zero_fraction;
    d["position_correlation"] = s.depth.position_correlation;
    j["depth"] = d;
    json samples = json::array();
    for (const auto& sp : s.samples) {
        samples.push_back({{"name", sp.name}, {"role", to_string(sp.role)}, {"delta", sp.delta}, {"sigma", sp.sigma},
                           {"eta", sp.eta}, {"tau", sp.tau}});
    }
    j["samples"] = samples;
    json planted = json::array();
    for (const auto& m : s.planted) {
        planted.push_back({{"position", m.position}, {"prevalence", m.prevalence}, {"samples", m.samples}});
    }
    j["planted"] = planted;
    if (s.random_planted_count > 0 || s.random_planted_per_sample > 0) {
        j["random_planted"] = {{"count", s.random_planted_count},
                               {"per_sample", s.random_planted_per_sample},
                               {"prevalence", s.random_planted_prevalence},
                               {"layout_seed", s.layout_seed}};
    }
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

void apply_config_json(PipelineConfig& cfg, const std::string& text, const std::string& source) {
    const json j = parse_json(text, source);
    if (!j.is_object()) throw ValidationError(source + ": config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "fdr_threshold") cfg.fdr_threshold = v.get<double>();
            else if (key == "delta_threshold") cfg.delta_threshold = v.get<double>();
            else if (key == "mode") cfg.mode = parse_pvalue_mode(v.get<std::string>());
            else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
            else if (key == "df") cfg.marginal_df = v.get<int>();
            else if (key == "bins") cfg.marginal_bins = v.get<int>();
            else if (key == "empirical_null") cfg.empirical_null = parse_empirical_null_mode(v.get<std::string>());
            else if (key == "empirical_null_min") cfg.empirical_null_min = v.get<std::size_t>();
            else if (key == "marginal_min") cfg.marginal_min = v.get<std::size_t>();
            else if (key == "literal_delta") cfg.literal_delta = v.get<bool>();
            else if (key == "histogram_bins") cfg.histogram_bins = v.get<int>();
            else if (key == "method") cfg.fit.method = parse_sigma_method(v.get<std::string>());
            else if (key == "pseudocount") cfg.fit.pseudocount = v.get<double>();
            else if (key == "region_quantile") cfg.fit.region_quantile = v.get<double>();
            else if (key == "trim_mads") cfg.fit.trim_mads = v.get<double>();
            else if (key == "min_positions") cfg.fit.min_positions = v.get<std::size_t>();
            else if (key == "moments_max_share") cfg.fit.moments_max_share = v.get<double>();
            else if (key == "reference_passes") cfg.fit.reference_passes = v.get<int>();
            else if (key == "genotype_inflation") cfg.fit.genotype_inflation = v.get<double>();
            else if (key == "quadrature_nodes") cfg.fit.quadrature_nodes = v.get<int>();
            else throw ValidationError(source + ": unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ValidationError(source + ": malformed config: " + e.what());
    }
    cfg.fit.seed = cfg.seed;
}

std::string config_to_json(const PipelineConfig& cfg) {
    json j = {{"fdr_threshold", cfg.fdr_threshold},
              {"delta_threshold", cfg.delta_threshold},
              {"mode", to_string(cfg.mode)},
              {"seed", cfg.seed},
              {"df", cfg.marginal_df},
              {"bins", cfg.marginal_bins},
              {"empirical_null", to_string(cfg.empirical_null)},
              {"empirical_null_min", cfg.empirical_null_min},
              {"marginal_min", cfg.marginal_min},
              {"literal_delta", cfg.literal_delta},
              {"histogram_bins", cfg.histogram_bins},
              {"method", to_string(cfg.fit.method)},
              {"pseudocount", cfg.fit.pseudocount},
              {"region_quantile", cfg.fit.region_quantile},
              {"trim_mads", cfg.fit.trim_mads},
              {"min_positions", cfg.fit.min_positions},
              {"moments_max_share", cfg.fit.moments_max_share},
              {"reference_passes", cfg.fit.reference_passes},
              {"genotype_inflation", cfg.fit.genotype_inflation},
              {"quadrature_nodes", cfg.fit.quadrature_nodes}};
    return j.dump();
}

std::string config_fingerprint(const PipelineConfig& cfg) { return hex64(fnv1a64(config_to_json(cfg))); }

DiscreteDist parse_distribution(const std::string& spec, std::int64_t min_hi) {
    const auto parts = split(spec, ':');
    auto num = [&](std::size_t k) { return parse_number(parts.at(k), spec, 0); };
    try {
        if (parts[0] == "poisson" && parts.size() == 2) {
            const double lambda = num(1);
            if (!(lambda > 0.0)) throw ValidationError("poisson rate must be positive");
            return DiscreteDist::poisson(lambda, 1e-12, min_hi);
        }
        if (parts[0] == "binomial" && parts.size() == 3) {
            const double n = num(1), p = num(2);
            if (!(n >= 0.0 && n == std::floor(n)) || !(p >= 0.0 && p <= 1.0)) {
                throw ValidationError("binomial needs an integer n >= 0 and p in [0, 1]");
            }
            return DiscreteDist::binomial(static_cast<std::int64_t>(n), p);
        }
        if (parts[0] == "betabinomial" && parts.size() == 4) {
            const double n = num(1);
            if (!(n >= 0.0 && n == std::floor(n))) throw ValidationError("beta-binomial needs an integer n >= 0");
            const BetaBinomial bb(static_cast<std::int64_t>(n), num(2), num(3));
            std::vector<double> pmf;
            for (std::int64_t k = 0; k <= bb.n(); ++k) pmf.push_back(bb.pmf(k));
            return DiscreteDist::from_pmf(std::move(pmf));
        }
        if (parts[0] == "pmf" && parts.size() == 2) {
            std::vector<double> pmf;
            double total = 0.0;
            for (auto f : split(parts[1], ',')) {
                pmf.push_back(parse_number(f, spec, 0));
                total += pmf.back();
            }
            if (!(std::fabs(total - 1.0) <= 1e-10)) {
                throw ValidationError("distribution '" + spec + "': probabilities sum to " + format_double(total) +
                                      ", not 1");
            }
            return DiscreteDist::from_pmf(std::move(pmf));
        }
    } catch (const std::out_of_range&) {
    }
    throw ValidationError("cannot parse distribution '" + spec +
                          "' (expected poisson:L, binomial:N:P, betabinomial:N:A:B or pmf:p0,p1,...)");
}

}  // namespace ebmut
