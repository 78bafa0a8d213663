#include "errors.hpp"
#include "io.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

using namespace ebmut;

TEST_CASE("number formatting round-trips") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "NA");
    CHECK(format_double(-0.0) == "0");
    CHECK(format_double(2.0) == "2");
    for (double v : {1.0 / 3.0, 1e-300, 6.02214076e23, -7.25e-5, 0.999999999999}) {
        CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
    }
}

TEST_CASE("FNV-1a reference vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("unmatched model document round trip") {
    const auto sim = simulate(preset_scenario("virus", 2));
    ModelDocument doc;
    doc.unmatched = fit_reference(*sim.reference);
    const std::string text = model_to_json(doc);
    const auto back = model_from_json(text);
    REQUIRE(back.unmatched.has_value());
    CHECK(model_to_json(back) == text);
    CHECK(back.unmatched->mu == doc.unmatched->mu);
    CHECK(back.unmatched->sigma == doc.unmatched->sigma);
    CHECK(back.unmatched->positions == doc.unmatched->positions);
}

TEST_CASE("matched model document round trip with fdr state") {
    const auto sim = simulate(preset_scenario("tumor-small", 2));
    PipelineConfig cfg;
    const auto res = call_matched(*sim.matched, cfg);
    ModelDocument doc;
    doc.matched = *res.matched_model;
    doc.empirical_nulls = res.fdr.empirical_nulls;
    if (res.fdr.marginal_fitted) doc.marginal = res.fdr.marginal;
    const std::string text = model_to_json(doc);
    const auto back = model_from_json(text);
    REQUIRE(back.matched.has_value());
    CHECK(model_to_json(back) == text);
    CHECK(back.matched->eta == doc.matched->eta);
    CHECK(back.matched->tau == doc.matched->tau);
    CHECK(back.matched->genotypes.genotype == doc.matched->genotypes.genotype);
    REQUIRE(back.empirical_nulls.size() == doc.empirical_nulls.size());
    if (doc.marginal) {
        REQUIRE(back.marginal.has_value());
        for (double t : {1e-6, 0.01, 0.5, 0.99}) CHECK(back.marginal->density(t) == doc.marginal->density(t));
    }
}

TEST_CASE("malformed model documents name their source") {
    CHECK_THROWS_WITH_AS(model_from_json("{", "m.json"), doctest::Contains("m.json"), ValidationError);
    CHECK_THROWS_AS(model_from_json(R"({"format_version": 99})", "m.json"), ValidationError);
    CHECK_THROWS_AS(load_model("/nonexistent/model.json"), IoError);
}

TEST_CASE("fdr table round trip") {
    FdrTable t;
    t.ids = {"a:1:s", "a:2:s", "a:3:s"};
    FdrRow r1;
    r1.defined = true;
    r1.r = 0.125;
    r1.r_tilde = 1.0 / 3.0;
    r1.interval_lo = 0.1;
    r1.interval_hi = 0.2;
    r1.f_marg = 1.75;
    r1.fdr = 0.5;
    FdrRow r2;  // undefined
    FdrRow r3 = r1;
    r3.r = 1e-17;
    t.rows = {r1, r2, r3};
    std::stringstream ss;
    const OutputHeader h{"0123456789abcdef", "fedcba9876543210", 42};
    write_fdr_table(ss, t, &h);
    const std::string text = ss.str();
    CHECK(text.rfind("# ebmut 0.1.0 manifest=0123456789abcdef config=fedcba9876543210 seed=42\n", 0) == 0);
    std::istringstream in(text);
    const auto back = read_fdr_table(in);
    REQUIRE(back.rows.size() == 3);
    CHECK(back.ids == t.ids);
    CHECK(back.rows[0].r == r1.r);
    CHECK(back.rows[0].r_tilde == r1.r_tilde);
    CHECK(back.rows[0].f_marg == r1.f_marg);
    CHECK_FALSE(back.rows[1].defined);
    CHECK(back.rows[1].fdr == 1.0);
    CHECK(back.rows[2].r == 1e-17);
    std::stringstream again;
    write_fdr_table(again, back, &h);
    CHECK(again.str() == text);

    std::istringstream bad("id,r,r_tilde,interval_lo,interval_hi,f_marg,fdr\nx,0.1,zz,0,1,1,1\n");
    CHECK_THROWS_WITH_AS(read_fdr_table(bad, "t.csv"), doctest::Contains("t.csv:2"), ValidationError);
}

TEST_CASE("call CSV layout") {
    CallRecord r;
    r.position = {"chr2", 17};
    r.sample = "s1";
    r.y = 3;
    r.m = 10;
    r.rate_normal = 0.01;
    r.rate_tumor = 0.3;
    r.r = 0.5;
    r.r_tilde = 0.5;
    r.fdr = 1.0;
    r.defined = true;
    r.reasons = {"fdr_above_threshold"};
    std::stringstream ss;
    write_calls(ss, {r});
    std::string header, row;
    std::getline(ss, header);
    std::getline(ss, row);
    CHECK(header == "contig,pos,sample,x,n,y,m,rate_normal,rate_tumor,r,r_tilde,fdr,delta_hat,called,reasons");
    CHECK(row == "chr2,17,s1,NA,NA,3,10,0.01,0.3,0.5,0.5,1,0,0,fdr_above_threshold");
}

TEST_CASE("scenario JSON round trip and overrides") {
    for (const auto& name : scenario_presets()) {
        const auto s = preset_scenario(name, 5);
        const std::string text = scenario_to_json(s);
        CHECK(scenario_to_json(scenario_from_json(text)) == text);
    }
    const auto o = scenario_from_json(R"({"preset": "virus", "seed": 9, "positions": 100})");
    CHECK(o.positions == 100);
    CHECK(o.seed == 9);
    CHECK(o.samples.size() == 6);
    CHECK(scenario_from_json(R"({"preset": "virus"})", 17).seed == 17);
    CHECK_THROWS_WITH_AS(scenario_from_json(R"({"preset": "virus", "bogus": 1})"), doctest::Contains("bogus"),
                         ValidationError);
    CHECK_THROWS_AS(scenario_from_json(R"({"preset": "nope"})"), ValidationError);
}

TEST_CASE("config JSON and fingerprints") {
    PipelineConfig cfg;
    const std::string fp = config_fingerprint(cfg);
    CHECK(fp.size() == 16);
    apply_config_json(cfg, R"({"fdr_threshold": 0.05, "mode": "mid_p", "seed": 3})");
    CHECK(cfg.fdr_threshold == 0.05);
    CHECK(cfg.mode == PValueMode::mid_p);
    CHECK(cfg.fit.seed == 3);
    CHECK(config_fingerprint(cfg) != fp);

    PipelineConfig copy;
    apply_config_json(copy, config_to_json(cfg));
    CHECK(config_fingerprint(copy) == config_fingerprint(cfg));

    CHECK_THROWS_WITH_AS(apply_config_json(cfg, R"({"fdr": 0.1})", "c.json"), doctest::Contains("fdr"), ValidationError);
    CHECK_THROWS_AS(apply_config_json(cfg, R"({"mode": "sometimes"})"), ValidationError);
    CHECK_THROWS_AS(apply_config_json(cfg, "[1, 2]"), ValidationError);
}

TEST_CASE("distribution specs") {
    const auto p = parse_distribution("poisson:5");
    double s = 0;
    for (std::int64_t k = p.lo(); k <= p.hi(); ++k) s += p.prob(k);
    CHECK(std::fabs(s - 1.0) < 1e-10);
    CHECK(parse_distribution("poisson:5", 60).hi() >= 60);
    CHECK(parse_distribution("binomial:10:0.4").hi() == 10);
    CHECK(parse_distribution("betabinomial:10:2:8").prob(2) > 0.0);
    const auto q = parse_distribution("pmf:0.25,0.75");
    CHECK(q.prob(1) == 0.75);
    CHECK_THROWS_AS(parse_distribution("gamma:1"), ValidationError);
    CHECK_THROWS_AS(parse_distribution("binomial:10"), ValidationError);
    CHECK_THROWS_AS(parse_distribution("pmf:0.5,0.2"), ValidationError);
}

TEST_CASE("truth table round trip") {
    const auto sim = simulate(preset_scenario("virus", 6));
    std::stringstream ss;
    write_truth(ss, sim.truth);
    std::istringstream in(ss.str());
    const auto back = read_truth(in, sim.clinical->positions());
    REQUIRE(back.entries.size() == sim.truth.entries.size());
    for (std::size_t k = 0; k < back.entries.size(); ++k) {
        CHECK(back.entries[k].position_index == sim.truth.entries[k].position_index);
        CHECK(back.entries[k].sample == sim.truth.entries[k].sample);
        CHECK(back.entries[k].prevalence == sim.truth.entries[k].prevalence);
    }
    std::istringstream bad("contig,pos,sample,prevalence\nvirus,99999,clin_1,0.001\n");
    CHECK_THROWS_AS(read_truth(bad, sim.clinical->positions()), ValidationError);
}
