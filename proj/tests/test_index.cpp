#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "indexprobe/index.hpp"
#include "indexprobe/table.hpp"
#include "oracle.hpp"

using namespace indexprobe;

namespace {

IndexSpec additive(std::vector<IndexTerm> terms, std::string name = "s") {
    IndexSpec s;
    s.name = std::move(name);
    s.terms = std::move(terms);
    return s;
}

// Six fabricated units with the five inputs of the original formula.
SpatialFrame six_units() {
    return SpatialFrame("nta", {"n1", "n2", "n3", "n4", "n5", "n6"},
                        {{"surface_temp", {91.2, 88.4, 95.1, 90.0, 86.7, 93.3}},
                         {"pct_black", {12.0, 45.5, 30.1, 5.2, 60.3, 22.8}},
                         {"pct_green", {20.5, 8.1, 3.3, 35.0, 12.2, 6.6}},
                         {"pct_ac", {88.0, 79.5, 70.2, 93.1, 75.0, 81.4}},
                         {"median_income", {82.0, 41.0, 38.5, 120.0, 35.2, 57.7}}});
}

IndexSpec original() {
    return additive({{"surface_temp", 1, {}},
                     {"pct_black", 1, {}},
                     {"pct_green", -1, {}},
                     {"pct_ac", -1, {}},
                     {"median_income", -1, {}}},
                    "original");
}

oracle::Frame to_oracle(const SpatialFrame& f) {
    oracle::Frame out;
    for (const auto& a : f.attribute_names()) out[a] = f.attribute(a);
    return out;
}

}  // namespace

TEST_CASE("zscore of 1,2,3") {
    auto z = zscore({1.0, 2.0, 3.0}, ZscoreMode::Population);
    CHECK(*z.values[0] == doctest::Approx(-1.224744871391589).epsilon(1e-15));
    CHECK(*z.values[1] == 0.0);
    CHECK(*z.values[2] == doctest::Approx(1.224744871391589).epsilon(1e-15));
    auto o = oracle::zscore({1.0, 2.0, 3.0});
    for (int i = 0; i < 3; ++i) CHECK(std::abs(*z.values[i] - *o[i]) < 1e-15);
    CHECK_FALSE(z.degenerate);

    auto s = zscore({1.0, 2.0, 3.0}, ZscoreMode::Sample);
    CHECK(*s.values[2] == doctest::Approx(1.0));
}

TEST_CASE("zscore edge cases") {
    auto z = zscore({5.0, 5.0, 5.0}, ZscoreMode::Population);
    CHECK(z.degenerate);
    for (const auto& v : z.values) CHECK(*v == 0.0);

    auto m = zscore({1.0, std::nullopt, 3.0}, ZscoreMode::Population);
    CHECK(*m.values[0] == -1.0);
    CHECK_FALSE(m.values[1].has_value());
    CHECK(*m.values[2] == 1.0);

    CHECK_RAISES(zscore({1.0, std::nullopt}, ZscoreMode::Population), InsufficientData);
}

TEST_CASE("additive-z evaluation") {
    const auto f = six_units();
    auto one = evaluate_spec(additive({{"pct_black", 1, {}}}), f);
    auto z = zscore(f.attribute("pct_black"), ZscoreMode::Population);
    CHECK(one.raw == z.values);

    auto cancel = evaluate_spec(additive({{"pct_black", 1, {}}, {"pct_black", -1, {}}}), f);
    for (const auto& v : cancel.raw) CHECK(*v == 0.0);

    auto raw = evaluate_spec(original(), f).raw;
    std::vector<oracle::Term> terms{{"surface_temp", 1, ""}, {"pct_black", 1, ""}, {"pct_green", -1, ""},
                                    {"pct_ac", -1, ""}, {"median_income", -1, ""}};
    auto expect = oracle::additive(to_oracle(f), terms, f.size());
    for (std::size_t u = 0; u < f.size(); ++u) CHECK(std::abs(*raw[u] - *expect[u]) < 1e-12);

    CHECK_RAISES(evaluate_spec(additive({{"nope", 1, {}}}), f), Schema);
    IndexSpec wrong = original();
    wrong.method = Method::Hierarchical;
    CHECK_RAISES(evaluate_spec(wrong, f), Method);
}

TEST_CASE("missing term input gives a missing raw") {
    SpatialFrame f("nta", {"a", "b", "c"}, {{"x", {1.0, std::nullopt, 3.0}}, {"y", {4.0, 5.0, 7.0}}});
    auto raw = evaluate_spec(additive({{"x", 1, {}}, {"y", 1, {}}}), f).raw;
    CHECK(raw[0].has_value());
    CHECK_FALSE(raw[1].has_value());
}

TEST_CASE("hierarchical evaluation") {
    const auto f = six_units();
    IndexSpec h = original();
    h.method = Method::Hierarchical;
    for (auto& t : h.terms) t.group = "all";
    auto flat = rank_index(original(), f);
    auto one_group = rank_index(h, f);
    CHECK(flat.percentile == one_group.percentile);

    // Two groups, checked against the two-stage oracle.
    SpatialFrame g("tract", {"a", "b", "c", "d", "e"},
                   {{"heat", {3.0, 1.0, 4.0, 1.5, 5.0}},
                    {"asthma", {10.0, 12.0, 9.0, 15.0, 11.0}},
                    {"trees", {0.2, 0.5, 0.1, 0.4, 0.3}}});
    IndexSpec two;
    two.name = "hhi";
    two.method = Method::Hierarchical;
    two.terms = {{"heat", 1, "env"}, {"trees", -1, "env"}, {"asthma", 1, "health"}};
    auto raw = evaluate_hierarchical(two, g).raw;
    auto expect = oracle::hierarchical(to_oracle(g), {{"heat", 1, "env"}, {"trees", -1, "env"}, {"asthma", 1, "health"}},
                                       g.size());
    for (std::size_t u = 0; u < g.size(); ++u) CHECK(*raw[u] == *expect[u]);

    IndexSpec ungrouped = two;
    ungrouped.terms[0].group.reset();
    CHECK_RAISES(evaluate_hierarchical(ungrouped, g), Spec);
    IndexSpec blank = two;
    blank.terms[0].group = "";
    CHECK_RAISES(evaluate_hierarchical(blank, g), Spec);
}

TEST_CASE("hierarchical raw is the mean of group percentiles") {
    SpatialFrame f("t", {"a", "b", "c", "d", "e"},
                   {{"p", {1.0, 2.0, 3.0, 4.0, 5.0}}, {"q", {1.0, 2.0, 5.0, 3.0, 4.0}}, {"r", {5.0, 4.0, 1.0, 3.0, 2.0}}});
    IndexSpec s;
    s.name = "h";
    s.method = Method::Hierarchical;
    s.terms = {{"p", 1, "g1"}, {"q", 1, "g2"}, {"r", -1, "g3"}};
    // b sits at 40 in every group; d at 80, 60, 60.
    auto raw = evaluate_hierarchical(s, f).raw;
    CHECK(*raw[1] == 40.0);
    CHECK(*raw[3] == (80.0 + 60.0 + 60.0) / 3.0);

    SpatialFrame g("t", {"a", "b", "c", "d", "e"},
                   {{"p", {1.0, 3.0, 2.0, 4.0, 5.0}}, {"q", {1.0, 2.0, 4.0, 3.0, 5.0}}, {"r", {1.0, 2.0, 3.0, 5.0, 4.0}}});
    IndexSpec s2 = s;
    s2.terms[2].sign = 1;
    // c: sub-percentiles 40, 80, 60.
    auto raw2 = evaluate_hierarchical(s2, g).raw;
    CHECK(*raw2[2] == 60.0);
}

TEST_CASE("risk formula") {
    SpatialFrame f("county", {"a", "b"}, {{"eal", {10.0, 3.0}}, {"sv", {2.0, 1.0}}, {"cr", {4.0, 1.0}}});
    IndexSpec s;
    s.name = "nri";
    s.method = Method::RiskFormula;
    s.risk_inputs = RiskInputs{"eal", "sv", "cr", RiskTransform::Identity};
    auto raw = evaluate_risk_formula(s, f).raw;
    CHECK(*raw[0] == 5.0);
    CHECK(*raw[1] == 3.0);

    s.risk_inputs->transform = RiskTransform::One;
    CHECK(evaluate_risk_formula(s, f).raw == f.attribute("eal"));

    s.risk_inputs->transform = RiskTransform::MinMax;
    s.risk_inputs->f_lo = 0.5;
    s.risk_inputs->f_hi = 1.5;
    auto mm = evaluate_risk_formula(s, f).raw;  // ratios 0.5 and 1.0
    CHECK(*mm[0] == 10.0 * 0.5);
    CHECK(*mm[1] == 3.0 * 1.5);

    SpatialFrame zero("county", {"a", "b"}, {{"eal", {10.0, 3.0}}, {"sv", {2.0, 1.0}}, {"cr", {4.0, 0.0}}});
    s.risk_inputs->transform = RiskTransform::Identity;
    CHECK_RAISES(evaluate_risk_formula(s, zero), Domain);
}

TEST_CASE("percentile_rank") {
    auto p = percentile_rank({10.0, 20.0, 20.0, 30.0});
    CHECK(p == Column{25.0, 62.5, 62.5, 100.0});
    CHECK(p == oracle::percentiles({10.0, 20.0, 20.0, 30.0}));

    auto inc = percentile_rank({1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0});
    for (std::size_t i = 0; i < 8; ++i) CHECK(*inc[i] == 100.0 * double(i + 1) / 8.0);

    auto flat = percentile_rank({4.0, 4.0, 4.0, 4.0, 4.0});
    for (const auto& v : flat) CHECK(*v == 100.0 * 3.0 / 5.0);

    auto gaps = percentile_rank({std::nullopt, 2.0, 1.0});
    CHECK_FALSE(gaps[0].has_value());
    CHECK(*gaps[1] == 100.0);

    CHECK_RAISES(percentile_rank({std::nullopt, std::nullopt}), InsufficientData);
}

TEST_CASE("quintile boundaries") {
    CHECK(quintile_score(20.0) == 1);
    CHECK(quintile_score(20.0001) == 2);
    CHECK(quintile_score(40.0) == 2);
    CHECK(quintile_score(60.0) == 3);
    CHECK(quintile_score(80.0) == 4);
    CHECK(quintile_score(100.0) == 5);
    CHECK(quintile_score(62.5) == 4);
    CHECK_RAISES(quintile_score(0.0), Domain);
    CHECK_RAISES(quintile_score(100.5), Domain);
}

TEST_CASE("rank_index end to end") {
    const auto f = six_units();
    auto r = rank_index(original(), f);
    CHECK(r.spec_name == "original");
    CHECK(r.scale == "nta");
    std::vector<oracle::Term> terms{{"surface_temp", 1, ""}, {"pct_black", 1, ""}, {"pct_green", -1, ""},
                                    {"pct_ac", -1, ""}, {"median_income", -1, ""}};
    auto pct = oracle::percentiles(oracle::additive(to_oracle(f), terms, f.size()));
    CHECK(r.percentile == pct);
    for (std::size_t u = 0; u < f.size(); ++u) CHECK(*r.quintile[u] == oracle::quintile(*pct[u]));

    // One +1 term: quintiles follow the attribute's own rank order.
    auto single = rank_index(additive({{"pct_green", 1, {}}}), f);
    auto direct = percentile_rank(f.attribute("pct_green"));
    CHECK(single.percentile == direct);

    SpatialFrame flat("nta", {"a", "b", "c"}, {{"x", {1.0, 2.0, 3.0}}, {"k", {7.0, 7.0, 7.0}}});
    auto d = rank_index(additive({{"x", 1, {}}, {"k", 1, {}}}), flat);
    CHECK(d.degenerate_inputs == std::vector<std::string>{"k"});
}

TEST_CASE("spec files") {
    auto doc = nlohmann::json::parse(R"({
        "name": "alt1", "method": "additive-z", "zscore_mode": "sample",
        "terms": [{"attribute": "pct_black", "sign": 1}, {"attribute": "pct_ac", "sign": -1}]
    })");
    auto s = parse_index_spec(doc);
    CHECK(s.zscore_mode == ZscoreMode::Sample);
    CHECK(s.terms.size() == 2);
    CHECK(parse_index_spec(to_json(s)) == s);
    CHECK(spec_hash(s) == spec_hash(parse_index_spec(to_json(s))));

    auto extra = doc;
    extra["weights"] = 1;
    CHECK_RAISES(parse_index_spec(extra), Spec);
    auto bad_sign = doc;
    bad_sign["terms"][0]["sign"] = 2;
    CHECK_RAISES(parse_index_spec(bad_sign), Spec);
    auto no_terms = doc;
    no_terms["terms"] = nlohmann::json::array();
    CHECK_RAISES(parse_index_spec(no_terms), Spec);
    auto risk = nlohmann::json::parse(R"({"name":"nri","method":"risk-formula","risk_inputs":{"eal":"e","sv":"s"}})");
    CHECK_RAISES(parse_index_spec(risk), Spec);
    CHECK_RAISES(load_index_spec("/nonexistent/spec.json"), Config);
}

TEST_CASE("near-threshold flagging") {
    SpatialFrame f("nta", {"a", "b", "c", "d", "e"}, {{"x", {1.0, 2.0, 3.0, 4.0, 5.0}}});
    auto r = rank_index(additive({{"x", 1, {}}}), f);
    auto near = near_threshold_units(r, 0.5);
    CHECK(near.size() == 4);  // 20, 40, 60, 80 sit exactly on thresholds
    CHECK(near_threshold_units(r, 0.0).empty());
}

TEST_CASE("ranked csv round trip") {
    const auto f = six_units();
    auto r = rank_index(original(), f);
    auto dir = scratch("ranked_roundtrip");
    {
        std::ostringstream os;
        write_ranked_csv(os, r);
        write_text(dir / "r.csv", os.str());
    }
    auto back = read_ranked_csv(dir / "r.csv", "original", "nta");
    CHECK(back.unit_ids == r.unit_ids);
    CHECK(back.raw == r.raw);
    CHECK(back.percentile == r.percentile);
    CHECK(back.quintile == r.quintile);
}
