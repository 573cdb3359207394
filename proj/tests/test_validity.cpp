#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "indexprobe/table.hpp"
#include "indexprobe/validity.hpp"
#include "oracle.hpp"

using namespace indexprobe;

namespace {

RankedColumn col(std::string label, std::map<std::string, double> v, std::string scale = "tract") {
    return {std::move(label), std::move(scale), std::move(v)};
}

}  // namespace

TEST_CASE("spearman basics") {
    auto p = pair("a", {1, 2, 3, 4}, "b", {1, 2, 3, 4});
    CHECK(spearman(p) == 1.0);
    CHECK(spearman(pair("a", {1, 2, 3, 4}, "b", {4, 3, 2, 1})) == -1.0);
    CHECK_RAISES(spearman(pair("a", {1, 2, 3}, "b", {5, 5, 5})), DegenerateRanking);
}

TEST_CASE("spearman with ties matches the oracle") {
    std::vector<double> a, b;
    for (int i = 0; i < 50; ++i) {
        a.push_back(static_cast<double>((i * 37) % 11));
        b.push_back(static_cast<double>((i * 53 + 7) % 13));
    }
    CHECK(std::abs(spearman(pair("a", a, "b", b)) - oracle::spearman(a, b)) < 1e-12);
}

TEST_CASE("kendall tau") {
    auto c = kendall_counts({1, 2, 3}, {1, 3, 2});
    CHECK(c.concordant == 2);
    CHECK(c.discordant == 1);
    CHECK(kendall_tau(pair("x", {1, 2, 3}, "y", {1, 3, 2})) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(kendall_tau(pair("x", {1, 2, 3, 4}, "y", {1, 2, 3, 4})) == 1.0);

    std::vector<double> x{1, 2, 3, 4, 5}, y{1, 2, 2, 4, 5};
    auto o = oracle::kendall_pairs(x, y);
    auto k = kendall_counts(x, y);
    CHECK(k.concordant == o.concordant);
    CHECK(k.discordant == o.discordant);
    CHECK(k.ties_b == 1);
    const double expect = (double(o.concordant) - double(o.discordant)) /
                          std::sqrt(double(o.pairs - o.ties_a) * double(o.pairs - o.ties_b));
    CHECK(kendall_tau(pair("x", x, "y", y)) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("alignment") {
    std::map<std::string, int> a{{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}, {"e", 5}};
    auto b = a;
    b["e"] = 4;
    CHECK(alignment(a, a).percent == 100.0);
    auto r = alignment(a, b);
    CHECK(r.matches == 4);
    CHECK(r.percent == 80.0);
    CHECK_RAISES(alignment(a, std::map<std::string, int>{{"z", 1}}), UnitSet);
}

TEST_CASE("pairing") {
    auto a = col("a", {{"t1", 10}, {"t2", 20}, {"t3", 30}});
    auto b = col("b", {{"t1", 1}, {"t2", 3}, {"t3", 2}});
    CHECK(pair(a, b).n() == 3);

    auto partial = col("c", {{"t1", 1}, {"t3", 2}, {"t9", 4}});
    auto p = pair(a, partial);
    CHECK(p.n() == 2);
    CHECK(p.dropped.size() == 2);

    CHECK_RAISES(pair(a, col("d", {{"x", 1}, {"y", 2}})), InsufficientData);

    // Coarse ranking broadcast onto tracts.
    auto coarse = col("hvi", {{"J", 60}, {"K", 100}}, "nta");
    PairOptions opts;
    opts.crosswalks.push_back(Crosswalk("tract", "nta", {{"t1", "J", 1}, {"t2", "J", 1}, {"t3", "K", 1}}));
    auto fine = pair(a, coarse, opts);
    CHECK(fine.scale == "tract");
    CHECK(fine.n() == 3);
    CHECK(fine.b == std::vector<double>{60, 60, 100});

    opts.direction = PairDirection::Coarse;
    auto up = pair(a, coarse, opts);
    CHECK(up.scale == "nta");
    CHECK(up.n() == 2);
}

TEST_CASE("correlation matrix") {
    auto a = col("a", {{"t1", 1}, {"t2", 2}, {"t3", 3}, {"t4", 4}});
    auto twin = col("twin", a.values);
    auto rep = correlation_matrix({a, twin}, {}, CorrelationMethod::Both);
    REQUIRE(rep.entries.size() == 1);
    CHECK(*rep.entries[0].spearman == 1.0);
    CHECK(*rep.entries[0].kendall == 1.0);

    auto flat = col("flat", {{"t1", 5}, {"t2", 5}, {"t3", 5}, {"t4", 5}});
    auto c = col("c", {{"t1", 2}, {"t2", 1}, {"t3", 4}, {"t4", 3}});
    auto rep3 = correlation_matrix({a, flat, c}, {}, CorrelationMethod::Both);
    CHECK(rep3.entries.size() == 3);
    CHECK(rep3.find("a", "flat")->error.has_value());
    CHECK(rep3.find("flat", "c")->error.has_value());
    const auto* ac = rep3.find("c", "a");
    REQUIRE(ac);
    CHECK(std::abs(*ac->spearman - oracle::spearman({1, 2, 3, 4}, {2, 1, 4, 3})) < 1e-12);

    CHECK_RAISES(correlation_matrix({a, a}, {}, CorrelationMethod::Both), Config);
}

TEST_CASE("impact validity") {
    auto idx1 = col("hvi", {{"a", 10}, {"b", 20}, {"c", 30}, {"d", 40}, {"e", 50}, {"f", 60}, {"g", 70}, {"h", 80}});
    auto idx2 = col("nri", {{"a", 5}, {"b", 1}, {"c", 7}, {"d", 3}, {"e", 8}, {"f", 2}, {"g", 6}, {"h", 4}});
    auto imp1 = col("ems", idx1.values);
    auto imp2 = col("outage", {{"a", 0}, {"b", 0}, {"c", 1}, {"d", 3}, {"e", 0}, {"f", 2}, {"g", 2}, {"h", 9}});
    auto rep = impact_validity({idx1, idx2}, {imp1, imp2}, {}, CorrelationMethod::Both);
    CHECK(rep.kind == "predictive");
    CHECK(rep.entries.size() == 4);
    CHECK(*rep.find("ems", "hvi")->spearman == 1.0);
    for (const auto& e : rep.entries) {
        REQUIRE(e.spearman);
        std::vector<double> x, y;
        const auto& ix = e.column == "hvi" ? idx1 : idx2;
        const auto& im = e.row == "ems" ? imp1 : imp2;
        for (const auto& [id, v] : ix.values) {
            x.push_back(v);
            y.push_back(im.values.at(id));
        }
        CHECK(std::abs(*e.spearman - oracle::spearman(y, x)) < 1e-12);
        auto o = oracle::kendall_pairs(y, x);
        const double tau = (double(o.concordant) - double(o.discordant)) /
                           std::sqrt(double(o.pairs - o.ties_a) * double(o.pairs - o.ties_b));
        CHECK(std::abs(*e.kendall - tau) < 1e-12);
    }

    auto constant = col("flat", {{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}, {"e", 1}, {"f", 1}, {"g", 1}, {"h", 1}});
    auto r2 = impact_validity({idx1}, {constant}, {}, CorrelationMethod::Spearman);
    CHECK(r2.entries[0].error.has_value());
}

TEST_CASE("report exports") {
    auto a = col("a", {{"t1", 1}, {"t2", 2}, {"t3", 3}});
    auto b = col("b", {{"t1", 1}, {"t2", 3}, {"t3", 2}});
    auto rep = correlation_matrix({a, b}, {}, CorrelationMethod::Both);
    auto j = report_json(rep);
    CHECK(j["kendall_variant"] == "tau-b");
    std::ostringstream os;
    write_matrix_csv(os, rep, Statistic::Spearman);
    CHECK(os.str() == ",a\nb," + format_number(*rep.entries[0].spearman) + "\n");
}

TEST_CASE("specification comparison") {
    RankedIndex base;
    base.spec_name = "base";
    base.scale = "nta";
    base.unit_ids = {"a", "b", "c", "d", "e"};
    base.raw = base.percentile = {20.0, 40.0, 60.0, 80.0, 100.0};
    base.quintile = {1, 2, 3, 4, 5};
    RankedIndex v = base;
    v.spec_name = "v";
    v.percentile = {20.0, 40.0, 60.0, 100.0, 80.0};
    v.quintile = {1, 2, 3, 5, 4};
    auto rows = specification_comparison(base, {base, v});
    REQUIRE(rows.size() == 2);
    CHECK(*rows[0].spearman_percentile == 1.0);
    CHECK(rows[0].alignment_percent == 100.0);
    CHECK(rows[1].alignment_percent == 60.0);
    CHECK(*rows[1].spearman_percentile == doctest::Approx(0.9));
}
