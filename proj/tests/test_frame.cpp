#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "indexprobe/crosswalk.hpp"
#include "indexprobe/frame.hpp"
#include "indexprobe/table.hpp"

using namespace indexprobe;

namespace {

FrameSchema temp_schema() {
    return parse_frame_schema(nlohmann::json::parse(R"({
        "id_column": "id", "population_column": "pop",
        "attributes": ["temp", {"name": "count", "type": "integer"}]
    })"));
}

}  // namespace

TEST_CASE("csv parsing handles quotes, CRLF and a BOM") {
    auto t = parse_csv("\xEF\xBB\xBFid,name\r\n1,\"a, b\"\r\n2,\"say \"\"hi\"\"\"\r\n\r\n");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.header[0] == "id");
    CHECK(t.rows[0][1] == "a, b");
    CHECK(t.rows[1][1] == "say \"hi\"");
    CHECK_RAISES(parse_csv("a,b\n1\n"), Parse);
    CHECK_RAISES(t.column("nope"), Schema);
}

TEST_CASE("number formatting round-trips") {
    CHECK(format_number(17.5) == "17.5");
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(0.1 + 0.2) == "0.30000000000000004");
    CHECK(*parse_number(format_number(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK_FALSE(parse_number("1.5x"));
    CHECK_FALSE(parse_number("inf"));
    CHECK(*parse_number("+4") == 4.0);
    CHECK(csv_escape("a,b") == "\"a,b\"");
}

TEST_CASE("build_frame sorts units by id") {
    auto t = parse_csv("id,pop,temp,count\nC,10,1.5,1\nA,20,2.5,2\nB,30,3.5,3\n");
    auto f = build_frame("nta", t, temp_schema());
    CHECK(f.ids() == std::vector<std::string>{"A", "B", "C"});
    CHECK(*f.attribute("temp")[0] == 2.5);
    CHECK(*f.population()[2] == 10.0);
}

TEST_CASE("empty cells are missing, not zero") {
    auto t = parse_csv("id,pop,temp,count\nA,1,,1\nB,1,NA,2\nC,1,0,3\n");
    auto f = build_frame("nta", t, temp_schema());
    CHECK_FALSE(f.attribute("temp")[0].has_value());
    CHECK_FALSE(f.attribute("temp")[1].has_value());
    CHECK(f.attribute("temp")[2] == 0.0);
}

TEST_CASE("build_frame errors") {
    CHECK_RAISES(build_frame("nta", parse_csv("id,pop,temp,count\nT1,1,1,1\nT1,1,2,2\n"), temp_schema()),
                 DuplicateUnit);
    CHECK_RAISES(build_frame("nta", parse_csv("id,pop,temp,count\nT1,1,warm,1\n"), temp_schema()), Parse);
    CHECK_RAISES(build_frame("nta", parse_csv("id,pop,temp,count\nT1,1,1,1.5\n"), temp_schema()), Parse);
    CHECK_RAISES(build_frame("nta", parse_csv("id,pop,temp\nT1,1,1\n"), temp_schema()), Schema);
    try {
        build_frame("nta", parse_csv("id,pop,temp,count\nA,1,1,1\nB,1,hot,1\n"), temp_schema());
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
        CHECK(std::string(e.what()).find("temp") != std::string::npos);
    }
}

TEST_CASE("schema rejects unknown keys") {
    CHECK_RAISES(parse_frame_schema(nlohmann::json::parse(R"({"id_column":"id","attributes":[],"colour":1})")),
                 Config);
}

TEST_CASE("filter_populated") {
    SpatialFrame f("tract", {"a", "b", "c"}, {{"x", {1.0, 2.0, 3.0}}}, "pop", Column{0.0, 100.0, 50.0});
    auto kept = filter_populated(f);
    CHECK(kept.ids() == std::vector<std::string>{"b", "c"});
    CHECK(f.size() == 3);

    SpatialFrame all("tract", {"a", "b"}, {{"x", {1.0, 2.0}}}, "pop", Column{5.0, 6.0});
    CHECK(filter_populated(all).ids() == all.ids());

    SpatialFrame none("tract", {"a"}, {{"x", {1.0}}});
    CHECK_RAISES(filter_populated(none), Schema);
}

TEST_CASE("highest overlap resolution") {
    auto cw = resolve_highest_overlap("tract", "nta", {{"A", "T1", 0.6}, {"A", "T2", 0.4}});
    CHECK(cw.target_of("A") == "T1");
    CHECK(cw.links().front().weight == 0.6);

    // Tie: smallest target wins regardless of input order.
    auto t1 = resolve_highest_overlap("tract", "nta", {{"A", "T1", 0.5}, {"A", "T2", 0.5}});
    auto t2 = resolve_highest_overlap("tract", "nta", {{"A", "T2", 0.5}, {"A", "T1", 0.5}});
    CHECK(t1.target_of("A") == "T1");
    CHECK(t1 == t2);

    CHECK_RAISES(resolve_highest_overlap("tract", "nta", {{"A", "T1", 0.0}}), UnresolvableSource);
    CHECK_RAISES(Crosswalk("tract", "nta", {{"A", "T1", -1.0}}), Domain);

    CHECK(resolve_highest_overlap(t1) == t1);
}

TEST_CASE("reaggregate") {
    SpatialFrame f("tract", {"a", "b", "c"}, {{"x", {10.0, 20.0, std::nullopt}}, {"w", {100.0, 300.0, 50.0}}});
    Crosswalk cw("tract", "nta", {{"a", "J", 1}, {"b", "J", 1}, {"c", "K", 1}});
    auto mean = reaggregate(f, "x", cw, std::string("w"), AggregateMode::WeightedMean);
    REQUIRE(mean.ids == std::vector<std::string>{"J", "K"});
    CHECK(*mean.values[0] == 17.5);
    CHECK_FALSE(mean.values[1].has_value());
    CHECK(mean.skipped_missing == 1);

    SpatialFrame g("tract", {"a", "b"}, {{"x", {2.0, 3.0}}});
    Crosswalk one("tract", "nta", {{"a", "J", 1}, {"b", "J", 1}});
    CHECK(*reaggregate(g, "x", one, std::nullopt, AggregateMode::Sum).values[0] == 5.0);

    Crosswalk wrong("zcta", "nta", {{"a", "J", 1}});
    CHECK_RAISES(reaggregate(g, "x", wrong, std::nullopt, AggregateMode::Sum), Scale);
}

TEST_CASE("broadcast_parent") {
    Crosswalk cw("tract", "nta", {{"i1", "j", 1}, {"i2", "j", 1}});
    auto out = broadcast_parent(std::map<std::string, int>{{"j", 3}}, cw);
    CHECK(out == std::map<std::string, int>{{"i1", 3}, {"i2", 3}});

    CHECK(broadcast_parent(std::map<std::string, int>{}, Crosswalk("tract", "nta", {})).empty());
    CHECK_RAISES(broadcast_parent(std::map<std::string, int>{{"k", 1}}, cw), MissingParent);
}

TEST_CASE("crosswalk sources must exist in the frame") {
    SpatialFrame f("tract", {"a"}, {{"x", {1.0}}});
    CHECK_NOTHROW(check_sources(Crosswalk("tract", "nta", {{"a", "J", 1}}), f));
    CHECK_RAISES(check_sources(Crosswalk("tract", "nta", {{"z", "J", 1}}), f), Schema);
}
