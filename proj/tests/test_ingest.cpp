#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "hotspot/ingest.hpp"

using namespace hotspot;

namespace {

const std::string header = "timestamp_iso8601,x_ft,y_ft,source,category,domestic,victim_group\n";

ParsedEvents parse(const std::string& text) {
    std::istringstream in(text);
    return parse_events(in, IndicatorDictionary::standard());
}

EventRecord robbery(std::int64_t ts, double x, double y, bool domestic = false) {
    EventRecord e;
    e.timestamp = ts;
    e.x = x;
    e.y = y;
    e.category = "robbery";
    e.domestic = domestic;
    return e;
}

}  // namespace

TEST(Timestamps, FieldStudyStartIsAMonday) {
    const auto ts = parse_timestamp("2017-11-06T00:00:00Z");
    ASSERT_TRUE(ts);
    EXPECT_EQ(week_start(week_of(*ts)), *ts);
    EXPECT_EQ(format_timestamp(*ts), "2017-11-06T00:00:00Z");
}

TEST(Timestamps, MondayMidnightStartsTheWeek) {
    const auto monday = *parse_timestamp("2017-11-06T00:00:00");
    EXPECT_EQ(week_of(monday - 1) + 1, week_of(monday));
    EXPECT_EQ(week_of(monday + 7 * 86400 - 1), week_of(monday));
}

TEST(Timestamps, RejectsGarbage) {
    EXPECT_FALSE(parse_timestamp("yesterday"));
    EXPECT_FALSE(parse_timestamp("2017-02-30T00:00:00"));
    EXPECT_FALSE(parse_timestamp("2017-11-06T25:00:00"));
    EXPECT_TRUE(parse_timestamp("2017-11-06"));
    EXPECT_TRUE(parse_timestamp("1960-03-01 12:30:00"));
}

TEST(Timestamps, FormatRoundTripsBeforeEpoch) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const std::int64_t ts = static_cast<std::int64_t>(rng() % 4000000000ULL) - 2000000000LL;
        EXPECT_EQ(parse_timestamp(format_timestamp(ts)), ts);
    }
}

TEST(Dictionary, StandardIsValidAndDisjoint) {
    const auto d = IndicatorDictionary::standard();
    EXPECT_NO_THROW(d.validate());
    EXPECT_EQ(d.p1v.size(), 4u);
    EXPECT_EQ(d.p1p.size(), 3u);
    EXPECT_EQ(d.call_indicators.size(), 11u);
    for (const auto& c : d.p1v) EXPECT_FALSE(d.is_p1p(c));
}

TEST(Dictionary, DuplicateIndicatorIsRejected) {
    auto d = IndicatorDictionary::standard();
    d.p1p.push_back("robbery");
    EXPECT_THROW(d.validate(), UsageError);
}

TEST(ParseEvents, ValidRobberyRow) {
    const auto r = parse(header + "2017-11-07T13:05:00Z,1200.5,800,offense,robbery,0,group_a\n");
    ASSERT_EQ(r.events.size(), 1u);
    EXPECT_TRUE(r.rejections.empty());
    EXPECT_EQ(r.events[0].category, "robbery");
    EXPECT_DOUBLE_EQ(r.events[0].x, 1200.5);
    EXPECT_EQ(r.events[0].victim_group, "group_a");
}

TEST(ParseEvents, NonNumericTimestampIsRejectedAndReported) {
    const auto r = parse(header + "tuesday,1,1,offense,robbery,0,\n2017-11-07T00:00:00Z,1,1,call,cad_disturbance,0,\n");
    EXPECT_EQ(r.events.size(), 1u);
    ASSERT_EQ(r.rejections.size(), 1u);
    EXPECT_EQ(r.rejections[0].line, 2);
    std::ostringstream out;
    write_rejections_jsonl(out, r.rejections);
    const auto j = nlohmann::json::parse(out.str());
    EXPECT_EQ(j.at("line"), 2);
}

TEST(ParseEvents, UnknownCategoryIsRowLevel) {
    const auto r = parse(header + "2017-11-07T00:00:00Z,1,1,offense,jaywalking,0,\n");
    EXPECT_TRUE(r.events.empty());
    EXPECT_EQ(r.rejections.size(), 1u);
}

TEST(ParseEvents, HeaderOnlyIsEmpty) {
    const auto r = parse(header);
    EXPECT_TRUE(r.events.empty());
    EXPECT_TRUE(r.rejections.empty());
}

TEST(ParseEvents, MissingHeaderIsFatal) {
    EXPECT_THROW(parse(""), DataError);
    EXPECT_THROW(parse("a,b,c\n"), DataError);
}

TEST(ParseEvents, WriteThenParseIsIdentity) {
    std::vector<EventRecord> events{robbery(1510000000, 10.25, 1e-3), robbery(1510003600, 4999.999999, 77)};
    events[1].victim_group = "g";
    events[1].source = Source::call;
    events[1].category = "cad_disturbance";
    std::stringstream s;
    write_events_csv(s, events);
    const auto r = parse_events(s, IndicatorDictionary::standard());
    EXPECT_EQ(r.events, events);
}

class BuildPanelTest : public ::testing::Test {
protected:
    GridSpec grid = GridSpec::uniform(4, 4);
    IndicatorDictionary dict = IndicatorDictionary::standard();
    int week0 = week_of(*parse_timestamp("2017-11-06"));
    WeekRange range{week0, 10};
};

TEST_F(BuildPanelTest, SingleRobberyLandsInItsCellWeek) {
    const std::vector<EventRecord> ev{robbery(week_start(week0 + 2) + 3600, 750, 250)};
    const auto b = build_panel(ev, grid, dict, range);
    const int v = b.panel.variable_index("robbery");
    EXPECT_EQ(b.panel.at(v, grid.index({0, 1}), week0 + 2), 1);
    EXPECT_EQ(b.panel.total(), 1);
}

TEST_F(BuildPanelTest, DomesticViolentEventIsExcluded) {
    const std::vector<EventRecord> ev{robbery(week_start(week0 + 2), 750, 250, true)};
    const auto b = build_panel(ev, grid, dict, range);
    EXPECT_EQ(b.panel.total(), 0);
    EXPECT_EQ(b.excluded_domestic, 1u);
}

TEST_F(BuildPanelTest, DomesticPropertyEventIsRetained) {
    auto e = robbery(week_start(week0 + 2), 750, 250, true);
    e.category = "burglary";
    const auto b = build_panel(std::vector<EventRecord>{e}, grid, dict, range);
    EXPECT_EQ(b.panel.total(), 1);
}

// The generator keeps its own ledger of what it emitted; the panel must account for every row.
TEST_F(BuildPanelTest, ConservationAgainstGeneratorLedger) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> coord(-300.0, 2300.0);  // spills past a 4x4 grid of 500 ft
    std::uniform_int_distribution<std::int64_t> when(week_start(week0 - 1), week_start(week0 + 11));
    const auto cats = dict.categories();
    std::size_t expect_out_of_mask = 0, expect_out_of_range = 0, expect_domestic = 0, expect_retained = 0;
    std::vector<EventRecord> ev;
    for (int i = 0; i < 1000; ++i) {
        EventRecord e;
        e.timestamp = when(rng);
        e.x = coord(rng);
        e.y = coord(rng);
        e.category = cats[rng() % cats.size()];
        e.domestic = rng() % 10 == 0;
        const bool domestic = e.domestic && dict.is_p1v(e.category);
        const int w = week_of(e.timestamp);
        const bool in_range = w >= range.first && w < range.end();
        const bool in_grid = e.x >= 0 && e.x < 2000 && e.y >= 0 && e.y < 2000;
        if (domestic) ++expect_domestic;
        else if (!in_range) ++expect_out_of_range;
        else if (!in_grid) ++expect_out_of_mask;
        else ++expect_retained;
        ev.push_back(e);
    }
    const auto b = build_panel(ev, grid, dict, range);
    EXPECT_EQ(b.excluded_domestic, expect_domestic);
    EXPECT_EQ(b.out_of_range, expect_out_of_range);
    EXPECT_EQ(b.out_of_mask, expect_out_of_mask);
    EXPECT_EQ(b.retained, expect_retained);
    EXPECT_EQ(static_cast<std::size_t>(b.panel.total()) + b.dropped() + b.excluded(), 1000u);

    // order independence and shard merge
    auto shuffled = ev;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(build_panel(shuffled, grid, dict, range).panel, b.panel);
    auto left = build_panel(std::span(ev).first(400), grid, dict, range).panel;
    left += build_panel(std::span(ev).subspan(400), grid, dict, range).panel;
    EXPECT_EQ(left, b.panel);
}

TEST_F(BuildPanelTest, ZeroRetainedEventsIsAValidPanel) {
    const auto b = build_panel(std::vector<EventRecord>{}, grid, dict, range);
    EXPECT_EQ(b.panel.total(), 0);
    EXPECT_EQ(b.panel.n_weeks(), 10);
}

TEST_F(BuildPanelTest, ConservationWithRejectedRows) {
    const auto parsed = parse(header + "2017-11-07T00:00:00Z,10,10,offense,robbery,0,\n"
                                       "bad,10,10,offense,robbery,0,\n"
                                       "2017-11-07T00:00:00Z,10,10,offense,robbery,1,\n"
                                       "2031-01-01T00:00:00Z,10,10,offense,robbery,0,\n"
                                       "2017-11-07T00:00:00Z,-10,10,offense,robbery,0,\n");
    const auto b = build_panel(parsed.events, grid, dict, range);
    EXPECT_EQ(b.retained + b.dropped() + b.excluded() + parsed.rejections.size(), parsed.rows);
    EXPECT_EQ(b.retained, 1u);
}

TEST_F(BuildPanelTest, ArchiveRoundTrip) {
    std::mt19937_64 rng(2);
    std::vector<EventRecord> ev;
    for (int i = 0; i < 300; ++i) ev.push_back(robbery(week_start(week0 + rng() % 10) + rng() % 1000, rng() % 2000, rng() % 2000));
    const auto p = with_standard_aggregates(build_panel(ev, grid, dict, range).panel, dict);
    EXPECT_EQ(p.total(p.variable_index("P1V")), 300);
    std::stringstream meta, counts;
    write_panel(meta, counts, p);
    EXPECT_EQ(read_panel(meta, counts), p);
}
