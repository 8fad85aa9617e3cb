#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "support.hpp"

using namespace confine;
using confine::testing::random_log;
using confine::testing::sample_log;
using confine::testing::ts;

TEST(Timestamp, MinuteInputPadsToMilliseconds) {
    auto t = parse_timestamp("2022-07-14T10:36");
    ASSERT_TRUE(t);
    EXPECT_EQ(format_timestamp(*t), "2022-07-14T10:36:00.000Z");
}

TEST(Timestamp, OffsetsNormaliseToUtc) {
    EXPECT_EQ(parse_timestamp("2022-07-14T12:36:00+02:00"), parse_timestamp("2022-07-14T10:36:00Z"));
    EXPECT_EQ(parse_timestamp("2022-07-14T10:36:00.250Z"), ts("2022-07-14T10:36") + std::chrono::milliseconds{250});
}

TEST(Timestamp, RejectsGarbage) {
    for (const char* bad : {"", "2022-07-14", "2022-13-01T00:00", "2022-07-14T25:00", "yesterday", "2022-07-14T10:3"}) {
        EXPECT_FALSE(parse_timestamp(bad)) << bad;
    }
}

TEST(Timestamp, RoundTripsAtMillisecondPrecision) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        Timestamp t{std::chrono::milliseconds{static_cast<std::int64_t>(rng() % 4102444800000ULL)}};
        EXPECT_EQ(parse_timestamp(format_timestamp(t)), t);
    }
}

TEST(EventLog, HospitalTableParses) {
    auto log = sample_log("hospital");
    EXPECT_EQ(log.event_count(), 19u);
    EXPECT_EQ(case_refs(log), (std::vector<std::string>{"312", "711"}));
    const CaseView* c = log.find("312");
    ASSERT_NE(c, nullptr);
    EXPECT_EQ(c->size(), 10u);
    EXPECT_EQ(c->events()[0].activity, "PH");
    EXPECT_EQ(c->events()[0].timestamp, ts("2022-07-14T10:36"));
    EXPECT_EQ(c->events()[1].activity, "COPA");
    EXPECT_EQ(c->events()[1].timestamp, ts("2022-07-14T16:36"));
    EXPECT_EQ(c->events()[2].activity, "OD");
    EXPECT_EQ(c->events()[2].timestamp, ts("2022-07-14T17:36"));
    EXPECT_EQ(log.find("711")->size(), 9u);
}

TEST(EventLog, SeqHintIsFilePosition) {
    auto log = sample_log("hospital");
    auto events = log.events();
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.seq_hint < b.seq_hint; });
    ASSERT_EQ(events.size(), 19u);
    for (std::size_t i = 0; i < events.size(); ++i) {
        EXPECT_EQ(events[i].seq_hint, i);
    }
    EXPECT_EQ(events[2].case_ref, "711");
    EXPECT_EQ(events[2].activity, "PH");
}

TEST(EventLog, HeaderOnlyIsEmpty) {
    auto log = parse_csv("case,timestamp,activity,org\n");
    EXPECT_EQ(log.case_count(), 0u);
    EXPECT_TRUE(case_refs(log).empty());
}

TEST(EventLog, ColumnsInAnyOrder) {
    auto log = parse_csv("activity,org,case,timestamp\nPH,H,1,2022-07-14T10:36\n");
    ASSERT_EQ(log.event_count(), 1u);
    EXPECT_EQ(log.events()[0].case_ref, "1");
    EXPECT_EQ(log.events()[0].org, "H");
}

TEST(EventLog, MissingColumnIsSchemaError) {
    EXPECT_THROW(parse_csv("case,activity,org\n1,PH,H\n"), SchemaError);
}

TEST(EventLog, MalformedRowNamesLine) {
    try {
        parse_csv("case,timestamp,activity,org\n1,2022-07-14T10:36,PH,H\n1,not-a-time,COPA,H\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_csv("case,timestamp,activity,org\n1,2022-07-14T10:36,,H\n"), ParseError);
    EXPECT_THROW(parse_csv("case,timestamp,activity,org\n1,2022-07-14T10:36,PH\n"), ParseError);
}

TEST(EventLog, DuplicateRecordsAreKept) {
    auto log = parse_csv("case,timestamp,activity,org\n1,2022-07-14T10:36,PH,H\n1,2022-07-14T10:36,PH,H\n");
    ASSERT_EQ(log.event_count(), 2u);
    EXPECT_EQ(log.find("1")->events()[0].seq_hint, 0u);
    EXPECT_EQ(log.find("1")->events()[1].seq_hint, 1u);
}

TEST(EventLog, OutOfOrderEventsAreSorted) {
    auto log = parse_csv("case,timestamp,activity,org\n1,2022-07-14T12:00,B,H\n1,2022-07-14T10:00,A,H\n");
    EXPECT_EQ(log.find("1")->activities(), (std::vector<std::string>{"A", "B"}));
}

TEST(EventLog, QuotedFieldsRoundTrip) {
    std::vector<Event> ev{{"a,1", "say \"hi\"", ts("2022-01-01T00:00"), "org 1", 0},
                          {"a,1", "second", ts("2022-01-01T00:01"), "org 1", 1}};
    EventLog log(ev);
    EXPECT_EQ(parse_csv(serialize_csv(log)), log);
}

TEST(EventLog, TiesBreakOnOrgThenSeqHint) {
    Timestamp t = ts("2022-01-01T00:00");
    CaseView c("1", {{"1", "x", t, "S", 0}, {"1", "y", t, "H", 5}, {"1", "z", t, "H", 2}});
    EXPECT_EQ(c.activities(), (std::vector<std::string>{"z", "y", "x"}));
}

TEST(EventLog, RejectsEmptyFields) {
    EXPECT_THROW(EventLog({{"", "A", {}, "o", 0}}), ValidationError);
    EXPECT_THROW(EventLog({{"1", "", {}, "o", 0}}), ValidationError);
    EXPECT_THROW(CaseView("1", {{"2", "A", {}, "o", 0}}), ValidationError);
}

TEST(EventLog, FilterCasesReportsUnknown) {
    auto log = sample_log("hospital");
    EXPECT_EQ(filter_cases(log, {"711"}).case_count(), 1u);
    try {
        filter_cases(log, {"711", "999"});
        FAIL();
    } catch (const UnknownCasesError& e) {
        EXPECT_EQ(e.missing(), std::vector<std::string>{"999"});
    }
}

TEST(Partition, MergedCase312SplitsLikeTheScenario) {
    std::vector<Event> all;
    for (const char* part : {"hospital", "pharma", "clinic"}) {
        for (auto& e : sample_log(part).events()) {
            if (e.case_ref == "312") {
                all.push_back(e);
            }
        }
    }
    EventLog merged(all);
    auto parts = partition_by_org(merged, scenario_org_map(3));
    ASSERT_EQ(parts.size(), 3u);
    EXPECT_EQ(parts.at("O1").event_count(), 10u);
    EXPECT_EQ(parts.at("O2").find("312")->activities(), (std::vector<std::string>{"DOR", "PDL", "SD"}));
    EXPECT_EQ(parts.at("O3").find("312")->activities(),
              (std::vector<std::string>{"PAFH", "PIA", "PT", "VRT", "TPB"}));
}

TEST(Partition, SingleOrgIsIdentity) {
    auto log = sample_log("hospital");
    ActivityOrgMap m;
    for (const auto& a : log.activities()) {
        m[a] = "only";
    }
    auto parts = partition_by_org(log, m);
    ASSERT_EQ(parts.size(), 1u);
    EXPECT_EQ(parts.at("only"), log);
    EXPECT_EQ(parts.at("only").events(), log.events());
}

TEST(Partition, UnmappedActivityIsNamed) {
    auto log = sample_log("hospital");
    ActivityOrgMap m{{"PH", "H"}};
    try {
        partition_by_org(log, m);
        FAIL();
    } catch (const PartitionError& e) {
        EXPECT_NE(std::string(e.what()).find("COPA"), std::string::npos) << e.what();
    }
}

TEST(Partition, CaseRefsOfGeneratedLog) {
    auto sc = generate_scenario_log({.cases = 128});
    auto refs = case_refs(sc.log);
    EXPECT_EQ(refs.size(), 128u);
    EXPECT_TRUE(std::is_sorted(refs.begin(), refs.end()));
    EXPECT_EQ(std::set<std::string>(refs.begin(), refs.end()).size(), 128u);
}

// Properties --------------------------------------------------------------------

namespace {

std::multiset<std::tuple<std::string, std::string, Timestamp, std::string, std::uint64_t>> multiset_of(
    const std::vector<Event>& ev) {
    std::multiset<std::tuple<std::string, std::string, Timestamp, std::string, std::uint64_t>> out;
    for (const auto& e : ev) {
        out.emplace(e.case_ref, e.activity, e.timestamp, e.org, e.seq_hint);
    }
    return out;
}

const std::vector<std::string> kActs{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};

}  // namespace

TEST(EventLogProperty, SortingIsDeterministicAndIdempotent) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto log = random_log(rng, 20, kActs, 15);
        for (const auto& [ref, c] : log.cases()) {
            auto shuffled = c.events();
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            CaseView again(ref, shuffled);
            EXPECT_EQ(again, c);
            EXPECT_EQ(CaseView(ref, again.events()), again);
            // Oracle: comparison sort on the explicit key.
            auto oracle = shuffled;
            std::sort(oracle.begin(), oracle.end(), [](const Event& a, const Event& b) {
                if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                if (a.org != b.org) return a.org < b.org;
                return a.seq_hint < b.seq_hint;
            });
            EXPECT_EQ(again.events(), oracle);
        }
    }
}

TEST(EventLogProperty, CsvRoundTrip) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        auto log = random_log(rng, 1 + rng() % 30, kActs);
        auto once = parse_csv(serialize_csv(log));
        EXPECT_EQ(once, log);
        EXPECT_EQ(parse_csv(serialize_csv(once)), once);
    }
}

TEST(EventLogProperty, PartitionPreservesEventMultiset) {
    std::mt19937_64 rng(13);
    for (int k = 2; k <= 8; ++k) {
        for (int trial = 0; trial < 5; ++trial) {
            auto log = random_log(rng, 40, kActs);
            ActivityOrgMap m;
            for (const auto& a : kActs) {
                m[a] = "org" + std::to_string(rng() % k);
            }
            auto parts = partition_by_org(log, m);
            std::vector<Event> united;
            for (const auto& [org, sub] : parts) {
                for (const auto& e : sub.events()) {
                    EXPECT_EQ(m.at(e.activity), org);
                    united.push_back(e);
                }
            }
            EXPECT_EQ(multiset_of(united), multiset_of(log.events()));
            // Each case re-sorted from its parts reproduces the original view.
            for (const auto& [ref, c] : log.cases()) {
                std::vector<Event> ev;
                for (const auto& [_, sub] : parts) {
                    if (const auto* p = sub.find(ref)) {
                        ev.insert(ev.end(), p->events().begin(), p->events().end());
                    }
                }
                EXPECT_EQ(CaseView(ref, ev), c);
            }
        }
    }
}

TEST(Xes, ReadsConceptNamesAndTimestamps) {
    std::istringstream in(R"(<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0">
  <string key="concept:name" value="demo"/>
  <trace>
    <string key="concept:name" value="case-1"/>
    <event>
      <string key="concept:name" value="ER Registration"/>
      <date key="time:timestamp" value="2014-10-22T11:15:41.000+02:00"/>
      <string key="org:group" value="A"/>
    </event>
    <event>
      <string key="concept:name" value="ER Triage"/>
      <date key="time:timestamp" value="2014-10-22T11:27:00.000+02:00"/>
      <string key="org:group" value="B"/>
    </event>
  </trace>
</log>)");
    auto log = parse_xes(in, XesOptions{"org:group", std::nullopt});
    ASSERT_EQ(log.event_count(), 2u);
    const auto& c = *log.find("case-1");
    EXPECT_EQ(c.activities(), (std::vector<std::string>{"ER Registration", "ER Triage"}));
    EXPECT_EQ(c.events()[0].timestamp, ts("2014-10-22T09:15:41Z"));
    EXPECT_EQ(c.events()[0].org, "A");
    EXPECT_EQ(c.events()[1].org, "B");
}

TEST(Xes, MalformedEventNamesElement) {
    std::istringstream in(R"(<log><trace><string key="concept:name" value="t1"/>
      <event><string key="concept:name" value="A"/></event></trace></log>)");
    try {
        parse_xes(in);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("event"), std::string::npos) << e.what();
    }
}
