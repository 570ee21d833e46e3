#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "remkit/events.hpp"
#include "remkit/risk.hpp"

using namespace remkit;

namespace {

EventSequence ingest(const std::string& text, IngestOptions opt = {}) {
  std::istringstream in(text);
  return parse_event_stream(in, opt);
}

}  // namespace

TEST_CASE("three-row csv round trip") {
  const auto seq = ingest("time,sender,receiver\n1.5,a,b\n2.0,b,c\n4.25,c,a\n");
  REQUIRE(seq.n() == 3);
  CHECK(seq.events[0].time == 1.5);
  CHECK(seq.events[1].time == 2.0);
  CHECK(seq.events[2].time == 4.25);
  CHECK(seq.senders.label(seq.events[0].sender) == "a");
  CHECK(seq.senders.label(seq.events[0].receiver) == "b");
  CHECK(seq.senders.label(seq.events[2].sender) == "c");
  CHECK(seq.senders.label(seq.events[2].receiver) == "a");
  CHECK(seq.n_senders() == 3);
  CHECK(seq.t_end == 4.25);
  CHECK(seq.mode == Mode::one_mode);
  CHECK_FALSE(seq.order_only);
  CHECK(seq.jitter.empty());
  // Untyped input still carries one (empty) type label.
  CHECK(seq.types.size() == 1);
  CHECK(seq.types.label(0).empty());
  CHECK(seq.events[0].weight == 1.0);
}

TEST_CASE("rows are sorted by time, registration follows sorted order") {
  const auto seq = ingest("time,sender,receiver\n9,x,y\n1,u,v\n5,y,u\n");
  REQUIRE(seq.n() == 3);
  CHECK(seq.events[0].time == 1.0);
  CHECK(seq.events[2].time == 9.0);
  // First sorted event's sender gets id 0.
  CHECK(seq.senders.label(0) == "u");
  CHECK(seq.senders.at("x") > seq.senders.at("y"));
}

TEST_CASE("ingestion errors carry source locations") {
  CHECK_THROWS_WITH(ingest("time,sender,receiver\n"),
                    "empty sequence: input has a header but no events");
  CHECK_THROWS_WITH(ingest("when,sender,receiver\n1,a,b\n"),
                    "missing required column 'time'");
  CHECK_THROWS_WITH(ingest(""), "empty input: no header row");
  CHECK_THROWS_WITH(ingest("time,sender,receiver\n1,a,b\nbogus,c,d\n"),
                    "line 3: unparseable timestamp 'bogus'");
  CHECK_THROWS_WITH(ingest("time,sender,receiver\n1,a\n"), "line 2: expected 3 cells, got 2");
  CHECK_THROWS_WITH(ingest("time,sender,receiver\n1,,b\n"), "line 2: empty sender or receiver");
  CHECK_THROWS_WITH(ingest("time,sender,receiver\n-1,a,b\n"),
                    "negative timestamps: the observation window starts at 0");
  try {
    ingest("when,sender,receiver\n1,a,b\n");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::schema);
  }
}

TEST_CASE("iso dates become days since the first instant") {
  const auto seq = ingest(
      "time,sender,receiver\n"
      "2021-03-01,a,b\n"
      "2021-03-02,b,a\n"
      "2021-03-03T12:00,a,b\n");
  REQUIRE(seq.n() == 3);
  CHECK(seq.events[0].time == 0.0);
  CHECK(seq.events[1].time == 1.0);
  CHECK(seq.events[2].time == Catch::Approx(2.5).margin(1e-12));
  // Seconds-resolution stamps land at the right fraction of a day.
  const auto fine = ingest(
      "time,sender,receiver\n"
      "2021-03-01 00:00:00,a,b\n"
      "2021-03-01 06:00:00,b,a\n");
  CHECK(fine.events[1].time == Catch::Approx(0.25).margin(1e-12));
  CHECK_THROWS_WITH(ingest("time,sender,receiver\n2021-03-01,a,b\n5.0,b,a\n"),
                    "mixed timestamp formats (ISO dates and plain reals)");
}

TEST_CASE("tied timestamps get a strictly increasing stable jitter") {
  const auto seq = ingest(
      "time,sender,receiver\n"
      "1,a,b\n"
      "2,b,c\n"
      "2,c,a\n"
      "2,a,c\n"
      "3,b,a\n");
  REQUIRE(seq.n() == 5);
  for (std::size_t i = 1; i < seq.n(); ++i) CHECK(seq.events[i].time > seq.events[i - 1].time);
  // Stable order within the tie group: input order b->c, c->a, a->c.
  CHECK(seq.senders.label(seq.events[1].sender) == "b");
  CHECK(seq.senders.label(seq.events[2].sender) == "c");
  CHECK(seq.senders.label(seq.events[3].sender) == "a");
  REQUIRE(seq.jitter.size() == 2);
  CHECK(seq.jitter[0].event_index == 2);
  CHECK(seq.jitter[1].event_index == 3);
  // Applied jitter is far below half the smallest positive gap (1.0 here).
  for (const auto& j : seq.jitter) {
    CHECK(j.amount > 0.0);
    CHECK(j.amount < 0.5);
    CHECK(j.amount <= 2 * 1e-9 * 1.0 + 1e-18);
  }
  // All-equal timestamps still produce a strict ordering.
  const auto flat = ingest("time,sender,receiver\n7,a,b\n7,b,c\n7,c,a\n");
  CHECK(flat.events[0].time < flat.events[1].time);
  CHECK(flat.events[1].time < flat.events[2].time);
}

TEST_CASE("order-only ingestion assigns ranks and refuses real horizons") {
  IngestOptions opt;
  opt.order_only = true;
  const auto seq = ingest("time,sender,receiver\n10,a,b\n20,b,c\n30,c,a\n", opt);
  CHECK(seq.order_only);
  CHECK(seq.events[0].time == 1.0);
  CHECK(seq.events[1].time == 2.0);
  CHECK(seq.events[2].time == 3.0);
  CHECK(seq.t_end == 3.0);
  CHECK(seq.jitter.empty());
}

TEST_CASE("horizon extends or rejects the observation window") {
  IngestOptions opt;
  opt.horizon = 10.0;
  const auto seq = ingest("time,sender,receiver\n1,a,b\n2,b,a\n", opt);
  CHECK(seq.t_end == 10.0);
  opt.horizon = 1.5;
  CHECK_THROWS_WITH(ingest("time,sender,receiver\n1,a,b\n2,b,a\n", opt),
                    "horizon precedes the last event time");
}

TEST_CASE("self-loops are rejected unless allowed") {
  CHECK_THROWS_WITH(ingest("time,sender,receiver\n1,a,b\n2,a,a\n"),
                    "line 3: self-loop 'a' (enable allow_self_loops to accept)");
  IngestOptions opt;
  opt.allow_self_loops = true;
  const auto seq = ingest("time,sender,receiver\n1,a,b\n2,a,a\n", opt);
  CHECK(seq.n() == 2);
  CHECK(seq.events[1].sender == seq.events[1].receiver);
}

TEST_CASE("type and weight columns are optional extras") {
  const auto seq = ingest(
      "time,sender,receiver,type,weight\n"
      "1,a,b,call,2.5\n"
      "2,b,a,text,0.5\n"
      "3,a,b,call,1\n");
  CHECK(seq.types.size() == 2);
  CHECK(seq.types.label(seq.events[0].type) == "call");
  CHECK(seq.types.label(seq.events[1].type) == "text");
  CHECK(seq.events[0].weight == 2.5);
  CHECK(seq.events[1].weight == 0.5);
  CHECK_THROWS_WITH(ingest("time,sender,receiver,weight\n1,a,b,heavy\n"),
                    "line 2: unparseable weight 'heavy'");
}

TEST_CASE("bipartite ingestion keeps separate registries") {
  IngestOptions opt;
  opt.mode = Mode::bipartite;
  const auto seq = ingest("time,sender,receiver\n1,u1,i1\n2,u2,i2\n3,u1,i3\n", opt);
  CHECK(seq.n_senders() == 2);
  CHECK(seq.n_receivers() == 3);
  // A shared label is fine in bipartite mode: the registries are disjoint.
  const auto shared = ingest("time,sender,receiver\n1,x,x\n", opt);
  CHECK(shared.n() == 1);
}

TEST_CASE("registry lookups and failures") {
  Registry reg;
  CHECK(reg.add("a") == 0);
  CHECK(reg.add("b") == 1);
  CHECK(reg.add("a") == 0);
  CHECK(reg.at("b") == 1);
  CHECK(reg.contains("a"));
  CHECK_FALSE(reg.contains("zzz"));
  CHECK(reg.label(1) == "b");
  CHECK(reg.size() == 2);
  CHECK_THROWS_WITH(reg.at("zzz"), "unknown label 'zzz'");
}

TEST_CASE("count_before is a strict lower bound") {
  const auto seq = ingest("time,sender,receiver\n1,a,b\n2,b,c\n4,c,a\n");
  CHECK(seq.count_before(0.5) == 0);
  CHECK(seq.count_before(1.0) == 0);
  CHECK(seq.count_before(1.5) == 1);
  CHECK(seq.count_before(4.0) == 2);
  CHECK(seq.count_before(99.0) == 3);
}

TEST_CASE("one-mode risk universe excludes loops") {
  const auto seq = ingest("time,sender,receiver\n1,a,b\n2,b,c\n3,c,d\n");
  RiskSetTimeline rst(seq, RiskPolicy{});
  CHECK(rst.universe() == 4 * 3);
  CHECK(rst.size(1.0) == 12);
  CHECK(rst.static_membership());
  CHECK_FALSE(rst.at_risk({0, 0}, 1.0));
  // Index <-> dyad bijection over the whole universe.
  std::set<std::size_t> seen;
  for (std::size_t idx = 0; idx < rst.universe(); ++idx) {
    const Dyad d = rst.dyad_at(idx);
    CHECK(d.s != d.r);
    CHECK(rst.dyad_index(d) == idx);
    seen.insert(idx);
  }
  CHECK(seen.size() == 12);
  rst.validate();
}

TEST_CASE("self-loop universe when the policy allows loops") {
  IngestOptions opt;
  opt.allow_self_loops = true;
  const auto seq = ingest("time,sender,receiver\n1,a,b\n2,b,a\n", opt);
  RiskPolicy policy;
  policy.allow_self_loops = true;
  RiskSetTimeline rst(seq, policy);
  CHECK(rst.universe() == 4);
  CHECK(rst.at_risk({0, 0}, 1.0));
}

TEST_CASE("bipartite universe is the registry cross product") {
  IngestOptions opt;
  opt.mode = Mode::bipartite;
  const auto seq = ingest("time,sender,receiver\n1,u1,i1\n2,u2,i2\n3,u1,i3\n", opt);
  RiskPolicy policy;
  policy.kind = RiskKind::bipartite;
  RiskSetTimeline rst(seq, policy);
  CHECK(rst.universe() == 2 * 3);
  for (std::size_t idx = 0; idx < rst.universe(); ++idx)
    CHECK(rst.dyad_index(rst.dyad_at(idx)) == idx);
  rst.validate();
}

TEST_CASE("mode and policy kind must agree") {
  const auto one = ingest("time,sender,receiver\n1,a,b\n");
  RiskPolicy bi;
  bi.kind = RiskKind::bipartite;
  CHECK_THROWS_WITH((RiskSetTimeline{one, bi}), "bipartite risk policy on a one-mode sequence");
  IngestOptions opt;
  opt.mode = Mode::bipartite;
  const auto two = ingest("time,sender,receiver\n1,u,i\n", opt);
  CHECK_THROWS_WITH((RiskSetTimeline{two, RiskPolicy{}}),
                    "one-mode risk policy on a bipartite sequence");
}

TEST_CASE("static exclusions remove dyads permanently") {
  const auto seq = ingest("time,sender,receiver\n1,a,b\n2,b,c\n3,c,a\n");
  RiskPolicy policy;
  policy.exclusions = {{"a", "c"}, {"c", "b"}};
  RiskSetTimeline rst(seq, policy);
  CHECK(rst.universe() == 6);
  CHECK(rst.size(2.0) == 4);
  CHECK_FALSE(rst.at_risk({seq.senders.at("a"), seq.senders.at("c")}, 2.0));
  CHECK(rst.at_risk({seq.senders.at("c"), seq.senders.at("a")}, 2.0));
  CHECK(rst.static_membership());
  rst.validate();
  // Excluding an observed event's dyad breaks validation.
  RiskPolicy bad;
  bad.exclusions = {{"b", "c"}};
  RiskSetTimeline broken(seq, bad);
  CHECK_THROWS_WITH(broken.validate(), "event #2 (b -> c) is not in its own risk set");
}

TEST_CASE("type-stratified exclusions apply per event type") {
  const auto seq = ingest(
      "time,sender,receiver,type\n"
      "1,a,b,call\n"
      "2,b,c,text\n");
  RiskPolicy policy;
  policy.by_type["call"] = {{"b", "c"}};
  RiskSetTimeline rst(seq, policy);
  const Dyad bc{seq.senders.at("b"), seq.senders.at("c")};
  const auto call = static_cast<type_id>(seq.types.at("call"));
  const auto text = static_cast<type_id>(seq.types.at("text"));
  CHECK_FALSE(rst.at_risk(bc, 1.5, call));
  CHECK(rst.at_risk(bc, 1.5, text));
  CHECK(rst.size(1.5, call) == 5);
  CHECK(rst.size(1.5, text) == 6);
  CHECK_FALSE(rst.static_membership());
  rst.validate();
  RiskPolicy unknown;
  unknown.by_type["fax"] = {{"a", "b"}};
  CHECK_THROWS_WITH((RiskSetTimeline{seq, unknown}),
                    "risk policy names unknown event type 'fax'");
}

TEST_CASE("node windows gate entry and exit") {
  const auto seq = ingest("time,sender,receiver\n1,a,b\n5,b,c\n9,c,a\n");
  RiskPolicy policy;
  policy.node_windows = {{"c", 4.0, 10.0}};
  RiskSetTimeline rst(seq, policy);
  const node_id a = seq.senders.at("a"), c = seq.senders.at("c");
  CHECK_FALSE(rst.at_risk({a, c}, 1.0));
  CHECK_FALSE(rst.at_risk({c, a}, 3.9));
  CHECK(rst.at_risk({a, c}, 4.0));   // window is closed on the left
  CHECK(rst.at_risk({c, a}, 9.0));
  CHECK_FALSE(rst.at_risk({a, c}, 10.0));  // and open on the right
  CHECK(rst.size(1.0) == 2);               // only a<->b while c is absent
  CHECK(rst.size(5.0) == 6);
  CHECK_FALSE(rst.static_membership());
  rst.validate();
  RiskPolicy unknown;
  unknown.node_windows = {{"ghost", 0.0, 1.0}};
  CHECK_THROWS_WITH((RiskSetTimeline{seq, unknown}), "node window names unknown node 'ghost'");
}

TEST_CASE("non-recurrent dyads leave after their first event") {
  const auto seq = ingest("time,sender,receiver\n1,a,b\n2,b,c\n3,a,c\n");
  RiskPolicy policy;
  policy.kind = RiskKind::non_recurrent;
  RiskSetTimeline rst(seq, policy);
  const Dyad ab{seq.senders.at("a"), seq.senders.at("b")};
  // The dyad stays at risk through its own event time and drops afterwards.
  CHECK(rst.at_risk(ab, 1.0));
  CHECK_FALSE(rst.at_risk(ab, 1.0 + 1e-9));
  CHECK(rst.size(1.0) == 6);
  CHECK(rst.size(1.5) == 5);
  CHECK(rst.size(2.5) == 4);
  CHECK(rst.size(3.5) == 3);
  CHECK_FALSE(rst.static_membership());
  rst.validate();
  // materialize agrees with at_risk membership.
  const auto live = rst.materialize(2.5);
  CHECK(live.size() == 4);
  for (const auto& d : live) CHECK(rst.at_risk(d, 2.5));
}

TEST_CASE("bundled fixture has the documented dimensions") {
  IngestOptions opt;
  opt.order_only = true;
  const auto seq = parse_event_file(std::string(REMKIT_SOURCE_DIR) + "/data/wtc_calls.csv", opt);
  CHECK(seq.n() == 481);
  CHECK(seq.n_senders() == 37);
  RiskSetTimeline rst(seq, RiskPolicy{});
  CHECK(rst.universe() == 1332);
  CHECK(rst.size(seq.events.front().time) == 1332);
  rst.validate();
}

TEST_CASE("missing events file names the path") {
  CHECK_THROWS_WITH(parse_event_file("/nonexistent/nowhere.csv"),
                    "cannot open events file: /nonexistent/nowhere.csv");
}

TEST_CASE("hyperevent cells hold label sets") {
  std::istringstream in(
      "time,sender,receiver\n"
      "1,a;b,c\n"
      "2,c,a;b;b\n"
      "3,b,\n");
  const auto seq = parse_hyperevent_stream(in);
  REQUIRE(seq.n() == 3);
  CHECK(seq.events[0].senders.size() == 2);
  CHECK(seq.events[0].receivers.size() == 1);
  // Duplicates collapse; sets come back sorted by id.
  CHECK(seq.events[1].receivers.size() == 2);
  CHECK(std::is_sorted(seq.events[1].receivers.begin(), seq.events[1].receivers.end()));
  CHECK(seq.events[2].receivers.empty());
  std::istringstream bad("time,sender,receiver\n1,,c\n");
  CHECK_THROWS_WITH(parse_hyperevent_stream(bad), "line 2: empty sender set");
}
