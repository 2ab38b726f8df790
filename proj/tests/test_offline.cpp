#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "coachres/offline.hpp"
#include "coachres/sim.hpp"
#include "test_support.hpp"

using namespace coachres;
using namespace coachres::offline;

namespace {

bool row_violated(const linprog::CutRow& row, const std::vector<double>& x) {
  double a = 0.0;
  for (const linprog::Term& t : row.terms) a += t.coef * x.at(t.var);
  switch (row.sense) {
    case linprog::Sense::LE: return a > row.rhs + 1e-9;
    case linprog::Sense::GE: return a < row.rhs - 1e-9;
    case linprog::Sense::EQ: return std::abs(a - row.rhs) > 1e-9;
  }
  return false;
}

// Marks request k accepted into coach 1 in a value vector for the fairness
// model, keeping the y-link consistent whether or not y is substituted.
void mark_accepted(std::vector<double>& x, const FcfsVarMap& vars, int k) {
  x.at(vars.x[k][0]) = 1.0;
  if (vars.y[k] >= 0) x.at(vars.y[k]) = 1.0;
}

}  // namespace

TEST_CASE("revenue-optimal acceptance on the seat toy keeps the pair") {
  const Instance toy = testing::toy_instance();
  const std::vector<Request> reqs = testing::requests_of({0, 1, 2});

  for (const bool full : {false, true}) {
    CAPTURE(full);
    OfflineConfig cfg;
    cfg.use_full_model = full;
    const OfflineResult res = solve_offline(reqs, toy, cfg);
    REQUIRE(res.status == linprog::Status::Optimal);
    CHECK(res.value == 10);
    CHECK(res.plan.coach_of[0] == 1);
    CHECK(res.plan.coach_of[1] == 0);
    CHECK(res.plan.coach_of[2] == 0);
    CHECK(validate_plan(res.plan, reqs, toy).empty());
  }
}

TEST_CASE("single requests and mutual exclusion resolve by price") {
  const Instance toy = testing::toy_instance();
  const std::vector<Request> one = testing::requests_of({1});
  CHECK(solve_offline(one, toy).value == 4);

  // One seat, two single-passenger same-leg requests at different prices.
  Instance narrow = toy;
  narrow.train.coach_capacities = {1};
  narrow.types = {{1, 2, 1, 7, 0.5}, {1, 2, 1, 4, 0.5}};
  const std::vector<Request> both = testing::requests_of({0, 1});
  CHECK(solve_offline(both, narrow).value == 7);
}

TEST_CASE("decision mode answers pure packability") {
  const Instance toy = testing::toy_instance();
  OfflineConfig decide;
  decide.decision_only = true;

  // The two singles occupy different legs: they pack together.
  const std::vector<Request> singles = testing::requests_of({1, 2});
  CHECK(solve_offline(singles, toy, decide).all_packable);

  // The pair plus a first-leg single need three seats on leg 1.
  const std::vector<Request> crowd = testing::requests_of({0, 1});
  CHECK_FALSE(solve_offline(crowd, toy, decide).all_packable);
}

TEST_CASE("pack_feasible matches complete enumeration on random tiny cases") {
  RngStream rng(101, "offline-pack");
  int sat = 0, unsat = 0;
  for (int rep = 0; rep < 150; ++rep) {
    const testing::TinyCase tiny = testing::random_tiny_case(rng);
    const bool truth = testing::enumerate_packable(tiny.requests, tiny.instance);
    const std::optional<AssignmentPlan> witness =
        pack_feasible(tiny.requests, tiny.instance);
    REQUIRE(witness.has_value() == truth);
    if (truth) {
      ++sat;
      // The witness seats every request and replays feasibly.
      CHECK(witness->accepted_count() ==
            static_cast<int>(tiny.requests.size()));
      CHECK(validate_plan(*witness, tiny.requests, tiny.instance).empty());
    } else {
      ++unsat;
    }
  }
  CHECK(sat > 20);
  CHECK(unsat > 20);
}

TEST_CASE("offline optimum matches complete enumeration on random tiny cases") {
  RngStream rng(7, "offline-oracle");
  for (int rep = 0; rep < 40; ++rep) {
    const testing::TinyCase tiny = testing::random_tiny_case(rng);
    const Money truth = testing::enumerate_best(tiny.requests, tiny.instance);
    const OfflineResult res = solve_offline(tiny.requests, tiny.instance);
    REQUIRE(res.status == linprog::Status::Optimal);
    CHECK(res.value == truth);
    CHECK(validate_plan(res.plan, tiny.requests, tiny.instance).empty());

    OfflineConfig full;
    full.use_full_model = true;
    CHECK(solve_offline(tiny.requests, tiny.instance, full).value == truth);
  }
}

TEST_CASE("acceptance masses of the relaxation split the seat toy pair") {
  const Instance toy = testing::toy_instance();
  const std::vector<Request> reqs = testing::requests_of({0, 1, 2});
  const LpMasses masses = solve_offline_lp(reqs, toy);
  CHECK(masses.objective == doctest::Approx(13.0));
  CHECK(masses.mass[0] == doctest::Approx(0.5));
  CHECK(masses.mass[1] == doctest::Approx(1.0));
  CHECK(masses.mass[2] == doctest::Approx(1.0));
  CHECK(masses.type_mass[0] == doctest::Approx(0.5));

  // A lone request with slack capacity takes full mass.
  const std::vector<Request> one = testing::requests_of({1});
  CHECK(solve_offline_lp(one, toy).mass[0] == doctest::Approx(1.0));

  // Two interchangeable full-coach requests share exactly one unit of mass.
  const std::vector<Request> twins = testing::requests_of({0, 0});
  const LpMasses shared = solve_offline_lp(twins, toy);
  CHECK(shared.objective == doctest::Approx(10.0));
  CHECK(shared.mass[0] + shared.mass[1] == doctest::Approx(1.0));
}

TEST_CASE("aggregated relaxation equals the literal per-coach relaxation") {
  RngStream rng(55, "offline-lp-equiv");
  for (int rep = 0; rep < 30; ++rep) {
    const testing::TinyCase tiny = testing::random_tiny_case(rng);
    const LpMasses agg = solve_offline_lp(tiny.requests, tiny.instance);
    OfflineModel literal = build_offline_model(tiny.requests, tiny.instance);
    const linprog::Solution lit = linprog::solve_lp(literal.model);
    REQUIRE(lit.status == linprog::Status::Optimal);
    CHECK(agg.objective == doctest::Approx(lit.objective).epsilon(1e-7));
  }
}

TEST_CASE("fair acceptance optimum depends on the arrival order") {
  const Instance toy = testing::toy_instance();

  // Singles first: they must be seated, which starves the pair.
  const std::vector<Request> singles_first = testing::requests_of({1, 2, 0});
  const FcfsResult starved = solve_offline_fcfs(singles_first, toy);
  REQUIRE(starved.status == linprog::Status::Optimal);
  CHECK(starved.value == 8);
  CHECK(starved.gap == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(testing::oracle_fair(starved.plan, singles_first, toy));

  // Pair first: seating it exhausts the coach, singles are fairly rejected.
  const std::vector<Request> pair_first = testing::requests_of({0, 1, 2});
  const FcfsResult rich = solve_offline_fcfs(pair_first, toy);
  CHECK(rich.value == 10);
  CHECK(testing::oracle_fair(rich.plan, pair_first, toy));

  // Either plan replayed as a trace carries zero fairness violations.
  const sim::RunTrace trace =
      testing::trace_from_plan(starved.plan, singles_first, toy);
  CHECK(sim::audit_fcfs(trace, toy).empty());
}

TEST_CASE("fair optimum matches the filtered enumeration on random tiny cases") {
  RngStream rng(13, "offline-fcfs-oracle");
  for (int rep = 0; rep < 25; ++rep) {
    const testing::TinyCase tiny = testing::random_tiny_case(rng);
    const Money truth =
        testing::enumerate_best(tiny.requests, tiny.instance, true);
    const FcfsResult res = solve_offline_fcfs(tiny.requests, tiny.instance);
    REQUIRE(res.status == linprog::Status::Optimal);
    CHECK(res.value == truth);
    CHECK(testing::oracle_fair(res.plan, tiny.requests, tiny.instance));
    CHECK(validate_plan(res.plan, tiny.requests, tiny.instance).empty());

    // Extra valid inequalities must not change the optimum.
    FcfsConfig strengthened;
    strengthened.use_dominance_cuts = true;
    strengthened.use_forward_filtering = true;
    CHECK(solve_offline_fcfs(tiny.requests, tiny.instance, strengthened).value ==
          truth);

    // Fairness only constrains: the fair optimum never beats the free one.
    CHECK(truth <= solve_offline(tiny.requests, tiny.instance).value);
  }
}

TEST_CASE("separation pinpoints the earliest unfair rejection") {
  const Instance toy = testing::toy_instance();
  const std::vector<Request> reqs = testing::requests_of({1, 2, 0});

  AssignmentPlan unfair;
  unfair.coach_of = {0, 1, 0};  // rejects the first single with an empty train
  const auto hit = separate_unfair_rejection(unfair, reqs, toy);
  REQUIRE(hit.has_value());
  CHECK(hit->request_pos == 0);
  CHECK(hit->coach == 1);

  AssignmentPlan all;
  all.coach_of = {1, 1, 0};  // both singles seated, pair genuinely blocked
  CHECK_FALSE(separate_unfair_rejection(all, reqs, toy).has_value());
}

TEST_CASE("precedence cuts order same-type requests and skip larger-later ones") {
  const Instance toy = testing::toy_instance();

  // Two arrivals of the same single type: the second may be accepted only
  // if the first is.
  const std::vector<Request> twins = testing::requests_of({1, 1});
  const FcfsModel twin_model = build_fcfs_model(twins, toy);
  const auto cuts = dominance_cuts(twins, toy, twin_model.vars);
  REQUIRE_FALSE(cuts.empty());
  std::vector<double> later_only(twin_model.model.var_count(), 0.0);
  mark_accepted(later_only, twin_model.vars, 1);
  CHECK(std::any_of(cuts.begin(), cuts.end(), [&](const linprog::CutRow& c) {
    return row_violated(c, later_only);
  }));
  std::vector<double> earlier_only(twin_model.model.var_count(), 0.0);
  mark_accepted(earlier_only, twin_model.vars, 0);
  CHECK(std::none_of(cuts.begin(), cuts.end(), [&](const linprog::CutRow& c) {
    return row_violated(c, earlier_only);
  }));

  // A larger group followed by a smaller one on the same legs is *not* a
  // dominance pair; no ordering may be imposed between them.
  Instance wide = toy;
  wide.train.coach_capacities = {8};
  wide.types = {{1, 3, 4, 10, 0.5}, {1, 3, 3, 6, 0.5}};
  const std::vector<Request> shrink = testing::requests_of({0, 1});
  const FcfsModel shrink_model = build_fcfs_model(shrink, wide);
  CHECK(dominance_cuts(shrink, wide, shrink_model.vars).empty());
}

TEST_CASE("a blocking certificate caps later load on its coach and leg") {
  // Two same-leg singles: once the first is certified blocked on coach 1,
  // nothing may be added there afterwards.
  Instance narrow = testing::toy_instance();
  narrow.train.coach_capacities = {1};
  narrow.types = {{1, 2, 1, 4, 1.0}};
  const std::vector<Request> reqs = testing::requests_of({0, 0});
  const FcfsModel fm = build_fcfs_model(reqs, narrow);
  const auto rows = forward_filtering_cuts(reqs, narrow, fm.vars);
  REQUIRE_FALSE(rows.empty());

  REQUIRE_FALSE(fm.vars.z[0].empty());
  const FcfsVarMap::ZVar& z0 = fm.vars.z[0].front();

  std::vector<double> blocked_then_filled(fm.model.var_count(), 0.0);
  blocked_then_filled.at(z0.var) = 1.0;
  mark_accepted(blocked_then_filled, fm.vars, 1);
  CHECK(std::any_of(rows.begin(), rows.end(), [&](const linprog::CutRow& c) {
    return row_violated(c, blocked_then_filled);
  }));

  // Without the certificate the same assignment is allowed by these rows.
  std::vector<double> filled_only(fm.model.var_count(), 0.0);
  mark_accepted(filled_only, fm.vars, 1);
  CHECK(std::none_of(rows.begin(), rows.end(), [&](const linprog::CutRow& c) {
    return row_violated(c, filled_only);
  }));
}

TEST_CASE("forced-acceptance screening respects the load threshold") {
  // One coach of ten seats; the largest group (2) makes a fifth of it.
  Instance inst;
  inst.network.stations = {"A", "B"};
  inst.train.coach_capacities = {10};
  inst.types = {{1, 2, 2, 5, 0.5}, {1, 2, 1, 3, 0.5}};
  inst.process.total_mean = 6;
  inst.process.horizon = 6;

  // Prior demand 8 = (1 - 0.2) * 10 exactly: still within the threshold,
  // the probe is forced.
  const std::vector<Request> at_threshold =
      testing::requests_of({0, 0, 0, 0, 1});
  const std::vector<int> forced_at =
      preprocess_forced_assignments(at_threshold, inst);
  CHECK(std::count(forced_at.begin(), forced_at.end(), 0) == 1);
  CHECK(std::count(forced_at.begin(), forced_at.end(), 4) == 1);

  // Prior demand 9 crosses it: the probe is no longer guaranteed a seat.
  const std::vector<Request> past_threshold =
      testing::requests_of({0, 0, 0, 0, 1, 1});
  const std::vector<int> forced_past =
      preprocess_forced_assignments(past_threshold, inst);
  CHECK(std::count(forced_past.begin(), forced_past.end(), 0) == 1);
  CHECK(std::count(forced_past.begin(), forced_past.end(), 5) == 0);
}

TEST_CASE("forced-acceptance screening preserves the fair optimum") {
  RngStream rng(29, "offline-forced");
  for (int rep = 0; rep < 20; ++rep) {
    const testing::TinyCase tiny = testing::random_tiny_case(rng);
    const Money truth =
        testing::enumerate_best(tiny.requests, tiny.instance, true);
    FcfsConfig cfg;
    cfg.preprocess_forced = true;
    const FcfsResult res = solve_offline_fcfs(tiny.requests, tiny.instance, cfg);
    REQUIRE(res.status == linprog::Status::Optimal);
    CHECK(res.value == truth);
  }
}

TEST_CASE("greedy fair replays never reject a seatable request") {
  RngStream rng(77, "offline-greedy");
  for (int rep = 0; rep < 40; ++rep) {
    const testing::TinyCase tiny = testing::random_tiny_case(rng);
    const AssignmentPlan ff = first_fit_plan(tiny.requests, tiny.instance);
    CHECK(testing::oracle_fair(ff, tiny.requests, tiny.instance));
    CHECK(validate_plan(ff, tiny.requests, tiny.instance).empty());

    RngStream coins(rep, "offline-greedy-coins");
    const AssignmentPlan rf =
        random_fit_plan(tiny.requests, tiny.instance, coins);
    CHECK(testing::oracle_fair(rf, tiny.requests, tiny.instance));
    CHECK(validate_plan(rf, tiny.requests, tiny.instance).empty());

    // Identical coins reproduce the identical plan.
    RngStream coins_again(rep, "offline-greedy-coins");
    CHECK(random_fit_plan(tiny.requests, tiny.instance, coins_again).coach_of ==
          rf.coach_of);
  }
}
