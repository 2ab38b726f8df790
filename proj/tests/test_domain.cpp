#include <doctest.h>

#include <numeric>

#include "coachres/domain.hpp"
#include "coachres/instance_io.hpp"
#include "test_support.hpp"

using namespace coachres;

namespace {

// Five stations, one coach whose per-leg free seats can be set directly.
ResidualCapacity coach_with_free(const std::vector<int>& free, int capacity) {
  Train train;
  train.coach_capacities = {capacity};
  ResidualCapacity kappa(train, static_cast<int>(free.size()));
  for (size_t l = 0; l < free.size(); ++l)
    kappa.free(1, static_cast<int>(l) + 1) = free[l];
  return kappa;
}

const RequestType& find_type(const Instance& inst, int origin, int destination,
                             int group) {
  for (const RequestType& t : inst.types)
    if (t.origin == origin && t.destination == destination &&
        t.group_size == group)
      return t;
  throw std::logic_error("type not in instance");
}

}  // namespace

TEST_CASE("legs_of maps an itinerary to the closed leg interval") {
  Network five;
  five.stations = {"S1", "S2", "S3", "S4", "S5"};
  CHECK(legs_of(1, 2, five) == std::vector<int>{1});
  CHECK(legs_of(1, 5, five) == std::vector<int>{1, 2, 3, 4});
  CHECK(legs_of(2, 4, five) == std::vector<int>{2, 3});
  // Contiguity: the interval length always equals destination - origin.
  for (int o = 1; o < 5; ++o)
    for (int d = o + 1; d <= 5; ++d) {
      const std::vector<int> legs = legs_of(o, d, five);
      CHECK(static_cast<int>(legs.size()) == d - o);
      CHECK(legs.back() - legs.front() + 1 == static_cast<int>(legs.size()));
    }
}

TEST_CASE("feasible_coaches follows per-leg availability") {
  // Single coach with 6 free seats on the first leg: a single-passenger
  // first-leg request fits, and after seating it a party of six that needs
  // every leg no longer does.
  ResidualCapacity kappa = coach_with_free({6, 7, 22, 9}, 22);
  RequestType single{1, 2, 1, 0, 0.0};
  CHECK(feasible_coaches(single, kappa) == std::vector<int>{1});

  apply_assignment(kappa, single, 1);
  CHECK(kappa.free(1, 1) == 5);
  RequestType six{1, 5, 6, 0, 0.0};
  CHECK(feasible_coaches(six, kappa).empty());

  // An empty train admits every coach for any type that respects capacities.
  Train train;
  train.coach_capacities = {3, 5, 4};
  ResidualCapacity empty(train, 2);
  RequestType pair{1, 3, 2, 0, 0.0};
  CHECK(feasible_coaches(pair, empty) == std::vector<int>{1, 2, 3});
}

TEST_CASE("apply_assignment consumes seats exactly on the journey legs") {
  ResidualCapacity kappa = coach_with_free({6, 7, 22, 9}, 22);
  RequestType single{1, 2, 1, 0, 0.0};
  apply_assignment(kappa, single, 1);
  CHECK(kappa.free(1, 1) == 5);
  CHECK(kappa.free(1, 2) == 7);
  CHECK(kappa.free(1, 3) == 22);
  CHECK(kappa.free(1, 4) == 9);

  // Filling a coach to capacity zeroes its journey legs.
  Train train;
  train.coach_capacities = {4};
  ResidualCapacity full(train, 2);
  RequestType block{1, 3, 4, 0, 0.0};
  apply_assignment(full, block, 1);
  CHECK(full.free(1, 1) == 0);
  CHECK(full.free(1, 2) == 0);

  // Assignments on different coaches commute.
  Train two;
  two.coach_capacities = {4, 4};
  ResidualCapacity ab(two, 2), ba(two, 2);
  RequestType t1{1, 2, 2, 0, 0.0}, t2{2, 3, 3, 0, 0.0};
  apply_assignment(ab, t1, 1);
  apply_assignment(ab, t2, 2);
  apply_assignment(ba, t2, 2);
  apply_assignment(ba, t1, 1);
  CHECK(ab == ba);
}

TEST_CASE("apply_assignment reduces total free seats by group times legs") {
  RngStream rng(42, "domain-apply");
  for (int rep = 0; rep < 50; ++rep) {
    testing::TinyCase tiny = testing::random_tiny_case(rng);
    const int legs = tiny.instance.network.leg_count();
    ResidualCapacity kappa(tiny.instance.train, legs);
    const RequestType& t = tiny.instance.types[0];
    if (feasible_coaches(t, kappa).empty()) continue;
    long before = 0, after = 0;
    for (int l = 1; l <= legs; ++l) before += kappa.total_free(l);
    apply_assignment(kappa, t, feasible_coaches(t, kappa).front());
    for (int l = 1; l <= legs; ++l) after += kappa.total_free(l);
    CHECK(before - after == static_cast<long>(t.group_size) * t.leg_count());
  }
}

TEST_CASE("feasible_coaches grows with free capacity") {
  RngStream rng(7, "domain-monotone");
  Train train;
  train.coach_capacities = {4, 4};
  for (int rep = 0; rep < 200; ++rep) {
    ResidualCapacity lo(train, 3), hi(train, 3);
    for (int c = 1; c <= 2; ++c)
      for (int l = 1; l <= 3; ++l) {
        const int a = rng.uniform_int(0, 4);
        const int b = rng.uniform_int(a, 4);
        lo.free(c, l) = a;
        hi.free(c, l) = b;
      }
    RequestType t;
    t.origin = rng.uniform_int(1, 3);
    t.destination = rng.uniform_int(t.origin + 1, 4);
    t.group_size = rng.uniform_int(1, 4);
    const std::vector<int> small = feasible_coaches(t, lo);
    const std::vector<int> large = feasible_coaches(t, hi);
    for (int c : small) CHECK(std::count(large.begin(), large.end(), c) == 1);
  }
}

TEST_CASE("plan revenue sums the fare-table prices of accepted requests") {
  const Instance inst = make_shinkansen();
  CHECK(plan_revenue(AssignmentPlan{}, {}, inst) == 0);

  // One single-passenger end-to-end request: the full-line reserved fare.
  const RequestType& tokyo_osaka = find_type(inst, 1, 5, 1);
  CHECK(tokyo_osaka.price == 14720);
  std::vector<Request> one = testing::requests_of(
      {static_cast<int>(&tokyo_osaka - inst.types.data())});
  AssignmentPlan plan;
  plan.coach_of = {1};
  CHECK(plan_revenue(plan, one, inst) == 14720);

  // Two disjoint singles: their fares add up.
  const RequestType& tokyo_nagoya = find_type(inst, 1, 3, 1);
  const RequestType& kyoto_osaka = find_type(inst, 4, 5, 1);
  CHECK(tokyo_nagoya.price == 11300);
  CHECK(kyoto_osaka.price == 3080);
  std::vector<Request> two = testing::requests_of(
      {static_cast<int>(&tokyo_nagoya - inst.types.data()),
       static_cast<int>(&kyoto_osaka - inst.types.data())});
  AssignmentPlan both;
  both.coach_of = {1, 2};
  CHECK(plan_revenue(both, two, inst) == 14380);
}

TEST_CASE("validate_plan accepts replayable plans and flags overflows") {
  const Instance toy = testing::toy_instance();
  const std::vector<Request> reqs = testing::requests_of({1, 2, 0});

  AssignmentPlan fine;
  fine.coach_of = {1, 1, 0};  // both singles fit together, the pair rejected
  CHECK(validate_plan(fine, reqs, toy).empty());

  // Two full-capacity groups stacked on the same coach overflow a leg.
  const std::vector<Request> pairs = testing::requests_of({0, 0});
  AssignmentPlan overflow;
  overflow.coach_of = {1, 1};
  CHECK(validate_plan(overflow, pairs, toy).size() == 1);
}

TEST_CASE("max_group_fraction is the largest group over the largest coach") {
  CHECK(max_group_fraction(make_shinkansen()) == doctest::Approx(0.06));

  Instance single = testing::toy_instance();
  single.types = {{1, 2, 2, 1, 1.0}};  // group equals the whole coach
  CHECK(max_group_fraction(single) == doctest::Approx(1.0));

  Instance half = testing::toy_instance();
  half.train.coach_capacities = {4};
  half.types = {{1, 2, 1, 1, 0.5}, {1, 2, 2, 1, 0.5}};
  CHECK(max_group_fraction(half) == doctest::Approx(0.5));
}

TEST_CASE("validate_instance rejects malformed data") {
  Instance good = testing::toy_instance();
  CHECK_NOTHROW(validate_instance(good));

  Instance one_station = good;
  one_station.network.stations = {"A"};
  CHECK_THROWS_AS(validate_instance(one_station), DomainError);

  Instance zero_cap = good;
  zero_cap.train.coach_capacities = {0};
  CHECK_THROWS_AS(validate_instance(zero_cap), DomainError);

  Instance oversized = good;
  oversized.types[0].group_size = 3;  // larger than every coach
  CHECK_THROWS_AS(validate_instance(oversized), DomainError);

  Instance backwards = good;
  backwards.types[0].origin = 3;
  backwards.types[0].destination = 1;
  CHECK_THROWS_AS(validate_instance(backwards), DomainError);

  Instance skewed_rates = good;
  skewed_rates.types[0].arrival_rate = 0.9;  // sum now over 1
  CHECK_THROWS_AS(validate_instance(skewed_rates), DomainError);
}

TEST_CASE("residual capacity guards its index range") {
  Train train;
  train.coach_capacities = {3};
  ResidualCapacity kappa(train, 2);
  CHECK_THROWS_AS(kappa.free(0, 1), DomainError);
  CHECK_THROWS_AS(kappa.free(1, 3), DomainError);
  CHECK_THROWS_AS(kappa.free(2, 1), DomainError);
}
