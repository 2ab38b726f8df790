#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// deliberately avoid the domain helpers (ResidualCapacity, feasible_coaches)
// so that a bug in those cannot hide inside the expected values: they work on
// plain seat matrices and exhaustive recursion only.

#include <algorithm>
#include <functional>
#include <map>
#include <vector>

#include "coachres/domain.hpp"
#include "coachres/rng.hpp"
#include "coachres/sim.hpp"

namespace coachres::testing {

// One coach of two seats over two legs with three request types: a pair
// spanning both legs and one single per leg. Small enough to reason about by
// hand, rich enough to make revenue maximization and fairness disagree.
inline Instance toy_instance() {
  Instance inst;
  inst.network.stations = {"A", "B", "C"};
  inst.train.coach_capacities = {2};
  inst.types = {
      {1, 3, 2, 10, 0.4},  // type 0: both legs, group of two, price 10
      {1, 2, 1, 4, 0.3},   // type 1: first leg, single, price 4
      {2, 3, 1, 4, 0.3},   // type 2: second leg, single, price 4
  };
  inst.process.kind = ArrivalProcess::Kind::PoissonConditioned;
  inst.process.total_mean = 3.0;
  inst.process.horizon = 3;
  return inst;
}

// Requests in the given type order, ordinals and arrival indices re-derived.
inline std::vector<Request> requests_of(const std::vector<int>& type_order) {
  std::vector<Request> out;
  std::map<int, int> seen;
  int i = 0;
  for (int t : type_order) out.push_back({t, ++seen[t], ++i});
  return out;
}

inline std::vector<std::vector<int>> fresh_seats(const Instance& instance) {
  const int legs = instance.network.leg_count();
  std::vector<std::vector<int>> free;
  for (int cap : instance.train.coach_capacities)
    free.push_back(std::vector<int>(legs, cap));
  return free;
}

inline bool oracle_fits(const std::vector<std::vector<int>>& free, int coach0,
                        const RequestType& t) {
  for (int l = t.origin; l <= t.destination - 1; ++l)
    if (free[coach0][l - 1] < t.group_size) return false;
  return true;
}

inline void oracle_apply(std::vector<std::vector<int>>& free, int coach0,
                         const RequestType& t, int sign) {
  for (int l = t.origin; l <= t.destination - 1; ++l)
    free[coach0][l - 1] -= sign * t.group_size;
}

// Best revenue over every assignment plan, by complete recursion. With
// fcfs_only, a request may be rejected only when no coach can seat it at its
// arrival given the plan's own earlier assignments.
inline Money enumerate_best(const std::vector<Request>& requests,
                            const Instance& instance, bool fcfs_only = false) {
  auto free = fresh_seats(instance);
  const int C = instance.train.coach_count();
  Money best = 0;
  std::function<void(size_t, Money)> rec = [&](size_t k, Money acc) {
    if (k == requests.size()) {
      best = std::max(best, acc);
      return;
    }
    const RequestType& t = instance.type_of(requests[k]);
    bool any_fit = false;
    for (int c = 0; c < C; ++c) {
      if (!oracle_fits(free, c, t)) continue;
      any_fit = true;
      oracle_apply(free, c, t, +1);
      rec(k + 1, acc + t.price);
      oracle_apply(free, c, t, -1);
    }
    if (!(fcfs_only && any_fit)) rec(k + 1, acc);
  };
  rec(0, 0);
  return best;
}

// Can every request be seated simultaneously? Complete recursion.
inline bool enumerate_packable(const std::vector<Request>& requests,
                               const Instance& instance) {
  auto free = fresh_seats(instance);
  const int C = instance.train.coach_count();
  std::function<bool(size_t)> rec = [&](size_t k) {
    if (k == requests.size()) return true;
    const RequestType& t = instance.type_of(requests[k]);
    for (int c = 0; c < C; ++c) {
      if (!oracle_fits(free, c, t)) continue;
      oracle_apply(free, c, t, +1);
      if (rec(k + 1)) return true;
      oracle_apply(free, c, t, -1);
    }
    return false;
  };
  return rec(0);
}

// Replays a plan in arrival order and checks the fairness rule directly:
// every rejection must happen with no coach able to seat the group.
inline bool oracle_fair(const AssignmentPlan& plan,
                        const std::vector<Request>& requests,
                        const Instance& instance) {
  auto free = fresh_seats(instance);
  const int C = instance.train.coach_count();
  for (size_t k = 0; k < requests.size(); ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    if (plan.coach_of[k] > 0) {
      oracle_apply(free, plan.coach_of[k] - 1, t, +1);
    } else {
      for (int c = 0; c < C; ++c)
        if (oracle_fits(free, c, t)) return false;
    }
  }
  return true;
}

// Random instance small enough for the enumeration oracles: at most 2 coaches
// of capacity <= 4, at most 3 legs, at most 8 requests over up to 4 types.
struct TinyCase {
  Instance instance;
  std::vector<Request> requests;
};

inline TinyCase random_tiny_case(RngStream& rng) {
  TinyCase out;
  Instance& inst = out.instance;
  const int stations = rng.uniform_int(2, 4);
  for (int s = 0; s < stations; ++s)
    inst.network.stations.push_back("S" + std::to_string(s + 1));
  const int coaches = rng.uniform_int(1, 2);
  int min_cap = 4;
  for (int c = 0; c < coaches; ++c) {
    const int cap = rng.uniform_int(1, 4);
    inst.train.coach_capacities.push_back(cap);
    min_cap = std::min(min_cap, cap);
  }
  const int type_count = rng.uniform_int(1, 4);
  double rate_sum = 0.0;
  for (int t = 0; t < type_count; ++t) {
    RequestType type;
    type.origin = rng.uniform_int(1, stations - 1);
    type.destination = rng.uniform_int(type.origin + 1, stations);
    type.group_size = rng.uniform_int(1, min_cap);
    type.price = rng.uniform_int(1, 20);
    type.arrival_rate = 1.0 + rng.uniform_int(0, 3);
    rate_sum += type.arrival_rate;
    inst.types.push_back(type);
  }
  for (RequestType& t : inst.types) t.arrival_rate /= rate_sum;
  const int n_requests = rng.uniform_int(1, 8);
  std::vector<int> order;
  for (int k = 0; k < n_requests; ++k)
    order.push_back(rng.uniform_int(0, type_count - 1));
  out.requests = requests_of(order);
  inst.process.kind = ArrivalProcess::Kind::PoissonConditioned;
  inst.process.total_mean = static_cast<double>(n_requests);
  inst.process.horizon = n_requests;
  inst.arrivals = out.requests;
  return out;
}

// Minimal trace for audit tests: replays a plan as a sequence of rows.
inline sim::RunTrace trace_from_plan(const AssignmentPlan& plan,
                                     const std::vector<Request>& requests,
                                     const Instance& instance,
                                     std::string policy = "test") {
  sim::RunTrace trace;
  trace.policy = std::move(policy);
  trace.plan = plan;
  for (size_t k = 0; k < requests.size(); ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    sim::TraceRow row;
    row.step = static_cast<int>(k) + 1;
    row.type_id = requests[k].type_id;
    row.ordinal = requests[k].ordinal;
    row.group = t.group_size;
    row.price = t.price;
    row.accepted = plan.coach_of[k] > 0;
    row.coach = plan.coach_of[k];
    trace.rows.push_back(row);
    if (row.accepted) {
      trace.revenue += t.price;
      ++trace.accepted_count;
    }
  }
  return trace;
}

}  // namespace coachres::testing
