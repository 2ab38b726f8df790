#include "coachres/domain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coachres {

int Train::max_capacity() const {
  if (coach_capacities.empty()) throw DomainError("train has no coaches");
  return *std::max_element(coach_capacities.begin(), coach_capacities.end());
}

int Train::total_capacity() const {
  return std::accumulate(coach_capacities.begin(), coach_capacities.end(), 0);
}

std::vector<int> legs_of(int origin, int destination, const Network& network) {
  if (origin < 1 || destination > network.station_count() || origin >= destination)
    throw DomainError("legs_of: invalid origin/destination pair");
  std::vector<int> legs(static_cast<size_t>(destination - origin));
  std::iota(legs.begin(), legs.end(), origin);
  return legs;
}

ResidualCapacity::ResidualCapacity(const Train& train, int legs)
    : coaches_(train.coach_count()), legs_(legs) {
  if (legs < 1) throw DomainError("ResidualCapacity: need at least one leg");
  free_.resize(static_cast<size_t>(coaches_) * legs_);
  for (int c = 1; c <= coaches_; ++c)
    for (int l = 1; l <= legs_; ++l) free_[index(c, l)] = train.capacity(c);
}

bool ResidualCapacity::fits(int coach, const RequestType& t) const {
  for (int l = t.first_leg(); l <= t.last_leg(); ++l)
    if (free(coach, l) < t.group_size) return false;
  return true;
}

void ResidualCapacity::occupy(int coach, const RequestType& t, int seats) {
  for (int l = t.first_leg(); l <= t.last_leg(); ++l) {
    int& f = free(coach, l);
    if (f < seats) throw DomainError("occupy: capacity exceeded");
    f -= seats;
  }
}

void ResidualCapacity::release(int coach, const RequestType& t, int seats) {
  for (int l = t.first_leg(); l <= t.last_leg(); ++l) free(coach, l) += seats;
}

int ResidualCapacity::total_free(int leg) const {
  int total = 0;
  for (int c = 1; c <= coaches_; ++c) total += free(c, leg);
  return total;
}

int ResidualCapacity::min_free() const {
  if (free_.empty()) return -1;
  return *std::min_element(free_.begin(), free_.end());
}

std::vector<int> feasible_coaches(const RequestType& t, const ResidualCapacity& kappa) {
  std::vector<int> out;
  for (int c = 1; c <= kappa.coaches(); ++c)
    if (kappa.fits(c, t)) out.push_back(c);
  return out;
}

int AssignmentPlan::accepted_count() const {
  return static_cast<int>(std::count_if(coach_of.begin(), coach_of.end(),
                                        [](int c) { return c > 0; }));
}

void apply_assignment(ResidualCapacity& kappa, const RequestType& t, int coach) {
  if (!kappa.fits(coach, t)) throw DomainError("apply_assignment: group does not fit");
  kappa.occupy(coach, t, t.group_size);
}

Money plan_revenue(const AssignmentPlan& plan, const std::vector<Request>& requests,
                   const Instance& instance) {
  if (plan.coach_of.size() != requests.size())
    throw DomainError("plan_revenue: plan/request length mismatch");
  Money total = 0;
  for (size_t k = 0; k < requests.size(); ++k)
    if (plan.accepted(static_cast<int>(k))) total += instance.price(requests[k]);
  return total;
}

std::vector<PlanViolation> validate_plan(const AssignmentPlan& plan,
                                         const std::vector<Request>& requests,
                                         const Instance& instance) {
  std::vector<PlanViolation> violations;
  if (plan.coach_of.size() != requests.size()) {
    violations.push_back({"plan length " + std::to_string(plan.coach_of.size()) +
                          " does not match request count " +
                          std::to_string(requests.size())});
    return violations;
  }
  ResidualCapacity kappa(instance.train, instance.network.leg_count());
  for (size_t k = 0; k < requests.size(); ++k) {
    int c = plan.coach(static_cast<int>(k));
    if (c == 0) continue;
    const RequestType& t = instance.type_of(requests[k]);
    if (c < 1 || c > kappa.coaches()) {
      violations.push_back({"request " + std::to_string(k + 1) + ": coach " +
                            std::to_string(c) + " does not exist"});
      continue;
    }
    if (!kappa.fits(c, t)) {
      violations.push_back({"request " + std::to_string(k + 1) + " (group " +
                            std::to_string(t.group_size) + ", legs " +
                            std::to_string(t.first_leg()) + ".." +
                            std::to_string(t.last_leg()) + ") overfills coach " +
                            std::to_string(c)});
      continue;
    }
    kappa.occupy(c, t, t.group_size);
  }
  return violations;
}

double max_group_fraction(const Instance& instance) {
  if (instance.types.empty()) throw DomainError("max_group_fraction: no types");
  int n_max = 0;
  for (const auto& t : instance.types) n_max = std::max(n_max, t.group_size);
  return static_cast<double>(n_max) / instance.train.max_capacity();
}

void validate_instance(const Instance& instance) {
  if (instance.network.station_count() < 2)
    throw DomainError("instance: need at least two stations");
  if (instance.train.coach_count() < 1) throw DomainError("instance: need a coach");
  for (int c = 1; c <= instance.train.coach_count(); ++c)
    if (instance.train.capacity(c) < 1)
      throw DomainError("instance: coach capacities must be positive");
  if (instance.types.empty()) throw DomainError("instance: no request types");
  double rate_sum = 0.0;
  for (const auto& t : instance.types) {
    if (t.origin < 1 || t.destination > instance.network.station_count() ||
        t.origin >= t.destination)
      throw DomainError("instance: type has invalid origin/destination");
    if (t.group_size < 1) throw DomainError("instance: group size must be >= 1");
    if (t.group_size > instance.train.max_capacity())
      throw DomainError("instance: group larger than every coach");
    if (t.price < 0) throw DomainError("instance: negative price");
    if (t.arrival_rate < 0) throw DomainError("instance: negative arrival rate");
    rate_sum += t.arrival_rate;
  }
  if (!instance.arrivals.empty()) {
    std::vector<int> seen(instance.types.size(), 0);
    int step = 0;
    for (const auto& r : instance.arrivals) {
      ++step;
      if (r.type_id < 0 || r.type_id >= static_cast<int>(instance.types.size()))
        throw DomainError("instance: arrival references unknown type");
      if (r.arrival_index != step)
        throw DomainError("instance: arrival indices must be 1,2,...");
      if (r.ordinal != ++seen[r.type_id])
        throw DomainError("instance: per-type ordinals must count up from 1");
    }
  }
  if (rate_sum > 0 && std::abs(rate_sum - 1.0) > 1e-9 && instance.process.total_mean > 0)
    throw DomainError("instance: arrival rates must sum to 1");
}

}  // namespace coachres
