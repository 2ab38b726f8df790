#pragma once

// Core domain model for coach-level train seat reservation: a train is a set of
// coaches crossing consecutive legs, a request is a group that must be seated
// together in one coach on every leg of its journey.
//
// Conventions: stations, legs and coaches are 1-based (leg l connects station l
// to station l+1); type ids are 0-based indices into Instance::types; arrival
// steps i and within-type ordinals j are 1-based.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace coachres {

using Money = long long;  // integer yen; revenues stay exact

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Network {
  std::vector<std::string> stations;  // ordered along the line, size >= 2

  int station_count() const { return static_cast<int>(stations.size()); }
  int leg_count() const { return station_count() - 1; }
};

struct Train {
  std::vector<int> coach_capacities;  // omega_c, 1-based coach c = index c-1

  int coach_count() const { return static_cast<int>(coach_capacities.size()); }
  int capacity(int coach) const { return coach_capacities.at(coach - 1); }
  int max_capacity() const;
  int total_capacity() const;
};

struct RequestType {
  int origin = 0;       // 1-based station
  int destination = 0;  // 1-based station, > origin
  int group_size = 0;   // n(t) >= 1
  Money price = 0;      // p(t), revenue if accepted
  double arrival_rate = 0.0;  // lambda_t, normalized so sum over types = 1

  int first_leg() const { return origin; }
  int last_leg() const { return destination - 1; }
  int leg_count() const { return destination - origin; }
  bool covers_leg(int leg) const { return leg >= origin && leg <= destination - 1; }
};

// One realized arrival: the j-th request of its type, arriving at global step i.
struct Request {
  int type_id = 0;        // 0-based into Instance::types
  int ordinal = 0;        // j >= 1, position among same-type arrivals
  int arrival_index = 0;  // i >= 1, global position in the sequence
};

// Parameters of the arrival process; realized sequences live in Instance::arrivals.
struct ArrivalProcess {
  enum class Kind { PoissonConditioned, Deterministic };
  Kind kind = Kind::PoissonConditioned;
  double total_mean = 0.0;  // Lambda
  int horizon = 0;          // |I|, maximum number of arrivals considered
  std::vector<double> group_size_distribution;  // g(n), n = 1.. (may be empty)
};

struct Instance {
  Network network;
  Train train;
  std::vector<RequestType> types;
  ArrivalProcess process;
  std::vector<Request> arrivals;  // optional realized sequence (may be empty)
  int horizon_days = 30;

  const RequestType& type_of(const Request& r) const { return types.at(r.type_id); }
  int group_size(const Request& r) const { return type_of(r).group_size; }
  Money price(const Request& r) const { return type_of(r).price; }
};

// Legs of a journey as a closed 1-based interval [origin, destination-1].
std::vector<int> legs_of(int origin, int destination, const Network& network);
inline std::vector<int> legs_of(const RequestType& t, const Network& network) {
  return legs_of(t.origin, t.destination, network);
}

// Free seats per (coach, leg). Stored flat, coach-major.
class ResidualCapacity {
 public:
  ResidualCapacity() = default;
  ResidualCapacity(const Train& train, int legs);

  int coaches() const { return coaches_; }
  int legs() const { return legs_; }
  int free(int coach, int leg) const { return free_[index(coach, leg)]; }
  int& free(int coach, int leg) { return free_[index(coach, leg)]; }

  // Seats available for a type in a coach = min free over its legs.
  bool fits(int coach, const RequestType& t) const;
  void occupy(int coach, const RequestType& t, int seats);
  void release(int coach, const RequestType& t, int seats);

  int total_free(int leg) const;
  int min_free() const;  // min over all (coach, leg); -1 if empty
  const std::vector<int>& raw() const { return free_; }
  bool operator==(const ResidualCapacity& o) const = default;

 private:
  int index(int coach, int leg) const {
    if (coach < 1 || coach > coaches_ || leg < 1 || leg > legs_)
      throw DomainError("ResidualCapacity: index out of range");
    return (coach - 1) * legs_ + (leg - 1);
  }
  int coaches_ = 0;
  int legs_ = 0;
  std::vector<int> free_;
};

// Coaches (ascending index) where the group currently fits on all its legs.
std::vector<int> feasible_coaches(const RequestType& t, const ResidualCapacity& kappa);

// Assignment of a realized request sequence: coach per arrival position, 0 = rejected.
struct AssignmentPlan {
  std::vector<int> coach_of;  // indexed by arrival position (0-based), value 0 or 1..C

  int coach(int arrival_pos) const { return coach_of.at(arrival_pos); }
  bool accepted(int arrival_pos) const { return coach(arrival_pos) > 0; }
  int accepted_count() const;
};

struct PlanViolation {
  std::string what;
};

// Deducts an accepted request from kappa; DomainError if it does not fit.
void apply_assignment(ResidualCapacity& kappa, const RequestType& t, int coach);

Money plan_revenue(const AssignmentPlan& plan, const std::vector<Request>& requests,
                   const Instance& instance);

// Replays the plan against fresh capacity; returns all capacity violations
// (empty = plan feasible). Does not judge rejections; see sim audits for that.
std::vector<PlanViolation> validate_plan(const AssignmentPlan& plan,
                                         const std::vector<Request>& requests,
                                         const Instance& instance);

// delta = max_t n(t) / max_c omega_c, the load granularity parameter.
double max_group_fraction(const Instance& instance);

// Basic structural checks (stations ordered, capacities positive, types valid,
// group sizes fit the smallest coach they must use, rates normalized).
void validate_instance(const Instance& instance);

}  // namespace coachres
