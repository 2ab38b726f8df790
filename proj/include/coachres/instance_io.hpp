#pragma once

// Instance JSON (de)serialization and the built-in Tokaido Shinkansen data.
// Schema: docs/instance-schema.md.

#include <iosfwd>
#include <string>

#include "coachres/domain.hpp"

namespace coachres {

struct OdEntry {
  int origin = 0;       // 1-based station
  int destination = 0;  // 1-based station
  Money fare = 0;       // per-seat price for the OD pair
  double demand = 0.0;  // expected number of requests over the horizon
};

// Expands an OD demand table into request types (one per OD x group size),
// with lambda_{od,n} = demand_od * g(n) / total and p = n * fare.
std::vector<RequestType> types_from_od_table(const std::vector<OdEntry>& od,
                                             const std::vector<double>& group_dist);

// Default horizon |I| = ceil(total_mean + 4 sqrt(total_mean)).
int default_horizon(double total_mean);

Instance load_instance(std::istream& in);
Instance load_instance_file(const std::string& path);
void save_instance(const Instance& instance, std::ostream& out);
void save_instance_file(const Instance& instance, const std::string& path);

// Tokaido line, 16-coach train, published fares/demands, Lambda = 2780.
Instance make_shinkansen();
// Scaled-down variant: 4 coaches of 25 seats, Lambda = 350, same fare/demand mix.
Instance make_shinkansen_mini();

// Resolve "builtin:shinkansen", "builtin:shinkansen-mini", or a file path.
Instance resolve_instance(const std::string& ref);

}  // namespace coachres
