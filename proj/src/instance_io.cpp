#include "coachres/instance_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace coachres {

using nlohmann::ordered_json;

std::vector<RequestType> types_from_od_table(const std::vector<OdEntry>& od,
                                             const std::vector<double>& group_dist) {
  if (od.empty()) throw DomainError("types_from_od_table: empty OD table");
  if (group_dist.empty()) throw DomainError("types_from_od_table: empty size mix");
  double total = 0.0;
  for (const auto& e : od) total += e.demand;
  if (total <= 0) throw DomainError("types_from_od_table: zero total demand");
  std::vector<RequestType> types;
  types.reserve(od.size() * group_dist.size());
  for (const auto& e : od) {
    for (size_t k = 0; k < group_dist.size(); ++k) {
      int n = static_cast<int>(k) + 1;
      RequestType t;
      t.origin = e.origin;
      t.destination = e.destination;
      t.group_size = n;
      t.price = e.fare * n;
      t.arrival_rate = e.demand * group_dist[k] / total;
      types.push_back(t);
    }
  }
  return types;
}

int default_horizon(double total_mean) {
  if (total_mean <= 0) throw DomainError("default_horizon: mean must be positive");
  return static_cast<int>(std::ceil(total_mean + 4.0 * std::sqrt(total_mean)));
}

namespace {

const std::vector<std::string> kTokaidoStations = {
    "Tokyo", "Shin-Yokohama", "Nagoya", "Kyoto", "Shin-Osaka"};

// Reserved-seat fare (yen) and average demand (requests) per OD pair.
const std::vector<OdEntry> kTokaidoOd = {
    {1, 2, 3010, 87},   {1, 3, 11300, 677}, {1, 4, 14170, 390}, {1, 5, 14720, 846},
    {2, 3, 10640, 125}, {2, 4, 13500, 110}, {2, 5, 14390, 175}, {3, 4, 5910, 77},
    {3, 5, 6680, 232},  {4, 5, 3080, 61}};

const std::vector<double> kDefaultGroupMix = {0.55, 0.25, 0.10, 0.05, 0.03, 0.02};

const std::vector<int> kTokaidoCapacities = {65, 100, 85, 100, 90, 100, 75, 68,
                                             64, 68, 63, 100, 90, 100, 80, 75};

Instance make_tokaido(std::vector<int> capacities, double total_mean) {
  Instance inst;
  inst.network.stations = kTokaidoStations;
  inst.train.coach_capacities = std::move(capacities);
  inst.types = types_from_od_table(kTokaidoOd, kDefaultGroupMix);
  inst.process.kind = ArrivalProcess::Kind::PoissonConditioned;
  inst.process.total_mean = total_mean;
  inst.process.horizon = default_horizon(total_mean);
  inst.process.group_size_distribution = kDefaultGroupMix;
  inst.horizon_days = 30;
  validate_instance(inst);
  return inst;
}

}  // namespace

Instance make_shinkansen() { return make_tokaido(kTokaidoCapacities, 2780.0); }

Instance make_shinkansen_mini() {
  return make_tokaido(std::vector<int>(4, 25), 350.0);
}

Instance load_instance(std::istream& in) {
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw DomainError(std::string("instance JSON parse error: ") + e.what());
  }
  Instance inst;
  if (!j.contains("stations") || !j.contains("coach_capacities"))
    throw DomainError("instance JSON: stations and coach_capacities are required");
  inst.network.stations = j.at("stations").get<std::vector<std::string>>();
  inst.train.coach_capacities = j.at("coach_capacities").get<std::vector<int>>();
  inst.horizon_days = j.value("horizon_days", 30);

  if (j.contains("arrival_model")) {
    const auto& am = j.at("arrival_model");
    inst.process.total_mean = am.value("total_mean", 0.0);
    std::string dist = am.value("distribution", "poisson");
    if (dist == "poisson")
      inst.process.kind = ArrivalProcess::Kind::PoissonConditioned;
    else if (dist == "deterministic")
      inst.process.kind = ArrivalProcess::Kind::Deterministic;
    else
      throw DomainError("instance JSON: unknown arrival distribution '" + dist + "'");
    if (am.contains("group_size_distribution"))
      inst.process.group_size_distribution =
          am.at("group_size_distribution").get<std::vector<double>>();
    inst.process.horizon = am.value("horizon", 0);
    if (inst.process.horizon == 0 && inst.process.total_mean > 0)
      inst.process.horizon = default_horizon(inst.process.total_mean);
    if (!j.contains("types")) {
      if (!am.contains("od_demand"))
        throw DomainError("instance JSON: need types or arrival_model.od_demand");
      std::vector<OdEntry> od;
      for (const auto& e : am.at("od_demand")) {
        od.push_back({e.at("origin").get<int>(), e.at("destination").get<int>(),
                      e.at("price").get<Money>(), e.at("demand").get<double>()});
      }
      std::vector<double> mix = inst.process.group_size_distribution;
      if (mix.empty()) mix = {1.0};
      inst.types = types_from_od_table(od, mix);
    }
  }
  if (j.contains("types")) {
    for (const auto& e : j.at("types")) {
      RequestType t;
      t.origin = e.at("origin").get<int>();
      t.destination = e.at("destination").get<int>();
      t.group_size = e.at("group_size").get<int>();
      t.price = e.at("price").get<Money>();
      t.arrival_rate = e.value("arrival_rate", 0.0);
      inst.types.push_back(t);
    }
  }
  if (j.contains("arrivals")) {
    std::vector<int> seen(inst.types.size(), 0);
    int step = 0;
    for (const auto& e : j.at("arrivals")) {
      int type_id = e.get<int>();
      if (type_id < 0 || type_id >= static_cast<int>(inst.types.size()))
        throw DomainError("instance JSON: arrival references unknown type");
      inst.arrivals.push_back({type_id, ++seen[type_id], ++step});
    }
  }
  validate_instance(inst);
  return inst;
}

Instance load_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open instance file: " + path);
  return load_instance(in);
}

void save_instance(const Instance& instance, std::ostream& out) {
  ordered_json j;
  j["stations"] = instance.network.stations;
  j["coach_capacities"] = instance.train.coach_capacities;
  j["horizon_days"] = instance.horizon_days;
  if (instance.process.total_mean > 0) {
    ordered_json am;
    am["total_mean"] = instance.process.total_mean;
    am["horizon"] = instance.process.horizon;
    am["distribution"] = instance.process.kind == ArrivalProcess::Kind::Deterministic
                             ? "deterministic"
                             : "poisson";
    if (!instance.process.group_size_distribution.empty())
      am["group_size_distribution"] = instance.process.group_size_distribution;
    j["arrival_model"] = am;
  }
  ordered_json types = ordered_json::array();
  for (const auto& t : instance.types) {
    ordered_json e;
    e["origin"] = t.origin;
    e["destination"] = t.destination;
    e["group_size"] = t.group_size;
    e["price"] = t.price;
    e["arrival_rate"] = t.arrival_rate;
    types.push_back(e);
  }
  j["types"] = types;
  if (!instance.arrivals.empty()) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : instance.arrivals) arr.push_back(r.type_id);
    j["arrivals"] = arr;
  }
  out << j.dump(2) << "\n";
}

void save_instance_file(const Instance& instance, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write instance file: " + path);
  save_instance(instance, out);
}

Instance resolve_instance(const std::string& ref) {
  if (ref == "builtin:shinkansen" || ref == "shinkansen") return make_shinkansen();
  if (ref == "builtin:shinkansen-mini" || ref == "shinkansen-mini")
    return make_shinkansen_mini();
  return load_instance_file(ref);
}

}  // namespace coachres
