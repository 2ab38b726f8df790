#include "coachres/sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include <json.hpp>

#include "coachres/offline.hpp"

namespace coachres::sim {

namespace {

double log_poisson_pmf(double mean, int k) {
  return k * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0);
}

}  // namespace

void finalize_sequence(std::vector<Request>& requests) {
  std::map<int, int> per_type;
  for (size_t i = 0; i < requests.size(); ++i) {
    requests[i].arrival_index = static_cast<int>(i) + 1;
    requests[i].ordinal = ++per_type[requests[i].type_id];
  }
}

Instance generate_instance(const Instance& prototype, uint64_t seed) {
  Instance out = prototype;
  out.arrivals.clear();
  const ArrivalProcess& proc = out.process;
  const int horizon = proc.horizon;
  if (horizon <= 0) throw DomainError("generate_instance: horizon must be positive");

  int count = horizon;
  if (proc.kind == ArrivalProcess::Kind::PoissonConditioned) {
    // CDF inversion over Poisson(total_mean) conditioned on >= 1; the horizon
    // absorbs the truncated upper tail.
    RngStream count_rng(seed, "instance-count");
    const double u = count_rng.next_double();
    const double mean = proc.total_mean;
    if (mean <= 0.0) throw DomainError("generate_instance: total mean must be positive");
    const double norm = -std::expm1(-mean);  // Pr[X >= 1]
    long double cum = 0.0L;
    count = horizon;
    for (int k = 1; k < horizon; ++k) {
      cum += std::exp(log_poisson_pmf(mean, k)) / norm;
      if (u < static_cast<double>(cum)) {
        count = k;
        break;
      }
    }
  }

  std::vector<double> cdf;
  cdf.reserve(out.types.size());
  double rate_sum = 0.0;
  for (const RequestType& type : out.types) rate_sum += type.arrival_rate;
  double acc = 0.0;
  for (const RequestType& type : out.types) {
    acc += type.arrival_rate / rate_sum;
    cdf.push_back(acc);
  }
  cdf.back() = 1.0;

  RngStream type_rng(seed, "instance-types");
  out.arrivals.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double u = type_rng.next_double();
    const int t = static_cast<int>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    out.arrivals.push_back({std::min(t, static_cast<int>(cdf.size()) - 1), 0, 0});
  }
  finalize_sequence(out.arrivals);
  return out;
}

std::vector<Request> random_order_permutation(std::vector<Request> requests,
                                              RngStream& rng) {
  for (size_t i = requests.size(); i > 1; --i) {
    const size_t j = rng.next_below(i);
    std::swap(requests[i - 1], requests[j]);
  }
  finalize_sequence(requests);
  return requests;
}

RunTrace run_policy(const Instance& instance, policies::Policy& policy,
                    uint64_t seed) {
  RunTrace trace;
  trace.policy = policy.name();
  trace.seed = seed;
  const std::vector<Request>& arrivals = instance.arrivals;
  const int n = static_cast<int>(arrivals.size());
  const int legs = instance.network.leg_count();
  trace.plan.coach_of.assign(n, 0);

  RngStream rng(seed, "policy:" + trace.policy);
  ResidualCapacity residual(instance.train, legs);
  const bool deferred = policy.defers_assignment();
  using Verdict = policies::PolicyDecision::Verdict;

  try {
    policy.begin_run(instance, seed);
    for (int i = 1; i <= n; ++i) {
      const Request& request = arrivals[i - 1];
      const RequestType& type = instance.type_of(request);
      policies::PolicyDecision d = policy.decide(request, i, residual, rng);

      TraceRow row;
      row.step = i;
      row.type_id = request.type_id;
      row.ordinal = request.ordinal;
      row.group = type.group_size;
      row.price = type.price;
      row.note = d.annotation;
      if (d.verdict == Verdict::Accept) {
        if (deferred)
          throw DomainError("deferred-assignment policy returned an immediate coach");
        if (d.coach < 1 || d.coach > residual.coaches() ||
            !residual.fits(d.coach, type))
          throw PlanViolation("policy '" + trace.policy + "' accepted step " +
                              std::to_string(i) + " into infeasible coach " +
                              std::to_string(d.coach));
        residual.occupy(d.coach, type, type.group_size);
        trace.plan.coach_of[i - 1] = d.coach;
        row.accepted = true;
        row.coach = d.coach;
      } else if (d.verdict == Verdict::AcceptDeferred) {
        if (!deferred)
          throw DomainError("policy returned a deferred accept without deferring");
        row.accepted = true;
      }
      row.residual_min = residual.min_free();
      if (row.accepted) {
        trace.revenue += type.price;
        ++trace.accepted_count;
      }
      trace.rows.push_back(row);
    }

    if (deferred) {
      trace.plan = policy.materialize(arrivals);
      // Replay the terminal assignment: fill coaches into the rows, validate
      // capacity, and recompute the residual column.
      ResidualCapacity replay(instance.train, legs);
      for (int i = 1; i <= n; ++i) {
        TraceRow& row = trace.rows[i - 1];
        const int c = trace.plan.coach(i - 1);
        if (row.accepted) {
          if (c < 1)
            throw DomainError("materialized plan dropped an accepted request");
          const RequestType& type = instance.type_of(arrivals[i - 1]);
          if (!replay.fits(c, type))
            throw PlanViolation("materialized plan violates capacity at step " +
                                std::to_string(i));
          replay.occupy(c, type, type.group_size);
          row.coach = c;
        } else if (c != 0) {
          throw DomainError("materialized plan accepted a rejected request");
        }
        row.residual_min = replay.min_free();
      }
    }
  } catch (const std::exception& e) {
    trace.failed = true;
    trace.error = e.what();
  }

  // Day curves: cumulative revenue and seat-leg utilization at each day's end.
  const int days = std::max(1, instance.horizon_days);
  const int horizon = std::max(1, instance.process.horizon);
  trace.day_revenue.assign(days, 0);
  trace.day_utilization.assign(days, 0.0);
  long long total_seat_legs = 0;
  for (int c = 1; c <= instance.train.coach_count(); ++c)
    total_seat_legs += static_cast<long long>(instance.train.capacity(c)) * legs;
  Money cum_revenue = 0;
  long long cum_seat_legs = 0;
  for (const TraceRow& row : trace.rows) {
    if (row.accepted) {
      cum_revenue += row.price;
      cum_seat_legs += static_cast<long long>(row.group) *
                       instance.types[row.type_id].leg_count();
    }
    int day = static_cast<int>(std::ceil(
        static_cast<double>(row.step) * days / static_cast<double>(horizon)));
    day = std::clamp(day, 1, days);
    trace.day_revenue[day - 1] = cum_revenue;
    trace.day_utilization[day - 1] =
        static_cast<double>(cum_seat_legs) / static_cast<double>(total_seat_legs);
  }
  for (int d = 1; d < days; ++d) {  // carry values across arrival-free days
    trace.day_revenue[d] = std::max(trace.day_revenue[d], trace.day_revenue[d - 1]);
    trace.day_utilization[d] =
        std::max(trace.day_utilization[d], trace.day_utilization[d - 1]);
  }
  return trace;
}

std::vector<AuditViolation> audit_fcfs(const RunTrace& trace,
                                       const Instance& instance) {
  std::vector<AuditViolation> out;
  ResidualCapacity residual(instance.train, instance.network.leg_count());
  for (const TraceRow& row : trace.rows) {
    const RequestType& type = instance.types[row.type_id];
    if (row.accepted) {
      if (row.coach < 1) {
        out.push_back({row.step, row.type_id, "accepted row carries no coach"});
        continue;
      }
      if (!residual.fits(row.coach, type)) {
        out.push_back({row.step, row.type_id,
                       "assignment exceeds capacity in coach " +
                           std::to_string(row.coach)});
        continue;
      }
      residual.occupy(row.coach, type, type.group_size);
    } else {
      for (int c = 1; c <= residual.coaches(); ++c) {
        if (residual.fits(c, type)) {
          out.push_back({row.step, row.type_id,
                         "rejected while coach " + std::to_string(c) + " fits"});
          break;
        }
      }
    }
  }
  return out;
}

std::vector<AuditViolation> audit_sfcfs(const RunTrace& trace,
                                        const Instance& instance) {
  std::vector<AuditViolation> out;
  std::vector<Request> accepted;
  for (const TraceRow& row : trace.rows) {
    const Request& request = instance.arrivals.at(row.step - 1);
    if (row.accepted) {
      accepted.push_back(request);
      continue;
    }
    std::vector<Request> candidate = accepted;
    candidate.push_back(request);
    if (offline::pack_feasible(candidate, instance))
      out.push_back({row.step, row.type_id,
                     "rejected although the accepted set plus it still packs"});
  }
  return out;
}

// ---------- metrics ----------

double bootstrap_less(const std::vector<double>& a, const std::vector<double>& b,
                      int resamples, RngStream& rng) {
  const size_t n = std::min(a.size(), b.size());
  if (n == 0 || resamples <= 0) return 0.0;
  long less = 0;
  for (int rep = 0; rep < resamples; ++rep) {
    double sum_a = 0.0, sum_b = 0.0;
    for (size_t k = 0; k < n; ++k) {
      const size_t idx = rng.next_below(n);
      sum_a += a[idx];
      sum_b += b[idx];
    }
    if (sum_a < sum_b) ++less;
  }
  return static_cast<double>(less) / static_cast<double>(resamples);
}

namespace {

struct RunKey {
  const RunTrace* trace;
  double relative;
};

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::optional<double> sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return std::nullopt;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

MetricsReport compute_metrics(const std::vector<RunTrace>& traces,
                              const std::map<uint64_t, Money>& exact_by_seed,
                              int bootstrap_resamples, uint64_t bootstrap_seed) {
  MetricsReport report;

  std::map<std::string, std::map<uint64_t, RunKey>> by_policy;
  std::set<uint64_t> seed_set;
  for (const RunTrace& trace : traces) {
    if (trace.failed) {
      report.failures.push_back(trace.policy + "/" + std::to_string(trace.seed) +
                                ": " + trace.error);
      continue;
    }
    auto it = exact_by_seed.find(trace.seed);
    if (it == exact_by_seed.end())
      throw DomainError("compute_metrics: no exact baseline for seed " +
                        std::to_string(trace.seed));
    const double exact = static_cast<double>(it->second);
    const double relative =
        exact > 0.0 ? static_cast<double>(trace.revenue) / exact
                    : (trace.revenue == 0 ? 1.0 : 0.0);
    by_policy[trace.policy][trace.seed] = {&trace, relative};
    seed_set.insert(trace.seed);
  }
  report.seeds.assign(seed_set.begin(), seed_set.end());

  {
    std::vector<double> exacts;
    for (uint64_t seed : report.seeds) {
      auto it = exact_by_seed.find(seed);
      if (it != exact_by_seed.end())
        exacts.push_back(static_cast<double>(it->second));
    }
    report.exact_mean_revenue = mean_of(exacts);
  }

  for (const auto& [policy, runs] : by_policy) {
    PolicySummary s;
    s.policy = policy;
    s.runs = static_cast<int>(runs.size());
    std::vector<double> revenues, utils, acceptance;
    double min_rel = 1e300;
    for (const auto& [seed, rk] : runs) {
      s.relatives.push_back(rk.relative);
      min_rel = std::min(min_rel, rk.relative);
      revenues.push_back(static_cast<double>(rk.trace->revenue));
      utils.push_back(rk.trace->day_utilization.empty()
                          ? 0.0
                          : rk.trace->day_utilization.back());
      const double steps = static_cast<double>(rk.trace->rows.size());
      acceptance.push_back(steps > 0.0 ? rk.trace->accepted_count / steps : 0.0);
    }
    s.mean_relative = mean_of(s.relatives);
    s.sd_relative = sample_sd(s.relatives);
    s.min_relative = runs.empty() ? 0.0 : min_rel;
    s.mean_revenue = mean_of(revenues);
    s.mean_utilization = mean_of(utils);
    s.mean_acceptance = mean_of(acceptance);
    report.policies.push_back(std::move(s));
  }

  // Day curves: mean/sd across runs of cumulative relative revenue and
  // utilization.
  for (const auto& [policy, runs] : by_policy) {
    if (runs.empty()) continue;
    size_t days = 0;
    for (const auto& [seed, rk] : runs)
      days = std::max(days, rk.trace->day_revenue.size());
    for (size_t d = 0; d < days; ++d) {
      std::vector<double> rel, util;
      for (const auto& [seed, rk] : runs) {
        if (d >= rk.trace->day_revenue.size()) continue;
        const double exact =
            static_cast<double>(exact_by_seed.at(rk.trace->seed));
        rel.push_back(exact > 0.0
                          ? static_cast<double>(rk.trace->day_revenue[d]) / exact
                          : 0.0);
        util.push_back(rk.trace->day_utilization[d]);
      }
      report.curves.push_back({static_cast<int>(d) + 1, policy,
                               "relative_revenue", mean_of(rel), sample_sd(rel)});
      report.curves.push_back({static_cast<int>(d) + 1, policy, "utilization",
                               mean_of(util), sample_sd(util)});
    }
  }

  // Pairwise comparisons over common seeds (paired bootstrap + Bland-Altman).
  std::vector<std::string> names;
  for (const auto& [policy, runs] : by_policy) names.push_back(policy);
  for (size_t ai = 0; ai < names.size(); ++ai) {
    for (size_t bi = ai + 1; bi < names.size(); ++bi) {
      const auto& runs_a = by_policy[names[ai]];
      const auto& runs_b = by_policy[names[bi]];
      std::vector<double> rel_a, rel_b, diffs;
      for (const auto& [seed, rka] : runs_a) {
        auto itb = runs_b.find(seed);
        if (itb == runs_b.end()) continue;
        rel_a.push_back(rka.relative);
        rel_b.push_back(itb->second.relative);
        diffs.push_back(rka.relative - itb->second.relative);
        report.bland_altman.push_back(
            {names[ai], names[bi], seed,
             (rka.relative + itb->second.relative) / 2.0,
             rka.relative - itb->second.relative});
      }
      if (rel_a.empty()) continue;
      PairComparison pc;
      pc.a = names[ai];
      pc.b = names[bi];
      RngStream rng(bootstrap_seed, "bootstrap:" + pc.a + "|" + pc.b);
      pc.prob_mean_a_less_b = bootstrap_less(rel_a, rel_b, bootstrap_resamples, rng);
      pc.mean_diff = mean_of(diffs);
      const std::optional<double> sd = sample_sd(diffs);
      pc.lower_limit = pc.mean_diff - 1.96 * sd.value_or(0.0);
      pc.upper_limit = pc.mean_diff + 1.96 * sd.value_or(0.0);
      report.pairs.push_back(pc);
    }
  }
  return report;
}

// ---------- writers ----------

void write_trace_csv(const RunTrace& trace, std::ostream& out) {
  out << "step,type,ordinal,group,price,decision,coach,residual_min,note\n";
  for (const TraceRow& row : trace.rows) {
    out << row.step << ',' << row.type_id << ',' << row.ordinal << ','
        << row.group << ',' << row.price << ','
        << (row.accepted ? "accept" : "reject") << ',' << row.coach << ','
        << row.residual_min << ',' << row.note << '\n';
  }
}

void write_metrics_json(const MetricsReport& report, std::ostream& out) {
  nlohmann::ordered_json j;
  j["seeds"] = report.seeds;
  j["exact"] = {{"mean_revenue", report.exact_mean_revenue}};
  nlohmann::ordered_json pols = nlohmann::ordered_json::object();
  for (const PolicySummary& s : report.policies) {
    nlohmann::ordered_json p;
    p["runs"] = s.runs;
    p["mean_relative_revenue"] = s.mean_relative;
    if (s.sd_relative)
      p["sd_relative_revenue"] = *s.sd_relative;
    else
      p["sd_relative_revenue"] = nullptr;
    p["min_relative_revenue"] = s.min_relative;
    p["mean_revenue"] = s.mean_revenue;
    p["mean_utilization"] = s.mean_utilization;
    p["mean_acceptance_rate"] = s.mean_acceptance;
    p["relative_revenue_per_run"] = s.relatives;
    pols[s.policy] = std::move(p);
  }
  j["policies"] = std::move(pols);
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const PairComparison& pc : report.pairs) {
    pairs.push_back({{"a", pc.a},
                     {"b", pc.b},
                     {"prob_mean_a_less_b", pc.prob_mean_a_less_b},
                     {"mean_diff", pc.mean_diff},
                     {"lower_limit", pc.lower_limit},
                     {"upper_limit", pc.upper_limit}});
  }
  j["pairs"] = std::move(pairs);
  j["failures"] = report.failures;
  out << j.dump(2) << '\n';
}

void write_curves_csv(const MetricsReport& report, std::ostream& out) {
  out << "day,policy,metric,mean,sd\n";
  out << std::setprecision(17);
  for (const CurvePoint& cp : report.curves) {
    out << cp.day << ',' << cp.policy << ',' << cp.metric << ',' << cp.mean << ',';
    if (cp.sd) out << *cp.sd;
    out << '\n';
  }
}

void write_bland_altman_csv(const MetricsReport& report, std::ostream& out) {
  out << "policy_a,policy_b,seed,mean,diff\n";
  out << std::setprecision(17);
  for (const BlandAltmanRow& row : report.bland_altman) {
    out << row.a << ',' << row.b << ',' << row.seed << ',' << row.mean << ','
        << row.diff << '\n';
  }
}

}  // namespace coachres::sim
