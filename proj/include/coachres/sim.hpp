#pragma once

// Seeded instance generation, random-order permutation, the policy execution
// harness, fairness audits, and experiment metrics.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coachres/domain.hpp"
#include "coachres/policies.hpp"
#include "coachres/rng.hpp"

namespace coachres::sim {

struct TraceRow {
  int step = 0;      // 1-based position in the realized sequence
  int type_id = 0;
  int ordinal = 0;   // per-type arrival ordinal
  int group = 0;
  Money price = 0;
  bool accepted = false;
  int coach = 0;         // 0 = rejected (deferred coaches filled at the end)
  int residual_min = 0;  // min free seats over (coach, leg) after the decision
  std::string note;
};

struct RunTrace {
  std::string policy;
  uint64_t seed = 0;
  std::vector<TraceRow> rows;
  Money revenue = 0;
  int accepted_count = 0;
  std::vector<Money> day_revenue;       // cumulative revenue at each day's end
  std::vector<double> day_utilization;  // cumulative seat-leg fraction
  AssignmentPlan plan;                  // final coaches in arrival order
  bool failed = false;
  std::string error;
};

// Draws the total request count (Poisson(total_mean) conditioned on >= 1,
// truncated at the horizon; or exactly the horizon for a deterministic
// process), then i.i.d. types per arrival rate. Deterministic per
// (prototype, seed); streams: "instance-count" and "instance-types".
Instance generate_instance(const Instance& prototype, uint64_t seed);

// Fisher-Yates shuffle; arrival indices and per-type ordinals are re-derived
// from the new order.
std::vector<Request> random_order_permutation(std::vector<Request> requests,
                                              RngStream& rng);

// Re-derives arrival_index and ordinal fields from list order.
void finalize_sequence(std::vector<Request>& requests);

// Feeds arrivals in order, applies accepted assignments, validates every
// acceptance against the residual capacity (deferred-assignment policies are
// validated during terminal materialization instead). Policy or solver errors
// mark the trace failed with the partial prefix preserved.
RunTrace run_policy(const Instance& instance, policies::Policy& policy,
                    uint64_t seed);

struct AuditViolation {
  int step = 0;
  int type_id = 0;
  std::string what;
};

// Coach-level fairness: a violation is a rejected request that had a feasible
// coach at its arrival (residual replayed from the trace's own assignments).
std::vector<AuditViolation> audit_fcfs(const RunTrace& trace,
                                       const Instance& instance);

// Seat-level fairness: a violation is a rejected request r such that the
// requests accepted before it plus r still pack (exact oracle).
std::vector<AuditViolation> audit_sfcfs(const RunTrace& trace,
                                        const Instance& instance);

// ---------- metrics ----------

struct PolicySummary {
  std::string policy;
  int runs = 0;
  double mean_relative = 0.0;  // revenue / exact, averaged over seeds
  std::optional<double> sd_relative;  // absent when runs < 2
  double min_relative = 0.0;
  double mean_revenue = 0.0;
  double mean_utilization = 0.0;  // final seat-leg fraction
  double mean_acceptance = 0.0;   // accepted arrivals / arrivals
  std::vector<double> relatives;  // per run, in seed order
};

struct PairComparison {
  std::string a, b;
  double prob_mean_a_less_b = 0.0;  // paired bootstrap over seeds
  double mean_diff = 0.0;           // mean(rel_a - rel_b)
  double lower_limit = 0.0;         // mean_diff - 1.96 sd(diff)
  double upper_limit = 0.0;
};

struct CurvePoint {
  int day = 0;
  std::string policy;
  std::string metric;  // relative_revenue | utilization
  double mean = 0.0;
  std::optional<double> sd;
};

struct BlandAltmanRow {
  std::string a, b;
  uint64_t seed = 0;
  double mean = 0.0;  // (rel_a + rel_b) / 2
  double diff = 0.0;  // rel_a - rel_b
};

struct MetricsReport {
  std::vector<uint64_t> seeds;
  double exact_mean_revenue = 0.0;
  std::vector<PolicySummary> policies;
  std::vector<PairComparison> pairs;  // all unordered pairs, lexicographic
  std::vector<CurvePoint> curves;
  std::vector<BlandAltmanRow> bland_altman;
  std::vector<std::string> failures;  // "<policy>/<seed>: <error>"
};

// Fraction of paired bootstrap resamples (over seeds) where mean(a) < mean(b).
double bootstrap_less(const std::vector<double>& a, const std::vector<double>& b,
                      int resamples, RngStream& rng);

// Aggregates traces against per-seed exact offline baselines. Deterministic:
// the bootstrap stream is derived from `bootstrap_seed` only.
MetricsReport compute_metrics(const std::vector<RunTrace>& traces,
                              const std::map<uint64_t, Money>& exact_by_seed,
                              int bootstrap_resamples = 10000,
                              uint64_t bootstrap_seed = 7);

// ---------- writers ----------

void write_trace_csv(const RunTrace& trace, std::ostream& out);
void write_metrics_json(const MetricsReport& report, std::ostream& out);
void write_curves_csv(const MetricsReport& report, std::ostream& out);
void write_bland_altman_csv(const MetricsReport& report, std::ostream& out);

}  // namespace coachres::sim
