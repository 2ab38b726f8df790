#pragma once

// Offline optimization over a realized request sequence:
//  - exact revenue-optimal acceptance (branch and bound on an aggregated master
//    with exact packing certificates),
//  - the LP relaxation and its per-request acceptance masses,
//  - the first-come-first-served variant (nobody may be rejected while some
//    coach could still seat them) solved by branch and cut with lazily
//    separated rejection-justification variables and rows.

#include <optional>

#include "coachres/domain.hpp"
#include "coachres/linprog.hpp"
#include "coachres/rng.hpp"

namespace coachres::offline {

// Literal per-coach model: binaries x_{r,c} and y_r, rows y_r = sum_c x_{r,c}
// and per-(leg,coach) capacity. Objective sum p(r) y_r.
struct OfflineModel {
  linprog::Model model;
  std::vector<std::vector<int>> x;  // x[k][c-1]
  std::vector<int> y;               // y[k]
};

OfflineModel build_offline_model(const std::vector<Request>& requests,
                                 const Instance& instance);

// Exact packing decision: can every request be seated simultaneously?
// Complete depth-first search with aggregate-capacity pruning, coach-symmetry
// skipping and a failed-state memo; returns a witness assignment on success.
std::optional<AssignmentPlan> pack_feasible(const std::vector<Request>& requests,
                                            const Instance& instance);

struct OfflineConfig {
  bool decision_only = false;  // only ask whether all requests fit
  bool use_full_model = false; // solve the literal per-coach MIP instead of the
                               // aggregated master (cross-checks, tiny inputs)
  long node_limit = 500000;
  double time_limit_seconds = linprog::kInf;
  uint64_t warm_start_seed = 1;
};

struct OfflineResult {
  linprog::Status status = linprog::Status::Infeasible;
  Money value = 0;
  AssignmentPlan plan;
  bool all_packable = false;  // decision mode answer
  double best_bound = 0.0;
  long nodes = 0;
  int cuts = 0;
};

OfflineResult solve_offline(const std::vector<Request>& requests,
                            const Instance& instance, const OfflineConfig& config = {});

// LP relaxation of the offline model. Solved in aggregated form (one row per
// leg, total capacity on the right-hand side), which has the same optimum and
// per-request masses X_r = sum_c x_{r,c}; the equivalence is exercised against
// the literal model in the tests.
struct LpMasses {
  double objective = 0.0;
  std::vector<double> mass;       // per request position
  std::vector<double> type_mass;  // mass summed per type id
};

LpMasses solve_offline_lp(const std::vector<Request>& requests,
                          const Instance& instance);

// ---------- first-come-first-served (fair) variant ----------

struct FcfsVarMap {
  std::vector<std::vector<int>> x;  // x[k][c-1]
  std::vector<int> y;               // -1 when y is substituted by sum_c x
  struct ZVar {
    int leg;
    int coach;
    int var;
  };
  std::vector<std::vector<ZVar>> z;  // justification vars present per request
};

// Full deterministic fairness model: offline model plus z_{r,l,c} binaries,
// per-(r,c) activation rows y_r + sum_l z_{r,l,c} = 1 and load-justification
// rows; used for tiny cross-checks and --dump-lp.
struct FcfsModel {
  linprog::Model model;
  FcfsVarMap vars;
};

FcfsModel build_fcfs_model(const std::vector<Request>& requests,
                           const Instance& instance);

// Earliest rejected request that still had a feasible coach when it arrived
// (plus the lowest-index such coach); nullopt when the plan is fair.
struct UnfairRejection {
  int request_pos;  // 0-based
  int coach;        // 1-based
};
std::optional<UnfairRejection> separate_unfair_rejection(
    const AssignmentPlan& plan, const std::vector<Request>& requests,
    const Instance& instance);

// Same-ordinal precedence within a type and general dominance (earlier, no
// larger, no wider journeys must be accepted before a dominated one).
std::vector<linprog::CutRow> dominance_cuts(const std::vector<Request>& requests,
                                            const Instance& instance,
                                            const FcfsVarMap& vars);

// Once z_{r,l,c} certifies coach c blocked at r's arrival, every later request
// can add at most n(r)-1 seats on (c,l).
std::vector<linprog::CutRow> forward_filtering_cuts(
    const std::vector<Request>& requests, const Instance& instance,
    const FcfsVarMap& vars);

// Positions whose acceptance is implied by the safe-assignment threshold even
// if every earlier request were accepted. Conservative screen; applied to the
// fair solver only behind FcfsConfig::preprocess_forced.
std::vector<int> preprocess_forced_assignments(const std::vector<Request>& requests,
                                               const Instance& instance);

struct FcfsConfig {
  double time_limit_seconds = 30.0;
  long node_limit = 50000;
  bool use_dominance_cuts = false;
  bool use_forward_filtering = false;  // builds the full model up front
  bool preprocess_forced = false;
  uint64_t warm_start_seed = 1;
  // Exact branch and cut when requests*coaches is at most this; above it the
  // solver reports the best greedy fair plan against the LP bound instead of
  // branching (the bound stays valid, the gap is reported honestly).
  long exact_size_limit = 10000;
  int large_scale_restarts = 64;  // greedy restarts in the large-scale path
};

struct FcfsResult {
  linprog::Status status = linprog::Status::Infeasible;
  Money value = 0;
  AssignmentPlan plan;
  double best_bound = 0.0;
  double gap = 0.0;  // (bound - value) / max(1, bound)
  long nodes = 0;
  int cuts = 0;
  int separation_rounds = 0;
};

FcfsResult solve_offline_fcfs(const std::vector<Request>& requests,
                              const Instance& instance,
                              const FcfsConfig& config = {});

// Greedy fair replays (accept whenever some coach fits): lowest-index coach,
// or a uniformly random feasible coach. Both are fair by construction.
AssignmentPlan first_fit_plan(const std::vector<Request>& requests,
                              const Instance& instance);
AssignmentPlan random_fit_plan(const std::vector<Request>& requests,
                               const Instance& instance, RngStream& rng);

}  // namespace coachres::offline
