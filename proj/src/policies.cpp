#include "coachres/policies.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "coachres/bounds.hpp"

namespace coachres::policies {

std::vector<int> feasible_coaches(const ResidualCapacity& residual,
                                  const RequestType& type) {
  std::vector<int> out;
  for (int c = 1; c <= residual.coaches(); ++c)
    if (residual.fits(c, type)) out.push_back(c);
  return out;
}

AssignmentPlan Policy::materialize(const std::vector<Request>&) {
  throw DomainError("policy '" + name() + "' does not defer coach assignment");
}

// ---------- first fit / random fit ----------

PolicyDecision FirstFitPolicy::decide(const Request& request, int,
                                      const ResidualCapacity& residual,
                                      RngStream&) {
  const RequestType& type = instance_->type_of(request);
  for (int c = 1; c <= residual.coaches(); ++c)
    if (residual.fits(c, type)) return PolicyDecision::accept(c);
  return PolicyDecision::reject("infeasible");
}

PolicyDecision RandomFitPolicy::decide(const Request& request, int,
                                       const ResidualCapacity& residual,
                                       RngStream& rng) {
  const RequestType& type = instance_->type_of(request);
  std::vector<int> fc = feasible_coaches(residual, type);
  if (fc.empty()) return PolicyDecision::reject("infeasible");
  return PolicyDecision::accept(fc[rng.next_below(fc.size())]);
}

// ---------- random-order rejection ----------

void RomPolicy::begin_run(const Instance& instance, uint64_t seed) {
  Policy::begin_run(instance, seed);
  const double q =
      q_ >= 0.0 ? q_ : bounds::optimal_q(max_group_fraction(instance));
  if (q < 0.0 || q > 1.0)
    throw DomainError("rom policy: sampling fraction must lie in [0, 1]");
  cutoff_ = static_cast<long>(std::floor(q * instance.process.total_mean));
  packing_seen_ = 0;
  lp_solves_ = 0;
  observed_.clear();
  lp_ = {};
  lp_covers_ = 0;
}

void RomPolicy::refresh_lp() {
  // Stride k re-solves on every k-th packing-phase arrival; between solves a
  // fresh request is scored by its type's average mass in the cached LP.
  if ((packing_seen_ - 1) % lp_stride_ == 0 || lp_covers_ == 0) {
    lp_ = offline::solve_offline_lp(observed_, *instance_);
    lp_covers_ = observed_.size();
    ++lp_solves_;
  }
}

double RomPolicy::test_value(const Request& request) {
  if (lp_covers_ == observed_.size()) return lp_.mass[observed_.size() - 1];
  long type_count = 0;
  for (size_t k = 0; k < lp_covers_; ++k)
    if (observed_[k].type_id == request.type_id) ++type_count;
  if (type_count == 0) return 0.0;
  return lp_.type_mass[request.type_id] / static_cast<double>(type_count);
}

PolicyDecision RomPolicy::decide(const Request& request, int step,
                                 const ResidualCapacity& residual,
                                 RngStream& rng) {
  observed_.push_back(request);
  if (step <= cutoff_) return PolicyDecision::reject("sampling");
  ++packing_seen_;
  refresh_lp();
  const double value = test_value(request);
  const double z = rng.next_double();
  if (!(value > z)) return PolicyDecision::reject("coin");
  const RequestType& type = instance_->type_of(request);
  for (int c = 1; c <= residual.coaches(); ++c) {
    if (residual.fits(c, type)) {
      on_accept(request);
      return PolicyDecision::accept(c);
    }
  }
  return PolicyDecision::reject("infeasible");
}

void AdaptiveRomPolicy::begin_run(const Instance& instance, uint64_t seed) {
  RomPolicy::begin_run(instance, seed);
  assigned_per_type_.assign(instance.types.size(), 0);
}

double AdaptiveRomPolicy::test_value(const Request& request) {
  const double type_mass = lp_.type_mass[request.type_id];
  const double margin =
      type_mass - static_cast<double>(assigned_per_type_[request.type_id]);
  return std::clamp(margin, 0.0, 1.0);
}

void AdaptiveRomPolicy::on_accept(const Request& request) {
  ++assigned_per_type_[request.type_id];
}

// ---------- fluid-based policies ----------

ThetaPolicy::ThetaPolicy(double theta, std::string label)
    : theta_(theta), label_(std::move(label)) {
  if (theta_ <= 0.0 || theta_ > 1.0)
    throw DomainError("theta policy: scale must lie in (0, 1]");
}

void ThetaPolicy::begin_run(const Instance& instance, uint64_t seed) {
  Policy::begin_run(instance, seed);
  arrival_.emplace(instance);
  fluid_ = stochastic::solve_fluid(instance, *arrival_);
}

PolicyDecision ThetaPolicy::decide(const Request& request, int step,
                                   const ResidualCapacity& residual,
                                   RngStream& rng) {
  const int t = request.type_id;
  const double lambda = arrival_->rates()[t];
  double offer = 0.0;
  if (lambda > 0.0 && step <= arrival_->horizon())
    offer = std::min(1.0, fluid_.step_mass[t][step - 1] / lambda);
  offer *= theta_;
  const double z = rng.next_double();
  if (!(z < offer)) return PolicyDecision::reject("coin");
  const RequestType& type = instance_->type_of(request);
  for (int c = 1; c <= residual.coaches(); ++c)
    if (residual.fits(c, type)) return PolicyDecision::accept(c);
  return PolicyDecision::reject("infeasible");
}

void FluidEmpiricalPolicy::begin_run(const Instance& instance, uint64_t seed) {
  Policy::begin_run(instance, seed);
  arrival_.emplace(instance);
  fluid_ = stochastic::solve_fluid(instance, *arrival_);
}

PolicyDecision FluidEmpiricalPolicy::decide(const Request& request, int step,
                                            const ResidualCapacity& residual,
                                            RngStream& rng) {
  const int t = request.type_id;
  if (step > arrival_->horizon()) return PolicyDecision::reject("past-horizon");
  const double total = fluid_.step_mass[t][step - 1];
  if (total <= 0.0) return PolicyDecision::reject("no-mass");
  const RequestType& type = instance_->type_of(request);
  double feasible_mass = 0.0;
  int first_fit = 0;
  for (int c = 1; c <= residual.coaches(); ++c) {
    if (!residual.fits(c, type)) continue;
    if (first_fit == 0) first_fit = c;
    feasible_mass += fluid_.x(t, step, c);
  }
  const double z = rng.next_double();
  if (first_fit == 0 || !(z < feasible_mass / total))
    return PolicyDecision::reject(first_fit == 0 ? "infeasible" : "coin");
  return PolicyDecision::accept(first_fit);
}

// ---------- fixed a-priori plan ----------

void FixedPolicy::begin_run(const Instance& instance, uint64_t seed) {
  Policy::begin_run(instance, seed);
  seen_.assign(instance.types.size(), 0);
  plan_ = {};
  plan_.count.assign(instance.types.size(), 0);
  try {
    stochastic::ArrivalModel arrival(instance);
    linprog::SolveOptions options;
    options.mip_gap = 0.01;  // planner slack is invisible in realized revenue
    plan_ = stochastic::solve_apriori(instance, arrival, psi_threshold_,
                                      nullptr, std::nullopt, options);
  } catch (const stochastic::EmptyPsiError&) {
    // nothing worth planning: reject everything
  }
}

PolicyDecision FixedPolicy::decide(const Request& request, int,
                                   const ResidualCapacity&, RngStream&) {
  const int t = request.type_id;
  const int j = ++seen_[t];
  if (!plan_.contains(t, j)) return PolicyDecision::reject("unplanned");
  // The plan is capacity-feasible as a whole and only planned slots occupy
  // seats, so the planned coach always fits; the harness re-verifies.
  return PolicyDecision::accept(plan_.coach_for(t, j), "planned");
}

// ---------- coach-level FCFS (plan-adjusting) ----------

void FcfsPolicy::begin_run(const Instance& instance, uint64_t seed) {
  Policy::begin_run(instance, seed);
  (void)seed;
  arrival_.emplace(instance);
  const int days = std::max(1, instance.horizon_days);
  effective_block_ =
      block_length_ > 0
          ? block_length_
          : std::max(1, static_cast<int>(std::llround(
                            static_cast<double>(arrival_->horizon()) / days)));
  plan_ = {};
  have_plan_ = false;
  seen_since_plan_.assign(instance.types.size(), 0);
  block_solves_ = 0;
  forced_solves_ = 0;
}

bool FcfsPolicy::replan(const ResidualCapacity& residual, int step,
                        std::optional<std::pair<int, int>> forced) {
  const int T = static_cast<int>(instance_->types.size());
  const int horizon = arrival_->horizon();
  const int remaining = std::max(1, horizon - step + 1);
  const double remaining_mean =
      arrival_->total_mean() * static_cast<double>(remaining) / horizon;

  std::vector<std::vector<double>> tails(T);
  for (int t = 0; t < T; ++t) {
    const double rate = arrival_->rates()[t];
    const double mean = remaining_mean * rate;
    int j_max =
        static_cast<int>(std::ceil(mean + 20.0 * std::sqrt(mean + 1.0))) + 8;
    if (forced && forced->first == t) j_max = std::max(j_max, forced->second);
    j_max = std::min(j_max, remaining);
    if (forced && forced->first == t) j_max = std::max(j_max, forced->second);
    tails[t] = arrival_->kind() == ArrivalProcess::Kind::Deterministic
                   ? stochastic::binomial_tail_curve(remaining, rate, j_max)
                   : stochastic::poisson_tail_curve(mean, j_max);
    if (forced && forced->first == t)  // the forced slot is already realized
      for (int j = 0; j < std::min(forced->second, j_max); ++j)
        tails[t][j] = std::max(tails[t][j], 1.0);
  }

  stochastic::PsiSet psi;
  try {
    psi = stochastic::build_psi_from_tails(tails, psi_threshold_, forced);
  } catch (const stochastic::EmptyPsiError&) {
    plan_ = {};
    plan_.count.assign(T, 0);
    have_plan_ = true;
    seen_since_plan_.assign(T, 0);
    forced ? ++forced_solves_ : ++block_solves_;
    return true;  // an empty plan is a valid outcome of an unforced re-solve
  }

  linprog::SolveOptions options;
  // Acceptance decisions never depend on plan quality (any feasible request
  // is accepted via the forced path), only seat placement does, so a few
  // percent of planner slack is invisible while exact proofs on the plan
  // MIP's degenerate plateau would cost seconds per replan.
  options.time_limit_seconds = std::min(time_limit_, 2.0);
  options.mip_gap = 0.03;
  try {
    plan_ = stochastic::solve_apriori(*instance_, psi, &residual, forced, options);
  } catch (const std::runtime_error&) {
    return false;  // caller falls back to a fair direct accept
  }
  have_plan_ = true;
  seen_since_plan_.assign(T, 0);
  forced ? ++forced_solves_ : ++block_solves_;
  return true;
}

PolicyDecision FcfsPolicy::decide(const Request& request, int step,
                                  const ResidualCapacity& residual,
                                  RngStream& rng) {
  if ((step - 1) % effective_block_ == 0) replan(residual, step, std::nullopt);

  const int t = request.type_id;
  const RequestType& type = instance_->type_of(request);
  const int j = ++seen_since_plan_[t];
  if (have_plan_ && plan_.contains(t, j)) {
    const int c = plan_.coach_for(t, j);
    if (residual.fits(c, type)) return PolicyDecision::accept(c, "planned");
    // A planned slot never outruns capacity while the plan is followed; fall
    // through defensively.
  }

  std::vector<int> fc = feasible_coaches(residual, type);
  if (fc.empty()) return PolicyDecision::reject("infeasible");

  // Feasible but unplanned: re-solve with this request forced in as the
  // first remaining slot of its type; the new plan supersedes the old one.
  if (replan(residual, step, std::make_pair(t, 1))) {
    seen_since_plan_[t] = 1;  // this arrival consumes the forced slot
    if (plan_.contains(t, 1)) {
      const int c = plan_.coach_for(t, 1);
      if (residual.fits(c, type)) return PolicyDecision::accept(c, "forced");
    }
  }
  // Solver failure or time limit without incumbent: stay fair regardless.
  return PolicyDecision::accept(fc[rng.next_below(fc.size())], "fallback");
}

// ---------- seat-level FCFS ----------

void SfcfsPolicy::begin_run(const Instance& instance, uint64_t seed) {
  Policy::begin_run(instance, seed);
  (void)seed;
  accepted_.clear();
  witness_residual_ =
      ResidualCapacity(instance.train, instance.network.leg_count());
}

PolicyDecision SfcfsPolicy::decide(const Request& request, int,
                                   const ResidualCapacity&, RngStream&) {
  const RequestType& type = instance_->type_of(request);
  // Fast path: the maintained packing extends directly.
  for (int c = 1; c <= witness_residual_.coaches(); ++c) {
    if (witness_residual_.fits(c, type)) {
      witness_residual_.occupy(c, type, type.group_size);
      accepted_.push_back(request);
      return PolicyDecision::accept_deferred("extends");
    }
  }
  // Otherwise ask the exact packing oracle about accepted + request.
  std::vector<Request> candidate = accepted_;
  candidate.push_back(request);
  std::optional<AssignmentPlan> packed = offline::pack_feasible(candidate, *instance_);
  if (!packed) return PolicyDecision::reject("unpackable");
  accepted_ = std::move(candidate);
  witness_residual_ =
      ResidualCapacity(instance_->train, instance_->network.leg_count());
  for (size_t k = 0; k < accepted_.size(); ++k) {
    const RequestType& ty = instance_->type_of(accepted_[k]);
    witness_residual_.occupy(packed->coach(static_cast<int>(k)), ty, ty.group_size);
  }
  return PolicyDecision::accept_deferred("repacked");
}

AssignmentPlan SfcfsPolicy::materialize(const std::vector<Request>& arrivals) {
  AssignmentPlan plan;
  plan.coach_of.assign(arrivals.size(), 0);
  if (accepted_.empty()) return plan;
  // Terminal coach assignment: one offline solve over the accepted multiset.
  // The set packs by construction, so the optimum seats all of it.
  offline::OfflineResult result = offline::solve_offline(accepted_, *instance_);
  if (result.plan.accepted_count() != static_cast<int>(accepted_.size()))
    throw DomainError("terminal materialization lost an accepted request");
  for (size_t k = 0; k < accepted_.size(); ++k) {
    const int pos = accepted_[k].arrival_index - 1;
    if (pos < 0 || pos >= static_cast<int>(arrivals.size()))
      throw DomainError("materialize: arrival index out of range");
    plan.coach_of[pos] = result.plan.coach(static_cast<int>(k));
  }
  return plan;
}

// ---------- factory ----------

std::unique_ptr<Policy> make_policy(const PolicySpec& spec) {
  const std::string& k = spec.kind;
  if (k == "first-fit") return std::make_unique<FirstFitPolicy>();
  if (k == "random-fit") return std::make_unique<RandomFitPolicy>();
  if (k == "rom") return std::make_unique<RomPolicy>(spec.q, spec.lp_stride);
  if (k == "adaptive-rom")
    return std::make_unique<AdaptiveRomPolicy>(spec.q, spec.lp_stride);
  if (k == "lambda") return std::make_unique<LambdaPolicy>();
  if (k == "theta") return std::make_unique<ThetaPolicy>(spec.theta);
  if (k == "fluid") return std::make_unique<FluidEmpiricalPolicy>();
  if (k == "fixed") return std::make_unique<FixedPolicy>(spec.psi_threshold);
  if (k == "fcfs")
    return std::make_unique<FcfsPolicy>(spec.psi_threshold, spec.block_length,
                                        spec.solve_time_limit_seconds);
  if (k == "sfcfs") return std::make_unique<SfcfsPolicy>();
  throw DomainError("unknown policy kind '" + k + "'");
}

std::vector<std::string> known_policies() {
  return {"first-fit", "random-fit", "rom",   "adaptive-rom", "lambda",
          "theta",     "fluid",      "fixed", "fcfs",         "sfcfs"};
}

}  // namespace coachres::policies
