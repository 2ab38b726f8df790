#pragma once

// Arrival-process machinery and the two stochastic planning models:
//  - the fluid LP upper bound over expected acceptance masses, and
//  - the a-priori assignment MIP over ordinal request slots (Psi set).
//
// All survival quantities condition on at least one arrival, matching the
// simulated process (total demand Poisson(Lambda) conditioned on >= 1 and
// truncated to the horizon).

#include <optional>
#include <utility>

#include "coachres/domain.hpp"
#include "coachres/linprog.hpp"

namespace coachres::stochastic {

struct EmptyPsiError : DomainError {
  using DomainError::DomainError;
};

// Pr[X >= j] for X ~ Poisson(mean); exact summation of the pmf tail.
double poisson_tail(double mean, int j);

// curve[j-1] = Pr[X >= j] for j = 1..j_max, X ~ Poisson(mean) / Binomial(n, p).
std::vector<double> poisson_tail_curve(double mean, int j_max);
std::vector<double> binomial_tail_curve(int n, double p, int j_max);

class ArrivalModel {
 public:
  explicit ArrivalModel(const Instance& instance);

  int horizon() const { return horizon_; }
  double total_mean() const { return total_mean_; }
  ArrivalProcess::Kind kind() const { return kind_; }
  const std::vector<double>& rates() const { return rates_; }

  // Pr[X >= i | X >= 1] for 1 <= i <= horizon.
  double survival(int i) const;
  // Pr[X >= i+1 | X >= i]; zero at the horizon (truncation).
  double continue_probability(int i) const;
  // Pr[X_t >= j] for the per-type count (Poisson thinning, or Binomial for a
  // deterministic total).
  double type_survival(int type_id, int j) const;
  // tail[j-1] = type_survival(type_id, j) for j = 1..j_max.
  std::vector<double> type_tail_curve(int type_id, int j_max) const;

 private:
  ArrivalProcess::Kind kind_;
  double total_mean_ = 0.0;
  int horizon_ = 0;
  std::vector<double> rates_;
  std::vector<double> survival_;  // survival_[i-1] = Pr[X >= i | X >= 1]
};

// Ordinal slots worth planning for: (t, j) with Pr[X_t >= j] >= threshold.
// Downward closed in j by tail monotonicity.
struct PsiSet {
  double threshold = 0.0;
  std::vector<std::vector<double>> weight;  // weight[t][j-1] = Pr[X_t >= j]

  int max_ordinal(int t) const { return static_cast<int>(weight[t].size()); }
  bool contains(int t, int j) const { return j >= 1 && j <= max_ordinal(t); }
  long slot_count() const;
};

// Throws EmptyPsiError when no slot meets the threshold (and nothing is forced
// into range via min_ordinal = (type, ordinal)).
PsiSet build_psi(const ArrivalModel& arrival, double threshold,
                 std::optional<std::pair<int, int>> min_ordinal = std::nullopt);

// Psi from explicit tail curves (used with re-estimated remaining-horizon
// tails); same emptiness contract.
PsiSet build_psi_from_tails(const std::vector<std::vector<double>>& tails,
                            double threshold,
                            std::optional<std::pair<int, int>> min_ordinal);

// ---------- fluid LP ----------

// Literal three-index model x_{t,i,c}: arrival rows per (t,i), capacity rows
// per (leg,c). Objective sum survival(i) p(t) x_{t,i,c}. For cross-checks and
// dumps; size-guarded.
struct FluidModel {
  linprog::Model model;
  int types = 0, steps = 0, coaches = 0;
  int x_id(int t, int i, int c) const {  // t 0-based, i and c 1-based
    return (t * steps + (i - 1)) * coaches + (c - 1);
  }
};

FluidModel build_fluid_model(const Instance& instance, const ArrivalModel& arrival);

struct FluidSolution {
  double objective = 0.0;  // expected-revenue upper bound
  int steps = 0, coaches = 0;
  std::vector<std::vector<double>> step_mass;    // y[t][i-1]
  std::vector<std::vector<double>> coach_share;  // share[t][c-1], sums to 1
  std::vector<double> type_mass;                 // sum_i y[t][i]
  std::vector<double> flow;                      // x(t,i,c), dense

  double x(int t, int i, int c) const {
    return flow[(static_cast<size_t>(t) * steps + (i - 1)) * coaches + (c - 1)];
  }
};

// Solves an equivalent compact form (step masses + per-coach masses coupled by
// type balance rows); per-(t,i,c) values are reconstructed by a transport plan
// with the same marginals (so value and feasibility are preserved; checked
// against the literal model in tests).
FluidSolution solve_fluid(const Instance& instance, const ArrivalModel& arrival);

// ---------- a-priori assignment ----------

// Literal model over binaries x_{t,j,c} with assignment, capacity and
// monotonicity (j-th slot used only if the (j-1)-th is) rows.
struct AprioriModel {
  linprog::Model model;
  std::vector<std::vector<std::vector<int>>> x;  // x[t][j-1][c-1]
};

AprioriModel build_apriori_model(const Instance& instance, const PsiSet& psi,
                                 const ResidualCapacity* residual = nullptr);

struct AprioriPlan {
  double value = 0.0;           // expected revenue of the planned slots
  std::vector<int> count;       // slots planned per type (prefix length K_t)
  std::vector<std::vector<int>> coach_count;  // k[t][c-1]
  std::vector<std::vector<int>> coach_of;     // per type: ordinal j -> coach

  bool contains(int t, int j) const { return j >= 1 && j <= count[t]; }
  int coach_for(int t, int j) const { return coach_of[t][j - 1]; }
};

// Exact solve via a compact equivalent (per-type slot binaries + integer
// per-coach counts; the prefix property makes monotonicity rows redundant).
// `forced` = (type, ordinal) that must be planned — psi must cover it.
// Throws linprog::ModelError wrapped status on solver failure and
// DomainError("infeasible...") when the forced slot cannot be honored.
AprioriPlan solve_apriori(const Instance& instance, const PsiSet& psi,
                          const ResidualCapacity* residual = nullptr,
                          std::optional<std::pair<int, int>> forced = std::nullopt,
                          const linprog::SolveOptions& options = {});

AprioriPlan solve_apriori(const Instance& instance, const ArrivalModel& arrival,
                          double psi_threshold = 0.001,
                          const ResidualCapacity* residual = nullptr,
                          std::optional<std::pair<int, int>> forced = std::nullopt,
                          const linprog::SolveOptions& options = {});

}  // namespace coachres::stochastic
