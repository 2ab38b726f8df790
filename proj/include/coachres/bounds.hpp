#pragma once

// Closed-form performance guarantees, the safe-assignment load threshold, and
// the exact finite-horizon dynamic program for tiny instances.

#include "coachres/domain.hpp"
#include "coachres/stochastic.hpp"

namespace coachres::bounds {

struct HypothesisViolated : DomainError {
  using DomainError::DomainError;
};

// Competitive ratio of the random-order rejection policy with the optimal
// sampling fraction, as a function of the largest group-to-capacity fraction
// delta: 1 - ln(2 - delta) / (1 - delta). Domain: 0 <= delta < 1.
double rom_ratio(double delta);

// The sampling fraction attaining rom_ratio: 1 / (2 - delta).
double optimal_q(double delta);

// Guarantee of the classical greedy baseline for comparison: 1 / (4*legs + 2).
double naori_baseline(int legs);

// Acceptance-probability lower bound for the arrival at position i out of n
// under sampling fraction q: 1 - ln((i-1)/(q n)) / (1 - delta).
// Throws DomainError when i <= q*n (the bound only applies past the sample).
double per_arrival_bound(long i, double q, long n, double delta);

struct ConcentrationBound {
  double factor = 0.0;             // clamped to [0, 1]
  double raw = 0.0;                // unclamped value of the expression
  bool negative_deviation = false; // deviation term <= 0: the tail bound is vacuous
};

// Fluid-policy guarantee factor
//   1 - legs * exp(-coaches * x^2 / (2 omega + (2/3) x)),  x = 1/delta - omega,
// for uniform capacity omega. Requires delta >= 2/omega (HypothesisViolated
// otherwise). The denominator is positive for every x >= -omega.
ConcentrationBound fluid_guarantee(double delta, int coaches, int omega, int legs);

// Scaled variant: theta * (1 - legs * exp(-(coaches/2) x^2 / (theta omega + x/3))),
// x = 1/delta - theta*omega. Evaluates the expression for any theta in (0, 1];
// at theta = 1 it coincides with fluid_guarantee's expression.
ConcentrationBound theta_guarantee(double theta, double delta, int coaches,
                                   int omega, int legs);

struct ThetaResult {
  double theta = 1.0;
  double factor = 0.0;
};

// Maximizes theta_guarantee over theta in (0, 1]: coarse grid followed by
// golden-section refinement to the given tolerance on theta.
ThetaResult optimize_theta(double delta, int coaches, int omega, int legs,
                           double tol = 1e-5);

// Load threshold (1 - delta) * coaches on the summed per-coach occupancy
// fractions: below it, a coach with free fraction > delta exists, so on a
// single leg any group of size <= delta*omega still fits.
double safe_assignment_threshold(double delta, int coaches);

// Summed per-coach occupancy (each coach's most-loaded leg) is strictly below
// the threshold.
bool within_safe_threshold(const ResidualCapacity& residual, const Train& train,
                           double delta);

// Exact expected revenue of the optimal online policy via backward induction
// over the full residual-capacity state. State space is the product of
// (capacity+1)^legs over coaches; throws DomainError when
// state_space * horizon exceeds 1e7.
double exact_dp_value(const Instance& instance,
                      const stochastic::ArrivalModel& arrival);
double exact_dp_value(const Instance& instance);

}  // namespace coachres::bounds
