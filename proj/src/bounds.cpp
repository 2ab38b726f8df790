#include "coachres/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace coachres::bounds {

double rom_ratio(double delta) {
  if (delta < 0.0 || delta >= 1.0)
    throw DomainError("rom_ratio: delta must lie in [0, 1)");
  return 1.0 - std::log(2.0 - delta) / (1.0 - delta);
}

double optimal_q(double delta) {
  if (delta < 0.0 || delta >= 1.0)
    throw DomainError("optimal_q: delta must lie in [0, 1)");
  return 1.0 / (2.0 - delta);
}

double naori_baseline(int legs) {
  if (legs < 1) throw DomainError("naori_baseline: legs must be positive");
  return 1.0 / (4.0 * legs + 2.0);
}

double per_arrival_bound(long i, double q, long n, double delta) {
  if (delta < 0.0 || delta >= 1.0)
    throw DomainError("per_arrival_bound: delta must lie in [0, 1)");
  if (q <= 0.0 || q >= 1.0)
    throw DomainError("per_arrival_bound: q must lie in (0, 1)");
  if (n < 1) throw DomainError("per_arrival_bound: n must be positive");
  const double sample = q * static_cast<double>(n);
  if (static_cast<double>(i) <= sample)
    throw DomainError("per_arrival_bound: position " + std::to_string(i) +
                      " falls inside the sampling phase");
  return 1.0 - std::log((static_cast<double>(i) - 1.0) / sample) / (1.0 - delta);
}

namespace {

ConcentrationBound theta_expression(double theta, double delta, int coaches,
                                    int omega, int legs) {
  const double x = 1.0 / delta - theta * omega;
  // theta*omega + x/3 = (2/3) theta*omega + 1/(3 delta) > 0 always.
  const double denom = theta * omega + x / 3.0;
  const double exponent = -(static_cast<double>(coaches) / 2.0) * x * x / denom;
  ConcentrationBound out;
  out.negative_deviation = x <= 0.0;
  out.raw = theta * (1.0 - static_cast<double>(legs) * std::exp(exponent));
  out.factor = std::clamp(out.raw, 0.0, 1.0);
  return out;
}

void check_shape(double delta, int coaches, int omega, int legs, const char* who) {
  if (delta <= 0.0 || delta > 1.0)
    throw DomainError(std::string(who) + ": delta must lie in (0, 1]");
  if (coaches < 1 || omega < 1 || legs < 1)
    throw DomainError(std::string(who) + ": coaches, omega and legs must be positive");
}

}  // namespace

ConcentrationBound fluid_guarantee(double delta, int coaches, int omega, int legs) {
  check_shape(delta, coaches, omega, legs, "fluid_guarantee");
  if (delta < 2.0 / static_cast<double>(omega))
    throw HypothesisViolated("fluid_guarantee: requires delta >= 2/omega (got delta=" +
                             std::to_string(delta) + ", omega=" + std::to_string(omega) +
                             ")");
  return theta_expression(1.0, delta, coaches, omega, legs);
}

ConcentrationBound theta_guarantee(double theta, double delta, int coaches,
                                   int omega, int legs) {
  check_shape(delta, coaches, omega, legs, "theta_guarantee");
  if (theta <= 0.0 || theta > 1.0)
    throw DomainError("theta_guarantee: theta must lie in (0, 1]");
  return theta_expression(theta, delta, coaches, omega, legs);
}

ThetaResult optimize_theta(double delta, int coaches, int omega, int legs,
                           double tol) {
  check_shape(delta, coaches, omega, legs, "optimize_theta");
  auto value = [&](double theta) {
    return theta_expression(theta, delta, coaches, omega, legs).factor;
  };

  // Coarse scan to bracket the maximizer, then golden-section refinement.
  const int grid = 400;
  double best_theta = 1.0, best_value = value(1.0);
  for (int g = 1; g <= grid; ++g) {
    const double theta = static_cast<double>(g) / grid;
    const double v = value(theta);
    if (v > best_value) {
      best_value = v;
      best_theta = theta;
    }
  }
  double lo = std::max(1.0 / grid, best_theta - 1.0 / grid);
  double hi = std::min(1.0, best_theta + 1.0 / grid);

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = value(c), fd = value(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = value(d);
    }
  }
  const double theta = (a + b) / 2.0;
  ThetaResult out;
  out.theta = theta;
  out.factor = value(theta);
  if (best_value > out.factor) {  // keep the grid winner if refinement drifted
    out.theta = best_theta;
    out.factor = best_value;
  }
  return out;
}

double safe_assignment_threshold(double delta, int coaches) {
  if (delta < 0.0 || delta > 1.0)
    throw DomainError("safe_assignment_threshold: delta must lie in [0, 1]");
  if (coaches < 1)
    throw DomainError("safe_assignment_threshold: coaches must be positive");
  return (1.0 - delta) * static_cast<double>(coaches);
}

bool within_safe_threshold(const ResidualCapacity& residual, const Train& train,
                           double delta) {
  const int C = train.coach_count();
  const int L = residual.legs();
  double load = 0.0;
  for (int c = 1; c <= C; ++c) {
    double occupancy = 0.0;
    for (int l = 1; l <= L; ++l) {
      const double used =
          1.0 - static_cast<double>(residual.free(c, l)) / train.capacity(c);
      occupancy = std::max(occupancy, used);
    }
    load += occupancy;
  }
  return load < safe_assignment_threshold(delta, C);
}

double exact_dp_value(const Instance& instance,
                      const stochastic::ArrivalModel& arrival) {
  const int C = instance.train.coach_count();
  const int L = instance.network.leg_count();
  const int T = static_cast<int>(instance.types.size());
  const int horizon = arrival.horizon();

  // Mixed-radix encoding of the residual profile: one digit per (coach, leg),
  // radix capacity+1.
  std::vector<std::vector<long>> weight(C + 1, std::vector<long>(L + 1, 0));
  long state_space = 1;
  for (int c = 1; c <= C; ++c) {
    const long radix = instance.train.capacity(c) + 1;
    for (int l = 1; l <= L; ++l) {
      weight[c][l] = state_space;
      if (state_space > (100'000'000L / radix) + 1)
        throw DomainError("exact DP state space too large");
      state_space *= radix;
    }
  }
  if (static_cast<double>(state_space) * horizon > 1e7)
    throw DomainError("exact DP state space times horizon exceeds 1e7 (" +
                      std::to_string(state_space) + " states, horizon " +
                      std::to_string(horizon) + ")");

  // Per-type transition deltas and per-(type,coach) feasibility digits.
  struct Move {
    int coach;
    long delta_index;
  };
  std::vector<std::vector<Move>> moves(T);
  for (int t = 0; t < T; ++t) {
    const RequestType& type = instance.types[t];
    for (int c = 1; c <= C; ++c) {
      long d = 0;
      for (int l = type.first_leg(); l <= type.last_leg(); ++l)
        d += static_cast<long>(type.group_size) * weight[c][l];
      moves[t].push_back({c, d});
    }
  }
  std::vector<long> radix_of(C + 1);
  for (int c = 1; c <= C; ++c) radix_of[c] = instance.train.capacity(c) + 1;

  auto digit = [&](long state, int c, int l) {
    return (state / weight[c][l]) % radix_of[c];
  };

  std::vector<double> next(state_space, 0.0), cur(state_space, 0.0);
  for (int i = horizon; i >= 1; --i) {
    const double cont = arrival.continue_probability(i);
    for (long s = 0; s < state_space; ++s) {
      const double keep = cont * next[s];
      double total = 0.0;
      for (int t = 0; t < T; ++t) {
        const RequestType& type = instance.types[t];
        double best = keep;  // reject
        for (const Move& mv : moves[t]) {
          bool fits = true;
          for (int l = type.first_leg(); l <= type.last_leg(); ++l)
            if (digit(s, mv.coach, l) < type.group_size) {
              fits = false;
              break;
            }
          if (!fits) continue;
          const double accept =
              static_cast<double>(type.price) + cont * next[s - mv.delta_index];
          best = std::max(best, accept);
        }
        total += arrival.rates()[t] * best;
      }
      cur[s] = total;
    }
    std::swap(cur, next);
  }

  // Initial state: every digit at full capacity = the highest index.
  return next[state_space - 1];
}

double exact_dp_value(const Instance& instance) {
  stochastic::ArrivalModel arrival(instance);
  return exact_dp_value(instance, arrival);
}

}  // namespace coachres::bounds
