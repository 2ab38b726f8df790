#include "coachres/stochastic.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <string>
#include <utility>

namespace coachres::stochastic {

namespace {

double log_poisson_pmf(double mean, int k) {
  return k * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0);
}

// Pr[Binomial(n, p) >= j] by direct tail/head summation in log space.
double binomial_tail(int n, double p, int j) {
  if (j <= 0) return 1.0;
  if (j > n || p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double lp = std::log(p), lq = std::log1p(-p);
  auto log_pmf = [&](int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
           k * lp + (n - k) * lq;
  };
  long double acc = 0.0L;
  if (j <= p * n) {  // small head: tail = 1 - Pr[X < j]
    for (int k = 0; k < j; ++k) acc += std::exp(log_pmf(k));
    return std::max(0.0, 1.0 - static_cast<double>(acc));
  }
  for (int k = j; k <= n; ++k) acc += std::exp(log_pmf(k));
  return std::min(1.0, static_cast<double>(acc));
}

}  // namespace

double poisson_tail(double mean, int j) {
  if (j <= 0) return 1.0;
  if (mean <= 0.0) return 0.0;
  if (j <= mean) {  // tail = 1 - head, head has < mean terms
    long double head = 0.0L;
    for (int k = 0; k < j; ++k) head += std::exp(log_poisson_pmf(mean, k));
    return std::max(0.0, 1.0 - static_cast<double>(head));
  }
  // Direct summation; terms decay geometrically past the mean.
  long double acc = 0.0L;
  long double term = std::exp(log_poisson_pmf(mean, j));
  int k = j;
  while (term > 0.0L && (acc == 0.0L || term > acc * 1e-18L)) {
    acc += term;
    ++k;
    term *= mean / k;
  }
  return std::min(1.0, static_cast<double>(acc));
}

ArrivalModel::ArrivalModel(const Instance& instance) {
  const ArrivalProcess& process = instance.process;
  kind_ = process.kind;
  total_mean_ = process.total_mean;
  horizon_ = process.horizon;
  if (horizon_ <= 0) throw DomainError("arrival model: horizon must be positive");

  rates_.reserve(instance.types.size());
  double rate_sum = 0.0;
  for (const RequestType& type : instance.types) rate_sum += type.arrival_rate;
  if (rate_sum <= 0.0) throw DomainError("arrival model: arrival rates sum to zero");
  for (const RequestType& type : instance.types)
    rates_.push_back(type.arrival_rate / rate_sum);

  survival_.assign(horizon_, 1.0);
  if (kind_ == ArrivalProcess::Kind::PoissonConditioned) {
    if (total_mean_ <= 0.0)
      throw DomainError("arrival model: Poisson total mean must be positive");
    // Backward-accumulated tails keep the small values at the horizon exact.
    std::vector<double> tail(horizon_ + 2, 0.0);
    tail[horizon_ + 1] = poisson_tail(total_mean_, horizon_ + 1);
    for (int i = horizon_; i >= 1; --i)
      tail[i] = tail[i + 1] + std::exp(log_poisson_pmf(total_mean_, i));
    const double given_one = tail[1];
    if (given_one <= 0.0)
      throw DomainError("arrival model: Pr[at least one arrival] is zero");
    for (int i = 1; i <= horizon_; ++i)
      survival_[i - 1] = std::min(1.0, tail[i] / given_one);
  }
}

double ArrivalModel::survival(int i) const {
  if (i < 1 || i > horizon_)
    throw DomainError("survival: step " + std::to_string(i) + " outside horizon");
  return survival_[i - 1];
}

double ArrivalModel::continue_probability(int i) const {
  if (i < 1 || i > horizon_)
    throw DomainError("continue_probability: step outside horizon");
  if (i == horizon_) return 0.0;
  const double now = survival_[i - 1];
  if (now <= 0.0) return 0.0;
  return std::min(1.0, survival_[i] / now);
}

double ArrivalModel::type_survival(int type_id, int j) const {
  if (type_id < 0 || type_id >= static_cast<int>(rates_.size()))
    throw DomainError("type_survival: unknown type");
  if (j <= 0) return 1.0;
  const double rate = rates_[type_id];
  if (kind_ == ArrivalProcess::Kind::Deterministic)
    return binomial_tail(horizon_, rate, j);
  return poisson_tail(total_mean_ * rate, j);
}

std::vector<double> poisson_tail_curve(double mean, int j_max) {
  std::vector<double> curve;
  if (j_max <= 0) return curve;
  curve.reserve(j_max);
  if (mean <= 0.0) return std::vector<double>(j_max, 0.0);
  // tail(j+1) = tail(j) - pmf(j); forward recurrence.
  double tail = poisson_tail(mean, 1);
  for (int j = 1; j <= j_max; ++j) {
    curve.push_back(std::max(0.0, std::min(1.0, tail)));
    tail -= std::exp(log_poisson_pmf(mean, j));
  }
  return curve;
}

std::vector<double> binomial_tail_curve(int n, double p, int j_max) {
  std::vector<double> curve;
  if (j_max <= 0) return curve;
  curve.reserve(j_max);
  if (p <= 0.0 || n <= 0) return std::vector<double>(j_max, 0.0);
  if (p >= 1.0) {
    for (int j = 1; j <= j_max; ++j) curve.push_back(j <= n ? 1.0 : 0.0);
    return curve;
  }
  const double lp = std::log(p), lq = std::log1p(-p);
  double tail = 1.0 - std::exp(n * lq);  // Pr[X >= 1]
  for (int j = 1; j <= j_max; ++j) {
    curve.push_back(std::max(0.0, std::min(1.0, tail)));
    if (j > n) {
      tail = 0.0;
      continue;
    }
    const double log_pmf_j = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) -
                             std::lgamma(n - j + 1.0) + j * lp + (n - j) * lq;
    tail -= std::exp(log_pmf_j);
  }
  return curve;
}

std::vector<double> ArrivalModel::type_tail_curve(int type_id, int j_max) const {
  if (type_id < 0 || type_id >= static_cast<int>(rates_.size()))
    throw DomainError("type_tail_curve: unknown type");
  if (j_max <= 0) return {};
  const double rate = rates_[type_id];
  if (kind_ == ArrivalProcess::Kind::Deterministic)
    return binomial_tail_curve(horizon_, rate, j_max);
  return poisson_tail_curve(total_mean_ * rate, j_max);
}

long PsiSet::slot_count() const {
  long total = 0;
  for (const auto& w : weight) total += static_cast<long>(w.size());
  return total;
}

PsiSet build_psi_from_tails(const std::vector<std::vector<double>>& tails,
                            double threshold,
                            std::optional<std::pair<int, int>> min_ordinal) {
  PsiSet psi;
  psi.threshold = threshold;
  psi.weight.resize(tails.size());
  for (size_t t = 0; t < tails.size(); ++t) {
    const auto& curve = tails[t];
    size_t keep = 0;
    while (keep < curve.size() && curve[keep] >= threshold) ++keep;
    if (min_ordinal && min_ordinal->first == static_cast<int>(t))
      keep = std::max(keep, std::min(curve.size(),
                                     static_cast<size_t>(min_ordinal->second)));
    psi.weight[t].assign(curve.begin(), curve.begin() + keep);
  }
  if (min_ordinal) {
    const auto [ft, fj] = *min_ordinal;
    if (ft < 0 || ft >= static_cast<int>(tails.size()) ||
        fj > static_cast<int>(tails[ft].size()))
      throw DomainError("build_psi: forced slot outside the supplied tail curves");
  }
  if (psi.slot_count() == 0)
    throw EmptyPsiError("no request slot reaches the planning threshold " +
                        std::to_string(threshold));
  return psi;
}

PsiSet build_psi(const ArrivalModel& arrival, double threshold,
                 std::optional<std::pair<int, int>> min_ordinal) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw DomainError("build_psi: threshold must be in (0, 1]");
  const int type_count = static_cast<int>(arrival.rates().size());
  std::vector<std::vector<double>> tails(type_count);
  for (int t = 0; t < type_count; ++t) {
    const double mean = arrival.total_mean() * arrival.rates()[t];
    int j_max = static_cast<int>(std::ceil(mean + 20.0 * std::sqrt(mean + 1.0))) + 8;
    if (min_ordinal && min_ordinal->first == t)
      j_max = std::max(j_max, min_ordinal->second);
    j_max = std::min(j_max, arrival.horizon() + 1 + (min_ordinal ? min_ordinal->second : 0));
    tails[t] = arrival.type_tail_curve(t, j_max);
  }
  return build_psi_from_tails(tails, threshold, min_ordinal);
}

// ---------- fluid LP ----------

FluidModel build_fluid_model(const Instance& instance, const ArrivalModel& arrival) {
  const int T = static_cast<int>(instance.types.size());
  const int I = arrival.horizon();
  const int C = instance.train.coach_count();
  const long var_count = static_cast<long>(T) * I * C;
  if (var_count > 2'000'000)
    throw DomainError("literal fluid model too large (" + std::to_string(var_count) +
                      " variables); use solve_fluid");

  FluidModel out;
  out.types = T;
  out.steps = I;
  out.coaches = C;
  linprog::Model& m = out.model;
  for (int t = 0; t < T; ++t) {
    const double lambda = arrival.rates()[t];
    const double price = static_cast<double>(instance.types[t].price);
    for (int i = 1; i <= I; ++i) {
      const double obj = arrival.survival(i) * price;
      for (int c = 1; c <= C; ++c)
        m.add_variable(0.0, lambda, obj, false,
                       "x_" + std::to_string(t) + "_" + std::to_string(i) + "_" +
                           std::to_string(c));
    }
  }
  for (int t = 0; t < T; ++t) {
    const double lambda = arrival.rates()[t];
    for (int i = 1; i <= I; ++i) {
      std::vector<linprog::Term> terms;
      for (int c = 1; c <= C; ++c) terms.push_back({out.x_id(t, i, c), 1.0});
      m.add_constraint(std::move(terms), linprog::Sense::LE, lambda,
                       "arr_" + std::to_string(t) + "_" + std::to_string(i));
    }
  }
  for (int l = 1; l <= instance.network.leg_count(); ++l) {
    for (int c = 1; c <= C; ++c) {
      std::vector<linprog::Term> terms;
      for (int t = 0; t < T; ++t) {
        if (!instance.types[t].covers_leg(l)) continue;
        const double n = static_cast<double>(instance.types[t].group_size);
        for (int i = 1; i <= I; ++i) terms.push_back({out.x_id(t, i, c), n});
      }
      m.add_constraint(std::move(terms), linprog::Sense::LE,
                       static_cast<double>(instance.train.capacity(c)),
                       "cap_" + std::to_string(l) + "_" + std::to_string(c));
    }
  }
  return out;
}

FluidSolution solve_fluid(const Instance& instance, const ArrivalModel& arrival) {
  const int T = static_cast<int>(instance.types.size());
  const int I = arrival.horizon();
  const int C = instance.train.coach_count();

  // Compact form: per-step acceptance masses y_{t,i} and per-coach masses
  // M_{t,c}, coupled by sum_i y = sum_c M. Splitting every step mass across
  // coaches proportionally to M recovers a literal solution of equal value,
  // and aggregating a literal solution gives a feasible compact point, so the
  // optima coincide.
  linprog::Model m;
  auto y_id = [&](int t, int i) { return t * I + (i - 1); };
  const int m_base = T * I;
  auto m_id = [&](int t, int c) { return m_base + t * C + (c - 1); };

  for (int t = 0; t < T; ++t) {
    const double lambda = arrival.rates()[t];
    const double price = static_cast<double>(instance.types[t].price);
    for (int i = 1; i <= I; ++i)
      m.add_variable(0.0, lambda, arrival.survival(i) * price, false,
                     "y_" + std::to_string(t) + "_" + std::to_string(i));
  }
  for (int t = 0; t < T; ++t)
    for (int c = 1; c <= C; ++c)
      m.add_variable(0.0, linprog::kInf, 0.0, false,
                     "M_" + std::to_string(t) + "_" + std::to_string(c));

  for (int t = 0; t < T; ++t) {
    std::vector<linprog::Term> terms;
    for (int i = 1; i <= I; ++i) terms.push_back({y_id(t, i), 1.0});
    for (int c = 1; c <= C; ++c) terms.push_back({m_id(t, c), -1.0});
    m.add_constraint(std::move(terms), linprog::Sense::EQ, 0.0,
                     "bal_" + std::to_string(t));
  }
  for (int l = 1; l <= instance.network.leg_count(); ++l) {
    for (int c = 1; c <= C; ++c) {
      std::vector<linprog::Term> terms;
      for (int t = 0; t < T; ++t)
        if (instance.types[t].covers_leg(l))
          terms.push_back({m_id(t, c), static_cast<double>(instance.types[t].group_size)});
      m.add_constraint(std::move(terms), linprog::Sense::LE,
                       static_cast<double>(instance.train.capacity(c)),
                       "cap_" + std::to_string(l) + "_" + std::to_string(c));
    }
  }

  linprog::SolveOptions options;
  options.iteration_limit = 2'000'000;
  linprog::Solution sol = linprog::solve_lp(m, options);
  if (sol.status != linprog::Status::Optimal)
    throw linprog::ModelError("fluid LP did not solve to optimality: " +
                              linprog::to_string(sol.status));

  FluidSolution out;
  out.objective = sol.objective;
  out.step_mass.assign(T, std::vector<double>(I, 0.0));
  out.coach_share.assign(T, std::vector<double>(C, 0.0));
  out.type_mass.assign(T, 0.0);
  for (int t = 0; t < T; ++t) {
    for (int i = 1; i <= I; ++i)
      out.step_mass[t][i - 1] = std::max(0.0, sol.values[y_id(t, i)]);
    double total = 0.0;
    for (int c = 1; c <= C; ++c) total += std::max(0.0, sol.values[m_id(t, c)]);
    out.type_mass[t] = total;
    if (total > 1e-12)
      for (int c = 1; c <= C; ++c)
        out.coach_share[t][c - 1] = std::max(0.0, sol.values[m_id(t, c)]) / total;
  }

  // The simplex returns a vertex of the optimal face, which is a poor point
  // to hand to step-indexed consumers: it concentrates each type's mass on a
  // prefix of steps although every step with survival ~ 1 carries the same
  // objective coefficient, and within an origin-destination group whose
  // prices are proportional to group size it parks all mass on an arbitrary
  // subset of the tied types. Both are pure degeneracies. Move to the
  // centered point of that face instead (the point an interior-point solver
  // would report): redistribute the flat-prefix mass of each tied group
  // across its types proportionally to arrival rates at fixed per-coach
  // seat totals, then spread each type's flat mass uniformly over the
  // prefix. Capacity rows see unchanged coach totals, per-step rate bounds
  // hold because group seat mass never exceeds the full-rate budget, and the
  // objective is unchanged up to the flatness tolerance.
  std::vector<std::vector<double>> M(T, std::vector<double>(C, 0.0));
  for (int t = 0; t < T; ++t)
    for (int c = 1; c <= C; ++c)
      M[t][c - 1] = std::max(0.0, sol.values[m_id(t, c)]);

  int flat = 0;
  while (flat < I && arrival.survival(flat + 1) >= 1.0 - 1e-7) ++flat;
  if (flat >= 1) {
    std::vector<double> m_flat(T, 0.0);
    std::vector<std::vector<double>> M_flat(T, std::vector<double>(C, 0.0));
    for (int t = 0; t < T; ++t) {
      for (int i = 1; i <= flat; ++i) m_flat[t] += out.step_mass[t][i - 1];
      const double total = out.type_mass[t];
      const double frac = total > 1e-12 ? m_flat[t] / total : 0.0;
      for (int c = 0; c < C; ++c) {
        M_flat[t][c] = M[t][c] * frac;
        M[t][c] -= M_flat[t][c];  // M now holds the untouched tail portion
      }
    }

    // Tied groups: same OD, per-seat price equal across the group.
    std::map<std::pair<int, int>, std::vector<int>> od_types;
    for (int t = 0; t < T; ++t)
      od_types[{instance.types[t].origin, instance.types[t].destination}]
          .push_back(t);
    for (auto& [od, members] : od_types) {
      bool tied = members.size() > 1;
      const double seat_price0 =
          static_cast<double>(instance.types[members[0]].price) /
          instance.types[members[0]].group_size;
      for (int t : members) {
        const double sp = static_cast<double>(instance.types[t].price) /
                          instance.types[t].group_size;
        if (std::abs(sp - seat_price0) > 1e-6 * std::max(1.0, seat_price0))
          tied = false;
      }
      double W = 0.0;
      for (int t : members)
        W += arrival.rates()[t] * instance.types[t].group_size;
      if (!tied || W <= 0.0) continue;
      std::vector<double> seat_col(C, 0.0);
      double seat_total = 0.0;
      for (int t : members)
        for (int c = 0; c < C; ++c) {
          seat_col[c] += instance.types[t].group_size * M_flat[t][c];
          seat_total += instance.types[t].group_size * M_flat[t][c];
        }
      if (seat_total <= 1e-12) continue;
      const double covered = seat_total / W;  // steps served at full rate
      for (int t : members)
        for (int c = 0; c < C; ++c)
          M_flat[t][c] =
              arrival.rates()[t] * covered * (seat_col[c] / seat_total);
      for (int t : members) m_flat[t] = arrival.rates()[t] * covered;
    }

    // Uniform step spread of the flat mass; tail steps stay as solved.
    for (int t = 0; t < T; ++t) {
      const double u = std::min(m_flat[t] / flat, arrival.rates()[t]);
      for (int i = 1; i <= flat; ++i) out.step_mass[t][i - 1] = u;
      for (int c = 0; c < C; ++c) M[t][c] += M_flat[t][c];
    }
    for (int t = 0; t < T; ++t) {
      double total = 0.0;
      for (int i = 1; i <= I; ++i) total += out.step_mass[t][i - 1];
      out.type_mass[t] = total;
    }
  }

  // Center the coach dimension of the face as well: coaches of equal capacity
  // are interchangeable in every constraint, so replacing each type's budget
  // on such a class by the class average keeps every leg-coach load feasible
  // (it becomes the mean of feasible loads) at unchanged objective. With the
  // budgets equalized, the step-to-coach pairing below fills every class
  // member at the same pace - which is also the order in which a first-fit
  // realization consumes the train, so runtime feasibility of a step's coach
  // tracks the plan instead of an arbitrary vertex's parking choices.
  {
    std::map<int, std::vector<int>> by_cap;  // capacity -> 0-based coach ids
    for (int c = 1; c <= C; ++c)
      by_cap[instance.train.capacity(c)].push_back(c - 1);
    for (int t = 0; t < T; ++t) {
      for (const auto& [cap, coaches] : by_cap) {
        if (coaches.size() < 2) continue;
        double avg = 0.0;
        for (int c : coaches) avg += M[t][c];
        avg /= static_cast<double>(coaches.size());
        for (int c : coaches) M[t][c] = avg;
      }
      double coach_total = 0.0;
      for (int c = 0; c < C; ++c) coach_total += M[t][c];
      if (coach_total > 1e-12)
        for (int c = 0; c < C; ++c)
          out.coach_share[t][c] = M[t][c] / coach_total;
    }
  }

  // Per-(t,i,c) values via a northwest-corner transport: walk the steps in
  // order and pour each step's mass into coaches in index order until that
  // coach's per-type budget M_{t,c} is spent. Row sums equal the step masses
  // and column sums equal the coach budgets, so objective and feasibility are
  // those of the centered point; the step->coach pairing additionally tracks
  // the order in which a first-fit realization fills the train.
  out.steps = I;
  out.coaches = C;
  out.flow.assign(static_cast<size_t>(T) * I * C, 0.0);
  for (int t = 0; t < T; ++t) {
    std::vector<double> budget = M[t];
    int cp = 0;  // current coach cursor (0-based)
    for (int i = 1; i <= I; ++i) {
      double need = out.step_mass[t][i - 1];
      while (need > 1e-15 && cp < C) {
        const double take = std::min(need, budget[cp]);
        out.flow[(static_cast<size_t>(t) * I + (i - 1)) * C + cp] += take;
        need -= take;
        budget[cp] -= take;
        if (budget[cp] <= 1e-15 && need > 0.0) ++cp;
      }
      if (need > 0.0 && cp >= C)  // numerical dust: keep row sums exact
        out.flow[(static_cast<size_t>(t) * I + (i - 1)) * C + (C - 1)] += need;
    }
  }
  return out;
}

// ---------- a-priori assignment ----------

namespace {

std::vector<std::vector<int>> residual_table(const Instance& instance,
                                             const ResidualCapacity* residual) {
  const int C = instance.train.coach_count();
  const int L = instance.network.leg_count();
  std::vector<std::vector<int>> free(C + 1, std::vector<int>(L + 1, 0));
  for (int c = 1; c <= C; ++c)
    for (int l = 1; l <= L; ++l)
      free[c][l] = residual ? residual->free(c, l) : instance.train.capacity(c);
  return free;
}

}  // namespace

AprioriModel build_apriori_model(const Instance& instance, const PsiSet& psi,
                                 const ResidualCapacity* residual) {
  const int T = static_cast<int>(instance.types.size());
  const int C = instance.train.coach_count();
  const auto free = residual_table(instance, residual);

  long slots = psi.slot_count();
  if (slots * C > 2'000'000)
    throw DomainError("literal slot model too large; use solve_apriori");

  AprioriModel out;
  out.x.assign(T, {});
  linprog::Model& m = out.model;
  for (int t = 0; t < T; ++t) {
    const double price = static_cast<double>(instance.types[t].price);
    const int J = psi.max_ordinal(t);
    out.x[t].assign(J, std::vector<int>(C, -1));
    for (int j = 1; j <= J; ++j)
      for (int c = 1; c <= C; ++c)
        out.x[t][j - 1][c - 1] = m.add_variable(
            0.0, 1.0, psi.weight[t][j - 1] * price, true,
            "x_" + std::to_string(t) + "_" + std::to_string(j) + "_" +
                std::to_string(c));
  }
  for (int t = 0; t < T; ++t) {
    const int J = psi.max_ordinal(t);
    for (int j = 1; j <= J; ++j) {
      std::vector<linprog::Term> terms;
      for (int c = 1; c <= C; ++c) terms.push_back({out.x[t][j - 1][c - 1], 1.0});
      m.add_constraint(std::move(terms), linprog::Sense::LE, 1.0,
                       "assign_" + std::to_string(t) + "_" + std::to_string(j));
      if (j >= 2) {
        std::vector<linprog::Term> mono;
        for (int c = 1; c <= C; ++c) {
          mono.push_back({out.x[t][j - 1][c - 1], 1.0});
          mono.push_back({out.x[t][j - 2][c - 1], -1.0});
        }
        m.add_constraint(std::move(mono), linprog::Sense::LE, 0.0,
                         "mono_" + std::to_string(t) + "_" + std::to_string(j));
      }
    }
  }
  for (int l = 1; l <= instance.network.leg_count(); ++l) {
    for (int c = 1; c <= C; ++c) {
      std::vector<linprog::Term> terms;
      for (int t = 0; t < T; ++t) {
        if (!instance.types[t].covers_leg(l)) continue;
        const double n = static_cast<double>(instance.types[t].group_size);
        for (int j = 1; j <= psi.max_ordinal(t); ++j)
          terms.push_back({out.x[t][j - 1][c - 1], n});
      }
      m.add_constraint(std::move(terms), linprog::Sense::LE,
                       static_cast<double>(free[c][l]),
                       "cap_" + std::to_string(l) + "_" + std::to_string(c));
    }
  }
  return out;
}

AprioriPlan solve_apriori(const Instance& instance, const PsiSet& psi,
                          const ResidualCapacity* residual,
                          std::optional<std::pair<int, int>> forced,
                          const linprog::SolveOptions& options) {
  const int T = static_cast<int>(instance.types.size());
  const int C = instance.train.coach_count();
  const int L = instance.network.leg_count();
  const auto free = residual_table(instance, residual);
  if (forced) {
    const auto [ft, fj] = *forced;
    if (ft < 0 || ft >= T || fj < 1 || fj > psi.max_ordinal(ft))
      throw DomainError("solve_apriori: forced slot is outside the planning set");
  }

  // Compact equivalent: slot fills u_{t,j} plus integer per-coach counts
  // k_{t,c}. Tails decrease in j, so for any integral per-type total the LP
  // fills the slots as a prefix on its own; only the counts need to be
  // integer, which keeps the branch-and-bound on a few hundred variables.
  linprog::Model m;
  std::vector<std::vector<int>> u_id(T);
  for (int t = 0; t < T; ++t) {
    const double price = static_cast<double>(instance.types[t].price);
    const int J = psi.max_ordinal(t);
    u_id[t].resize(J);
    for (int j = 1; j <= J; ++j)
      u_id[t][j - 1] =
          m.add_variable(0.0, 1.0, psi.weight[t][j - 1] * price, false,
                         "u_" + std::to_string(t) + "_" + std::to_string(j));
  }
  std::vector<std::vector<int>> k_id(T, std::vector<int>(C, -1));
  for (int t = 0; t < T; ++t) {
    const RequestType& type = instance.types[t];
    for (int c = 1; c <= C; ++c) {
      int fit = free[c][type.first_leg()] / type.group_size;
      for (int l = type.first_leg(); l <= type.last_leg(); ++l)
        fit = std::min(fit, free[c][l] / type.group_size);
      fit = std::min(fit, psi.max_ordinal(t));
      k_id[t][c - 1] = m.add_variable(
          0.0, static_cast<double>(fit), 0.0, true,
          "k_" + std::to_string(t) + "_" + std::to_string(c));
    }
  }
  for (int t = 0; t < T; ++t) {
    std::vector<linprog::Term> terms;
    for (int id : u_id[t]) terms.push_back({id, 1.0});
    for (int c = 1; c <= C; ++c) terms.push_back({k_id[t][c - 1], -1.0});
    m.add_constraint(std::move(terms), linprog::Sense::EQ, 0.0,
                     "bal_" + std::to_string(t));
  }
  for (int l = 1; l <= L; ++l) {
    for (int c = 1; c <= C; ++c) {
      std::vector<linprog::Term> terms;
      for (int t = 0; t < T; ++t)
        if (instance.types[t].covers_leg(l))
          terms.push_back(
              {k_id[t][c - 1], static_cast<double>(instance.types[t].group_size)});
      m.add_constraint(std::move(terms), linprog::Sense::LE,
                       static_cast<double>(free[c][l]),
                       "cap_" + std::to_string(l) + "_" + std::to_string(c));
    }
  }
  if (forced) {
    std::vector<linprog::Term> terms;
    for (int id : u_id[forced->first]) terms.push_back({id, 1.0});
    m.add_constraint(std::move(terms), linprog::Sense::GE,
                     static_cast<double>(forced->second), "forced");
  }

  // Coaches with identical residual capacity are interchangeable, which blows
  // the search tree up with relabeled copies of the same plan. Order such
  // coaches by nonincreasing planned seat load; at least one optimum survives.
  for (int c = 1; c < C; ++c) {
    bool same = true;
    for (int l = 1; l <= L && same; ++l) same = free[c][l] == free[c + 1][l];
    if (!same) continue;
    std::vector<linprog::Term> terms;
    for (int t = 0; t < T; ++t) {
      const double n = static_cast<double>(instance.types[t].group_size);
      terms.push_back({k_id[t][c - 1], n});
      terms.push_back({k_id[t][c], -n});
    }
    m.add_constraint(std::move(terms), linprog::Sense::GE, 0.0,
                     "sym_" + std::to_string(c));
  }

  // LP-guided warm start: place the forced prefix first (it fits whenever the
  // model is feasible), then lay down the relaxation's floored per-coach
  // counts clipped to the space that is still free, then top the leftovers up
  // greedily by expected slot value. Guarantees the solver holds a strong
  // incumbent even when the time limit bites.
  linprog::SolveOptions run_options = options;
  {
    std::vector<std::vector<int>> greedy_k(T, std::vector<int>(C, 0));
    std::vector<int> greedy_m(T, 0);
    auto table = free;
    auto place = [&](int t) {
      const RequestType& type = instance.types[t];
      int best_c = 0, best_slack = std::numeric_limits<int>::max();
      for (int c = 1; c <= C; ++c) {
        int mn = std::numeric_limits<int>::max();
        for (int l = type.first_leg(); l <= type.last_leg(); ++l)
          mn = std::min(mn, table[c][l]);
        if (mn >= type.group_size && mn - type.group_size < best_slack) {
          best_c = c;
          best_slack = mn - type.group_size;
        }
      }
      if (best_c == 0) return false;
      for (int l = type.first_leg(); l <= type.last_leg(); ++l)
        table[best_c][l] -= type.group_size;
      ++greedy_k[t][best_c - 1];
      ++greedy_m[t];
      return true;
    };
    bool forced_ok = true;
    if (forced)
      while (greedy_m[forced->first] < forced->second && forced_ok)
        forced_ok = place(forced->first);
    {
      linprog::SolveOptions lp_opt = options;
      lp_opt.warm_start.clear();
      linprog::Solution relax = linprog::solve_lp(m, lp_opt);
      if (relax.status == linprog::Status::Optimal) {
        for (int t = 0; t < T; ++t) {
          const RequestType& type = instance.types[t];
          for (int c = 1; c <= C; ++c) {
            int want = static_cast<int>(
                           std::floor(relax.values[k_id[t][c - 1]] + 1e-9)) -
                       greedy_k[t][c - 1];
            while (want-- > 0 && greedy_m[t] < psi.max_ordinal(t)) {
              int mn = std::numeric_limits<int>::max();
              for (int l = type.first_leg(); l <= type.last_leg(); ++l)
                mn = std::min(mn, table[c][l]);
              if (mn < type.group_size) break;
              for (int l = type.first_leg(); l <= type.last_leg(); ++l)
                table[c][l] -= type.group_size;
              ++greedy_k[t][c - 1];
              ++greedy_m[t];
            }
          }
        }
      }
    }
    if (forced_ok) {
      struct Slot { double w; int t, j; };
      std::vector<Slot> slots;
      for (int t = 0; t < T; ++t) {
        const double price = static_cast<double>(instance.types[t].price);
        for (int j = greedy_m[t] + 1; j <= psi.max_ordinal(t); ++j)
          slots.push_back({psi.weight[t][j - 1] * price, t, j});
      }
      std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
        if (a.w != b.w) return a.w > b.w;
        return std::tie(a.t, a.j) < std::tie(b.t, b.j);
      });
      for (const Slot& s : slots) {
        if (s.j != greedy_m[s.t] + 1) continue;  // only the next prefix slot
        place(s.t);
      }
      // Relabel within runs of identical coaches so seat loads are
      // nonincreasing, matching the symmetry rows above.
      for (int c1 = 1; c1 <= C;) {
        int c2 = c1;
        auto same = [&](int a, int b) {
          for (int l = 1; l <= L; ++l)
            if (free[a][l] != free[b][l]) return false;
          return true;
        };
        while (c2 + 1 <= C && same(c2, c2 + 1)) ++c2;
        if (c2 > c1) {
          std::vector<std::pair<long long, int>> loads;  // (-seat load, coach)
          for (int c = c1; c <= c2; ++c) {
            long long load = 0;
            for (int t = 0; t < T; ++t)
              load += static_cast<long long>(instance.types[t].group_size) *
                      greedy_k[t][c - 1];
            loads.push_back({-load, c});
          }
          std::sort(loads.begin(), loads.end());
          std::vector<std::vector<int>> col(T, std::vector<int>(c2 - c1 + 1));
          for (int i = 0; i < static_cast<int>(loads.size()); ++i)
            for (int t = 0; t < T; ++t)
              col[t][i] = greedy_k[t][loads[i].second - 1];
          for (int i = 0; i < static_cast<int>(loads.size()); ++i)
            for (int t = 0; t < T; ++t) greedy_k[t][c1 - 1 + i] = col[t][i];
        }
        c1 = c2 + 1;
      }
      std::vector<double> warm(m.var_count(), 0.0);
      for (int t = 0; t < T; ++t) {
        for (int j = 1; j <= greedy_m[t]; ++j) warm[u_id[t][j - 1]] = 1.0;
        for (int c = 1; c <= C; ++c)
          warm[k_id[t][c - 1]] = static_cast<double>(greedy_k[t][c - 1]);
      }
      if (m.max_violation(warm) <= run_options.feas_tol)
        run_options.warm_start = std::move(warm);
    }
  }

  linprog::Solution sol = linprog::solve_mip(m, run_options);
  if (sol.status == linprog::Status::Infeasible)
    throw DomainError("solve_apriori: forced slot cannot be honored");
  if (!sol.has_incumbent())
    throw linprog::ModelError("slot plan solve failed: " + linprog::to_string(sol.status));

  AprioriPlan plan;
  plan.count.assign(T, 0);
  plan.coach_count.assign(T, std::vector<int>(C, 0));
  plan.coach_of.assign(T, {});
  for (int t = 0; t < T; ++t) {
    int k_total = 0;
    for (int c = 1; c <= C; ++c) {
      const int k = static_cast<int>(std::llround(sol.values[k_id[t][c - 1]]));
      plan.coach_count[t][c - 1] = k;
      k_total += k;
    }
    plan.count[t] = k_total;  // reinterpret the chosen slots as the j-prefix
    plan.coach_of[t].reserve(k_total);
    for (int c = 1; c <= C; ++c)
      for (int k = 0; k < plan.coach_count[t][c - 1]; ++k)
        plan.coach_of[t].push_back(c);
    for (int j = 1; j <= plan.count[t]; ++j)
      plan.value += psi.weight[t][j - 1] * static_cast<double>(instance.types[t].price);
  }
  return plan;
}

AprioriPlan solve_apriori(const Instance& instance, const ArrivalModel& arrival,
                          double psi_threshold, const ResidualCapacity* residual,
                          std::optional<std::pair<int, int>> forced,
                          const linprog::SolveOptions& options) {
  PsiSet psi = build_psi(arrival, psi_threshold, forced);
  return solve_apriori(instance, psi, residual, forced, options);
}

}  // namespace coachres::stochastic
