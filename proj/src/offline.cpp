#include "coachres/offline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <unordered_set>

#include "coachres/bounds.hpp"

namespace coachres::offline {

using linprog::CutResult;
using linprog::CutRow;
using linprog::Model;
using linprog::NewColumn;
using linprog::Sense;
using linprog::SolveOptions;
using linprog::Status;
using linprog::Term;

OfflineModel build_offline_model(const std::vector<Request>& requests,
                                 const Instance& instance) {
  const int C = instance.train.coach_count();
  const int L = instance.network.leg_count();
  OfflineModel out;
  const int K = static_cast<int>(requests.size());
  out.x.assign(K, std::vector<int>(C, -1));
  out.y.assign(K, -1);
  for (int k = 0; k < K; ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    for (int c = 1; c <= C; ++c)
      out.x[k][c - 1] = out.model.add_variable(
          0, 1, 0, true, "x_" + std::to_string(k + 1) + "_" + std::to_string(c));
    out.y[k] = out.model.add_variable(0, 1, static_cast<double>(t.price), true,
                                      "y_" + std::to_string(k + 1));
  }
  for (int k = 0; k < K; ++k) {
    std::vector<Term> link;
    for (int c = 0; c < C; ++c) link.push_back({out.x[k][c], 1.0});
    link.push_back({out.y[k], -1.0});
    out.model.add_constraint(link, Sense::EQ, 0.0, "assign_" + std::to_string(k + 1));
  }
  for (int l = 1; l <= L; ++l) {
    for (int c = 1; c <= C; ++c) {
      std::vector<Term> cap;
      for (int k = 0; k < K; ++k) {
        const RequestType& t = instance.type_of(requests[k]);
        if (t.covers_leg(l)) cap.push_back({out.x[k][c - 1], double(t.group_size)});
      }
      if (!cap.empty())
        out.model.add_constraint(cap, Sense::LE, instance.train.capacity(c),
                                 "cap_l" + std::to_string(l) + "_c" + std::to_string(c));
    }
  }
  return out;
}

namespace {

struct PackItem {
  int pos;   // position in the input vector
  int n;
  int first; // first leg
  int last;  // last leg
};

std::vector<PackItem> pack_order(const std::vector<Request>& requests,
                                 const Instance& instance) {
  std::vector<PackItem> items;
  items.reserve(requests.size());
  for (size_t k = 0; k < requests.size(); ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    items.push_back({static_cast<int>(k), t.group_size, t.first_leg(), t.last_leg()});
  }
  std::sort(items.begin(), items.end(), [](const PackItem& a, const PackItem& b) {
    int spana = a.last - a.first, spanb = b.last - b.first;
    if (a.n != b.n) return a.n > b.n;          // big groups first
    if (spana != spanb) return spana > spanb;  // long journeys first
    if (a.first != b.first) return a.first < b.first;
    return a.pos < b.pos;
  });
  return items;
}

}  // namespace

namespace {

// Exhaustive branch-and-prune packing over individual items. Exact, but the
// search can blow up on large marginal inputs; kept as the last-resort
// decider behind the aggregated formulation below.
std::optional<AssignmentPlan> pack_exhaustive(const std::vector<Request>& requests,
                                              const Instance& instance) {
  const int C = instance.train.coach_count();
  const int L = instance.network.leg_count();
  const int K = static_cast<int>(requests.size());
  AssignmentPlan plan;
  plan.coach_of.assign(requests.size(), 0);
  if (K == 0) return plan;

  std::vector<PackItem> items = pack_order(requests, instance);
  // Remaining seat demand per leg for items k.. (suffix sums for pruning).
  std::vector<int> suffix(static_cast<size_t>(K + 1) * L, 0);
  for (int k = K - 1; k >= 0; --k)
    for (int l = 0; l < L; ++l) {
      int add = (l + 1 >= items[k].first && l + 1 <= items[k].last) ? items[k].n : 0;
      suffix[k * L + l] = suffix[(k + 1) * L + l] + add;
    }

  std::vector<int> free(static_cast<size_t>(C) * L);
  for (int c = 0; c < C; ++c)
    for (int l = 0; l < L; ++l) free[c * L + l] = instance.train.capacity(c + 1);
  std::vector<int> total_free(L, 0);
  for (int l = 0; l < L; ++l) total_free[l] = instance.train.total_capacity();

  // Failed (depth, residual-profile-multiset) states; coach identity is
  // irrelevant to feasibility of the remainder, so profiles are sorted.
  std::unordered_set<std::string> failed;
  constexpr size_t kMemoCap = 1u << 21;
  auto encode = [&](int k) {
    std::string key;
    key.resize(2 + static_cast<size_t>(C) * L * 2);
    key[0] = static_cast<char>(k & 0xff);
    key[1] = static_cast<char>((k >> 8) & 0xff);
    std::vector<std::vector<int>> rows(C, std::vector<int>(L));
    for (int c = 0; c < C; ++c)
      for (int l = 0; l < L; ++l) rows[c][l] = free[c * L + l];
    std::sort(rows.begin(), rows.end());
    size_t at = 2;
    for (const auto& row : rows)
      for (int v : row) {
        key[at++] = static_cast<char>(v & 0xff);
        key[at++] = static_cast<char>((v >> 8) & 0xff);
      }
    return key;
  };

  std::function<bool(int)> dfs = [&](int k) -> bool {
    if (k == K) return true;
    for (int l = 0; l < L; ++l)
      if (suffix[k * L + l] > total_free[l]) return false;
    std::string key = encode(k);
    if (failed.count(key)) return false;
    const PackItem& it = items[k];
    // Fitting coaches, tightest first (stable on index).
    std::vector<std::pair<int, int>> cands;  // (slack, coach)
    for (int c = 0; c < C; ++c) {
      int mn = std::numeric_limits<int>::max();
      for (int l = it.first - 1; l <= it.last - 1; ++l)
        mn = std::min(mn, free[c * L + l]);
      if (mn >= it.n) cands.push_back({mn - it.n, c});
    }
    std::sort(cands.begin(), cands.end());
    std::vector<std::vector<int>> tried;
    for (auto [slack, c] : cands) {
      std::vector<int> profile(free.begin() + c * L, free.begin() + (c + 1) * L);
      if (std::find(tried.begin(), tried.end(), profile) != tried.end())
        continue;  // identical residual profile already explored at this node
      tried.push_back(profile);
      for (int l = it.first - 1; l <= it.last - 1; ++l) {
        free[c * L + l] -= it.n;
        total_free[l] -= it.n;
      }
      plan.coach_of[it.pos] = c + 1;
      if (dfs(k + 1)) return true;
      plan.coach_of[it.pos] = 0;
      for (int l = it.first - 1; l <= it.last - 1; ++l) {
        free[c * L + l] += it.n;
        total_free[l] += it.n;
      }
    }
    if (failed.size() < kMemoCap) failed.insert(std::move(key));
    return false;
  };

  if (dfs(0)) return plan;
  return std::nullopt;
}

}  // namespace

std::optional<AssignmentPlan> pack_feasible(const std::vector<Request>& requests,
                                            const Instance& instance) {
  const int C = instance.train.coach_count();
  const int L = instance.network.leg_count();
  const int K = static_cast<int>(requests.size());
  AssignmentPlan plan;
  plan.coach_of.assign(requests.size(), 0);
  if (K == 0) return plan;

  // Aggregate per-leg demand against the whole train first.
  {
    std::vector<long long> demand(L, 0);
    for (const Request& r : requests) {
      const RequestType& t = instance.type_of(r);
      for (int l = t.first_leg(); l <= t.last_leg(); ++l)
        demand[l - 1] += t.group_size;
    }
    for (int l = 0; l < L; ++l)
      if (demand[l] > instance.train.total_capacity()) return std::nullopt;
  }

  // Items of the same type are interchangeable, so only the count assigned to
  // each coach matters. Work on those counts throughout.
  std::vector<std::vector<int>> positions(instance.types.size());
  for (int k = 0; k < K; ++k)
    positions[requests[k].type_id].push_back(k);

  auto emit_plan = [&](const std::vector<std::vector<int>>& counts) {
    for (size_t t = 0; t < positions.size(); ++t) {
      size_t at = 0;
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < counts[t][c]; ++i)
          plan.coach_of[positions[t][at++]] = c + 1;
    }
    return plan;
  };

  // Best-fit-decreasing heuristic: big groups and long journeys first, each
  // into the fitting coach with the least slack. Packs almost every input
  // this code meets in practice.
  {
    std::vector<PackItem> items = pack_order(requests, instance);
    std::vector<int> free(static_cast<size_t>(C) * L);
    for (int c = 0; c < C; ++c)
      for (int l = 0; l < L; ++l) free[c * L + l] = instance.train.capacity(c + 1);
    std::vector<std::vector<int>> counts(instance.types.size(),
                                         std::vector<int>(C, 0));
    bool ok = true;
    for (const PackItem& it : items) {
      int best = -1, best_slack = std::numeric_limits<int>::max();
      for (int c = 0; c < C; ++c) {
        int mn = std::numeric_limits<int>::max();
        for (int l = it.first - 1; l <= it.last - 1; ++l)
          mn = std::min(mn, free[c * L + l]);
        if (mn >= it.n && mn - it.n < best_slack) {
          best = c;
          best_slack = mn - it.n;
        }
      }
      if (best < 0) {
        ok = false;
        break;
      }
      for (int l = it.first - 1; l <= it.last - 1; ++l) free[best * L + l] -= it.n;
      ++counts[requests[it.pos].type_id][best];
    }
    if (ok) return emit_plan(counts);
  }

  // Exact decision: integer counts a_{t,c} with per-type totals fixed and the
  // per-coach-per-leg capacity rows. A few hundred variables at most, so the
  // branch-and-bound settles this quickly either way.
  {
    Model m;
    std::vector<int> type_count(instance.types.size(), 0);
    for (const Request& r : requests) ++type_count[r.type_id];
    std::vector<std::vector<int>> var(instance.types.size(),
                                      std::vector<int>(C, -1));
    for (size_t t = 0; t < instance.types.size(); ++t) {
      if (type_count[t] == 0) continue;
      for (int c = 0; c < C; ++c)
        var[t][c] = m.add_variable(0, type_count[t], 0.0, true,
                                   "a_" + std::to_string(t) + "_" +
                                       std::to_string(c + 1));
      std::vector<Term> row;
      for (int c = 0; c < C; ++c) row.push_back({var[t][c], 1.0});
      m.add_constraint(std::move(row), Sense::EQ,
                       static_cast<double>(type_count[t]),
                       "count_" + std::to_string(t));
    }
    for (int c = 0; c < C; ++c)
      for (int l = 1; l <= L; ++l) {
        std::vector<Term> row;
        for (size_t t = 0; t < instance.types.size(); ++t) {
          if (type_count[t] == 0 || !instance.types[t].covers_leg(l)) continue;
          row.push_back({var[t][c], static_cast<double>(instance.types[t].group_size)});
        }
        if (!row.empty())
          m.add_constraint(std::move(row), Sense::LE,
                           static_cast<double>(instance.train.capacity(c + 1)),
                           "cap_" + std::to_string(c + 1) + "_" +
                               std::to_string(l));
      }
    SolveOptions opt;
    opt.node_limit = 200000;
    linprog::Solution sol = linprog::solve_mip(m, opt);
    if (sol.status == linprog::Status::Infeasible) return std::nullopt;
    if (sol.has_incumbent()) {
      std::vector<std::vector<int>> counts(instance.types.size(),
                                           std::vector<int>(C, 0));
      for (size_t t = 0; t < instance.types.size(); ++t)
        for (int c = 0; c < C; ++c)
          if (var[t][c] >= 0)
            counts[t][c] = static_cast<int>(std::llround(sol.values[var[t][c]]));
      return emit_plan(counts);
    }
  }

  // Undecided within the node budget (never seen in practice): fall back to
  // the exhaustive search, which is exact.
  return pack_exhaustive(requests, instance);
}

namespace {

std::vector<double> plan_to_offline_values(const AssignmentPlan& plan,
                                           const OfflineModel& om) {
  std::vector<double> v(om.model.var_count(), 0.0);
  for (size_t k = 0; k < plan.coach_of.size(); ++k) {
    int c = plan.coach_of[k];
    if (c > 0) {
      v[om.x[k][c - 1]] = 1.0;
      v[om.y[k]] = 1.0;
    }
  }
  return v;
}

}  // namespace

OfflineResult solve_offline(const std::vector<Request>& requests,
                            const Instance& instance, const OfflineConfig& config) {
  OfflineResult res;
  res.plan.coach_of.assign(requests.size(), 0);
  if (requests.empty()) {
    res.status = Status::Optimal;
    res.all_packable = true;
    return res;
  }
  if (config.decision_only) {
    auto packed = pack_feasible(requests, instance);
    res.status = Status::Optimal;
    res.all_packable = packed.has_value();
    if (packed) {
      res.plan = std::move(*packed);
      res.value = plan_revenue(res.plan, requests, instance);
      res.best_bound = static_cast<double>(res.value);
    }
    return res;
  }

  SolveOptions opt;
  opt.node_limit = config.node_limit;
  opt.time_limit_seconds = config.time_limit_seconds;

  if (config.use_full_model) {
    OfflineModel om = build_offline_model(requests, instance);
    opt.warm_start = plan_to_offline_values(first_fit_plan(requests, instance), om);
    linprog::Solution sol = linprog::solve_mip(om.model, opt);
    res.status = sol.status;
    res.nodes = sol.nodes;
    res.best_bound = sol.best_bound;
    if (sol.has_incumbent()) {
      for (size_t k = 0; k < requests.size(); ++k)
        for (int c = 0; c < instance.train.coach_count(); ++c)
          if (sol.values[om.x[k][c]] > 0.5) res.plan.coach_of[k] = c + 1;
      res.value = plan_revenue(res.plan, requests, instance);
    }
    return res;
  }

  // Count master: requests of a type are interchangeable, so decide only how
  // many of each type to accept, against per-leg rows over the whole train.
  // Its incumbent is certified by an exact packing; on the (never observed)
  // failure the code drops to the per-request master below, whose no-good
  // cuts make it exact regardless.
  {
    const int L = instance.network.leg_count();
    const size_t T = instance.types.size();
    std::vector<int> avail(T, 0);
    for (const Request& r : requests) ++avail[r.type_id];
    Model master;
    std::vector<int> zv(T, -1);
    for (size_t t = 0; t < T; ++t)
      if (avail[t] > 0)
        zv[t] = master.add_variable(0, avail[t],
                                    static_cast<double>(instance.types[t].price),
                                    true, "Z_" + std::to_string(t));
    for (int l = 1; l <= L; ++l) {
      std::vector<Term> row;
      for (size_t t = 0; t < T; ++t)
        if (zv[t] >= 0 && instance.types[t].covers_leg(l))
          row.push_back({zv[t], static_cast<double>(instance.types[t].group_size)});
      if (!row.empty())
        master.add_constraint(std::move(row), Sense::LE,
                              static_cast<double>(instance.train.total_capacity()),
                              "leg_" + std::to_string(l));
    }
    {
      AssignmentPlan warm = first_fit_plan(requests, instance);
      std::vector<double> wv(master.var_count(), 0.0);
      for (size_t k = 0; k < requests.size(); ++k)
        if (warm.accepted(static_cast<int>(k)))
          wv[zv[requests[k].type_id]] += 1.0;
      opt.warm_start = std::move(wv);
    }
    linprog::Solution sol = linprog::solve_mip(master, opt);
    if (sol.status == Status::Optimal && sol.has_incumbent()) {
      std::vector<int> take(T, 0);
      for (size_t t = 0; t < T; ++t)
        if (zv[t] >= 0)
          take[t] = static_cast<int>(std::llround(sol.values[zv[t]]));
      std::vector<int> chosen;
      std::vector<Request> subset;
      for (size_t k = 0; k < requests.size(); ++k)
        if (take[requests[k].type_id] > 0) {
          --take[requests[k].type_id];
          chosen.push_back(static_cast<int>(k));
          subset.push_back(requests[k]);
        }
      auto packed = pack_feasible(subset, instance);
      if (packed) {
        res.status = sol.status;
        res.nodes = sol.nodes;
        res.best_bound = sol.best_bound;
        for (size_t i = 0; i < chosen.size(); ++i)
          res.plan.coach_of[chosen[i]] = packed->coach_of[i];
        res.value = plan_revenue(res.plan, requests, instance);
        return res;
      }
    }
    opt.warm_start.clear();
  }

  // Per-request master: one binary per request, one row per leg with the total
  // train capacity; packing feasibility is certified lazily and unpackable
  // accepted sets are excluded by no-good cuts.
  const int L = instance.network.leg_count();
  const int K = static_cast<int>(requests.size());
  Model master;
  for (int k = 0; k < K; ++k)
    master.add_variable(0, 1, static_cast<double>(instance.price(requests[k])), true,
                        "X_" + std::to_string(k + 1));
  for (int l = 1; l <= L; ++l) {
    std::vector<Term> row;
    for (int k = 0; k < K; ++k) {
      const RequestType& t = instance.type_of(requests[k]);
      if (t.covers_leg(l)) row.push_back({k, double(t.group_size)});
    }
    if (!row.empty())
      master.add_constraint(row, Sense::LE, instance.train.total_capacity(),
                            "leg_" + std::to_string(l));
  }
  {
    AssignmentPlan warm = first_fit_plan(requests, instance);
    std::vector<double> wv(K, 0.0);
    for (int k = 0; k < K; ++k) wv[k] = warm.accepted(k) ? 1.0 : 0.0;
    opt.warm_start = std::move(wv);
  }
  int nogoods = 0;
  auto callback = [&](const Model&, const std::vector<double>& xs) -> CutResult {
    std::vector<int> chosen;
    std::vector<Request> subset;
    for (int k = 0; k < K; ++k)
      if (xs[k] > 0.5) {
        chosen.push_back(k);
        subset.push_back(requests[k]);
      }
    if (pack_feasible(subset, instance)) return {};
    CutResult out;
    out.certified = false;
    CutRow cut;
    for (int k : chosen) cut.terms.push_back({k, 1.0});
    cut.sense = Sense::LE;
    cut.rhs = static_cast<double>(chosen.size()) - 1.0;
    cut.name = "nogood_" + std::to_string(++nogoods);
    out.cuts.push_back(std::move(cut));
    return out;
  };
  linprog::Solution sol = linprog::solve_mip(master, opt, callback);
  res.status = sol.status;
  res.nodes = sol.nodes;
  res.cuts = sol.cuts_added;
  res.best_bound = sol.best_bound;
  if (sol.has_incumbent()) {
    std::vector<int> chosen;
    std::vector<Request> subset;
    for (int k = 0; k < K; ++k)
      if (sol.values[k] > 0.5) {
        chosen.push_back(k);
        subset.push_back(requests[k]);
      }
    auto packed = pack_feasible(subset, instance);
    if (!packed)
      throw linprog::ModelError("solve_offline: incumbent lost its packing witness");
    for (size_t i = 0; i < chosen.size(); ++i)
      res.plan.coach_of[chosen[i]] = packed->coach_of[i];
    res.value = plan_revenue(res.plan, requests, instance);
  }
  return res;
}

LpMasses solve_offline_lp(const std::vector<Request>& requests,
                          const Instance& instance) {
  const int L = instance.network.leg_count();
  const int K = static_cast<int>(requests.size());
  LpMasses out;
  out.mass.assign(K, 0.0);
  out.type_mass.assign(instance.types.size(), 0.0);
  if (K == 0) return out;
  Model lp;
  for (int k = 0; k < K; ++k)
    lp.add_variable(0, 1, static_cast<double>(instance.price(requests[k])), false,
                    "X_" + std::to_string(k + 1));
  for (int l = 1; l <= L; ++l) {
    std::vector<Term> row;
    for (int k = 0; k < K; ++k) {
      const RequestType& t = instance.type_of(requests[k]);
      if (t.covers_leg(l)) row.push_back({k, double(t.group_size)});
    }
    if (!row.empty())
      lp.add_constraint(row, Sense::LE, instance.train.total_capacity(),
                        "leg_" + std::to_string(l));
  }
  linprog::Solution sol = linprog::solve_lp(lp);
  if (sol.status != Status::Optimal)
    throw linprog::ModelError("solve_offline_lp: relaxation not optimal (" +
                              linprog::to_string(sol.status) + ")");
  out.objective = sol.objective;
  for (int k = 0; k < K; ++k) {
    out.mass[k] = sol.values[k];
    out.type_mass[requests[k].type_id] += sol.values[k];
  }
  return out;
}

// ---------- fairness machinery ----------

FcfsModel build_fcfs_model(const std::vector<Request>& requests,
                           const Instance& instance) {
  const int C = instance.train.coach_count();
  FcfsModel out;
  OfflineModel base = build_offline_model(requests, instance);
  out.model = std::move(base.model);
  out.vars.x = std::move(base.x);
  out.vars.y = std::move(base.y);
  const int K = static_cast<int>(requests.size());
  out.vars.z.assign(K, {});
  for (int k = 0; k < K; ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    for (int c = 1; c <= C; ++c) {
      std::vector<Term> activation{{out.vars.y[k], 1.0}};
      for (int l = t.first_leg(); l <= t.last_leg(); ++l) {
        int zv = out.model.add_variable(0, 1, 0, true,
                                        "z_" + std::to_string(k + 1) + "_l" +
                                            std::to_string(l) + "_c" +
                                            std::to_string(c));
        out.vars.z[k].push_back({l, c, zv});
        activation.push_back({zv, 1.0});
        // Justification: coach c already holds at least omega - n + 1 seats on
        // leg l from earlier requests whenever z says it blocked this one.
        std::vector<Term> just{{zv, double(instance.train.capacity(c) - t.group_size + 1)}};
        for (int k2 = 0; k2 < k; ++k2) {
          const RequestType& t2 = instance.type_of(requests[k2]);
          if (t2.covers_leg(l)) just.push_back({out.vars.x[k2][c - 1], -double(t2.group_size)});
        }
        out.model.add_constraint(just, Sense::LE, 0.0,
                                 "just_" + std::to_string(k + 1) + "_l" +
                                     std::to_string(l) + "_c" + std::to_string(c));
      }
      out.model.add_constraint(activation, Sense::EQ, 1.0,
                               "active_" + std::to_string(k + 1) + "_c" +
                                   std::to_string(c));
    }
  }
  return out;
}

std::optional<UnfairRejection> separate_unfair_rejection(
    const AssignmentPlan& plan, const std::vector<Request>& requests,
    const Instance& instance) {
  ResidualCapacity kappa(instance.train, instance.network.leg_count());
  for (size_t k = 0; k < requests.size(); ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    int c = plan.coach(static_cast<int>(k));
    if (c > 0) {
      apply_assignment(kappa, t, c);
      continue;
    }
    std::vector<int> feas = feasible_coaches(t, kappa);
    if (!feas.empty()) return UnfairRejection{static_cast<int>(k), feas.front()};
  }
  return std::nullopt;
}

namespace {

// Terms expressing y_k in the given variable map (explicit or sum over x).
std::vector<Term> y_terms(const FcfsVarMap& vars, int k, double coef) {
  std::vector<Term> t;
  if (vars.y[k] >= 0) {
    t.push_back({vars.y[k], coef});
  } else {
    for (int xv : vars.x[k]) t.push_back({xv, coef});
  }
  return t;
}

}  // namespace

std::vector<CutRow> dominance_cuts(const std::vector<Request>& requests,
                                   const Instance& instance, const FcfsVarMap& vars) {
  std::vector<CutRow> rows;
  const int K = static_cast<int>(requests.size());
  for (int k = 0; k < K; ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    std::vector<int> dominators;
    for (int k2 = 0; k2 < k; ++k2) {
      const RequestType& t2 = instance.type_of(requests[k2]);
      bool legs_subset = t2.first_leg() >= t.first_leg() && t2.last_leg() <= t.last_leg();
      if (legs_subset && t2.group_size <= t.group_size) dominators.push_back(k2);
    }
    if (dominators.empty()) continue;
    CutRow row;
    for (int k2 : dominators)
      for (const Term& term : y_terms(vars, k2, 1.0)) row.terms.push_back(term);
    for (const Term& term : y_terms(vars, k, -double(dominators.size())))
      row.terms.push_back(term);
    row.sense = Sense::GE;
    row.rhs = 0.0;
    row.name = "dom_" + std::to_string(k + 1);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CutRow> forward_filtering_cuts(const std::vector<Request>& requests,
                                           const Instance& instance,
                                           const FcfsVarMap& vars) {
  std::vector<CutRow> rows;
  const int K = static_cast<int>(requests.size());
  for (int k = 0; k < K; ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    for (const FcfsVarMap::ZVar& zv : vars.z[k]) {
      CutRow row;
      double omega = instance.train.capacity(zv.coach);
      row.terms.push_back({zv.var, omega - t.group_size + 1.0});
      for (int k2 = k + 1; k2 < K; ++k2) {
        const RequestType& t2 = instance.type_of(requests[k2]);
        if (t2.covers_leg(zv.leg))
          row.terms.push_back({vars.x[k2][zv.coach - 1], double(t2.group_size)});
      }
      if (row.terms.size() == 1) continue;  // no later request crosses this leg
      row.sense = Sense::LE;
      row.rhs = omega;
      row.name = "fwd_" + std::to_string(k + 1) + "_l" + std::to_string(zv.leg) +
                 "_c" + std::to_string(zv.coach);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<int> preprocess_forced_assignments(const std::vector<Request>& requests,
                                               const Instance& instance) {
  const int L = instance.network.leg_count();
  double delta = max_group_fraction(instance);
  double threshold = bounds::safe_assignment_threshold(delta, instance.train.coach_count());
  // Capacities ascending: packing seats into the smallest coaches first gives
  // the worst case (largest) normalized occupancy a given seat count can reach.
  std::vector<int> caps = instance.train.coach_capacities;
  std::sort(caps.begin(), caps.end());
  auto worst_occupancy = [&](long seats) {
    double occ = 0.0;
    for (int cap : caps) {
      long take = std::min<long>(seats, cap);
      occ += static_cast<double>(take) / cap;
      seats -= take;
      if (seats <= 0) break;
    }
    return occ;
  };
  std::vector<long> load(L + 1, 0);  // worst-case seats per leg if all accepted
  std::vector<int> forced;
  for (size_t k = 0; k < requests.size(); ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    bool safe = true;
    for (int l = t.first_leg(); l <= t.last_leg() && safe; ++l)
      if (worst_occupancy(load[l]) > threshold) safe = false;
    if (safe) forced.push_back(static_cast<int>(k));
    for (int l = t.first_leg(); l <= t.last_leg(); ++l)
      load[l] = std::min<long>(load[l] + t.group_size, instance.train.total_capacity());
  }
  return forced;
}

AssignmentPlan first_fit_plan(const std::vector<Request>& requests,
                              const Instance& instance) {
  ResidualCapacity kappa(instance.train, instance.network.leg_count());
  AssignmentPlan plan;
  plan.coach_of.assign(requests.size(), 0);
  for (size_t k = 0; k < requests.size(); ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    std::vector<int> feas = feasible_coaches(t, kappa);
    if (feas.empty()) continue;
    plan.coach_of[k] = feas.front();
    apply_assignment(kappa, t, feas.front());
  }
  return plan;
}

AssignmentPlan random_fit_plan(const std::vector<Request>& requests,
                               const Instance& instance, RngStream& rng) {
  ResidualCapacity kappa(instance.train, instance.network.leg_count());
  AssignmentPlan plan;
  plan.coach_of.assign(requests.size(), 0);
  for (size_t k = 0; k < requests.size(); ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    std::vector<int> feas = feasible_coaches(t, kappa);
    if (feas.empty()) continue;
    int c = feas[rng.next_below(feas.size())];
    plan.coach_of[k] = c;
    apply_assignment(kappa, t, c);
  }
  return plan;
}

namespace {

// Shared state for the lazily separated fair branch and cut.
struct FcfsMaster {
  Model model;
  FcfsVarMap vars;                 // y entries are -1, z grows lazily
  std::vector<std::vector<int>> z_coaches;  // per request: coaches with a group
};

FcfsMaster build_fcfs_master(const std::vector<Request>& requests,
                             const Instance& instance, const FcfsConfig& config) {
  const int C = instance.train.coach_count();
  const int L = instance.network.leg_count();
  const int K = static_cast<int>(requests.size());
  FcfsMaster m;
  m.vars.x.assign(K, std::vector<int>(C, -1));
  m.vars.y.assign(K, -1);
  m.vars.z.assign(K, {});
  m.z_coaches.assign(K, {});
  for (int k = 0; k < K; ++k) {
    double p = static_cast<double>(instance.price(requests[k]));
    for (int c = 1; c <= C; ++c)
      m.vars.x[k][c - 1] = m.model.add_variable(
          0, 1, p, true, "x_" + std::to_string(k + 1) + "_" + std::to_string(c));
  }
  for (int k = 0; k < K; ++k) {
    std::vector<Term> row;
    for (int c = 0; c < C; ++c) row.push_back({m.vars.x[k][c], 1.0});
    m.model.add_constraint(row, Sense::LE, 1.0, "assign_" + std::to_string(k + 1));
  }
  for (int l = 1; l <= L; ++l)
    for (int c = 1; c <= C; ++c) {
      std::vector<Term> cap;
      for (int k = 0; k < K; ++k) {
        const RequestType& t = instance.type_of(requests[k]);
        if (t.covers_leg(l)) cap.push_back({m.vars.x[k][c - 1], double(t.group_size)});
      }
      if (!cap.empty())
        m.model.add_constraint(cap, Sense::LE, instance.train.capacity(c),
                               "cap_l" + std::to_string(l) + "_c" + std::to_string(c));
    }
  // Same-type precedence: an earlier identical request is accepted whenever a
  // later one is (valid for every fair plan; tightens the relaxation).
  {
    std::map<int, int> last_of_type;
    for (int k = 0; k < K; ++k) {
      auto it = last_of_type.find(requests[k].type_id);
      if (it != last_of_type.end()) {
        std::vector<Term> row;
        for (int c = 0; c < C; ++c) {
          row.push_back({m.vars.x[it->second][c], 1.0});
          row.push_back({m.vars.x[k][c], -1.0});
        }
        m.model.add_constraint(row, Sense::GE, 0.0, "prec_" + std::to_string(k + 1));
      }
      last_of_type[requests[k].type_id] = k;
    }
  }
  if (config.use_dominance_cuts)
    for (CutRow& row : dominance_cuts(requests, instance, m.vars))
      m.model.add_constraint(row.terms, row.sense, row.rhs, row.name);
  if (config.preprocess_forced)
    for (int k : preprocess_forced_assignments(requests, instance)) {
      std::vector<Term> row;
      for (int c = 0; c < C; ++c) row.push_back({m.vars.x[k][c], 1.0});
      m.model.add_constraint(row, Sense::GE, 1.0, "forced_" + std::to_string(k + 1));
    }
  return m;
}

// Model values for a fair plan over a master with `total_vars` columns: x per
// assignment, and for every registered justification group the first leg on
// which that coach could not host the rejected group at its arrival.
std::vector<double> fair_plan_values(const AssignmentPlan& plan,
                                     const std::vector<Request>& requests,
                                     const Instance& instance, const FcfsVarMap& vars,
                                     int total_vars) {
  std::vector<double> v(total_vars, 0.0);
  ResidualCapacity kappa(instance.train, instance.network.leg_count());
  for (size_t k = 0; k < requests.size(); ++k) {
    const RequestType& t = instance.type_of(requests[k]);
    int c = plan.coach(static_cast<int>(k));
    if (c > 0) {
      v[vars.x[k][c - 1]] = 1.0;
      apply_assignment(kappa, t, c);
      continue;
    }
    std::vector<int> done;
    for (const FcfsVarMap::ZVar& zv : vars.z[k]) {
      if (std::find(done.begin(), done.end(), zv.coach) != done.end()) continue;
      done.push_back(zv.coach);
      bool marked = false;
      for (const FcfsVarMap::ZVar& peer : vars.z[k]) {
        if (peer.coach != zv.coach || marked) continue;
        if (kappa.free(peer.coach, peer.leg) < t.group_size) {
          v[peer.var] = 1.0;
          marked = true;
        }
      }
      if (!marked)
        throw linprog::ModelError(
            "fair plan rejected a request a registered coach could host");
    }
  }
  return v;
}

}  // namespace

FcfsResult solve_offline_fcfs(const std::vector<Request>& requests,
                              const Instance& instance, const FcfsConfig& config) {
  FcfsResult res;
  res.plan.coach_of.assign(requests.size(), 0);
  if (requests.empty()) {
    res.status = Status::Optimal;
    return res;
  }
  const int C = instance.train.coach_count();
  const long size = static_cast<long>(requests.size()) * C;

  if (size > config.exact_size_limit) {
    // Large-scale path: the LP relaxation (aggregated form) upper-bounds the
    // fair optimum; the incumbent is the best of several greedy fair replays.
    res.best_bound = solve_offline_lp(requests, instance).objective;
    RngStream rng(config.warm_start_seed, "fcfs-largescale");
    AssignmentPlan best = first_fit_plan(requests, instance);
    Money best_value = plan_revenue(best, requests, instance);
    auto started = std::chrono::steady_clock::now();
    for (int r = 0; r < config.large_scale_restarts; ++r) {
      if (std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
              .count() > config.time_limit_seconds)
        break;
      AssignmentPlan cand = random_fit_plan(requests, instance, rng);
      Money val = plan_revenue(cand, requests, instance);
      if (val > best_value) {
        best_value = val;
        best = std::move(cand);
      }
    }
    res.plan = std::move(best);
    res.value = best_value;
    res.status = Status::TimeLimit;  // bound not closed, reported honestly
    res.gap = std::max(0.0, res.best_bound - static_cast<double>(res.value)) /
              std::max(1.0, res.best_bound);
    return res;
  }

  FcfsMaster master = build_fcfs_master(requests, instance, config);
  if (config.use_forward_filtering) {
    // Build the complete justification machinery up front so the filtering
    // rows have every z available.
    const int K = static_cast<int>(requests.size());
    for (int k = 0; k < K; ++k) {
      const RequestType& t = instance.type_of(requests[k]);
      for (int c = 1; c <= C; ++c) {
        std::vector<Term> activation;
        for (int cc = 0; cc < C; ++cc) activation.push_back({master.vars.x[k][cc], 1.0});
        for (int l = t.first_leg(); l <= t.last_leg(); ++l) {
          int zv = master.model.add_variable(0, 1, 0, true,
                                             "z_" + std::to_string(k + 1) + "_l" +
                                                 std::to_string(l) + "_c" +
                                                 std::to_string(c));
          master.vars.z[k].push_back({l, c, zv});
          activation.push_back({zv, 1.0});
          std::vector<Term> just{{zv, double(instance.train.capacity(c) - t.group_size + 1)}};
          for (int k2 = 0; k2 < k; ++k2) {
            const RequestType& t2 = instance.type_of(requests[k2]);
            if (t2.covers_leg(l))
              just.push_back({master.vars.x[k2][c - 1], -double(t2.group_size)});
          }
          master.model.add_constraint(just, Sense::LE, 0.0,
                                      "just_" + std::to_string(k + 1) + "_l" +
                                          std::to_string(l) + "_c" + std::to_string(c));
        }
        master.model.add_constraint(activation, Sense::EQ, 1.0,
                                    "active_" + std::to_string(k + 1) + "_c" +
                                        std::to_string(c));
        master.z_coaches[k].push_back(c);
      }
    }
    for (CutRow& row : forward_filtering_cuts(requests, instance, master.vars))
      master.model.add_constraint(row.terms, row.sense, row.rhs, row.name);
  }

  RngStream warm_rng(config.warm_start_seed, "fcfs-warmstart");
  RngStream repair_rng(config.warm_start_seed, "fcfs-repair");

  SolveOptions opt;
  opt.node_limit = config.node_limit;
  opt.time_limit_seconds = config.time_limit_seconds;
  {
    AssignmentPlan warm = random_fit_plan(requests, instance, warm_rng);
    opt.warm_start = fair_plan_values(warm, requests, instance, master.vars,
                                      master.model.var_count());
  }

  int separation_rounds = 0;
  auto extract_plan = [&](const std::vector<double>& xs) {
    AssignmentPlan plan;
    plan.coach_of.assign(requests.size(), 0);
    for (size_t k = 0; k < requests.size(); ++k)
      for (int c = 0; c < C; ++c)
        if (xs[master.vars.x[k][c]] > 0.5) plan.coach_of[k] = c + 1;
    return plan;
  };

  auto callback = [&](const Model&, const std::vector<double>& xs) -> CutResult {
    AssignmentPlan plan = extract_plan(xs);
    auto unfair = separate_unfair_rejection(plan, requests, instance);
    if (!unfair) return {};
    ++separation_rounds;
    const int k = unfair->request_pos;
    const int c = unfair->coach;
    const RequestType& t = instance.type_of(requests[k]);
    for (int existing : master.z_coaches[k])
      if (existing == c)
        throw linprog::ModelError("fair separation revisited a justified coach");

    CutResult out;
    out.certified = false;
    int next_var = master.model.var_count();
    std::vector<Term> activation;
    for (int cc = 0; cc < C; ++cc) activation.push_back({master.vars.x[k][cc], 1.0});
    for (int l = t.first_leg(); l <= t.last_leg(); ++l) {
      int zv = next_var++;
      out.new_vars.push_back({0, 1, 0, true,
                              "z_" + std::to_string(k + 1) + "_l" + std::to_string(l) +
                                  "_c" + std::to_string(c)});
      master.vars.z[k].push_back({l, c, zv});
      activation.push_back({zv, 1.0});
      CutRow just;
      just.terms.push_back({zv, double(instance.train.capacity(c) - t.group_size + 1)});
      for (int k2 = 0; k2 < k; ++k2) {
        const RequestType& t2 = instance.type_of(requests[k2]);
        if (t2.covers_leg(l))
          just.terms.push_back({master.vars.x[k2][c - 1], -double(t2.group_size)});
      }
      just.sense = Sense::LE;
      just.rhs = 0.0;
      just.name = "just_" + std::to_string(k + 1) + "_l" + std::to_string(l) + "_c" +
                  std::to_string(c);
      out.cuts.push_back(std::move(just));
    }
    CutRow act;
    act.terms = std::move(activation);
    act.sense = Sense::EQ;
    act.rhs = 1.0;
    act.name = "active_" + std::to_string(k + 1) + "_c" + std::to_string(c);
    out.cuts.push_back(std::move(act));
    master.z_coaches[k].push_back(c);

    // Repair: keep the fair prefix, accept the wronged request, and finish the
    // suffix greedily so the candidate is fair end to end.
    AssignmentPlan repaired;
    repaired.coach_of.assign(requests.size(), 0);
    ResidualCapacity kappa(instance.train, instance.network.leg_count());
    for (int k2 = 0; k2 < static_cast<int>(requests.size()); ++k2) {
      const RequestType& t2 = instance.type_of(requests[k2]);
      int want = (k2 < k) ? plan.coach(k2) : (k2 == k ? c : plan.coach(k2));
      if (want > 0 && kappa.fits(want, t2)) {
        repaired.coach_of[k2] = want;
        apply_assignment(kappa, t2, want);
        continue;
      }
      std::vector<int> feas = feasible_coaches(t2, kappa);
      if (!feas.empty()) {
        int pick = feas[repair_rng.next_below(feas.size())];
        repaired.coach_of[k2] = pick;
        apply_assignment(kappa, t2, pick);
      }
    }
    // Candidate over the grown model (the new z columns included).
    out.candidate = fair_plan_values(repaired, requests, instance, master.vars,
                                     next_var);
    return out;
  };

  linprog::Solution sol = linprog::solve_mip(master.model, opt, callback);
  res.status = sol.status;
  res.nodes = sol.nodes;
  res.cuts = sol.cuts_added;
  res.separation_rounds = separation_rounds;
  res.best_bound = sol.best_bound;
  if (sol.has_incumbent()) {
    res.plan = extract_plan(sol.values);
    res.value = plan_revenue(res.plan, requests, instance);
  }
  res.gap = std::max(0.0, res.best_bound - static_cast<double>(res.value)) /
            std::max(1.0, res.best_bound);
  return res;
}

}  // namespace coachres::offline
