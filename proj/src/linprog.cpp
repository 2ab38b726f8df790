#include "coachres/linprog.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <queue>

namespace coachres::linprog {

std::string to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "Optimal";
    case Status::Infeasible: return "Infeasible";
    case Status::Unbounded: return "Unbounded";
    case Status::IterationLimit: return "IterationLimit";
    case Status::NodeLimit: return "NodeLimit";
    case Status::TimeLimit: return "TimeLimit";
  }
  return "Unknown";
}

int Model::add_variable(double lb, double ub, double obj, bool is_integer,
                        std::string name) {
  if (std::isnan(lb) || std::isnan(ub) || std::isnan(obj))
    throw ModelError("add_variable: NaN input");
  if (lb > ub) throw ModelError("add_variable: lb > ub");
  vars_.push_back({lb, ub, obj, is_integer, std::move(name)});
  return var_count() - 1;
}

int Model::add_constraint(std::vector<Term> terms, Sense sense, double rhs,
                          std::string name) {
  // Merge duplicate variables so builders can emit terms freely.
  std::map<int, double> merged;
  for (const Term& t : terms) {
    if (t.var < 0 || t.var >= var_count())
      throw ModelError("add_constraint: term references unknown variable");
    merged[t.var] += t.coef;
  }
  std::vector<Term> clean;
  clean.reserve(merged.size());
  for (auto [v, c] : merged)
    if (c != 0.0) clean.push_back({v, c});
  rows_.push_back({std::move(clean), sense, rhs, std::move(name)});
  return row_count() - 1;
}

bool Model::has_integers() const {
  return std::any_of(vars_.begin(), vars_.end(),
                     [](const Variable& v) { return v.is_integer; });
}

double Model::activity(int row, const std::vector<double>& x) const {
  double a = 0.0;
  for (const Term& t : rows_.at(row).terms) a += t.coef * x.at(t.var);
  return a;
}

double Model::max_violation(const std::vector<double>& x) const {
  double worst = 0.0;
  for (int j = 0; j < var_count(); ++j) {
    worst = std::max(worst, vars_[j].lb - x[j]);
    worst = std::max(worst, x[j] - vars_[j].ub);
    if (vars_[j].is_integer)
      worst = std::max(worst, std::abs(x[j] - std::round(x[j])));
  }
  for (int i = 0; i < row_count(); ++i) {
    double a = activity(i, x);
    switch (rows_[i].sense) {
      case Sense::LE: worst = std::max(worst, a - rows_[i].rhs); break;
      case Sense::GE: worst = std::max(worst, rows_[i].rhs - a); break;
      case Sense::EQ: worst = std::max(worst, std::abs(a - rows_[i].rhs)); break;
    }
  }
  return worst;
}

double Solution::gap() const {
  if (!has_incumbent()) return kInf;
  double denom = std::max(1.0, std::abs(best_bound));
  return std::max(0.0, best_bound - objective) / denom;
}

namespace {

constexpr double kPivotTol = 1e-9;

// Bounded-variable revised primal simplex over the standardized system
// A x + s = b with slack bounds encoding the row senses. Maximizes.
class SimplexSolver {
 public:
  SimplexSolver(const Model& model, const SolveOptions& opt,
                const std::vector<double>* lb_over,
                const std::vector<double>* ub_over)
      : opt_(opt), m_(model.row_count()), n_struct_(model.var_count()) {
    cols_.reserve(n_struct_ + m_);
    for (int j = 0; j < n_struct_; ++j) {
      const Variable& v = model.var(j);
      double lb = lb_over ? std::max(v.lb, (*lb_over)[j]) : v.lb;
      double ub = ub_over ? std::min(v.ub, (*ub_over)[j]) : v.ub;
      cols_.push_back({lb, ub, v.obj, {}});
    }
    b_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      const Constraint& row = model.row(i);
      b_[i] = row.rhs;
      for (const Term& t : row.terms) cols_[t.var].entries.push_back({i, t.coef});
      double slb = 0.0, sub = 0.0;
      switch (row.sense) {
        case Sense::LE: slb = 0.0; sub = kInf; break;
        case Sense::GE: slb = -kInf; sub = 0.0; break;
        case Sense::EQ: slb = 0.0; sub = 0.0; break;
      }
      cols_.push_back({slb, sub, 0.0, {{i, 1.0}}});  // slack id = n_struct_ + i
    }
  }

  Status solve() {
    for (int j = 0; j < n_struct_; ++j)
      if (cols_[j].lb > cols_[j].ub + opt_.feas_tol) return Status::Infeasible;
    init_basis();
    for (int attempt = 0; attempt < 3; ++attempt) {
      Status ph1 = phase1();
      if (ph1 != Status::Optimal) return ph1;
      Status ph2 = optimize(/*phase1=*/false);
      if (ph2 == Status::Unbounded || ph2 == Status::IterationLimit) return ph2;
      refactorize();
      if (max_basic_violation() <= opt_.feas_tol) return Status::Optimal;
      // Numerical drift pushed a basic variable out of bounds; re-run phase 1
      // from the current basis.
    }
    throw ModelError("simplex: failed to reach a clean feasible optimum");
  }

  std::vector<double> values() const {
    std::vector<double> x(n_struct_);
    for (int j = 0; j < n_struct_; ++j) x[j] = col_value(j);
    return x;
  }

  double objective() const {
    double obj = 0.0;
    for (int j = 0; j < n_struct_; ++j) obj += cols_[j].obj * col_value(j);
    return obj;
  }

  long iterations() const { return iter_total_; }

 private:
  enum class St : char { Basic, AtLb, AtUb, Free };

  struct Col {
    double lb, ub, obj;
    std::vector<Term> entries;  // (row, coef)
  };

  void init_basis() {
    state_.assign(cols_.size(), St::AtLb);
    for (size_t j = 0; j < cols_.size(); ++j) {
      if (std::isfinite(cols_[j].lb)) state_[j] = St::AtLb;
      else if (std::isfinite(cols_[j].ub)) state_[j] = St::AtUb;
      else state_[j] = St::Free;
    }
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      basis_[i] = n_struct_ + i;
      state_[n_struct_ + i] = St::Basic;
    }
    binv_.assign(static_cast<size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i) binv_[i * m_ + i] = 1.0;
    compute_xb();
  }

  double nonbasic_value(int j) const {
    switch (state_[j]) {
      case St::AtLb: return cols_[j].lb;
      case St::AtUb: return cols_[j].ub;
      case St::Free: return 0.0;
      case St::Basic: break;
    }
    throw ModelError("nonbasic_value on basic column");
  }

  double col_value(int j) const {
    if (state_[j] == St::Basic) {
      for (int i = 0; i < m_; ++i)
        if (basis_[i] == j) return xb_[i];
      throw ModelError("basic column missing from basis");
    }
    return nonbasic_value(j);
  }

  void compute_xb() {
    std::vector<double> rhs = b_;
    for (size_t j = 0; j < cols_.size(); ++j) {
      if (state_[j] == St::Basic) continue;
      double v = nonbasic_value(j);
      if (v == 0.0) continue;
      for (const Term& t : cols_[j].entries) rhs[t.var] -= t.coef * v;
    }
    xb_.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      double acc = 0.0;
      const double* row = &binv_[static_cast<size_t>(i) * m_];
      for (int k = 0; k < m_; ++k) acc += row[k] * rhs[k];
      xb_[i] = acc;
    }
  }

  void refactorize() {
    if (m_ == 0) return;
    // Invert the basis matrix by Gauss-Jordan with partial pivoting.
    std::vector<double> big(static_cast<size_t>(m_) * 2 * m_, 0.0);
    for (int k = 0; k < m_; ++k)
      for (const Term& t : cols_[basis_[k]].entries)
        big[static_cast<size_t>(t.var) * 2 * m_ + k] = t.coef;
    for (int i = 0; i < m_; ++i) big[static_cast<size_t>(i) * 2 * m_ + m_ + i] = 1.0;
    const int w = 2 * m_;
    for (int col = 0; col < m_; ++col) {
      int piv = col;
      double best = std::abs(big[static_cast<size_t>(col) * w + col]);
      for (int r = col + 1; r < m_; ++r) {
        double v = std::abs(big[static_cast<size_t>(r) * w + col]);
        if (v > best) { best = v; piv = r; }
      }
      if (best < 1e-12) throw ModelError("simplex: singular basis");
      if (piv != col)
        for (int k = 0; k < w; ++k)
          std::swap(big[static_cast<size_t>(piv) * w + k],
                    big[static_cast<size_t>(col) * w + k]);
      double d = big[static_cast<size_t>(col) * w + col];
      for (int k = 0; k < w; ++k) big[static_cast<size_t>(col) * w + k] /= d;
      for (int r = 0; r < m_; ++r) {
        if (r == col) continue;
        double f = big[static_cast<size_t>(r) * w + col];
        if (f == 0.0) continue;
        for (int k = 0; k < w; ++k)
          big[static_cast<size_t>(r) * w + k] -= f * big[static_cast<size_t>(col) * w + k];
      }
    }
    for (int i = 0; i < m_; ++i)
      for (int k = 0; k < m_; ++k)
        binv_[static_cast<size_t>(i) * m_ + k] = big[static_cast<size_t>(i) * w + m_ + k];
    compute_xb();
  }

  double max_basic_violation() const {
    double worst = 0.0;
    for (int i = 0; i < m_; ++i) {
      const Col& c = cols_[basis_[i]];
      worst = std::max(worst, c.lb - xb_[i]);
      worst = std::max(worst, xb_[i] - c.ub);
    }
    return worst;
  }

  // Introduces artificial columns for rows whose slack-basis value violates the
  // slack bounds, then drives their sum to zero.
  Status phase1() {
    compute_xb();
    bool clean = true;
    for (int i = 0; i < m_; ++i) {
      const Col& c = cols_[basis_[i]];
      if (xb_[i] < c.lb - opt_.feas_tol || xb_[i] > c.ub + opt_.feas_tol) {
        clean = false;
        break;
      }
    }
    if (clean) return Status::Optimal;

    // Any existing artificial keeps bounds [0,0]; new ones open up again.
    for (int i = 0; i < m_; ++i) {
      const Col& c = cols_[basis_[i]];
      if (xb_[i] >= c.lb - opt_.feas_tol && xb_[i] <= c.ub + opt_.feas_tol) continue;
      int bcol = basis_[i];
      // Push the out-of-bounds basic variable to its nearest bound and cover
      // the residual with a fresh artificial in this row.
      double target, sign;
      if (xb_[i] > cols_[bcol].ub) {
        target = cols_[bcol].ub;
        sign = 1.0;   // residual positive
      } else {
        target = cols_[bcol].lb;
        sign = -1.0;  // residual negative
      }
      state_[bcol] = (target == cols_[bcol].ub) ? St::AtUb : St::AtLb;
      cols_.push_back({0.0, kInf, 0.0, {{i, sign}}});
      int art = static_cast<int>(cols_.size()) - 1;
      artificial_from_ = std::min(artificial_from_, art);
      basis_[i] = art;
      state_.push_back(St::Basic);
      // The basis matrix changed in column i only; rebuild the inverse.
    }
    refactorize();

    // Phase-1 objective: maximize minus the sum of artificial values.
    std::vector<double> saved_obj(cols_.size(), 0.0);
    for (size_t j = 0; j < cols_.size(); ++j) {
      saved_obj[j] = cols_[j].obj;
      cols_[j].obj = (static_cast<int>(j) >= artificial_from_) ? -1.0 : 0.0;
    }
    Status st = optimize(/*phase1=*/true);
    double infeas = 0.0;
    for (size_t j = artificial_from_; j < cols_.size(); ++j)
      infeas += col_value(static_cast<int>(j));
    for (size_t j = 0; j < cols_.size(); ++j) cols_[j].obj = saved_obj[j];
    if (st == Status::IterationLimit) return st;
    if (st != Status::Optimal) throw ModelError("simplex: phase 1 unbounded");
    if (infeas > opt_.feas_tol * std::max(1.0, norm_b())) return Status::Infeasible;

    // Freeze artificials at zero and try to pivot basic ones out.
    for (size_t j = artificial_from_; j < cols_.size(); ++j) {
      cols_[j].lb = 0.0;
      cols_[j].ub = 0.0;
    }
    pivot_out_artificials();
    return Status::Optimal;
  }

  double norm_b() const {
    double n = 0.0;
    for (double v : b_) n = std::max(n, std::abs(v));
    return n;
  }

  void pivot_out_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < artificial_from_) continue;
      // Find any genuine column with nonzero transformed coefficient in row i;
      // entering at step 0 keeps feasibility (the artificial sits at 0).
      for (int j = 0; j < std::min(artificial_from_, static_cast<int>(cols_.size()));
           ++j) {
        if (state_[j] == St::Basic) continue;
        double wij = 0.0;
        const double* row = &binv_[static_cast<size_t>(i) * m_];
        for (const Term& t : cols_[j].entries) wij += row[t.var] * t.coef;
        if (std::abs(wij) > 1e-7) {
          std::vector<double> w = ftran(j);
          pivot(i, j, w, /*delta=*/0.0, /*dir=*/1.0);
          break;
        }
      }
      // If none exists the row is redundant; the artificial stays basic at 0.
    }
  }

  std::vector<double> ftran(int j) const {
    std::vector<double> w(m_, 0.0);
    for (const Term& t : cols_[j].entries) {
      double coef = t.coef;
      if (coef == 0.0) continue;
      for (int i = 0; i < m_; ++i)
        w[i] += binv_[static_cast<size_t>(i) * m_ + t.var] * coef;
    }
    return w;
  }

  void pivot(int row, int entering, const std::vector<double>& w, double delta,
             double dir) {
    double enter_val = nonbasic_value(entering) + dir * delta;
    for (int i = 0; i < m_; ++i) xb_[i] -= dir * delta * w[i];
    int leaving = basis_[row];
    double piv = w[row];
    if (std::abs(piv) < kPivotTol) throw ModelError("simplex: zero pivot");
    // Leaving column lands on the bound it hit.
    const Col& lc = cols_[leaving];
    double leave_val = xb_[row];
    if (std::isfinite(lc.ub) && std::abs(leave_val - lc.ub) <= std::abs(leave_val - lc.lb))
      state_[leaving] = St::AtUb;
    else
      state_[leaving] = St::AtLb;
    if (!std::isfinite(lc.lb) && !std::isfinite(lc.ub)) state_[leaving] = St::Free;
    basis_[row] = entering;
    state_[entering] = St::Basic;
    xb_[row] = enter_val;
    // Rank-1 update of the explicit inverse.
    double* prow = &binv_[static_cast<size_t>(row) * m_];
    for (int k = 0; k < m_; ++k) prow[k] /= piv;
    for (int i = 0; i < m_; ++i) {
      if (i == row) continue;
      double f = w[i];
      if (f == 0.0) continue;
      double* irow = &binv_[static_cast<size_t>(i) * m_];
      for (int k = 0; k < m_; ++k) irow[k] -= f * prow[k];
    }
    if (++pivots_since_refactor_ >= 256) {
      pivots_since_refactor_ = 0;
      refactorize();
    }
  }

  Status optimize(bool phase1) {
    const int total_cols = static_cast<int>(cols_.size());
    long bland_after = 5L * (m_ + total_cols) + 1000;
    long local_iter = 0;
    std::vector<double> y(m_);
    while (true) {
      if (iter_total_ >= opt_.iteration_limit) return Status::IterationLimit;
      // Dual values y = c_B * Binv.
      std::fill(y.begin(), y.end(), 0.0);
      for (int i = 0; i < m_; ++i) {
        double cb = cols_[basis_[i]].obj;
        if (cb == 0.0) continue;
        const double* row = &binv_[static_cast<size_t>(i) * m_];
        for (int k = 0; k < m_; ++k) y[k] += cb * row[k];
      }
      // Price nonbasic columns.
      bool bland = local_iter > bland_after;
      int entering = -1;
      double dir = 1.0, best_score = opt_.feas_tol;
      for (int j = 0; j < total_cols; ++j) {
        if (state_[j] == St::Basic) continue;
        const Col& c = cols_[j];
        if (c.lb == c.ub) continue;  // fixed (includes frozen artificials)
        if (!phase1 && j >= artificial_from_) continue;
        double d = c.obj;
        for (const Term& t : c.entries) d -= y[t.var] * t.coef;
        double cand_dir = 0.0;
        if ((state_[j] == St::AtLb || state_[j] == St::Free) && d > opt_.feas_tol)
          cand_dir = 1.0;
        else if ((state_[j] == St::AtUb || state_[j] == St::Free) && d < -opt_.feas_tol)
          cand_dir = -1.0;
        if (cand_dir == 0.0) continue;
        if (bland) { entering = j; dir = cand_dir; break; }
        if (std::abs(d) > best_score) {
          best_score = std::abs(d);
          entering = j;
          dir = cand_dir;
        }
      }
      if (entering < 0) return Status::Optimal;

      std::vector<double> w = ftran(entering);
      // Ratio test: largest step keeping all basic variables inside bounds.
      double delta = kInf;
      int block_row = -1;
      const Col& ec = cols_[entering];
      double span = ec.ub - ec.lb;  // may be inf
      if (state_[entering] == St::Free) span = kInf;
      if (std::isfinite(span)) delta = span;
      for (int i = 0; i < m_; ++i) {
        double g = -dir * w[i];  // basic value moves at this rate
        if (std::abs(g) <= kPivotTol) continue;
        const Col& bc = cols_[basis_[i]];
        double room;
        if (g > 0)
          room = std::isfinite(bc.ub) ? (bc.ub - xb_[i]) / g : kInf;
        else
          room = std::isfinite(bc.lb) ? (xb_[i] - bc.lb) / (-g) : kInf;
        if (room < -1e-9) room = 0.0;  // tolerate tiny drift
        room = std::max(room, 0.0);
        if (room < delta - 1e-12) {
          delta = room;
          block_row = i;
        } else if (block_row >= 0 && room <= delta + 1e-12) {
          // Tie: prefer the numerically larger pivot; Bland mode prefers the
          // lowest variable index for termination.
          if (bland) {
            if (basis_[i] < basis_[block_row]) block_row = i;
          } else if (std::abs(w[i]) > std::abs(w[block_row])) {
            block_row = i;
          }
        }
      }
      if (!std::isfinite(delta)) {
        if (phase1) throw ModelError("simplex: phase 1 reported unbounded");
        return Status::Unbounded;
      }
      ++iter_total_;
      ++local_iter;
      if (block_row < 0) {
        // Bound flip of the entering variable.
        for (int i = 0; i < m_; ++i) xb_[i] -= dir * delta * w[i];
        state_[entering] = (dir > 0) ? St::AtUb : St::AtLb;
      } else {
        pivot(block_row, entering, w, delta, dir);
      }
    }
  }

  const SolveOptions& opt_;
  int m_;
  int n_struct_;
  std::vector<Col> cols_;
  std::vector<double> b_;
  std::vector<St> state_;
  std::vector<int> basis_;
  std::vector<double> binv_;
  std::vector<double> xb_;
  int artificial_from_ = std::numeric_limits<int>::max();
  int pivots_since_refactor_ = 0;
  long iter_total_ = 0;
};

Solution solve_lp_bounded(const Model& model, const SolveOptions& options,
                          const std::vector<double>* lb_over,
                          const std::vector<double>* ub_over) {
  SimplexSolver solver(model, options, lb_over, ub_over);
  Solution sol;
  sol.status = solver.solve();
  sol.iterations = solver.iterations();
  if (sol.status == Status::Optimal) {
    sol.values = solver.values();
    sol.objective = solver.objective();
    sol.best_bound = sol.objective;
  }
  return sol;
}

}  // namespace

Solution solve_lp(const Model& model, const SolveOptions& options) {
  return solve_lp_bounded(model, options, nullptr, nullptr);
}

namespace {

struct BnbNode {
  double bound;
  long seq;
  std::vector<std::pair<int, double>> lb_overrides;
  std::vector<std::pair<int, double>> ub_overrides;
};

struct NodeOrder {
  bool operator()(const BnbNode& a, const BnbNode& b) const {
    if (a.bound != b.bound) return a.bound < b.bound;  // max-heap on bound
    return a.seq > b.seq;                              // FIFO among ties
  }
};

double fractionality(double v) {
  double f = v - std::floor(v);
  return std::min(f, 1.0 - f);
}

}  // namespace

Solution solve_mip(Model& model, const SolveOptions& options,
                   const CutCallback& callback) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto out_of_time = [&] {
    if (!std::isfinite(options.time_limit_seconds)) return false;
    return std::chrono::duration<double>(Clock::now() - t0).count() >
           options.time_limit_seconds;
  };

  Solution best;
  best.status = Status::Infeasible;
  best.objective = -kInf;
  bool have_incumbent = false;
  std::vector<double> incumbent;

  if (!options.warm_start.empty()) {
    if (static_cast<int>(options.warm_start.size()) != model.var_count())
      throw ModelError("solve_mip: warm start has wrong dimension");
    if (model.max_violation(options.warm_start) > options.feas_tol)
      throw ModelError("solve_mip: warm start is infeasible");
  }

  std::priority_queue<BnbNode, std::vector<BnbNode>, NodeOrder> open;
  open.push({kInf, 0, {}, {}});
  long seq = 1;
  long processed = 0;
  long total_iterations = 0;
  int cuts_added = 0;
  int callback_rounds = 0;
  double best_open_bound = kInf;
  // Largest re-solved bound among nodes discarded by a positive mip_gap;
  // their subtrees may still beat the incumbent, so the reported dual bound
  // must cover them or gap() would claim an optimality never proved.
  double gap_pruned_bound = -kInf;

  auto accept_incumbent = [&](const std::vector<double>& x) {
    // Snap integers and recompute the objective from the snapped point so that
    // equal-value optima compare exactly across solver paths.
    std::vector<double> snapped = x;
    snapped.resize(model.var_count(), 0.0);
    for (int j = 0; j < model.var_count(); ++j)
      if (model.var(j).is_integer) snapped[j] = std::round(snapped[j]);
    double obj = 0.0;
    for (int j = 0; j < model.var_count(); ++j)
      obj += model.var(j).obj * snapped[j];
    if (!have_incumbent || obj > best.objective) {
      best.objective = obj;
      incumbent = std::move(snapped);
      have_incumbent = true;
    }
  };

  auto prune_margin = [&] {
    if (!have_incumbent) return 0.0;
    return std::max(1e-9, options.mip_gap) *
           std::max(1.0, std::abs(best.objective));
  };

  if (!options.warm_start.empty()) accept_incumbent(options.warm_start);

  // Rounding dive: from a fractional relaxation, repeatedly pin every integer
  // variable that is already integral and the most fractional one to its
  // nearest value, re-solving in between. Pure primal heuristic - any point it
  // reaches is integral and feasible, so it can only supply incumbents, never
  // bounds. Skipped under a cut callback, which must vet integral points.
  auto dive = [&](std::vector<double> lbs, std::vector<double> ubs,
                  Solution lp) {
    for (;;) {
      int bv = -1;
      double bf = options.int_tol;
      for (int j = 0; j < model.var_count(); ++j) {
        if (!model.var(j).is_integer) continue;
        double f = fractionality(lp.values[j]);
        if (f <= options.int_tol) {
          const double r = std::round(lp.values[j]);
          lbs[j] = std::max(lbs[j], r);
          ubs[j] = std::min(ubs[j], r);
        } else if (f > bf) {
          bf = f;
          bv = j;
        }
      }
      if (bv < 0) {
        accept_incumbent(lp.values);
        return;
      }
      const double r = std::round(lp.values[bv]);
      lbs[bv] = std::max(lbs[bv], r);
      ubs[bv] = std::min(ubs[bv], r);
      if (lbs[bv] > ubs[bv] + 1e-12 || out_of_time()) return;
      lp = solve_lp_bounded(model, options, &lbs, &ubs);
      total_iterations += lp.iterations;
      if (lp.status != Status::Optimal) return;
      if (have_incumbent && lp.objective <= best.objective + prune_margin())
        return;
    }
  };

  Status stop_status = Status::Optimal;
  while (!open.empty()) {
    BnbNode node = open.top();
    best_open_bound = node.bound;
    if (have_incumbent && node.bound <= best.objective + prune_margin()) {
      // Best-bound order: nothing left can beat the incumbent (or everything
      // left is inside the requested gap).
      if (options.mip_gap <= 0.0) best_open_bound = best.objective;
      break;
    }
    if (processed >= options.node_limit) { stop_status = Status::NodeLimit; break; }
    if (out_of_time()) { stop_status = Status::TimeLimit; break; }
    open.pop();
    ++processed;

    std::vector<double> lbs(model.var_count()), ubs(model.var_count());
    for (int j = 0; j < model.var_count(); ++j) {
      lbs[j] = -kInf;
      ubs[j] = kInf;
    }
    for (auto [j, v] : node.lb_overrides) lbs[j] = std::max(lbs[j], v);
    for (auto [j, v] : node.ub_overrides) ubs[j] = std::min(ubs[j], v);

    bool contradictory = false;
    for (int j = 0; j < model.var_count() && !contradictory; ++j)
      if (std::max(lbs[j], model.var(j).lb) >
          std::min(ubs[j], model.var(j).ub) + 1e-12)
        contradictory = true;
    if (contradictory) continue;

    Solution lp = solve_lp_bounded(model, options, &lbs, &ubs);
    total_iterations += lp.iterations;
    if (lp.status == Status::Infeasible) continue;
    if (lp.status == Status::Unbounded) {
      if (node.lb_overrides.empty() && node.ub_overrides.empty()) {
        best.status = Status::Unbounded;
        return best;
      }
      throw ModelError("solve_mip: unbounded node relaxation");
    }
    if (lp.status == Status::IterationLimit)
      throw ModelError("solve_mip: node LP hit the iteration limit");
    if (have_incumbent && lp.objective <= best.objective + prune_margin()) {
      if (options.mip_gap > 0.0)
        gap_pruned_bound = std::max(gap_pruned_bound, lp.objective);
      continue;
    }

    // Branch on the most fractional integer variable.
    int branch_var = -1;
    double branch_val = 0.0, best_frac = options.int_tol;
    for (int j = 0; j < model.var_count(); ++j) {
      if (!model.var(j).is_integer) continue;
      double f = fractionality(lp.values[j]);
      if (f > best_frac) {
        best_frac = f;
        branch_var = j;
        branch_val = lp.values[j];
      }
    }

    if (branch_var < 0) {
      // Integral. Offer to the callback before accepting.
      bool certified = true;
      if (callback) {
        ++callback_rounds;
        if (callback_rounds > 100000)
          throw ModelError("solve_mip: callback did not converge");
        std::vector<double> snapped = lp.values;
        for (int j = 0; j < model.var_count(); ++j)
          if (model.var(j).is_integer) snapped[j] = std::round(snapped[j]);
        CutResult res = callback(model, snapped);
        int old_vars = model.var_count();
        for (const NewColumn& nc : res.new_vars)
          model.add_variable(nc.lb, nc.ub, nc.obj, nc.is_integer, nc.name);
        std::vector<double> extended = snapped;
        extended.resize(model.var_count(), 0.0);
        for (int j = old_vars; j < model.var_count(); ++j)
          extended[j] = std::clamp(0.0, model.var(j).lb, model.var(j).ub);
        bool some_cut_violated = false;
        for (const CutRow& cut : res.cuts) {
          int row = model.add_constraint(cut.terms, cut.sense, cut.rhs, cut.name);
          double act = model.activity(row, extended);
          double viol = 0.0;
          switch (cut.sense) {
            case Sense::LE: viol = act - cut.rhs; break;
            case Sense::GE: viol = cut.rhs - act; break;
            case Sense::EQ: viol = std::abs(act - cut.rhs); break;
          }
          if (viol > options.feas_tol) some_cut_violated = true;
          ++cuts_added;
        }
        if (res.candidate) {
          const std::vector<double>& cand = *res.candidate;
          if (static_cast<int>(cand.size()) != model.var_count())
            throw ModelError("solve_mip: candidate has wrong dimension");
          if (model.max_violation(cand) <= options.feas_tol) accept_incumbent(cand);
        }
        certified = res.certified;
        if (!certified && res.cuts.empty())
          throw ModelError("solve_mip: callback rejected a solution without cuts");
        if (!certified && !some_cut_violated)
          throw ModelError("solve_mip: callback cuts do not cut off the solution");
        if (!certified) {
          // Re-solve this node against the grown model.
          node.bound = lp.objective;
          node.seq = seq++;
          open.push(std::move(node));
          continue;
        }
        accept_incumbent(snapped);
      } else {
        accept_incumbent(lp.values);
      }
      continue;
    }

    if (!callback && (processed == 1 || (!have_incumbent && processed % 512 == 0)))
      dive(lbs, ubs, lp);

    BnbNode down = node, up = node;
    down.bound = lp.objective;
    down.seq = seq++;
    down.ub_overrides.push_back({branch_var, std::floor(branch_val)});
    up.bound = lp.objective;
    up.seq = seq++;
    up.lb_overrides.push_back({branch_var, std::ceil(branch_val)});
    open.push(std::move(down));
    open.push(std::move(up));
  }

  best.nodes = processed;
  best.iterations = total_iterations;
  best.cuts_added = cuts_added;
  best.callback_rounds = callback_rounds;
  if (open.empty()) {
    // Search exhausted: either proven optimal or proven infeasible.
    if (have_incumbent) {
      best.status = Status::Optimal;
      best.values = std::move(incumbent);
      best.best_bound = std::max(best.objective, gap_pruned_bound);
    } else {
      best.status = Status::Infeasible;
    }
    return best;
  }
  if (stop_status == Status::Optimal) {
    // Stopped because the bound met the incumbent (exactly or within the gap).
    best.status = Status::Optimal;
    best.values = std::move(incumbent);
    best.best_bound =
        std::max({best_open_bound, best.objective, gap_pruned_bound});
    return best;
  }
  best.status = stop_status;
  best.best_bound = std::max({best_open_bound, gap_pruned_bound,
                              have_incumbent ? best.objective : -kInf});
  if (have_incumbent) best.values = std::move(incumbent);
  return best;
}

namespace {

std::string lp_name(const std::string& given, const char* prefix, int idx) {
  if (given.empty()) return std::string(prefix) + std::to_string(idx);
  std::string out;
  out.reserve(given.size());
  for (char c : given)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0])))
    out.insert(out.begin(), '_');
  return out;
}

void write_terms(std::ostream& out, const std::vector<Term>& terms,
                 const Model& model) {
  bool first = true;
  for (const Term& t : terms) {
    double c = t.coef;
    if (first) {
      if (c < 0) out << "- ";
      first = false;
    } else {
      out << (c < 0 ? " - " : " + ");
    }
    double a = std::abs(c);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", a);
    out << buf << " " << lp_name(model.var(t.var).name, "x", t.var);
  }
  if (first) out << "0 x0";
}

}  // namespace

void write_lp(const Model& model, std::ostream& out) {
  out << "\\ coachres model: " << model.var_count() << " variables, "
      << model.row_count() << " rows\n";
  out << "Maximize\n obj: ";
  {
    std::vector<Term> obj;
    for (int j = 0; j < model.var_count(); ++j)
      if (model.var(j).obj != 0.0) obj.push_back({j, model.var(j).obj});
    write_terms(out, obj, model);
  }
  out << "\nSubject To\n";
  for (int i = 0; i < model.row_count(); ++i) {
    const Constraint& r = model.row(i);
    out << " " << lp_name(r.name, "c", i) << ": ";
    write_terms(out, r.terms, model);
    switch (r.sense) {
      case Sense::LE: out << " <= "; break;
      case Sense::GE: out << " >= "; break;
      case Sense::EQ: out << " = "; break;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", r.rhs);
    out << buf << "\n";
  }
  out << "Bounds\n";
  for (int j = 0; j < model.var_count(); ++j) {
    const Variable& v = model.var(j);
    std::string nm = lp_name(v.name, "x", j);
    char buf[128];
    if (!std::isfinite(v.lb) && !std::isfinite(v.ub)) {
      out << " " << nm << " free\n";
    } else if (!std::isfinite(v.ub)) {
      std::snprintf(buf, sizeof buf, " %.12g <= %s\n", v.lb, nm.c_str());
      out << buf;
    } else if (!std::isfinite(v.lb)) {
      std::snprintf(buf, sizeof buf, " -inf <= %s <= %.12g\n", nm.c_str(), v.ub);
      out << buf;
    } else {
      std::snprintf(buf, sizeof buf, " %.12g <= %s <= %.12g\n", v.lb, nm.c_str(), v.ub);
      out << buf;
    }
  }
  bool any_int = model.has_integers();
  if (any_int) {
    out << "Generals\n";
    for (int j = 0; j < model.var_count(); ++j)
      if (model.var(j).is_integer)
        out << " " << lp_name(model.var(j).name, "x", j) << "\n";
  }
  out << "End\n";
}

}  // namespace coachres::linprog
