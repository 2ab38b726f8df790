#pragma once

// Minimal exact-ish LP / branch-and-bound engine, written for this project: the
// models here are small and dense-ish, and the branch-and-cut layers need a
// callback contract (lazy rows AND lazy columns) that off-the-shelf free
// solvers in a single header do not offer.
//
// LP core: bounded-variable two-phase revised primal simplex, dense explicit
// basis inverse with periodic refactorization, Dantzig pricing with a Bland
// fallback for anti-cycling. Maximization throughout.
//
// MIP: best-bound branch and bound, most-fractional branching, general integer
// bounds supported. Integral node solutions are offered to an optional callback
// that may certify them, reject them with violated cuts (optionally introducing
// new columns the cuts reference), and/or hand back a heuristic candidate.

#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace coachres::linprog {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { LE, EQ, GE };

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit, NodeLimit, TimeLimit };

std::string to_string(Status s);

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Term {
  int var;
  double coef;
};

struct Variable {
  double lb = 0.0;
  double ub = kInf;
  double obj = 0.0;
  bool is_integer = false;
  std::string name;
};

struct Constraint {
  std::vector<Term> terms;
  Sense sense = Sense::LE;
  double rhs = 0.0;
  std::string name;
};

class Model {
 public:
  int add_variable(double lb, double ub, double obj, bool is_integer,
                   std::string name = {});
  int add_constraint(std::vector<Term> terms, Sense sense, double rhs,
                     std::string name = {});

  int var_count() const { return static_cast<int>(vars_.size()); }
  int row_count() const { return static_cast<int>(rows_.size()); }
  const Variable& var(int j) const { return vars_.at(j); }
  Variable& var(int j) { return vars_.at(j); }
  const Constraint& row(int i) const { return rows_.at(i); }
  const std::vector<Variable>& vars() const { return vars_; }
  const std::vector<Constraint>& rows() const { return rows_; }
  bool has_integers() const;

  double activity(int row, const std::vector<double>& x) const;
  // Max constraint violation and max integrality deviation of x.
  double max_violation(const std::vector<double>& x) const;

 private:
  std::vector<Variable> vars_;
  std::vector<Constraint> rows_;
};

struct SolveOptions {
  double feas_tol = 1e-7;
  double int_tol = 1e-6;
  long iteration_limit = 500000;  // simplex pivots per LP solve
  long node_limit = 50000;
  double time_limit_seconds = kInf;
  // Relative optimality gap at which branch-and-bound may stop; 0 demands a
  // proven optimum. When a stop happens inside the gap, best_bound still
  // reports the true remaining bound.
  double mip_gap = 0.0;
  bool log = false;
  // Optional known-feasible MIP solution (checked, then used as the initial
  // incumbent). Must be genuinely feasible including any lazy structure the
  // callback would certify; sized to the model at solve start.
  std::vector<double> warm_start;
};

struct Solution {
  Status status = Status::Infeasible;
  std::vector<double> values;
  double objective = -kInf;
  double best_bound = kInf;  // valid upper bound on the optimum (MIP)
  long nodes = 0;
  long iterations = 0;
  int cuts_added = 0;
  int callback_rounds = 0;

  bool feasible() const {
    return status == Status::Optimal || status == Status::IterationLimit ||
           status == Status::NodeLimit || status == Status::TimeLimit;
  }
  bool has_incumbent() const { return !values.empty(); }
  // Relative gap (bound - objective) / max(1, |bound|); 0 when proven optimal.
  double gap() const;
};

// Lazy row to append; terms may reference columns introduced by new_vars in the
// same CutResult (ids continue from the model's current var_count in order).
struct CutRow {
  std::vector<Term> terms;
  Sense sense = Sense::LE;
  double rhs = 0.0;
  std::string name;
};

struct NewColumn {
  double lb = 0.0;
  double ub = 1.0;
  double obj = 0.0;
  bool is_integer = true;
  std::string name;
};

struct CutResult {
  bool certified = true;          // integral solution accepted as truly feasible
  std::vector<NewColumn> new_vars;
  std::vector<CutRow> cuts;       // must cut off the offered solution if !certified
  // Optional heuristic solution over the grown model (var_count + new_vars).
  std::optional<std::vector<double>> candidate;
};

// Called on integral node solutions (values sized to the current model). The
// callback must not mutate the model directly; solve_mip applies new_vars/cuts.
using CutCallback = std::function<CutResult(const Model&, const std::vector<double>&)>;

Solution solve_lp(const Model& model, const SolveOptions& options = {});

// Branch and bound; `model` grows in place when the callback adds columns/rows.
Solution solve_mip(Model& model, const SolveOptions& options = {},
                   const CutCallback& callback = nullptr);

// CPLEX LP-format text dump (for --dump-lp and debugging).
void write_lp(const Model& model, std::ostream& out);

}  // namespace coachres::linprog
