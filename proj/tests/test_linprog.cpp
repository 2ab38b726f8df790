#include <doctest.h>

#include <cmath>
#include <vector>

#include "coachres/linprog.hpp"
#include "coachres/rng.hpp"

using namespace coachres::linprog;

namespace {

// One coach of two seats over two legs: a pair worth 10 spanning both legs
// plus one single worth 4 per leg. Fractionally the pair splits and all three
// sell; integrally the pair crowds the singles out.
Model seat_toy() {
  Model m;
  const int a = m.add_variable(0, 1, 10, true, "pair");
  const int b = m.add_variable(0, 1, 4, true, "single1");
  const int c = m.add_variable(0, 1, 4, true, "single2");
  m.add_constraint({{a, 2.0}, {b, 1.0}}, Sense::LE, 2.0, "leg1");
  m.add_constraint({{a, 2.0}, {c, 1.0}}, Sense::LE, 2.0, "leg2");
  return m;
}

// Random small integer program with bounded binaries and <= rows, solvable by
// complete enumeration.
Model random_binary_model(coachres::RngStream& rng, int vars, int rows) {
  Model m;
  for (int j = 0; j < vars; ++j)
    m.add_variable(0, 1, rng.uniform_int(-5, 9), true);
  for (int i = 0; i < rows; ++i) {
    std::vector<Term> terms;
    for (int j = 0; j < vars; ++j) {
      const int coef = rng.uniform_int(-2, 3);
      if (coef != 0) terms.push_back({j, static_cast<double>(coef)});
    }
    if (terms.empty()) continue;
    m.add_constraint(std::move(terms), Sense::LE,
                     static_cast<double>(rng.uniform_int(0, 6)));
  }
  return m;
}

double enumerate_binary_optimum(const Model& m) {
  const int n = m.var_count();
  double best = -kInf;
  for (int mask = 0; mask < (1 << n); ++mask) {
    std::vector<double> x(n);
    for (int j = 0; j < n; ++j) x[j] = (mask >> j) & 1;
    if (m.max_violation(x) > 1e-9) continue;
    double obj = 0.0;
    for (int j = 0; j < n; ++j) obj += m.var(j).obj * x[j];
    best = std::max(best, obj);
  }
  return best;
}

}  // namespace

TEST_CASE("a one-variable LP maximizes to its upper bound") {
  Model m;
  const int x = m.add_variable(0, kInf, 1, false, "x");
  m.add_constraint({{x, 1.0}}, Sense::LE, 3.0);
  const Solution sol = solve_lp(m);
  REQUIRE(sol.status == Status::Optimal);
  CHECK(sol.objective == doctest::Approx(3.0));
  CHECK(sol.values[x] == doctest::Approx(3.0));
}

TEST_CASE("contradictory constraints report infeasible") {
  Model m;
  const int x = m.add_variable(0, kInf, 1, false, "x");
  m.add_constraint({{x, 1.0}}, Sense::LE, -1.0);
  CHECK(solve_lp(m).status == Status::Infeasible);

  Model ip;
  const int y = ip.add_variable(0, 1, 1, true, "y");
  ip.add_constraint({{y, 1.0}}, Sense::GE, 1.0);
  ip.add_constraint({{y, 1.0}}, Sense::LE, 0.0);
  CHECK(solve_mip(ip).status == Status::Infeasible);
}

TEST_CASE("seat toy relaxation splits the pair, the integer solve does not") {
  Model lp = seat_toy();
  const Solution relax = solve_lp(lp);
  REQUIRE(relax.status == Status::Optimal);
  CHECK(relax.objective == doctest::Approx(13.0));
  CHECK(relax.values[0] == doctest::Approx(0.5));
  CHECK(relax.values[1] == doctest::Approx(1.0));
  CHECK(relax.values[2] == doctest::Approx(1.0));

  Model ip = seat_toy();
  const Solution exact = solve_mip(ip);
  REQUIRE(exact.status == Status::Optimal);
  CHECK(exact.objective == doctest::Approx(10.0));
  CHECK(exact.values[0] == doctest::Approx(1.0));
}

TEST_CASE("a lazy cut rejecting the pair forces the two singles") {
  Model m = seat_toy();
  int rounds = 0;
  const CutCallback forbid_pair = [&](const Model&,
                                      const std::vector<double>& x) {
    CutResult res;
    if (x[0] > 0.5) {
      ++rounds;
      res.certified = false;
      res.cuts.push_back({{{0, 1.0}}, Sense::LE, 0.0, "forbid_pair"});
    }
    return res;
  };
  const Solution sol = solve_mip(m, {}, forbid_pair);
  REQUIRE(sol.status == Status::Optimal);
  CHECK(sol.objective == doctest::Approx(8.0));
  CHECK(sol.values[0] == doctest::Approx(0.0));
  CHECK(rounds >= 1);
  // The cut stays in the model: the rejected incumbent cannot return.
  CHECK(m.max_violation({1.0, 0.0, 0.0}) > 0.5);
}

TEST_CASE("integer optimum never exceeds the relaxation") {
  coachres::RngStream rng(11, "linprog-dominance");
  for (int rep = 0; rep < 60; ++rep) {
    Model m = random_binary_model(rng, rng.uniform_int(2, 8),
                                  rng.uniform_int(1, 5));
    const Solution relax = solve_lp(m);
    if (relax.status != Status::Optimal) continue;
    const Solution exact = solve_mip(m);
    if (exact.status != Status::Optimal) continue;
    CHECK(exact.objective <= relax.objective + 1e-6);
  }
}

TEST_CASE("branch and bound matches complete enumeration on small binaries") {
  coachres::RngStream rng(23, "linprog-enum");
  int solved = 0;
  for (int rep = 0; rep < 120; ++rep) {
    Model m = random_binary_model(rng, rng.uniform_int(2, 12),
                                  rng.uniform_int(1, 6));
    const double truth = enumerate_binary_optimum(m);
    const Solution sol = solve_mip(m);
    if (truth == -kInf) {
      CHECK(sol.status == Status::Infeasible);
      continue;
    }
    REQUIRE(sol.status == Status::Optimal);
    CHECK(sol.objective == doctest::Approx(truth).epsilon(1e-9));
    ++solved;
  }
  CHECK(solved > 60);  // the generator must actually produce feasible models
}

TEST_CASE("an optimality gap trades proof for speed but never feasibility") {
  coachres::RngStream rng(31, "linprog-gap");
  for (int rep = 0; rep < 40; ++rep) {
    Model m = random_binary_model(rng, rng.uniform_int(4, 10),
                                  rng.uniform_int(1, 5));
    const double truth = enumerate_binary_optimum(m);
    if (truth == -kInf) continue;
    SolveOptions relaxed;
    relaxed.mip_gap = 0.05;
    const Solution sol = solve_mip(m, relaxed);
    REQUIRE(sol.feasible());
    REQUIRE(sol.has_incumbent());
    // The incumbent is a genuinely feasible point within the stated gap.
    CHECK(m.max_violation(sol.values) <= 1e-6);
    CHECK(sol.objective <= truth + 1e-9);
    CHECK(sol.objective >= truth - relaxed.mip_gap * std::max(1.0, std::abs(truth)) - 1e-9);
    // The reported bound still caps the true optimum.
    CHECK(sol.best_bound >= truth - 1e-9);
  }
}

TEST_CASE("a warm start is honored and never worsens the result") {
  Model m = seat_toy();
  SolveOptions opt;
  opt.warm_start = {0.0, 1.0, 1.0};  // the two singles, objective 8
  const Solution sol = solve_mip(m, opt);
  REQUIRE(sol.status == Status::Optimal);
  CHECK(sol.objective == doctest::Approx(10.0));

  // With a node limit of zero the warm start itself must survive as the
  // incumbent rather than being lost.
  Model frozen = seat_toy();
  SolveOptions stuck;
  stuck.warm_start = {0.0, 1.0, 1.0};
  stuck.node_limit = 0;
  const Solution kept = solve_mip(frozen, stuck);
  CHECK(kept.has_incumbent());
  CHECK(kept.objective >= 8.0 - 1e-9);
}

TEST_CASE("equality and >= rows are enforced") {
  Model m;
  const int x = m.add_variable(0, 10, 1, false, "x");
  const int y = m.add_variable(0, 10, 1, false, "y");
  m.add_constraint({{x, 1.0}, {y, 1.0}}, Sense::EQ, 7.0);
  m.add_constraint({{x, 1.0}}, Sense::GE, 3.0);
  const Solution sol = solve_lp(m);
  REQUIRE(sol.status == Status::Optimal);
  CHECK(sol.objective == doctest::Approx(7.0));
  CHECK(sol.values[x] + sol.values[y] == doctest::Approx(7.0));
  CHECK(sol.values[x] >= 3.0 - 1e-7);
}
