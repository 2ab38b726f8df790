#pragma once

// Online reject-or-assign policies behind a single contract: observe a
// request, the residual capacity and the time step, return Accept(coach) or
// Reject. Decisions are irrevocable, except that the seat-level FCFS policy
// defers coach choice to a terminal materialization.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coachres/domain.hpp"
#include "coachres/offline.hpp"
#include "coachres/rng.hpp"
#include "coachres/stochastic.hpp"

namespace coachres::policies {

struct PolicyDecision {
  enum class Verdict { Accept, AcceptDeferred, Reject };
  Verdict verdict = Verdict::Reject;
  int coach = 0;  // 1-based, meaningful only for Accept
  std::string annotation;

  bool accepted() const { return verdict != Verdict::Reject; }

  static PolicyDecision accept(int coach, std::string note = {}) {
    return {Verdict::Accept, coach, std::move(note)};
  }
  static PolicyDecision accept_deferred(std::string note = {}) {
    return {Verdict::AcceptDeferred, 0, std::move(note)};
  }
  static PolicyDecision reject(std::string note = {}) {
    return {Verdict::Reject, 0, std::move(note)};
  }
};

// Coaches that can seat the whole group on every leg of its journey,
// in index order.
std::vector<int> feasible_coaches(const ResidualCapacity& residual,
                                  const RequestType& type);

// A policy instance owns mutable state and is bound to one simulation run.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;

  // Called once per run before the first arrival. `seed` lets policies derive
  // private streams for internal solver randomization; decision coins come
  // from the stream passed to decide().
  virtual void begin_run(const Instance& instance, uint64_t seed) {
    instance_ = &instance;
    (void)seed;
  }

  // `step` is the 1-based position of the request in the realized sequence.
  virtual PolicyDecision decide(const Request& request, int step,
                                const ResidualCapacity& residual,
                                RngStream& rng) = 0;

  // True for policies whose accepts carry no coach until materialize().
  virtual bool defers_assignment() const { return false; }

  // Terminal coach materialization over the full arrival list (indices into
  // `arrivals` resolve via Request::arrival_index). Only meaningful when
  // defers_assignment().
  virtual AssignmentPlan materialize(const std::vector<Request>& arrivals);

 protected:
  const Instance* instance_ = nullptr;
};

struct PolicySpec {
  std::string kind;  // first-fit | random-fit | rom | adaptive-rom | lambda |
                     // theta | fluid | fixed | fcfs | sfcfs
  double q = -1.0;          // rom sampling fraction; negative = 1/(2 - delta)
  double theta = 1.0;       // theta policy scale
  double psi_threshold = 0.001;
  int lp_stride = 1;        // rom policies re-solve the LP every k-th arrival
  int block_length = 0;     // fcfs re-solve block; 0 = one day
  double solve_time_limit_seconds = 10.0;  // per internal MIP solve (fcfs)
};

std::unique_ptr<Policy> make_policy(const PolicySpec& spec);
std::vector<std::string> known_policies();

// ---------- concrete policies (constructible directly in tests) ----------

class FirstFitPolicy final : public Policy {
 public:
  std::string name() const override { return "first-fit"; }
  PolicyDecision decide(const Request& request, int step,
                        const ResidualCapacity& residual, RngStream& rng) override;
};

class RandomFitPolicy final : public Policy {
 public:
  std::string name() const override { return "random-fit"; }
  PolicyDecision decide(const Request& request, int step,
                        const ResidualCapacity& residual, RngStream& rng) override;
};

// Random-order rejection policy: reject the first floor(q * expected arrivals)
// requests, then accept request i with probability equal to its fractional
// mass in the offline LP over everything observed so far, into the
// minimum-index feasible coach.
class RomPolicy : public Policy {
 public:
  explicit RomPolicy(double q = -1.0, int lp_stride = 1)
      : q_(q), lp_stride_(lp_stride < 1 ? 1 : lp_stride) {}
  std::string name() const override { return "rom"; }
  void begin_run(const Instance& instance, uint64_t seed) override;
  PolicyDecision decide(const Request& request, int step,
                        const ResidualCapacity& residual, RngStream& rng) override;

  long sampling_cutoff() const { return cutoff_; }
  long lp_solves() const { return lp_solves_; }

 protected:
  // Acceptance test value for the current request (already in observed_).
  virtual double test_value(const Request& request);
  virtual void on_accept(const Request& /*request*/) {}
  void refresh_lp();

  double q_;
  int lp_stride_;
  long cutoff_ = 0;
  long packing_seen_ = 0;  // arrivals past the sampling phase
  long lp_solves_ = 0;
  std::vector<Request> observed_;
  offline::LpMasses lp_;
  size_t lp_covers_ = 0;  // observed_ prefix length the cached LP covers
};

// Variant that tracks per-type assignments j' and tests z against
// clamp(LP type mass - j', [0,1]) to recover lost sales opportunities.
class AdaptiveRomPolicy final : public RomPolicy {
 public:
  using RomPolicy::RomPolicy;
  std::string name() const override { return "adaptive-rom"; }
  void begin_run(const Instance& instance, uint64_t seed) override;

 protected:
  double test_value(const Request& request) override;
  void on_accept(const Request& request) override;

 private:
  std::vector<long> assigned_per_type_;
};

// Make the type available at step i with probability
// theta * min(1, fluid step mass / lambda_t); seat into the first feasible
// coach. theta = 1 is the unscaled policy.
class ThetaPolicy : public Policy {
 public:
  explicit ThetaPolicy(double theta = 1.0, std::string label = "theta");
  std::string name() const override { return label_; }
  void begin_run(const Instance& instance, uint64_t seed) override;
  PolicyDecision decide(const Request& request, int step,
                        const ResidualCapacity& residual, RngStream& rng) override;

 protected:
  double theta_;
  std::string label_;
  std::optional<stochastic::ArrivalModel> arrival_;
  stochastic::FluidSolution fluid_;
};

class LambdaPolicy final : public ThetaPolicy {
 public:
  LambdaPolicy() : ThetaPolicy(1.0, "lambda") {}
};

// Accept with probability = fluid mass on currently feasible coaches divided
// by the full fluid mass of (type, step); first feasible coach.
class FluidEmpiricalPolicy final : public Policy {
 public:
  std::string name() const override { return "fluid"; }
  void begin_run(const Instance& instance, uint64_t seed) override;
  PolicyDecision decide(const Request& request, int step,
                        const ResidualCapacity& residual, RngStream& rng) override;

 private:
  std::optional<stochastic::ArrivalModel> arrival_;
  stochastic::FluidSolution fluid_;
};

// Replays the optimal a-priori plan for the whole horizon; never re-solves.
class FixedPolicy final : public Policy {
 public:
  explicit FixedPolicy(double psi_threshold = 0.001)
      : psi_threshold_(psi_threshold) {}
  std::string name() const override { return "fixed"; }
  void begin_run(const Instance& instance, uint64_t seed) override;
  PolicyDecision decide(const Request& request, int step,
                        const ResidualCapacity& residual, RngStream& rng) override;

 private:
  double psi_threshold_;
  stochastic::AprioriPlan plan_;
  std::vector<int> seen_;  // per-type arrival count
};

// Coach-level FCFS: re-solve the a-priori plan at block boundaries with
// re-estimated remaining-demand survivals and the current residual capacity;
// unplanned feasible requests force an immediate re-solve that must include
// them. Never rejects a feasible request.
class FcfsPolicy final : public Policy {
 public:
  explicit FcfsPolicy(double psi_threshold = 0.001, int block_length = 0,
                      double solve_time_limit_seconds = 10.0)
      : psi_threshold_(psi_threshold), block_length_(block_length),
        time_limit_(solve_time_limit_seconds) {}
  std::string name() const override { return "fcfs"; }
  void begin_run(const Instance& instance, uint64_t seed) override;
  PolicyDecision decide(const Request& request, int step,
                        const ResidualCapacity& residual, RngStream& rng) override;

  long block_solves() const { return block_solves_; }
  long forced_solves() const { return forced_solves_; }

 private:
  bool replan(const ResidualCapacity& residual, int step,
              std::optional<std::pair<int, int>> forced);

  double psi_threshold_;
  int block_length_;
  double time_limit_;
  int effective_block_ = 1;
  std::optional<stochastic::ArrivalModel> arrival_;
  stochastic::AprioriPlan plan_;
  bool have_plan_ = false;
  std::vector<int> seen_since_plan_;
  long block_solves_ = 0;
  long forced_solves_ = 0;
};

// Seat-level FCFS: accept iff the accepted multiset plus the new request still
// packs; coach choice deferred to a terminal offline solve.
class SfcfsPolicy final : public Policy {
 public:
  std::string name() const override { return "sfcfs"; }
  void begin_run(const Instance& instance, uint64_t seed) override;
  PolicyDecision decide(const Request& request, int step,
                        const ResidualCapacity& residual, RngStream& rng) override;
  bool defers_assignment() const override { return true; }
  AssignmentPlan materialize(const std::vector<Request>& arrivals) override;

  const std::vector<Request>& accepted() const { return accepted_; }

 private:
  std::vector<Request> accepted_;
  ResidualCapacity witness_residual_;  // residual of the maintained packing
};

}  // namespace coachres::policies
