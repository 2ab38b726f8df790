// Command-line entry point: instance generation, offline solves, policy
// simulation, closed-form bound tables, and report rendering.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>

#include "coachres/bounds.hpp"
#include "coachres/instance_io.hpp"
#include "coachres/offline.hpp"
#include "coachres/policies.hpp"
#include "coachres/sim.hpp"
#include "coachres/stochastic.hpp"

namespace fs = std::filesystem;
using namespace coachres;

namespace {

std::string fmt6(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// "1,2,5" or "1..50" (inclusive range) or a single integer.
std::vector<uint64_t> parse_seeds(const std::string& spec) {
  std::vector<uint64_t> out;
  if (spec.empty()) return out;
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const uint64_t lo = std::stoull(spec.substr(0, dots));
    const uint64_t hi = std::stoull(spec.substr(dots + 2));
    if (hi < lo) throw CLI::ValidationError("--seeds", "range is reversed");
    if (hi - lo > 1'000'000) throw CLI::ValidationError("--seeds", "range too wide");
    for (uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

// Values from a JSON config file fill in flags the user did not pass.
void apply_config_defaults(CLI::App* cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream in(config_path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + config_path);
  nlohmann::json cfg = nlohmann::json::parse(in);
  for (const auto& [key, value] : cfg.items()) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr || opt->count() > 0) continue;  // flags override config
    std::string text =
        value.is_string() ? value.get<std::string>() : value.dump();
    opt->add_result(text);
    opt->run_callback();
  }
}

struct SimulateArgs {
  std::string instance_ref = "shinkansen-mini";
  std::string policy_list = "first-fit";
  std::string seeds_spec = "1";
  std::string out_dir = "runs";
  std::string experiment = "default";
  std::string config_path;
  double q = -1.0;
  double theta = 1.0;
  double psi_threshold = 0.001;
  int lp_stride = 1;
  int block_length = 0;
  double time_limit = 10.0;
  int parallel = 1;
  int resamples = 10000;
  bool no_exact = false;
  bool audit = false;
};

int run_simulate(const SimulateArgs& args) {
  const Instance prototype = resolve_instance(args.instance_ref);
  const std::vector<uint64_t> seeds = parse_seeds(args.seeds_spec);
  if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds given");

  std::vector<std::string> kinds;
  {
    std::stringstream ss(args.policy_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) kinds.push_back(item);
    }
  }
  if (kinds.empty()) throw CLI::ValidationError("--policies", "no policies given");

  // Realized instances per seed, generated up front (cheap, deterministic).
  std::map<uint64_t, Instance> instances;
  for (uint64_t seed : seeds)
    instances.emplace(seed, sim::generate_instance(prototype, seed));

  struct Task {
    std::string kind;  // policy kind, or "" for the exact baseline
    uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const std::string& kind : kinds)
    for (uint64_t seed : seeds) tasks.push_back({kind, seed});
  if (!args.no_exact)
    for (uint64_t seed : seeds) tasks.push_back({"", seed});

  const fs::path exp_dir = fs::path(args.out_dir) / args.experiment;
  std::vector<sim::RunTrace> traces;
  std::map<uint64_t, Money> exact_by_seed;
  std::vector<std::string> audit_failures;
  std::mutex mu;
  std::atomic<size_t> next{0};
  std::atomic<bool> hard_failure{false};

  auto worker = [&]() {
    for (;;) {
      const size_t k = next.fetch_add(1);
      if (k >= tasks.size()) return;
      const Task& task = tasks[k];
      const Instance& inst = instances.at(task.seed);
      try {
        if (task.kind.empty()) {
          offline::OfflineResult exact = offline::solve_offline(inst.arrivals, inst);
          std::lock_guard<std::mutex> lock(mu);
          exact_by_seed[task.seed] = exact.value;
          continue;
        }
        policies::PolicySpec spec;
        spec.kind = task.kind;
        spec.q = args.q;
        spec.theta = args.theta;
        spec.psi_threshold = args.psi_threshold;
        spec.lp_stride = args.lp_stride;
        spec.block_length = args.block_length;
        spec.solve_time_limit_seconds = args.time_limit;
        std::unique_ptr<policies::Policy> policy = policies::make_policy(spec);
        sim::RunTrace trace = sim::run_policy(inst, *policy, task.seed);

        std::ostringstream csv;
        sim::write_trace_csv(trace, csv);
        write_file_atomic(exp_dir / task.kind /
                              (std::to_string(task.seed) + ".trace.csv"),
                          csv.str());
        // Audits only make sense for policies that promise the audited
        // property; threshold policies reject on purpose and would always
        // flag. fcfs/first-fit/random-fit promise never to reject a feasible
        // request, sfcfs additionally promises in-plan acceptance.
        std::vector<sim::AuditViolation> violations;
        if (args.audit && !trace.failed) {
          if (task.kind == "sfcfs")
            violations = sim::audit_sfcfs(trace, inst);
          else if (task.kind == "fcfs" || task.kind == "first-fit" ||
                   task.kind == "random-fit")
            violations = sim::audit_fcfs(trace, inst);
        }
        std::lock_guard<std::mutex> lock(mu);
        for (const sim::AuditViolation& v : violations)
          audit_failures.push_back(task.kind + "/" + std::to_string(task.seed) +
                                   " step " + std::to_string(v.step) + ": " +
                                   v.what);
        traces.push_back(std::move(trace));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        hard_failure = true;
        std::cerr << "run " << (task.kind.empty() ? "exact" : task.kind) << "/"
                  << task.seed << " failed: " << e.what() << "\n";
      }
    }
  };

  const int workers = std::max(1, args.parallel);
  {
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (std::thread& th : pool) th.join();
  }

  // Deterministic aggregation order regardless of thread interleaving.
  std::sort(traces.begin(), traces.end(),
            [](const sim::RunTrace& a, const sim::RunTrace& b) {
              return std::tie(a.policy, a.seed) < std::tie(b.policy, b.seed);
            });

  int exit_code = hard_failure ? 1 : 0;
  if (!args.no_exact) {
    sim::MetricsReport report =
        sim::compute_metrics(traces, exact_by_seed, args.resamples);
    std::ostringstream mj, cc, ba;
    sim::write_metrics_json(report, mj);
    sim::write_curves_csv(report, cc);
    sim::write_bland_altman_csv(report, ba);
    write_file_atomic(exp_dir / "metrics.json", mj.str());
    write_file_atomic(exp_dir / "curves.csv", cc.str());
    write_file_atomic(exp_dir / "bland_altman.csv", ba.str());

    std::cout << "experiment " << args.experiment << ": " << traces.size()
              << " runs, exact mean revenue "
              << fmt6(report.exact_mean_revenue) << "\n";
    for (const sim::PolicySummary& s : report.policies) {
      std::cout << "  " << std::left << std::setw(14) << s.policy
                << " rel " << fmt6(s.mean_relative) << " (min "
                << fmt6(s.min_relative) << ", sd "
                << (s.sd_relative ? fmt6(*s.sd_relative) : std::string("n/a"))
                << "), util " << fmt6(s.mean_utilization) << "\n";
    }
    if (!report.failures.empty()) {
      exit_code = 1;
      for (const std::string& f : report.failures)
        std::cerr << "failed run: " << f << "\n";
    }
  } else {
    for (const sim::RunTrace& trace : traces) {
      std::cout << trace.policy << "/" << trace.seed << " revenue "
                << trace.revenue << (trace.failed ? " FAILED: " + trace.error : "")
                << "\n";
      if (trace.failed) exit_code = 1;
    }
  }
  for (const std::string& f : audit_failures) {
    std::cerr << "audit violation: " << f << "\n";
    exit_code = 1;
  }
  return exit_code;
}

struct OfflineArgs {
  std::string instance_ref = "shinkansen-mini";
  std::string seeds_spec;
  bool fcfs = false;
  bool full_model = false;
  bool audit = false;
  double time_limit = 30.0;
  long node_limit = 50000;
  std::string dump_lp;
  std::string json_out;
};

int run_offline(const OfflineArgs& args) {
  const Instance prototype = resolve_instance(args.instance_ref);
  std::vector<uint64_t> seeds = parse_seeds(args.seeds_spec);

  std::vector<std::pair<uint64_t, Instance>> cases;
  if (seeds.empty()) {
    if (prototype.arrivals.empty())
      throw CLI::ValidationError(
          "--seeds", "instance has no embedded arrivals; give seeds to realize");
    cases.emplace_back(0, prototype);
  } else {
    for (uint64_t seed : seeds)
      cases.emplace_back(seed, sim::generate_instance(prototype, seed));
  }

  if (!args.dump_lp.empty()) {
    const Instance& inst = cases.front().second;
    offline::OfflineModel om = offline::build_offline_model(inst.arrivals, inst);
    std::ostringstream lp;
    linprog::write_lp(om.model, lp);
    write_file_atomic(args.dump_lp + ".offline.lp", lp.str());
    if (args.fcfs) {
      offline::FcfsModel fm = offline::build_fcfs_model(inst.arrivals, inst);
      std::ostringstream flp;
      linprog::write_lp(fm.model, flp);
      write_file_atomic(args.dump_lp + ".fcfs.lp", flp.str());
    }
  }

  nlohmann::ordered_json report = nlohmann::ordered_json::array();
  int exit_code = 0;
  for (auto& [seed, inst] : cases) {
    nlohmann::ordered_json row;
    row["seed"] = seed;
    row["requests"] = inst.arrivals.size();
    try {
      offline::OfflineConfig config;
      config.use_full_model = args.full_model;
      config.time_limit_seconds = args.time_limit;
      config.node_limit = args.node_limit;
      const auto t0 = std::chrono::steady_clock::now();
      offline::OfflineResult res = offline::solve_offline(inst.arrivals, inst, config);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      row["offline_value"] = res.value;
      row["offline_status"] = linprog::to_string(res.status);
      row["offline_seconds"] = secs;
      std::cout << "seed " << seed << ": offline value " << res.value << " ("
                << linprog::to_string(res.status) << ", " << fmt6(secs)
                << "s)\n";
      if (res.status != linprog::Status::Optimal) exit_code = 1;

      if (args.fcfs) {
        offline::FcfsConfig fc;
        fc.time_limit_seconds = args.time_limit;
        fc.node_limit = args.node_limit;
        const auto t1 = std::chrono::steady_clock::now();
        offline::FcfsResult fres = offline::solve_offline_fcfs(inst.arrivals, inst, fc);
        const double fsecs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t1)
                .count();
        row["fcfs_value"] = fres.value;
        row["fcfs_status"] = linprog::to_string(fres.status);
        row["fcfs_bound"] = fres.best_bound;
        row["fcfs_gap"] = fres.gap;
        row["fcfs_seconds"] = fsecs;
        std::cout << "  fcfs value " << fres.value << " bound "
                  << fmt6(fres.best_bound) << " gap " << fmt6(fres.gap) << " ("
                  << linprog::to_string(fres.status) << ", " << fmt6(fsecs)
                  << "s)\n";
        if (args.audit) {
          const auto unfair = offline::separate_unfair_rejection(
              fres.plan, inst.arrivals, inst);
          row["fcfs_audit_clean"] = !unfair.has_value();
          if (unfair) {
            exit_code = 1;
            std::cout << "  AUDIT VIOLATION at position "
                      << unfair->request_pos + 1 << " (coach " << unfair->coach
                      << " was free)\n";
          } else {
            std::cout << "  audit clean\n";
          }
        }
      }
    } catch (const std::exception& e) {
      row["error"] = e.what();
      std::cerr << "seed " << seed << " failed: " << e.what() << "\n";
      exit_code = 1;
    }
    report.push_back(std::move(row));
  }
  if (!args.json_out.empty())
    write_file_atomic(args.json_out, report.dump(2) + "\n");
  return exit_code;
}

int run_bounds(double delta, int coaches, int omega, int legs) {
  std::cout << "delta " << fmt6(delta) << ", coaches " << coaches << ", omega "
            << omega << ", legs " << legs << "\n";
  std::cout << "  rom_ratio        " << fmt6(bounds::rom_ratio(delta)) << "\n";
  std::cout << "  optimal_q        " << fmt6(bounds::optimal_q(delta)) << "\n";
  std::cout << "  naori_baseline   " << fmt6(bounds::naori_baseline(legs)) << "\n";
  try {
    bounds::ConcentrationBound fg = bounds::fluid_guarantee(delta, coaches, omega, legs);
    std::cout << "  fluid_guarantee  " << fmt6(fg.factor)
              << (fg.negative_deviation ? "  (deviation term <= 0)" : "") << "\n";
  } catch (const bounds::HypothesisViolated& e) {
    std::cout << "  fluid_guarantee  n/a (" << e.what() << ")\n";
  }
  bounds::ThetaResult tr = bounds::optimize_theta(delta, coaches, omega, legs);
  std::cout << "  theta_opt        " << fmt6(tr.theta) << " (factor "
            << fmt6(tr.factor) << ")\n";
  return 0;
}

int run_report(const std::string& metrics_path) {
  std::ifstream in(metrics_path);
  if (!in) {
    std::cerr << "cannot open " << metrics_path << "\n";
    return 1;
  }
  nlohmann::json j = nlohmann::json::parse(in);
  std::cout << "seeds: " << j["seeds"].size() << ", exact mean revenue "
            << fmt6(j["exact"]["mean_revenue"].get<double>()) << "\n";
  std::cout << std::left << std::setw(14) << "policy" << std::setw(10) << "rel"
            << std::setw(10) << "sd" << std::setw(10) << "min" << std::setw(10)
            << "util" << "\n";
  for (const auto& [name, p] : j["policies"].items()) {
    const auto& sd = p["sd_relative_revenue"];
    std::cout << std::left << std::setw(14) << name << std::setw(10)
              << fmt6(p["mean_relative_revenue"].get<double>()) << std::setw(10)
              << (sd.is_null() ? std::string("n/a") : fmt6(sd.get<double>()))
              << std::setw(10) << fmt6(p["min_relative_revenue"].get<double>())
              << std::setw(10) << fmt6(p["mean_utilization"].get<double>())
              << "\n";
  }
  for (const auto& pc : j["pairs"]) {
    std::cout << "P(mean " << pc["a"].get<std::string>() << " < mean "
              << pc["b"].get<std::string>()
              << ") = " << fmt6(pc["prob_mean_a_less_b"].get<double>()) << "\n";
  }
  if (!j["failures"].empty()) {
    for (const auto& f : j["failures"])
      std::cout << "failed: " << f.get<std::string>() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coach reservation optimization: offline solvers, online "
               "policies, bounds and simulation"};
  app.require_subcommand(1);

  // gen ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Write an instance JSON file");
  std::string gen_builtin = "shinkansen";
  std::string gen_out = "instance.json";
  uint64_t gen_seed = 1;
  bool gen_realize = false;
  gen->add_option("--builtin", gen_builtin,
                  "builtin instance: shinkansen | shinkansen-mini");
  gen->add_option("--out", gen_out, "output path");
  gen->add_option("--seed", gen_seed, "seed for --realize")
      ->envname("COACHRES_SEED");
  gen->add_flag("--realize", gen_realize, "embed a realized arrival sequence");

  // offline ------------------------------------------------------------
  auto* off = app.add_subcommand("offline", "Exact offline and fair solves");
  OfflineArgs off_args;
  off->add_option("--instance", off_args.instance_ref, "builtin name or file");
  off->add_option("--seeds", off_args.seeds_spec, "e.g. 1..5 or 3,7")
      ->envname("COACHRES_SEED");
  off->add_flag("--fcfs", off_args.fcfs, "also solve the fair FCFS variant");
  off->add_flag("--full-model", off_args.full_model,
                "literal per-coach MIP instead of the aggregated master");
  off->add_flag("--audit", off_args.audit, "audit the FCFS plan for fairness");
  off->add_option("--time-limit", off_args.time_limit, "seconds per solve");
  off->add_option("--node-limit", off_args.node_limit, "branch-and-bound nodes");
  off->add_option("--dump-lp", off_args.dump_lp,
                  "write <prefix>.offline.lp (and .fcfs.lp) for cross-checks");
  off->add_option("--json", off_args.json_out, "write a JSON report");

  // simulate -------------------------------------------------------------
  auto* simc = app.add_subcommand("simulate", "Run policies across seeds");
  SimulateArgs sim_args;
  simc->add_option("--instance", sim_args.instance_ref, "builtin name or file");
  simc->add_option("--policies", sim_args.policy_list,
                   "comma list: first-fit,random-fit,rom,adaptive-rom,lambda,"
                   "theta,fluid,fixed,fcfs,sfcfs");
  simc->add_option("--seeds", sim_args.seeds_spec, "e.g. 1..50")
      ->envname("COACHRES_SEED");
  simc->add_option("--out", sim_args.out_dir, "results root directory");
  simc->add_option("--experiment", sim_args.experiment, "experiment name");
  simc->add_option("--config", sim_args.config_path,
                   "JSON config; explicit flags override file values");
  simc->add_option("--q", sim_args.q, "rom sampling fraction (default 1/(2-delta))");
  simc->add_option("--theta", sim_args.theta, "theta policy scale");
  simc->add_option("--psi-threshold", sim_args.psi_threshold,
                   "a-priori planning threshold");
  simc->add_option("--lp-stride", sim_args.lp_stride,
                   "rom policies re-solve the LP every k-th arrival");
  simc->add_option("--block-length", sim_args.block_length,
                   "fcfs re-solve block length in steps (0 = one day)");
  simc->add_option("--time-limit", sim_args.time_limit,
                   "seconds per internal MIP solve");
  simc->add_option("--parallel", sim_args.parallel, "worker threads");
  simc->add_option("--resamples", sim_args.resamples, "bootstrap resamples");
  simc->add_flag("--no-exact", sim_args.no_exact,
                 "skip the exact offline baseline and metrics");
  simc->add_flag("--audit", sim_args.audit, "run fairness audits on each trace");

  // bounds ---------------------------------------------------------------
  auto* bnd = app.add_subcommand("bounds", "Closed-form guarantee table");
  double b_delta = 0.06;
  int b_coaches = 20, b_omega = 100, b_legs = 4;
  bnd->add_option("--delta", b_delta, "largest group fraction of capacity");
  bnd->add_option("--coaches", b_coaches, "number of coaches");
  bnd->add_option("--omega", b_omega, "uniform coach capacity");
  bnd->add_option("--legs", b_legs, "number of legs");

  // report ----------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "Render a metrics.json file");
  std::string rep_path = "runs/default/metrics.json";
  rep->add_option("--metrics", rep_path, "path to metrics.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Instance inst = resolve_instance(gen_builtin);
      if (gen_realize) inst = sim::generate_instance(inst, gen_seed);
      save_instance_file(inst, gen_out);
      std::cout << "wrote " << gen_out << " (" << inst.train.coach_count()
                << " coaches, " << inst.types.size() << " types, "
                << inst.arrivals.size() << " arrivals)\n";
      return 0;
    }
    if (off->parsed()) return run_offline(off_args);
    if (simc->parsed()) {
      apply_config_defaults(simc, sim_args.config_path);
      return run_simulate(sim_args);
    }
    if (bnd->parsed()) return run_bounds(b_delta, b_coaches, b_omega, b_legs);
    if (rep->parsed()) return run_report(rep_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
