#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "rtopt/dose_functions.hpp"
#include "rtopt/error.hpp"
#include "rtopt/generator.hpp"
#include "rtopt/partitioner.hpp"
#include "rtopt/plan_quality.hpp"
#include "rtopt/problem_io.hpp"
#include "rtopt/solver.hpp"

namespace rtopt::cli {

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string hex(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  for (auto b : bytes) {
    s += digits[b >> 4];
    s += digits[b & 0xf];
  }
  return s;
}

TransportKind parse_transport(const std::string& s) {
  return s == "socket" ? TransportKind::Socket : TransportKind::InProcess;
}

class OutputFile {
 public:
  OutputFile(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_.open(path);
      if (!file_) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

struct EngineFlags {
  std::uint32_t workers = 0;
  std::string transport = "inproc";
  std::string listen = "127.0.0.1:0";
  bool no_spawn = false;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--workers,-k", workers, "Follower count K (0 = serial)");
    cmd.add_option("--transport", transport, "Follower transport")
        ->check(CLI::IsMember({"inproc", "socket"}));
    cmd.add_option("--listen", listen, "Leader address for socket followers, host:port");
    cmd.add_flag("--no-spawn", no_spawn, "Wait for externally started socket followers");
  }

  std::unique_ptr<EvalEngine> start(std::shared_ptr<const TreatmentProblem> problem, const std::string& problem_path,
                                    const CliEnv& env, std::ostream& err) const {
    EngineOptions opts;
    opts.transport = parse_transport(transport);
    opts.socket.worker_executable = env.worker_executable.empty() ? self_executable() : env.worker_executable;
    opts.socket.problem_path = problem_path;
    opts.socket.listen = listen;
    opts.socket.spawn_workers = !no_spawn;
    if (no_spawn) {
      opts.socket.connect_timeout = std::chrono::minutes(10);
      opts.socket.on_listening = [&err](std::uint16_t port) { err << "listening on port " << port << std::endl; };
    }
    const auto assignment = partition_problem(*problem, workers);
    return start_workers(std::move(problem), assignment, opts);
  }
};

/// --problem file, or a generated problem from --seed when no file is given.
struct ProblemSource {
  std::string path;
  std::uint64_t seed = 0;

  void add_to(CLI::App& cmd, bool required) {
    auto* opt = cmd.add_option("--problem,-p", path, "Problem file");
    if (required) {
      opt->required();
    } else {
      cmd.add_option("--seed", seed, "Generate the default problem from this seed when --problem is absent");
    }
  }

  std::shared_ptr<const TreatmentProblem> load() const {
    if (!path.empty()) return std::make_shared<const TreatmentProblem>(load_problem(path));
    GeneratorConfig cfg;
    cfg.seed = seed;
    return std::make_shared<const TreatmentProblem>(generate(cfg));
  }
};

std::vector<double> load_x(const TreatmentProblem& problem, const std::string& path, double uniform) {
  std::vector<double> x = path.empty() ? std::vector<double>(problem.num_vars, uniform) : load_vector(path);
  if (x.size() != problem.num_vars) {
    throw Error(ErrorCode::DimensionMismatch, "x has " + std::to_string(x.size()) + " entries, problem has " +
                                                  std::to_string(problem.num_vars) + " variables");
  }
  return x;
}

void print_problem_summary(std::ostream& out, const TreatmentProblem& p) {
  std::vector<std::string> terms(p.rois.size());
  auto note = [&](const FunctionSpec& s, const char* role) {
    if (!s.roi) return;
    auto& t = terms[*s.roi];
    if (!t.empty()) t += ' ';
    t += std::string(role) + ':' + std::string(to_string(s.kind()));
  };
  for (const auto& s : p.objectives) note(s, "obj");
  for (const auto& s : p.constraints) note(s, "con");
  out << std::left << std::setw(8) << "roi" << std::setw(14) << "kind" << std::right << std::setw(10) << "voxels"
      << std::setw(10) << "nnz" << "  terms\n";
  std::uint64_t total_nnz = 0;
  for (std::size_t r = 0; r < p.rois.size(); ++r) {
    const auto& roi = p.rois[r];
    total_nnz += roi.matrix.nnz();
    out << std::left << std::setw(8) << roi.name << std::setw(14) << to_string(roi.kind) << std::right
        << std::setw(10) << roi.voxel_count() << std::setw(10) << roi.matrix.nnz() << "  " << terms[r] << '\n';
  }
  out << "num_vars " << p.num_vars << ", rois " << p.rois.size() << ", objectives " << p.objectives.size()
      << ", constraints " << p.constraints.size() << ", nnz " << total_nnz << '\n';
}

int cmd_generate(const GeneratorConfig& cfg, const std::string& out_path, std::ostream& out) {
  const auto problem = generate(cfg);
  const auto bytes = serialize_problem(problem);
  write_file(out_path, bytes);
  print_problem_summary(out, problem);
  out << "sha256 " << hex(problem_hash(problem)) << '\n';
  return kExitOk;
}

int cmd_partition(const ProblemSource& src, std::uint32_t workers, const std::string& out_path, std::ostream& out) {
  if (workers == 0) throw Error(ErrorCode::ConfigError, "partition needs --workers >= 1");
  const auto problem = src.load();
  const auto a = partition_problem(*problem, workers);
  OutputFile file(out_path, out);
  auto& csv = file.get();
  csv << "family,term,roi,kind,nnz,worker\n";
  auto dump = [&](const char* family, const std::vector<FunctionSpec>& specs, const Partition& part) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = specs[i];
      csv << family << ',' << i << ',' << (s.roi ? problem->rois[*s.roi].name : std::string("-")) << ','
          << to_string(s.kind()) << ',' << term_nnz(*problem, s) << ',' << part.owner[i] << '\n';
    }
  };
  dump("objective", problem->objectives, a.objectives);
  dump("constraint", problem->constraints, a.constraints);

  out << "worker,objective_terms,objective_nnz,constraint_terms,constraint_nnz\n";
  for (std::uint32_t w = 0; w < workers; ++w) {
    out << w << ',' << a.objectives.items_of(w).size() << ',' << a.objectives.load[w] << ','
        << a.constraints.items_of(w).size() << ',' << a.constraints.load[w] << '\n';
  }
  out << "objective_discrepancy " << a.objectives.discrepancy() << ", constraint_discrepancy "
      << a.constraints.discrepancy() << '\n';
  return kExitOk;
}

int cmd_evaluate(const ProblemSource& src, const EngineFlags& engine_flags, const std::string& x_path, double uniform,
                 const std::string& out_path, const CliEnv& env, std::ostream& out, std::ostream& err) {
  const auto problem = src.load();
  const auto x = load_x(*problem, x_path, uniform);
  auto engine = engine_flags.start(problem, src.path, env, err);
  const auto r = engine->evaluate(x, true);
  engine->shutdown();
  double grad_norm = 0.0;
  for (double g : r.objective_grad) grad_norm = std::max(grad_norm, std::abs(g));
  OutputFile file(out_path, out);
  auto& csv = file.get();
  csv << "quantity,index,value\n";
  csv << "objective,," << g17(r.objective) << '\n';
  csv << "objective_grad_inf_norm,," << g17(grad_norm) << '\n';
  for (std::size_t i = 0; i < r.constraint_values.size(); ++i) {
    csv << "constraint," << i << ',' << g17(r.constraint_values[i]) << '\n';
  }
  return kExitOk;
}

struct OptimizeFlags {
  std::uint64_t iters = 3000;
  double grad_tol = 1e-6;
  double viol_tol = 1e-4;
  std::string x_out;
  std::string log_out;
  std::string x0;
};

int cmd_optimize(const ProblemSource& src, const EngineFlags& engine_flags, const OptimizeFlags& f,
                 const CliEnv& env, std::ostream& out, std::ostream& err) {
  const auto problem = src.load();
  SolverConfig cfg;
  cfg.max_iterations = f.iters;
  cfg.grad_tolerance = f.grad_tol;
  cfg.violation_tolerance = f.viol_tol;
  if (!f.x0.empty()) cfg.initial_x = load_x(*problem, f.x0, 0.0);
  validate(cfg);
  auto engine = engine_flags.start(problem, src.path, env, err);
  const auto result = solve(*problem, *engine, cfg);
  const auto timing = engine->shutdown();

  if (!f.x_out.empty()) save_vector(result.x, f.x_out);
  if (!f.log_out.empty()) {
    OutputFile file(f.log_out, out);
    write_iteration_log_csv(file.get(), result.log);
  }
  out << "status " << to_string(result.status) << '\n'
      << "iterations " << result.iterations << '\n'
      << "objective " << g17(result.objective) << '\n'
      << "merit " << g17(result.merit) << '\n'
      << "max_violation " << g17(result.max_violation) << '\n'
      << "penalty " << g17(result.penalty) << '\n'
      << "wall_seconds " << g9(result.wall_seconds) << '\n'
      << "solver_seconds " << g9(result.solver_seconds) << '\n'
      << "eval_seconds " << g9(result.eval_seconds) << '\n';
  for (std::size_t w = 0; w < timing.workers.size(); ++w) {
    const auto& t = timing.workers[w];
    out << "worker " << w << " matvec_seconds " << g9(t.matvec_seconds) << " function_seconds "
        << g9(t.function_seconds) << " wait_seconds " << g9(t.wait_seconds) << '\n';
  }
  return kExitOk;
}

struct DvhFlags {
  std::string x_path;
  std::string compare_path;
  std::string label = "plan";
  std::string compare_label = "reference";
  std::size_t grid_points = 200;
  std::string out_path;
  std::string metrics_path;
};

int cmd_dvh(const ProblemSource& src, const DvhFlags& f, std::ostream& out) {
  const auto problem = src.load();
  const auto x = load_x(*problem, f.x_path, 0.0);
  std::vector<LabeledCurves> plans;
  plans.push_back({f.label, dvh(*problem, x, f.grid_points)});
  if (!f.compare_path.empty()) {
    const auto other = load_x(*problem, f.compare_path, 0.0);
    // Both plans on one grid so the rows line up.
    auto a = dvh(*problem, x, f.grid_points);
    auto b = dvh(*problem, other, f.grid_points);
    const double upper = std::max(a.front().dose_grid.back(), b.front().dose_grid.back());
    const auto grid = dose_grid(upper, f.grid_points);
    plans.clear();
    LabeledCurves pa{f.label, {}};
    LabeledCurves pb{f.compare_label, {}};
    for (std::size_t r = 0; r < problem->rois.size(); ++r) {
      const auto& roi = problem->rois[r];
      pa.curves.push_back(dvh_curve(roi.name, matvec(roi.matrix, x), grid));
      pb.curves.push_back(dvh_curve(roi.name, matvec(roi.matrix, other), grid));
    }
    plans.push_back(std::move(pa));
    plans.push_back(std::move(pb));
  }
  OutputFile file(f.out_path, out);
  write_dvh_csv(file.get(), plans);
  if (!f.metrics_path.empty()) {
    OutputFile metrics(f.metrics_path, out);
    const auto m = plan_metrics(*problem, x);
    write_metrics_csv(metrics.get(), m);
  }
  return kExitOk;
}

int cmd_bench(const ProblemSource& src, const BenchConfig& base, const std::string& transport,
              const std::string& out_path, const CliEnv& env, std::ostream& out) {
  const auto problem = src.load();
  BenchConfig cfg = base;
  cfg.transport = parse_transport(transport);
  cfg.worker_executable = env.worker_executable.empty() ? self_executable() : env.worker_executable;
  cfg.problem_path = src.path;
  const auto rows = run_bench(*problem, cfg);
  OutputFile file(out_path, out);
  write_bench_csv(file.get(), rows);
  return kExitOk;
}

int cmd_worker(const std::string& connect, const std::string& problem_path) {
  const auto problem = load_problem(problem_path);
  return run_socket_worker(connect, problem);
}

}  // namespace

std::string self_executable() {
  std::error_code ec;
  auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot resolve the running executable: " + ec.message());
  return p.string();
}

std::vector<BenchRow> run_bench(const TreatmentProblem& problem, const BenchConfig& cfg) {
  if (cfg.repeats == 0) throw Error(ErrorCode::ConfigError, "repeats must be >= 1");
  std::vector<std::uint32_t> ks = cfg.workers;
  if (std::find(ks.begin(), ks.end(), 0u) == ks.end()) ks.insert(ks.begin(), 0u);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  auto shared = std::make_shared<const TreatmentProblem>(problem);
  SolverConfig solver_cfg;
  solver_cfg.max_iterations = cfg.iterations;
  solver_cfg.grad_tolerance = 0.0;
  solver_cfg.log_every = std::max<std::uint64_t>(cfg.iterations, 1);

  EngineOptions opts;
  opts.transport = cfg.transport;
  opts.socket.worker_executable = cfg.worker_executable;
  opts.socket.problem_path = cfg.problem_path;

  std::vector<BenchRow> rows;
  for (std::uint32_t k : ks) {
    auto engine = start_workers(shared, partition_problem(problem, k), opts);
    BenchRow row;
    row.workers = k;
    row.repeats = cfg.repeats;
    std::vector<double> walls;
    double eval_sum = 0.0;
    double solver_sum = 0.0;
    for (std::uint32_t rep = 0; rep <= cfg.repeats; ++rep) {
      const auto r = solve(problem, *engine, solver_cfg);
      if (rep == 0) continue;  // warm-up
      walls.push_back(r.wall_seconds);
      eval_sum += r.eval_seconds;
      solver_sum += r.solver_seconds;
      row.iterations = r.iterations;
    }
    engine->shutdown();
    const double n = static_cast<double>(walls.size());
    for (double w : walls) row.wall_mean += w / n;
    double var = 0.0;
    for (double w : walls) var += (w - row.wall_mean) * (w - row.wall_mean);
    row.wall_std = walls.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    row.eval_mean = eval_sum / n;
    row.solver_mean = solver_sum / n;
    rows.push_back(row);
  }
  const BenchRow& serial = rows.front();
  for (auto& row : rows) {
    row.amdahl_seconds = amdahl_predict(serial.solver_mean, serial.eval_mean, row.workers);
    row.speedup = serial.wall_mean / row.wall_mean;
  }
  return rows;
}

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out << "workers,repeats,iterations,wall_mean,wall_std,eval_mean,solver_mean,amdahl_seconds,speedup\n";
  for (const auto& r : rows) {
    out << r.workers << ',' << r.repeats << ',' << r.iterations << ',' << g9(r.wall_mean) << ','
        << g9(r.wall_std) << ',' << g9(r.eval_mean) << ',' << g9(r.solver_mean) << ',' << g9(r.amdahl_seconds)
        << ',' << g9(r.speedup) << '\n';
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnv& env) {
  CLI::App app{"Distributed radiotherapy plan optimization", "rtopt"};
  app.require_subcommand(1);

  GeneratorConfig gen;
  std::string gen_out;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic problem file");
  generate_cmd->add_option("--seed", gen.seed, "Random seed");
  generate_cmd->add_option("--num-vars", gen.num_vars, "Beamlet count");
  generate_cmd->add_option("--num-rois", gen.num_rois, "ROI count");
  generate_cmd->add_option("--nnz-min", gen.nnz_min, "Smallest per-ROI nnz");
  generate_cmd->add_option("--nnz-max", gen.nnz_max, "Largest per-ROI nnz");
  generate_cmd->add_option("--fraction-constraints", gen.fraction_constraints, "Share of organs with a constraint");
  generate_cmd->add_option("--dose-scale", gen.dose_scale, "Target prescription, Gy");
  generate_cmd->add_option("--out,-o", gen_out, "Output problem file")->required();

  ProblemSource part_src;
  std::uint32_t part_workers = 0;
  std::string part_out;
  auto* partition_cmd = app.add_subcommand("partition", "Split terms across workers");
  part_src.add_to(*partition_cmd, false);
  partition_cmd->add_option("--workers,-k", part_workers, "Worker count")->required();
  partition_cmd->add_option("--out,-o", part_out, "Per-term owner CSV (default stdout)");

  ProblemSource eval_src;
  EngineFlags eval_engine;
  std::string eval_x;
  double eval_uniform = 0.0;
  std::string eval_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate objective and constraints at one point");
  eval_src.add_to(*evaluate_cmd, false);
  eval_engine.add_to(*evaluate_cmd);
  evaluate_cmd->add_option("--x", eval_x, "Point to evaluate (binary vector file)");
  evaluate_cmd->add_option("--uniform", eval_uniform, "Uniform point used when --x is absent");
  evaluate_cmd->add_option("--out,-o", eval_out, "Output CSV (default stdout)");

  ProblemSource opt_src;
  EngineFlags opt_engine;
  OptimizeFlags opt;
  auto* optimize_cmd = app.add_subcommand("optimize", "Solve a problem");
  opt_src.add_to(*optimize_cmd, false);
  opt_engine.add_to(*optimize_cmd);
  optimize_cmd->add_option("--iters", opt.iters, "Iteration budget");
  optimize_cmd->add_option("--grad-tol", opt.grad_tol, "Projected gradient tolerance");
  optimize_cmd->add_option("--viol-tol", opt.viol_tol, "Constraint violation tolerance");
  optimize_cmd->add_option("--x0", opt.x0, "Initial point (binary vector file)");
  optimize_cmd->add_option("--out,-o", opt.x_out, "Final x (binary vector file)");
  optimize_cmd->add_option("--log", opt.log_out, "Iteration log CSV");

  ProblemSource dvh_src;
  DvhFlags dvh_flags;
  auto* dvh_cmd = app.add_subcommand("dvh", "Dose-volume histograms of a plan");
  dvh_src.add_to(*dvh_cmd, false);
  dvh_cmd->add_option("--x", dvh_flags.x_path, "Plan (binary vector file)")->required();
  dvh_cmd->add_option("--compare", dvh_flags.compare_path, "Second plan written alongside");
  dvh_cmd->add_option("--label", dvh_flags.label, "Label of the plan");
  dvh_cmd->add_option("--compare-label", dvh_flags.compare_label, "Label of the second plan");
  dvh_cmd->add_option("--grid-points", dvh_flags.grid_points, "Dose levels per curve")->check(CLI::Range(2, 1000000));
  dvh_cmd->add_option("--out,-o", dvh_flags.out_path, "DVH CSV (default stdout)");
  dvh_cmd->add_option("--metrics", dvh_flags.metrics_path, "Per-ROI min/max/mean dose CSV");

  ProblemSource bench_src;
  BenchConfig bench;
  std::string bench_transport = "inproc";
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "Time fixed-budget solves per worker count");
  bench_src.add_to(*bench_cmd, false);
  bench_cmd->add_option("--workers,-k", bench.workers, "Worker counts")->delimiter(',');
  bench_cmd->add_option("--repeats", bench.repeats, "Timed runs per worker count")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--iters", bench.iterations, "Iterations per run");
  bench_cmd->add_option("--transport", bench_transport, "Follower transport")
      ->check(CLI::IsMember({"inproc", "socket"}));
  bench_cmd->add_option("--out,-o", bench_out, "Report CSV (default stdout)");

  std::string worker_connect;
  std::string worker_problem;
  auto* worker_cmd = app.add_subcommand("worker", "");
  worker_cmd->group("");
  worker_cmd->add_option("--connect", worker_connect, "Leader address host:port")->required();
  worker_cmd->add_option("--problem", worker_problem, "Problem file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*generate_cmd) return cmd_generate(gen, gen_out, out);
    if (*partition_cmd) return cmd_partition(part_src, part_workers, part_out, out);
    if (*evaluate_cmd) return cmd_evaluate(eval_src, eval_engine, eval_x, eval_uniform, eval_out, env, out, err);
    if (*optimize_cmd) return cmd_optimize(opt_src, opt_engine, opt, env, out, err);
    if (*dvh_cmd) return cmd_dvh(dvh_src, dvh_flags, out);
    if (*bench_cmd) return cmd_bench(bench_src, bench, bench_transport, bench_out, env, out);
    if (*worker_cmd) return cmd_worker(worker_connect, worker_problem);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace rtopt::cli
