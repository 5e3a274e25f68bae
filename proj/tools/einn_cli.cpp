#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "einn/experiment.hpp"
#include "einn/gradcheck.hpp"
#include "einn/io.hpp"

using namespace einn;

namespace {

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed,
            std::optional<std::string> out_dir) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(path);
    if (seed) cfg.train.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    cfg.validate();
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  const ExperimentReport r = run_experiment(cfg);
  std::printf("%s/%s: %zu iterations in %.1f s\n", problem_name(cfg.problem),
              method_name(cfg.method), r.log.size(), r.wall_seconds);
  if (!r.checkpoints.empty()) {
    const CheckpointMetrics& m = r.checkpoints.back();
    std::printf("final checkpoint %d: loss %.6g  Q avg %.6g  Q(T) %.6g  sup KL %.6g\n",
                m.iteration, m.loss, m.q_time_avg, m.q_final, m.kl_sup);
  }
  std::printf("report: %s\n", (r.dir / "report.json").string().c_str());
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& out_dir) {
  std::vector<std::filesystem::path> ps(paths.begin(), paths.end());
  std::vector<CompareRow> rows;
  try {
    rows = compare_reports(ps);
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  std::filesystem::create_directories(out_dir);
  const auto out = std::filesystem::path(out_dir) / "compare.csv";
  write_file_atomic(out, format_compare_csv(rows));
  std::printf("%-12s %-8s %14s %14s  %s\n", "problem", "method", "time-avg Q", "final Q", "report");
  for (const CompareRow& r : rows) {
    std::printf("%-12s %-8s %14.6g %14.6g  %s\n", r.problem.c_str(), r.method.c_str(),
                r.q_time_avg, r.q_final, r.path.c_str());
  }
  std::printf("summary: %s\n", out.string().c_str());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int configs) {
  const auto start = std::chrono::steady_clock::now();
  const GradcheckSuite s = run_gradcheck_suite(configs, seed);
  std::printf("scalar benchmark: discrete %.12f continuous %.12f (exact 1)\n", s.scalar.discrete,
              s.scalar.continuous);
  for (const GradcheckResult& c : s.cases) {
    std::printf("%-12s seed %llu coords %d redraws %d max rel err %.3e %s\n", c.kernel.c_str(),
                static_cast<unsigned long long>(c.seed_used), c.coords, c.redraws, c.max_rel_err,
                c.passed ? "ok" : "FAIL");
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("gradcheck %s in %.1f s\n", s.passed ? "passed" : "FAILED", secs);
  return s.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EINN solver for McKean-Vlasov equations"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  auto* run = app.add_subcommand("run", "train and evaluate one experiment");
  std::string config;
  run->add_option("config", config, "config file")->required();
  run->add_option("--seed", seed, "override the seed");
  run->add_option("--out-dir", out_dir, "override the output directory");

  auto* compare = app.add_subcommand("compare", "tabulate Q across reports");
  std::vector<std::string> reports;
  std::string compare_out = ".";
  compare->add_option("reports", reports, "report.json files")->required();
  compare->add_option("--out-dir", compare_out, "where compare.csv goes");

  auto* grad = app.add_subcommand("gradcheck", "adjoint finite-difference suite");
  std::uint64_t grad_seed = 0;
  int configs = 24;
  grad->add_option("--seed", grad_seed, "suite seed");
  grad->add_option("--configs", configs, "random network configurations")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(config, seed, out_dir);
    if (*compare) return cmd_compare(reports, compare_out);
    if (*grad) return cmd_gradcheck(grad_seed, configs);
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
