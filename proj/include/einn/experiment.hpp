#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "einn/drvn.hpp"
#include "einn/metrics.hpp"
#include "einn/training.hpp"

namespace einn {

/// Config schema violation; `field` names the offending key.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field(std::move(field)) {}
  std::string field;
};

enum class ProblemKind { LambOseen, Barenblatt, OrnsteinUhlenbeck };
enum class MethodKind { Einn, Drvn, Oracle };

const char* problem_name(ProblemKind p);
const char* method_name(MethodKind m);

/// Everything one experiment needs. Parsed from a flat `key = value` file;
/// see README for the schema.
struct ExperimentConfig {
  ProblemKind problem = ProblemKind::LambOseen;
  MethodKind method = MethodKind::Einn;

  // problem
  double nu = 0.1;
  double t0 = 0.1;
  double horizon = 1.0;
  int dim = 2;             // ou only
  double stiffness = 1.0;  // ou only
  double sigma0 = 1.0;     // ou only

  // network
  int hidden_layers = 7;
  int width = 20;

  TrainConfig train;
  int drvn_steps = 100;  // Euler-Maruyama steps for drvn

  // metrics
  double box_half_width = 2.0;
  int grid_per_axis = 41;
  int eval_every = 500;
  int eval_batch_N = 4096;
  int eval_times = 10;  // intervals of [0, T]
  int kl_trajectories = 1000;
  int energy_samples = 512;  // 0 disables the modulated energy
  int loss_window = 100;

  std::filesystem::path out_dir = "einn_out";

  /// Problem defaults for the box and grid.
  static ExperimentConfig defaults_for(ProblemKind p);

  /// Throws SchemaError.
  void validate() const;
  ProblemSpec problem_spec() const;
  Arch arch() const;
  DomainBox box() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses `key = value` lines (`#` starts a comment). `problem` is required;
/// keys not given take the problem defaults. Throws SchemaError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config(echo_config(c)) == c.
std::string echo_config(const ExperimentConfig& c);

/// Metrics of one parameter snapshot.
struct CheckpointMetrics {
  int iteration = 0;
  double loss = 0.0;  // trailing mean of the training loss (window loss_window)
  std::vector<double> times;
  std::vector<double> q;           // empty when the problem has no convolution field
  std::vector<double> kl;          // empty for drvn
  std::vector<int> escaped;
  std::vector<double> energy;      // empty when disabled
  double q_time_avg = 0.0;
  double q_final = 0.0;
  double kl_sup = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<TrainLogRow> log;
  std::vector<CheckpointMetrics> checkpoints;
  double wall_seconds = 0.0;
  int skipped_steps = 0;
  std::filesystem::path dir;
};

/// Metrics for a velocity field (einn, oracle) at iteration `iteration`.
CheckpointMetrics evaluate_field(const ExperimentConfig& cfg, const VelocityField& field,
                                 int iteration, double loss);
/// Metrics for a drift network (drvn).
CheckpointMetrics evaluate_drift(const ExperimentConfig& cfg, const VelocityField& drift,
                                 int iteration, double loss);

/// Runs the experiment and writes report.json, train_log.csv, metrics.csv,
/// config.txt, checkpoints/ and SVG plots into cfg.out_dir.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// checkpoint,t,Q,KL,F,escaped_count
std::string format_metrics_csv(const std::vector<CheckpointMetrics>& rows);

struct CompareRow {
  std::string path;
  std::string problem;
  std::string method;
  double q_time_avg = 0.0;
  double q_final = 0.0;
};

/// Reads at least two reports on the same problem. Throws std::invalid_argument.
std::vector<CompareRow> compare_reports(const std::vector<std::filesystem::path>& reports);
/// path,problem,method,time_avg_Q,final_Q
std::string format_compare_csv(const std::vector<CompareRow>& rows);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal SVG line chart.
std::string line_chart_svg(const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<PlotSeries>& series,
                           bool log_y = false);

std::string library_version();

}  // namespace einn
