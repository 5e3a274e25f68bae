#include "einn/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>

#include "einn/io.hpp"
#include "einn/rng.hpp"
#include "json.hpp"

namespace einn {

namespace {

using nlohmann::json;

constexpr std::uint64_t kEvalStream = 0x6576616c;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw SchemaError(key, "cannot parse '" + v + "'");
  return out;
}

ProblemKind parse_problem(const std::string& v) {
  if (v == "lamb_oseen") return ProblemKind::LambOseen;
  if (v == "barenblatt") return ProblemKind::Barenblatt;
  if (v == "ou") return ProblemKind::OrnsteinUhlenbeck;
  throw SchemaError("problem", "expected lamb_oseen, barenblatt or ou, got '" + v + "'");
}

MethodKind parse_method(const std::string& v) {
  if (v == "einn") return MethodKind::Einn;
  if (v == "drvn") return MethodKind::Drvn;
  if (v == "oracle") return MethodKind::Oracle;
  throw SchemaError("method", "expected einn, drvn or oracle, got '" + v + "'");
}

// key -> (setter, getter); `only` restricts a key to one problem
struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  std::vector<ProblemKind> only;
};

template <typename T>
Field number_field(T ExperimentConfig::*m, std::vector<ProblemKind> only = {}) {
  return {nullptr, [m](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*m);
            } else {
              return std::to_string(c.*m);
            }
          },
          std::move(only)};
}

template <typename T>
Field train_field(T TrainConfig::*m) {
  return {nullptr, [m](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.train.*m);
            } else {
              return std::to_string(c.train.*m);
            }
          },
          {}};
}

const std::vector<std::pair<std::string, Field>>& schema() {
  using P = ProblemKind;
  static const std::vector<std::pair<std::string, Field>> fields = [] {
    std::vector<std::pair<std::string, Field>> f;
    auto num = [&](const char* key, auto member, std::vector<ProblemKind> only = {}) {
      using T = std::remove_reference_t<decltype(std::declval<ExperimentConfig&>().*member)>;
      Field fd = number_field<T>(member, only);
      fd.set = [member, k = std::string(key)](ExperimentConfig& c, const std::string& v) {
        c.*member = parse_number<T>(k, v);
      };
      f.emplace_back(key, fd);
    };
    auto tr = [&](const char* key, auto member) {
      using T = std::remove_reference_t<decltype(std::declval<TrainConfig&>().*member)>;
      Field fd = train_field<T>(member);
      fd.set = [member, k = std::string(key)](ExperimentConfig& c, const std::string& v) {
        c.train.*member = parse_number<T>(k, v);
      };
      f.emplace_back(key, fd);
    };
    f.emplace_back("method", Field{[](ExperimentConfig& c, const std::string& v) {
                                     c.method = parse_method(v);
                                   },
                                   [](const ExperimentConfig& c) {
                                     return std::string(method_name(c.method));
                                   },
                                   {}});
    num("nu", &ExperimentConfig::nu, {P::LambOseen, P::OrnsteinUhlenbeck});
    num("t0", &ExperimentConfig::t0, {P::LambOseen, P::Barenblatt});
    num("horizon", &ExperimentConfig::horizon);
    num("dim", &ExperimentConfig::dim, {P::OrnsteinUhlenbeck});
    num("stiffness", &ExperimentConfig::stiffness, {P::OrnsteinUhlenbeck});
    num("sigma0", &ExperimentConfig::sigma0, {P::OrnsteinUhlenbeck});
    num("hidden_layers", &ExperimentConfig::hidden_layers);
    num("width", &ExperimentConfig::width);
    tr("iterations", &TrainConfig::iterations);
    tr("minibatch", &TrainConfig::minibatch);
    tr("batch_N", &TrainConfig::batch_N);
    tr("lr", &TrainConfig::lr);
    tr("adam_beta1", &TrainConfig::adam_beta1);
    tr("adam_beta2", &TrainConfig::adam_beta2);
    tr("adam_eps", &TrainConfig::adam_eps);
    tr("steps", &TrainConfig::steps);
    tr("seed", &TrainConfig::seed);
    tr("checkpoint_every", &TrainConfig::checkpoint_every);
    f.emplace_back("adjoint", Field{[](ExperimentConfig& c, const std::string& v) {
                                      if (v == "discrete") {
                                        c.train.scheme = AdjointScheme::Discrete;
                                      } else if (v == "continuous") {
                                        c.train.scheme = AdjointScheme::Continuous;
                                      } else {
                                        throw SchemaError("adjoint",
                                                          "expected discrete or continuous");
                                      }
                                    },
                                    [](const ExperimentConfig& c) {
                                      return std::string(c.train.scheme == AdjointScheme::Discrete
                                                             ? "discrete"
                                                             : "continuous");
                                    },
                                    {}});
    tr("time_samples", &TrainConfig::time_samples);
    num("drvn_steps", &ExperimentConfig::drvn_steps);
    num("box_half_width", &ExperimentConfig::box_half_width);
    num("grid_per_axis", &ExperimentConfig::grid_per_axis);
    num("eval_every", &ExperimentConfig::eval_every);
    num("eval_batch_N", &ExperimentConfig::eval_batch_N);
    num("eval_times", &ExperimentConfig::eval_times);
    num("kl_trajectories", &ExperimentConfig::kl_trajectories);
    num("energy_samples", &ExperimentConfig::energy_samples);
    num("loss_window", &ExperimentConfig::loss_window);
    f.emplace_back("out_dir", Field{[](ExperimentConfig& c, const std::string& v) {
                                      if (v.empty()) throw SchemaError("out_dir", "must not be empty");
                                      c.out_dir = v;
                                    },
                                    [](const ExperimentConfig& c) { return c.out_dir.string(); },
                                    {}});
    return f;
  }();
  return fields;
}

bool applies(const Field& f, ProblemKind p) {
  return f.only.empty() || std::find(f.only.begin(), f.only.end(), p) != f.only.end();
}

double trailing_mean(const std::vector<TrainLogRow>& log, int window) {
  if (log.empty()) return std::numeric_limits<double>::quiet_NaN();
  const size_t n = std::min(log.size(), static_cast<size_t>(std::max(window, 1)));
  double s = 0.0;
  for (size_t i = log.size() - n; i < log.size(); ++i) s += log[i].loss;
  return s / static_cast<double>(n);
}

void fill_summary(CheckpointMetrics& m) {
  if (!m.q.empty()) {
    ErrorCurve c;
    c.times = m.times;
    c.values = m.q;
    m.q_time_avg = time_averaged_error(c);
    m.q_final = m.q.back();
  } else {
    m.q_time_avg = m.q_final = std::numeric_limits<double>::quiet_NaN();
  }
  m.kl_sup = m.kl.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : *std::max_element(m.kl.begin(), m.kl.end());
}

void cloud_metrics(const ExperimentConfig& cfg, const ProblemSpec& spec,
                   const std::vector<ParticleCloud>& clouds, CheckpointMetrics& m) {
  const std::uint64_t seed = derive_seed(cfg.train.seed, kEvalStream);
  if (spec.kernel.kind != KernelKind::Zero) {
    m.q = error_curve(spec, clouds, cfg.box(), cfg.grid_per_axis).values;
  }
  // the Coulomb potential needs d >= 2
  if (cfg.energy_samples > 0 && spec.dim >= 2) {
    for (size_t k = 0; k < clouds.size(); ++k) {
      const Eigen::Index n = std::min<Eigen::Index>(cfg.energy_samples, clouds[k].ys.cols());
      if (n < 2) break;
      m.energy.push_back(modulated_energy(clouds[k].ys.leftCols(n), spec.reference, clouds[k].t,
                                          cfg.energy_samples, derive_seed(seed, 100 + k)));
    }
  }
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num_or_null(x));
  return a;
}

std::string csv_num(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

const char* problem_name(ProblemKind p) {
  switch (p) {
    case ProblemKind::LambOseen: return "lamb_oseen";
    case ProblemKind::Barenblatt: return "barenblatt";
    case ProblemKind::OrnsteinUhlenbeck: return "ou";
  }
  return "?";
}

const char* method_name(MethodKind m) {
  switch (m) {
    case MethodKind::Einn: return "einn";
    case MethodKind::Drvn: return "drvn";
    case MethodKind::Oracle: return "oracle";
  }
  return "?";
}

std::string library_version() { return "0.1.0"; }

ExperimentConfig ExperimentConfig::defaults_for(ProblemKind p) {
  ExperimentConfig c;
  c.problem = p;
  switch (p) {
    case ProblemKind::LambOseen:
      break;
    case ProblemKind::Barenblatt:
      c.nu = 0.0;
      c.dim = 3;
      c.box_half_width = 0.1;
      c.grid_per_axis = 21;
      break;
    case ProblemKind::OrnsteinUhlenbeck:
      c.nu = 0.5;
      c.dim = 1;
      c.sigma0 = 0.5;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const char* field, const char* what) {
    if (!ok) throw SchemaError(field, what);
  };
  need(horizon > 0.0 && std::isfinite(horizon), "horizon", "must be positive");
  need(hidden_layers >= 1, "hidden_layers", "must be >= 1");
  need(width >= 1, "width", "must be >= 1");
  if (problem == ProblemKind::LambOseen) {
    need(nu > 0.0, "nu", "must be positive for lamb_oseen");
    need(dim == 2, "dim", "lamb_oseen is two-dimensional");
  }
  if (problem == ProblemKind::Barenblatt) {
    need(nu == 0.0, "nu", "barenblatt has no diffusion");
    need(dim == 3, "dim", "barenblatt is three-dimensional");
  }
  if (problem != ProblemKind::OrnsteinUhlenbeck) need(t0 > 0.0, "t0", "must be positive");
  if (problem == ProblemKind::OrnsteinUhlenbeck) {
    need(dim >= 1 && dim <= 8, "dim", "must lie in [1, 8]");
    need(nu > 0.0, "nu", "must be positive");
    need(stiffness > 0.0, "stiffness", "must be positive");
    need(sigma0 > 0.0, "sigma0", "must be positive");
  }
  need(nu >= 0.0, "nu", "must be >= 0");
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    const std::string w = e.what();
    throw SchemaError(w.substr(0, w.find(':')), w.substr(w.find(':') + 2));
  }
  need(drvn_steps >= 1, "drvn_steps", "must be >= 1");
  need(horizon / drvn_steps <= kMaxSdeStep * (1.0 + 1e-12), "drvn_steps", "step T/drvn_steps exceeds 0.05");
  need(box_half_width > 0.0, "box_half_width", "must be positive");
  need(grid_per_axis >= 2, "grid_per_axis", "must be >= 2");
  need(eval_every >= 0, "eval_every", "must be >= 0");
  need(eval_batch_N >= 2, "eval_batch_N", "must be >= 2");
  need(eval_times >= 1, "eval_times", "must be >= 1");
  need(train.steps % eval_times == 0, "eval_times", "must divide steps");
  if (method == MethodKind::Drvn) {
    need(drvn_steps % eval_times == 0, "eval_times", "must divide drvn_steps");
    need(train.batch_N >= 2, "batch_N", "drvn needs at least two particles");
  }
  need(kl_trajectories >= 1, "kl_trajectories", "must be >= 1");
  need(energy_samples == 0 || energy_samples >= 2, "energy_samples", "must be 0 or >= 2");
  need(loss_window >= 1, "loss_window", "must be >= 1");
  need(!out_dir.empty(), "out_dir", "must not be empty");
}

ProblemSpec ExperimentConfig::problem_spec() const {
  switch (problem) {
    case ProblemKind::LambOseen: return ProblemSpec::lamb_oseen(nu, t0, horizon);
    case ProblemKind::Barenblatt: return ProblemSpec::barenblatt(t0, horizon);
    case ProblemKind::OrnsteinUhlenbeck:
      return ProblemSpec::ornstein_uhlenbeck(dim, nu, stiffness, sigma0, horizon);
  }
  throw std::logic_error("problem_spec: unknown problem");
}

Arch ExperimentConfig::arch() const { return Arch::mlp(dim, hidden_layers, width); }

DomainBox ExperimentConfig::box() const { return DomainBox::cube(dim, box_half_width); }

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SchemaError("line " + std::to_string(lineno), "expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw SchemaError("line " + std::to_string(lineno), "empty key");
    if (!kv.emplace(key, value).second) throw SchemaError(key, "duplicate key");
  }
  const auto p = kv.find("problem");
  if (p == kv.end()) throw SchemaError("problem", "required field is missing");
  ExperimentConfig c = ExperimentConfig::defaults_for(parse_problem(p->second));
  kv.erase(p);
  for (const auto& [key, value] : kv) {
    const auto& fields = schema();
    const auto it = std::find_if(fields.begin(), fields.end(),
                                 [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) throw SchemaError(key, "unknown key");
    if (!applies(it->second, c.problem)) {
      throw SchemaError(key, std::string("not used by problem ") + problem_name(c.problem));
    }
    it->second.set(c, value);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw SchemaError("config", e.what());
  }
  return parse_config(text);
}

std::string echo_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "problem = " << problem_name(c.problem) << '\n';
  for (const auto& [key, f] : schema()) {
    if (applies(f, c.problem)) os << key << " = " << f.get(c) << '\n';
  }
  return os.str();
}

CheckpointMetrics evaluate_field(const ExperimentConfig& cfg, const VelocityField& field,
                                 int iteration, double loss) {
  const ProblemSpec spec = cfg.problem_spec();
  const std::uint64_t seed = derive_seed(cfg.train.seed, kEvalStream);
  CheckpointMetrics m;
  m.iteration = iteration;
  m.loss = loss;
  m.times = even_times(spec.horizon, cfg.eval_times);
  const auto clouds =
      evolve_particles(field, spec, cfg.eval_batch_N, derive_seed(seed, 1), cfg.train.steps, m.times);
  cloud_metrics(cfg, spec, clouds, m);
  const KlCurve kl =
      kl_estimate(field, spec, cfg.kl_trajectories, derive_seed(seed, 2), cfg.train.steps, m.times);
  m.kl = kl.values;
  m.escaped = kl.escaped;
  fill_summary(m);
  return m;
}

CheckpointMetrics evaluate_drift(const ExperimentConfig& cfg, const VelocityField& drift,
                                 int iteration, double loss) {
  const ProblemSpec spec = cfg.problem_spec();
  const std::uint64_t seed = derive_seed(cfg.train.seed, kEvalStream);
  CheckpointMetrics m;
  m.iteration = iteration;
  m.loss = loss;
  m.times = even_times(spec.horizon, cfg.eval_times);
  const auto clouds =
      drvn_clouds(drift, spec, cfg.eval_batch_N, derive_seed(seed, 3), cfg.drvn_steps, m.times);
  cloud_metrics(cfg, spec, clouds, m);
  fill_summary(m);
  return m;
}

std::string format_metrics_csv(const std::vector<CheckpointMetrics>& rows) {
  std::ostringstream os;
  os << "checkpoint,t,Q,KL,F,escaped_count\n";
  for (const CheckpointMetrics& m : rows) {
    for (size_t k = 0; k < m.times.size(); ++k) {
      os << m.iteration << ',' << format_double(m.times[k]) << ','
         << (k < m.q.size() ? csv_num(m.q[k]) : "") << ','
         << (k < m.kl.size() ? csv_num(m.kl[k]) : "") << ','
         << (k < m.energy.size() ? csv_num(m.energy[k]) : "") << ','
         << (k < m.escaped.size() ? std::to_string(m.escaped[k]) : "") << '\n';
    }
  }
  return os.str();
}

namespace {

json report_json(const ExperimentReport& r) {
  const ExperimentConfig& c = r.config;
  json j;
  j["version"] = library_version();
  j["problem"] = problem_name(c.problem);
  j["method"] = method_name(c.method);
  j["config"] = echo_config(c);
  j["seeds"] = {{"train", c.train.seed}, {"eval", derive_seed(c.train.seed, kEvalStream)}};
  j["wall_seconds"] = r.wall_seconds;
  j["iterations"] = r.log.size();
  j["skipped_steps"] = r.skipped_steps;
  json losses = json::array();
  for (const TrainLogRow& row : r.log) losses.push_back(num_or_null(row.loss));
  j["loss_history"] = losses;
  json cps = json::array();
  for (const CheckpointMetrics& m : r.checkpoints) {
    cps.push_back({{"iteration", m.iteration},
                   {"loss", num_or_null(m.loss)},
                   {"times", vec_json(m.times)},
                   {"Q", vec_json(m.q)},
                   {"KL", vec_json(m.kl)},
                   {"F", vec_json(m.energy)},
                   {"escaped", m.escaped},
                   {"q_time_avg", num_or_null(m.q_time_avg)},
                   {"q_final", num_or_null(m.q_final)},
                   {"kl_sup", num_or_null(m.kl_sup)}});
  }
  j["checkpoints"] = cps;
  const CheckpointMetrics* last = r.checkpoints.empty() ? nullptr : &r.checkpoints.back();
  j["q_time_avg"] = last ? num_or_null(last->q_time_avg) : json(nullptr);
  j["q_final"] = last ? num_or_null(last->q_final) : json(nullptr);
  j["kl_curve"] = last ? vec_json(last->kl) : json::array();
  j["files"] = {{"config", "config.txt"},
                {"train_log", "train_log.csv"},
                {"metrics", "metrics.csv"},
                {"plots", {"loss.svg", "q.svg", "kl.svg"}}};
  return j;
}

void write_plots(const ExperimentReport& r) {
  std::vector<double> it, loss;
  for (const TrainLogRow& row : r.log) {
    it.push_back(row.iteration);
    loss.push_back(row.loss);
  }
  std::vector<PlotSeries> ls;
  if (!loss.empty()) {
    ls.push_back({"loss", it, loss});
    ls.push_back({"smoothed", it, smooth(loss, r.config.loss_window)});
  }
  write_file_atomic(r.dir / "loss.svg", line_chart_svg("training loss", "iteration", "loss", ls, true));
  std::vector<PlotSeries> qs, ks;
  for (const CheckpointMetrics& m : r.checkpoints) {
    const std::string name = "iter " + std::to_string(m.iteration);
    if (!m.q.empty()) qs.push_back({name, m.times, m.q});
    if (!m.kl.empty()) ks.push_back({name, m.times, m.kl});
  }
  write_file_atomic(r.dir / "q.svg", line_chart_svg("relative error Q(t)", "t", "Q", qs));
  write_file_atomic(r.dir / "kl.svg", line_chart_svg("KL estimate", "t", "KL", ks));
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const ProblemSpec spec = cfg.problem_spec();
  ExperimentReport rep;
  rep.config = cfg;
  rep.dir = cfg.out_dir;
  std::filesystem::create_directories(rep.dir);
  write_file_atomic(rep.dir / "config.txt", echo_config(cfg));

  if (cfg.method == MethodKind::Oracle) {
    const OracleField oracle(spec.reference);
    const double loss = loss_and_grad(oracle, spec, cfg.train, 0).loss;
    rep.checkpoints.push_back(evaluate_field(cfg, oracle, 0, loss));
    write_file_atomic(rep.dir / "train_log.csv", format_train_log(rep.log));
  } else {
    const bool drvn = cfg.method == MethodKind::Drvn;
    TrainConfig tc = cfg.train;
    if (drvn) tc.steps = cfg.drvn_steps;
    auto eval = [&](int it, const NetParams& p, double loss) {
      const NetField f(p);
      rep.checkpoints.push_back(drvn ? evaluate_drift(cfg, f, it, loss)
                                     : evaluate_field(cfg, f, it, loss));
    };
    TrainOutput out;
    out.dir = rep.dir;
    out.eval_every = cfg.eval_every;
    out.on_eval = [&](int it, const NetParams& p, const std::vector<TrainLogRow>& log) {
      eval(it, p, trailing_mean(log, cfg.loss_window));
    };
    const NetParams init = init_params(cfg.arch(), cfg.train.seed);
    const TrainResult tr =
        drvn ? train_drvn(spec, init, tc, out) : train(spec, init, tc, out);
    rep.log = tr.log;
    rep.skipped_steps = tr.skipped_steps;
    if (rep.checkpoints.empty() || rep.checkpoints.back().iteration != tc.iterations) {
      double loss = trailing_mean(rep.log, cfg.loss_window);
      if (rep.log.empty()) {
        const NetField f(tr.params);
        loss = drvn ? drvn_loss_and_grad(f, spec, tc, 0).loss : loss_and_grad(f, spec, tc, 0).loss;
      }
      eval(tc.iterations, tr.params, loss);
    }
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_file_atomic(rep.dir / "metrics.csv", format_metrics_csv(rep.checkpoints));
  write_plots(rep);
  write_file_atomic(rep.dir / "report.json", report_json(rep).dump(2) + "\n");
  return rep;
}

std::vector<CompareRow> compare_reports(const std::vector<std::filesystem::path>& reports) {
  if (reports.size() < 2) throw std::invalid_argument("compare: need at least two reports");
  std::vector<CompareRow> rows;
  for (const auto& path : reports) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw std::invalid_argument("compare: " + path.string() + " is not a report: " + e.what());
    }
    CompareRow r;
    r.path = path.string();
    r.problem = j.value("problem", "");
    r.method = j.value("method", "");
    if (!j.contains("q_time_avg") || j["q_time_avg"].is_null()) {
      throw std::invalid_argument("compare: " + r.path + " has no Q values");
    }
    r.q_time_avg = j["q_time_avg"].get<double>();
    r.q_final = j["q_final"].get<double>();
    if (!rows.empty() && rows.front().problem != r.problem) {
      throw std::invalid_argument("compare: reports are on different problems (" +
                                  rows.front().problem + " vs " + r.problem + ")");
    }
    rows.push_back(r);
  }
  return rows;
}

std::string format_compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "path,problem,method,time_avg_Q,final_Q\n";
  for (const CompareRow& r : rows) {
    os << r.path << ',' << r.problem << ',' << r.method << ',' << format_double(r.q_time_avg)
       << ',' << format_double(r.q_final) << '\n';
  }
  return os.str();
}

std::string line_chart_svg(const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<PlotSeries>& series,
                           bool log_y) {
  const double w = 640, h = 400, ml = 70, mr = 120, mt = 40, mb = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  for (const PlotSeries& s : series) {
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!(x1 >= x0)) x0 = 0, x1 = 1;
  if (!(y1 >= y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (ty(y) - y0) / (y1 - y0) * (h - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream os;
  char buf[128];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << escape_xml(title)
     << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  std::snprintf(buf, sizeof buf, "%.3g", x0);
  os << "<text x=\"" << ml << "\" y=\"" << h - mb + 15 << "\" text-anchor=\"middle\">" << buf << "</text>\n";
  std::snprintf(buf, sizeof buf, "%.3g", x1);
  os << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 15 << "\" text-anchor=\"middle\">" << buf << "</text>\n";
  std::snprintf(buf, sizeof buf, "%.3g", log_y ? std::pow(10.0, y0) : y0);
  os << "<text x=\"" << ml - 5 << "\" y=\"" << h - mb << "\" text-anchor=\"end\">" << buf << "</text>\n";
  std::snprintf(buf, sizeof buf, "%.3g", log_y ? std::pow(10.0, y1) : y1);
  os << "<text x=\"" << ml - 5 << "\" y=\"" << mt + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
  os << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">"
     << escape_xml(xlabel) << "</text>\n";
  os << "<text x=\"15\" y=\"" << (mt + h - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
     << (mt + h - mb) / 2 << ")\">" << escape_xml(ylabel) << "</text>\n";
  for (size_t k = 0; k < series.size(); ++k) {
    const PlotSeries& s = series[k];
    const char* col = colors[k % 10];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0)) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[i]), py(s.y[i]));
      os << buf;
    }
    os << "\"/>\n";
    os << "<text x=\"" << w - mr + 8 << "\" y=\"" << mt + 14 * (k + 1) << "\" fill=\"" << col
       << "\">" << escape_xml(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace einn
