#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "last/data.hpp"
#include "last/error.hpp"
#include "last/greedy.hpp"
#include "last/learners.hpp"
#include "last/numerics.hpp"
#include "last/param_teachers.hpp"
#include "last/rng.hpp"
#include "last/teacher_net.hpp"

namespace last {

// ---------------------------------------------------------------------------
// Experiment configuration: flat dotted-key/value file, strict keys.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // dataset.*
  std::string dataset_kind = "linreg";  // linreg | gaussian | halfmoon | mnist | pool
  std::size_t dataset_n = 800;
  std::size_t dataset_d = 4;
  std::size_t n_per_class = 400;
  double noise_sd = 0.02;
  double offset = 0.2;
  std::uint64_t data_seed = 1;
  std::string mnist_images, mnist_labels;
  std::vector<int> digits{3, 5};
  std::size_t proj_dim = 24;
  std::size_t subset = 1000;
  std::string pool_path;

  // learner.*
  std::string learner_kind = "lsr";  // lsr | lr | mclinear | mlp
  double lambda = 5e-5;
  bool bias = true;
  std::size_t hidden = 32;
  std::string activation = "leaky_relu";  // relu | leaky_relu
  double act_slope = 0.01;
  double eta0 = 1e-3;
  std::string schedule = "constant";  // constant | inverse_decay
  double eta_decay = 0.0;
  std::string init = "gaussian";  // zeros | gaussian | near_wstar
  double init_sd = 1.0;

  // teacher.*
  std::string teacher_kind = "sgd";
  // sgd | last | imt | mixed | et_gain | armijo | newton | checkpoint
  std::string constraint = "none";  // none | onehot | simplex | magnitude
  double radius = 0.5;
  int pnorm = 2;
  std::string anchor = "prediction";  // prediction | ground_truth
  double c1 = 1.0;
  double c2 = 0.5;
  double backtrack = 0.5;
  double alpha = 0.0;
  double beta = 1.0;
  std::size_t subsample = 0;
  std::string checkpoint;
  double alpha_residual = 1.0;

  // teacher.* training knobs (train-teacher kinds: unrolled | pg |
  // blast_unrolled | blast_pg)
  std::string arch = "128,128";  // hidden layer widths
  std::size_t episodes = 1000;
  std::size_t unroll = 20;
  std::size_t students = 10;
  double reset_rate = 0.2;
  double adam_lr = 1e-3;
  double adam_wd = 1e-4;
  double learner_eta = 5e-4;
  std::size_t horizon = 100;
  double gamma = 0.999;
  double pg_baseline = -0.1;
  double decay = 0.95;
  std::string action_space = "augmented";  // augmented | onehot
  std::string mu_grid = "0.5,0.625,0.75,0.875,1.0";
  std::string p_source = "uniform";  // uniform | prediction
  std::string reward = "accuracy";   // accuracy | iterations
  double zeta = 0.9;
  std::size_t batch_r = 20;
  std::size_t batch_a = 20;
  double student_init_sd = 5e-2;
  std::size_t eval_steps = 300;
  std::size_t eval_every = 100;

  // run.*
  std::size_t iterations = 1000;
  double epsilon = 0.0;
  std::vector<std::uint64_t> seeds{1};
  std::size_t batch = 1;
  bool record_timing = true;  // off: timing columns written as 0 so the csv
                              // is bit-identical across reruns
  std::string out_dir = ".";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  const auto dots = v.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t lo = std::stoull(trim(v.substr(0, dots)));
    const std::uint64_t hi = std::stoull(trim(v.substr(dots + 2)));
    require(lo <= hi, "seed range is empty: " + v);
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  require(!seeds.empty(), "empty seed list: " + v);
  return seeds;
}

inline std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace detail

/// Assign one dotted key. Unknown keys or malformed values raise.
inline void config_set(ExperimentConfig& c, const std::string& key,
                       const std::string& value) {
  using detail::parse_int_list;
  using detail::parse_seed_list;
  static const std::set<std::string> bool_true{"1", "true", "yes", "on"};
  static const std::set<std::string> bool_false{"0", "false", "no", "off"};
  auto as_bool = [&](const std::string& v) {
    if (bool_true.count(v)) return true;
    if (bool_false.count(v)) return false;
    throw Error("config: boolean expected for " + key + ", got '" + v + "'");
  };
  try {
    if (key == "dataset.kind") c.dataset_kind = value;
    else if (key == "dataset.n") c.dataset_n = std::stoul(value);
    else if (key == "dataset.d") c.dataset_d = std::stoul(value);
    else if (key == "dataset.n_per_class") c.n_per_class = std::stoul(value);
    else if (key == "dataset.noise_sd") c.noise_sd = std::stod(value);
    else if (key == "dataset.offset") c.offset = std::stod(value);
    else if (key == "dataset.seed") c.data_seed = std::stoull(value);
    else if (key == "dataset.images") c.mnist_images = value;
    else if (key == "dataset.labels") c.mnist_labels = value;
    else if (key == "dataset.digits") c.digits = parse_int_list(value);
    else if (key == "dataset.proj_dim") c.proj_dim = std::stoul(value);
    else if (key == "dataset.subset") c.subset = std::stoul(value);
    else if (key == "dataset.pool") c.pool_path = value;
    else if (key == "learner.kind") c.learner_kind = value;
    else if (key == "learner.lambda") c.lambda = std::stod(value);
    else if (key == "learner.bias") c.bias = as_bool(value);
    else if (key == "learner.hidden") c.hidden = std::stoul(value);
    else if (key == "learner.activation") c.activation = value;
    else if (key == "learner.act_slope") c.act_slope = std::stod(value);
    else if (key == "learner.eta0") c.eta0 = std::stod(value);
    else if (key == "learner.schedule") c.schedule = value;
    else if (key == "learner.eta_decay") c.eta_decay = std::stod(value);
    else if (key == "learner.init") c.init = value;
    else if (key == "learner.init_sd") c.init_sd = std::stod(value);
    else if (key == "teacher.kind") c.teacher_kind = value;
    else if (key == "teacher.constraint") c.constraint = value;
    else if (key == "teacher.radius") c.radius = std::stod(value);
    else if (key == "teacher.p") c.pnorm = std::stoi(value);
    else if (key == "teacher.anchor") c.anchor = value;
    else if (key == "teacher.c1") c.c1 = std::stod(value);
    else if (key == "teacher.c2") c.c2 = std::stod(value);
    else if (key == "teacher.backtrack") c.backtrack = std::stod(value);
    else if (key == "teacher.alpha") c.alpha = std::stod(value);
    else if (key == "teacher.beta") c.beta = std::stod(value);
    else if (key == "teacher.subsample") c.subsample = std::stoul(value);
    else if (key == "teacher.checkpoint") c.checkpoint = value;
    else if (key == "teacher.alpha_residual") c.alpha_residual = std::stod(value);
    else if (key == "teacher.arch") c.arch = value;
    else if (key == "teacher.episodes") c.episodes = std::stoul(value);
    else if (key == "teacher.unroll") c.unroll = std::stoul(value);
    else if (key == "teacher.students") c.students = std::stoul(value);
    else if (key == "teacher.reset_rate") c.reset_rate = std::stod(value);
    else if (key == "teacher.adam_lr") c.adam_lr = std::stod(value);
    else if (key == "teacher.adam_wd") c.adam_wd = std::stod(value);
    else if (key == "teacher.learner_eta") c.learner_eta = std::stod(value);
    else if (key == "teacher.horizon") c.horizon = std::stoul(value);
    else if (key == "teacher.gamma") c.gamma = std::stod(value);
    else if (key == "teacher.baseline") c.pg_baseline = std::stod(value);
    else if (key == "teacher.decay") c.decay = std::stod(value);
    else if (key == "teacher.actions") c.action_space = value;
    else if (key == "teacher.mu_grid") c.mu_grid = value;
    else if (key == "teacher.p_source") c.p_source = value;
    else if (key == "teacher.reward") c.reward = value;
    else if (key == "teacher.zeta") c.zeta = std::stod(value);
    else if (key == "teacher.batch_r") c.batch_r = std::stoul(value);
    else if (key == "teacher.batch_a") c.batch_a = std::stoul(value);
    else if (key == "teacher.init_sd") c.student_init_sd = std::stod(value);
    else if (key == "teacher.eval_steps") c.eval_steps = std::stoul(value);
    else if (key == "teacher.eval_every") c.eval_every = std::stoul(value);
    else if (key == "run.iterations") c.iterations = std::stoul(value);
    else if (key == "run.epsilon") c.epsilon = std::stod(value);
    else if (key == "run.seeds") c.seeds = parse_seed_list(value);
    else if (key == "run.batch") c.batch = std::stoul(value);
    else if (key == "run.record_timing") c.record_timing = as_bool(value);
    else if (key == "run.out_dir") c.out_dir = value;
    else throw Error("config: unknown key '" + key + "'");
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error("config: bad value for " + key + ": '" + value + "'");
  }
}

/// key = value lines; '#' comments; unknown keys are errors.
inline ExperimentConfig parse_config(std::istream& in, const std::string& what) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, what + ":" + std::to_string(lineno) +
                                         ": expected key = value");
    config_set(cfg, detail::trim(line.substr(0, eq)),
               detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), "cannot open config file: " + path);
  return parse_config(in, path);
}

/// "key=value" override, last writer wins.
inline void apply_override(ExperimentConfig& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  require(eq != std::string::npos, "override must be key=value: " + kv);
  config_set(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
}

inline std::string render_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "dataset.kind = " << c.dataset_kind << "\n";
  if (c.dataset_kind == "linreg")
    os << "dataset.n = " << c.dataset_n << "\ndataset.d = " << c.dataset_d
       << "\ndataset.noise_sd = " << c.noise_sd << "\n";
  if (c.dataset_kind == "gaussian")
    os << "dataset.n_per_class = " << c.n_per_class << "\ndataset.d = " << c.dataset_d
       << "\ndataset.offset = " << c.offset << "\n";
  if (c.dataset_kind == "halfmoon")
    os << "dataset.n_per_class = " << c.n_per_class
       << "\ndataset.noise_sd = " << c.noise_sd << "\n";
  if (c.dataset_kind == "mnist") {
    os << "dataset.images = " << c.mnist_images
       << "\ndataset.labels = " << c.mnist_labels << "\ndataset.digits = ";
    for (std::size_t i = 0; i < c.digits.size(); ++i)
      os << (i ? "," : "") << c.digits[i];
    os << "\ndataset.proj_dim = " << c.proj_dim << "\ndataset.subset = " << c.subset
       << "\n";
  }
  if (c.dataset_kind == "pool") os << "dataset.pool = " << c.pool_path << "\n";
  os << "dataset.seed = " << c.data_seed << "\n";
  os << "learner.kind = " << c.learner_kind << "\nlearner.lambda = " << c.lambda
     << "\nlearner.bias = " << (c.bias ? "true" : "false")
     << "\nlearner.eta0 = " << c.eta0 << "\nlearner.schedule = " << c.schedule
     << "\nlearner.init = " << c.init << "\nlearner.init_sd = " << c.init_sd << "\n";
  if (c.learner_kind == "mlp")
    os << "learner.hidden = " << c.hidden << "\nlearner.activation = " << c.activation
       << "\n";
  os << "teacher.kind = " << c.teacher_kind
     << "\nteacher.constraint = " << c.constraint << "\n";
  if (c.constraint == "magnitude")
    os << "teacher.radius = " << c.radius << "\nteacher.p = " << c.pnorm
       << "\nteacher.anchor = " << c.anchor << "\n";
  if (c.teacher_kind == "et_gain") os << "teacher.c1 = " << c.c1 << "\n";
  if (c.teacher_kind == "armijo")
    os << "teacher.c2 = " << c.c2 << "\nteacher.backtrack = " << c.backtrack << "\n";
  if (c.teacher_kind == "newton") os << "teacher.alpha = " << c.alpha << "\n";
  if (c.teacher_kind == "checkpoint")
    os << "teacher.checkpoint = " << c.checkpoint
       << "\nteacher.alpha_residual = " << c.alpha_residual << "\n";
  const bool train_kind = c.teacher_kind == "unrolled" || c.teacher_kind == "pg" ||
                          c.teacher_kind == "blast_unrolled" ||
                          c.teacher_kind == "blast_pg";
  if (train_kind) {
    os << "teacher.arch = " << c.arch << "\nteacher.episodes = " << c.episodes
       << "\nteacher.students = " << c.students
       << "\nteacher.adam_lr = " << c.adam_lr << "\nteacher.adam_wd = " << c.adam_wd
       << "\nteacher.learner_eta = " << c.learner_eta
       << "\nteacher.init_sd = " << c.student_init_sd
       << "\nteacher.eval_steps = " << c.eval_steps << "\n";
    if (c.teacher_kind == "unrolled" || c.teacher_kind == "blast_unrolled")
      os << "teacher.unroll = " << c.unroll
         << "\nteacher.reset_rate = " << c.reset_rate
         << "\nteacher.decay = " << c.decay << "\n";
    if (c.teacher_kind == "pg")
      os << "teacher.horizon = " << c.horizon << "\nteacher.gamma = " << c.gamma
         << "\nteacher.baseline = " << c.pg_baseline
         << "\nteacher.actions = " << c.action_space << "\n";
    if (c.teacher_kind == "blast_unrolled")
      os << "teacher.alpha_residual = " << c.alpha_residual
         << "\nteacher.batch_r = " << c.batch_r
         << "\nteacher.batch_a = " << c.batch_a << "\n";
    if (c.teacher_kind == "blast_pg")
      os << "teacher.horizon = " << c.horizon << "\nteacher.mu_grid = " << c.mu_grid
         << "\nteacher.p_source = " << c.p_source
         << "\nteacher.reward = " << c.reward << "\nteacher.zeta = " << c.zeta
         << "\n";
  }
  os << "run.iterations = " << c.iterations << "\nrun.epsilon = " << c.epsilon
     << "\nrun.batch = " << c.batch << "\nrun.seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? "," : "") << c.seeds[i];
  os << "\nrun.out_dir = " << c.out_dir << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Pools and targets from a config
// ---------------------------------------------------------------------------

inline Pool build_pool(const ExperimentConfig& cfg) {
  if (cfg.dataset_kind == "linreg") {
    SeededRng rng(cfg.data_seed + 0x77);
    const Vec wgen = rng.normal_vec(cfg.dataset_d + 1);
    return gen_linreg(cfg.dataset_n, cfg.dataset_d, wgen, cfg.noise_sd, cfg.data_seed);
  }
  if (cfg.dataset_kind == "gaussian")
    return gen_gaussian_clusters(cfg.n_per_class, cfg.dataset_d, cfg.offset,
                                 cfg.data_seed);
  if (cfg.dataset_kind == "halfmoon")
    return gen_half_moon(cfg.n_per_class, cfg.noise_sd, cfg.data_seed);
  if (cfg.dataset_kind == "mnist") {
    require(!cfg.mnist_images.empty() && !cfg.mnist_labels.empty(),
            "dataset.images and dataset.labels are required for mnist");
    return load_mnist_projected(cfg.mnist_images, cfg.mnist_labels,
                                std::set<int>(cfg.digits.begin(), cfg.digits.end()),
                                cfg.proj_dim, cfg.data_seed, cfg.subset);
  }
  if (cfg.dataset_kind == "pool") return load_pool(cfg.pool_path);
  throw Error("unknown dataset.kind: " + cfg.dataset_kind);
}

/// Feature vector with the bias coordinate appended when enabled.
inline Vec with_bias(const Vec& x, bool bias) {
  if (!bias) return x;
  Vec a = x;
  a.push_back(1.0);
  return a;
}

/// Pool with the constant-1 bias coordinate appended to every feature.
inline Pool augment_bias(const Pool& pool) {
  Pool out = pool;
  out.d = pool.d + 1;
  for (auto& e : out.examples) e.x.push_back(1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

/// Ridge solution of the pool regression problem by normal equations:
/// (X'X/n + lambda M) w = X'y/n, with the bias coordinate unregularized.
inline Vec lsr_wstar(const Pool& pool, double lambda, bool bias) {
  const std::size_t d = pool.d + (bias ? 1 : 0);
  Mat H(d, d);
  Vec rhs(d, 0.0);
  for (const auto& e : pool.examples) {
    const Vec x = with_bias(e.x, bias);
    for (std::size_t a = 0; a < d; ++a) {
      rhs[a] += x[a] * e.y[0] / double(pool.size());
      for (std::size_t b = 0; b < d; ++b)
        H(a, b) += x[a] * x[b] / double(pool.size());
    }
  }
  const std::size_t reg = bias ? d - 1 : d;
  for (std::size_t a = 0; a < reg; ++a) H(a, a) += lambda;
  try {
    return solve_spd(H, rhs);
  } catch (const Error&) {
    throw Error("lsr_wstar: singular normal equations (no regularization?)");
  }
}

/// Full-batch gradient descent with Armijo backtracking until the
/// gradient norm drops below tol.
inline Vec descend_full_batch(const std::function<double(const Vec&)>& f,
                              const std::function<Vec(const Vec&)>& grad, Vec w,
                              double tol = 1e-8, std::size_t max_iters = 200000) {
  double step = 1.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Vec g = grad(w);
    const double gn = norm2(g);
    if (gn < tol) return w;
    const double fw = f(w);
    double s = step;
    for (int bt = 0; bt < 60; ++bt, s *= 0.5) {
      Vec cand = w;
      axpy(cand, -s, g);
      if (f(cand) <= fw - 1e-4 * s * gn * gn) {
        w = std::move(cand);
        step = s * 2.0;
        break;
      }
    }
  }
  throw Error("descend_full_batch: did not reach the gradient tolerance");
}

/// Teaching target for linear learners: ridge normal equations for LSR,
/// full-batch descent to |grad| < 1e-8 for LR / multiclass.
inline Vec compute_wstar(const Pool& pool, LearnerKind kind, double lambda, bool bias,
                         std::size_t classes = 2) {
  const std::size_t d = pool.d + (bias ? 1 : 0);
  if (kind == LearnerKind::Lsr) return lsr_wstar(pool, lambda, bias);
  const std::size_t wlen = kind == LearnerKind::MulticlassLinear ? d * classes : d;
  const std::size_t reg_dims =
      bias ? (kind == LearnerKind::MulticlassLinear ? wlen : d - 1) : SIZE_MAX;
  TeachCtx ctx{kind, lambda, classes, reg_dims};
  auto label_of = [&](std::size_t i) {
    if (kind == LearnerKind::MulticlassLinear && pool.label_kind == LabelKind::BinaryPm1)
      return pool.onehot2(i);
    return pool.examples[i].y;
  };
  auto f = [&](const Vec& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i)
      s += ctx.loss(with_bias(pool.examples[i].x, bias), label_of(i), w) /
           double(pool.size());
    return s;
  };
  auto g = [&](const Vec& w) {
    Vec s(w.size(), 0.0);
    for (std::size_t i = 0; i < pool.size(); ++i)
      axpy(s, 1.0 / double(pool.size()),
           ctx.grad(with_bias(pool.examples[i].x, bias), label_of(i), w));
    return s;
  };
  return descend_full_batch(f, g, Vec(wlen, 0.0));
}

/// Reference MLP weights: the endpoint of a fixed-seed full-batch
/// training run (3000 iterations, step 0.5).
inline std::pair<Mat, Mat> compute_mlp_wstar(const Pool& pool, std::size_t hidden,
                                             double lambda, Activation act,
                                             double slope, std::uint64_t seed) {
  const std::size_t d = pool.d, K = pool.classes == 1 ? 2 : pool.classes;
  SeededRng rng(seed);
  Mat V(d, hidden, rng.normal_vec(d * hidden, 0.0, std::sqrt(2.0 / double(d))));
  Mat W(hidden, K, rng.normal_vec(hidden * K, 0.0, std::sqrt(2.0 / double(hidden))));
  auto label_of = [&](std::size_t i) {
    if (pool.label_kind == LabelKind::BinaryPm1) return pool.onehot2(i);
    return pool.examples[i].y;
  };
  for (int it = 0; it < 3000; ++it) {
    Mat gV(d, hidden), gW(hidden, K);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const MlpGrads g =
          mlp_grad_raw(pool.examples[i].x, label_of(i), V, W, act, slope, lambda);
      for (std::size_t k = 0; k < gV.a.size(); ++k)
        gV.a[k] += g.dV.a[k] / double(pool.size());
      for (std::size_t k = 0; k < gW.a.size(); ++k)
        gW.a[k] += g.dW.a[k] / double(pool.size());
    }
    for (std::size_t k = 0; k < V.a.size(); ++k) V.a[k] -= 0.5 * gV.a[k];
    for (std::size_t k = 0; k < W.a.size(); ++k) W.a[k] -= 0.5 * gW.a[k];
  }
  return {V, W};
}

// ---------------------------------------------------------------------------
// Convergence traces
// ---------------------------------------------------------------------------

struct TraceRow {
  std::size_t t = 0;
  double objective = 0.0;
  double dist = 0.0;
  double acc = 0.0;  // nan for regression
  double teacher_micros = 0.0;
  double learner_micros = 0.0;
  std::size_t example_id = 0;
  Vec label;
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;
  std::size_t label_len = 1;

  Vec dist_curve() const {
    Vec d;
    d.reserve(rows.size());
    for (const auto& r : rows) d.push_back(r.dist);
    return d;
  }
  Vec objective_curve() const {
    Vec d;
    for (const auto& r : rows) d.push_back(r.objective);
    return d;
  }
};

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// RFC-4180 field quoting (our fields are numeric, but the writer stays
/// compliant for arbitrary header names).
inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    out += ch;
    if (ch == '"') out += '"';
  }
  out += '"';
  return out;
}

inline void write_trace_csv(const ConvergenceTrace& trace, const std::string& path) {
  std::ofstream out(path);
  require(bool(out), "cannot write csv: " + path);
  out << "t,objective,dist,acc,micros,teacher_micros,learner_micros,example_id";
  for (std::size_t k = 0; k < trace.label_len; ++k) out << ",label" << k;
  out << "\r\n";
  for (const auto& r : trace.rows) {
    out << r.t << ',' << csv_quote(format_g17(r.objective)) << ','
        << csv_quote(format_g17(r.dist)) << ',' << csv_quote(format_g17(r.acc)) << ','
        << csv_quote(format_g17(r.teacher_micros + r.learner_micros)) << ','
        << csv_quote(format_g17(r.teacher_micros)) << ','
        << csv_quote(format_g17(r.learner_micros)) << ',' << r.example_id;
    for (std::size_t k = 0; k < trace.label_len; ++k)
      out << ',' << csv_quote(format_g17(k < r.label.size() ? r.label[k] : 0.0));
    out << "\r\n";
  }
  require(bool(out), "csv write failed: " + path);
}

inline ConvergenceTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), "cannot open csv: " + path);
  std::string line;
  require(bool(std::getline(in, line)), "empty csv: " + path);
  ConvergenceTrace trace;
  trace.label_len = 0;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ','))
      if (detail::trim(col).rfind("label", 0) == 0) ++trace.label_len;
  }
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    require(cols.size() == 8 + trace.label_len, "malformed csv row in " + path);
    TraceRow r;
    r.t = std::stoul(cols[0]);
    r.objective = std::strtod(cols[1].c_str(), nullptr);
    r.dist = std::strtod(cols[2].c_str(), nullptr);
    r.acc = std::strtod(cols[3].c_str(), nullptr);
    r.teacher_micros = std::strtod(cols[5].c_str(), nullptr);
    r.learner_micros = std::strtod(cols[6].c_str(), nullptr);
    r.example_id = std::stoul(cols[7]);
    for (std::size_t k = 0; k < trace.label_len; ++k)
      r.label.push_back(std::strtod(cols[8 + k].c_str(), nullptr));
    trace.rows.push_back(std::move(r));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// run_teaching: draw -> synthesize -> update -> record
// ---------------------------------------------------------------------------

namespace detail {

inline LabelConstraint constraint_from(const ExperimentConfig& cfg) {
  if (cfg.constraint == "none") return LabelConstraint::none();
  if (cfg.constraint == "onehot") return LabelConstraint::one_hot();
  if (cfg.constraint == "simplex") return LabelConstraint::simplex();
  if (cfg.constraint == "magnitude") {
    const auto anchor = cfg.anchor == "ground_truth"
                            ? LabelConstraint::Anchor::GroundTruth
                            : LabelConstraint::Anchor::Prediction;
    const int p = cfg.pnorm == -1 ? 0 : cfg.pnorm;
    return LabelConstraint::magnitude(cfg.radius, anchor, p);
  }
  throw Error("unknown teacher.constraint: " + cfg.constraint);
}

inline LearnerKind learner_kind_from(const std::string& s) {
  if (s == "lsr") return LearnerKind::Lsr;
  if (s == "lr") return LearnerKind::Lr;
  if (s == "mclinear") return LearnerKind::MulticlassLinear;
  if (s == "mlp") return LearnerKind::Mlp2;
  throw Error("unknown learner.kind: " + s);
}

}  // namespace detail

/// Pre-flight teacher/learner compatibility validation.
inline void validate_run(const ExperimentConfig& cfg) {
  const LearnerKind kind = detail::learner_kind_from(cfg.learner_kind);
  const std::string& t = cfg.teacher_kind;
  static const std::set<std::string> known{"sgd",    "last",   "imt",
                                           "mixed",  "et_gain", "armijo",
                                           "newton", "checkpoint"};
  require(known.count(t), "unknown teacher.kind: " + t);
  if (t == "newton")
    require(kind == LearnerKind::Lsr, "teacher.kind=newton requires learner.kind=lsr");
  if (t == "et_gain" || t == "armijo")
    require(kind == LearnerKind::Lsr || kind == LearnerKind::Lr,
            "teacher.kind=" + t + " requires a scalar-label learner");
  if (t == "imt" || t == "mixed")
    require(kind != LearnerKind::Mlp2,
            "teacher.kind=" + t + " is not defined for the mlp learner");
  if (t == "checkpoint")
    require(!cfg.checkpoint.empty(), "teacher.kind=checkpoint needs teacher.checkpoint");
  if (kind == LearnerKind::Mlp2)
    require(t == "sgd" || t == "last", "mlp learner supports teacher sgd or last");
  require(cfg.batch >= 1, "run.batch must be >= 1");
  require(!cfg.seeds.empty(), "run.seeds must not be empty");
}

namespace detail {

struct MicroTimer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double us() const {
    return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() -
                                                     t0)
        .count();
  }
};

}  // namespace detail

/// One seeded teaching run. The pool and target are computed by the
/// caller so paired arms share them.
inline ConvergenceTrace run_teaching(const ExperimentConfig& cfg, const Pool& pool,
                                     const Vec& wstar_flat, std::uint64_t seed,
                                     const Mat* Vstar = nullptr,
                                     const Mat* Wstar = nullptr) {
  validate_run(cfg);
  const LearnerKind kind = detail::learner_kind_from(cfg.learner_kind);
  const bool is_mlp = kind == LearnerKind::Mlp2;
  const bool bias = cfg.bias && !is_mlp;
  const std::size_t d = pool.d + (bias ? 1 : 0);
  const std::size_t K = pool.classes == 1 ? 2 : pool.classes;
  const Activation act =
      cfg.activation == "relu" ? Activation::Relu : Activation::LeakyRelu;

  StepSchedule sched{cfg.schedule == "inverse_decay" ? StepSchedule::Kind::InverseDecay
                                                     : StepSchedule::Kind::Constant,
                     cfg.eta0, cfg.eta_decay};
  const LabelConstraint constraint = detail::constraint_from(cfg);
  const std::size_t wlen = kind == LearnerKind::MulticlassLinear ? d * K : d;
  const std::size_t reg_dims =
      bias ? (kind == LearnerKind::MulticlassLinear ? wlen : d - 1) : SIZE_MAX;
  TeachCtx ctx{kind, cfg.lambda, K, reg_dims};

  const Pool pool_aug = bias ? augment_bias(pool) : Pool();
  const Pool& P = bias ? pool_aug : pool;

  SeededRng rng(seed);
  // learner init
  Vec w;
  Mat V, W;
  if (is_mlp) {
    require(Vstar && Wstar, "run_teaching: mlp runs need reference weights");
    SeededRng init(seed ^ 0x1234);
    if (cfg.init == "near_wstar") {
      V = *Vstar;
      W = *Wstar;
      for (auto& v : V.a) v += cfg.init_sd * init.normal();
      for (auto& v : W.a) v += cfg.init_sd * init.normal();
    } else {
      V = Mat(pool.d, cfg.hidden,
              init.normal_vec(pool.d * cfg.hidden, 0.0,
                              std::sqrt(2.0 / double(pool.d))));
      W = Mat(cfg.hidden, K,
              init.normal_vec(cfg.hidden * K, 0.0, std::sqrt(2.0 / double(cfg.hidden))));
    }
  } else {
    SeededRng init(seed ^ 0x1234);
    if (cfg.init == "zeros") w.assign(wlen, 0.0);
    else if (cfg.init == "near_wstar") {
      w = wstar_flat;
      for (auto& v : w) v += cfg.init_sd * init.normal();
    } else {
      w = init.normal_vec(wlen, 0.0, cfg.init_sd);
    }
  }

  // trained-teacher labeler, if any
  TeacherNet net;
  ParamLearnerSpec pspec;
  Labeler ckpt_labeler;
  if (cfg.teacher_kind == "checkpoint") {
    require(!is_mlp, "checkpoint teachers support linear learners");
    net = load_teacher(cfg.checkpoint);
    pspec.kind = kind == LearnerKind::Lsr ? LearnerKind::Lsr
                                          : LearnerKind::MulticlassLinear;
    pspec.d = d;
    pspec.K = K;
    pspec.lambda = cfg.lambda;
    const bool omniscient =
        net.input_dim() == omniscient_state_dim(pspec, /*include_target=*/true);
    ckpt_labeler = teacher_labeler(net, pspec, omniscient ? &wstar_flat : nullptr,
                                   cfg.alpha_residual);
  }

  auto label_of = [&](std::size_t i) -> Vec {
    if (kind == LearnerKind::Lsr || kind == LearnerKind::Lr)
      return P.examples[i].y;
    if (P.label_kind == LabelKind::BinaryPm1) return P.onehot2(i);
    return P.examples[i].y;
  };

  auto flat_mlp = [&](const Mat& A, const Mat& B) {
    Vec f = B.a;
    f.insert(f.end(), A.a.begin(), A.a.end());
    return f;
  };
  Vec mlp_star_flat;
  if (is_mlp) mlp_star_flat = flat_mlp(*Vstar, *Wstar);

  auto pool_objective = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      if (is_mlp) {
        s += mlp_grad_raw(P.examples[i].x, label_of(i), V, W, act, cfg.act_slope,
                          cfg.lambda)
                 .loss /
             double(P.size());
      } else {
        s += ctx.loss(P.examples[i].x, label_of(i), w) / double(P.size());
      }
    }
    return s;
  };
  auto pool_acc = [&]() -> double {
    if (P.label_kind == LabelKind::Regression)
      return std::numeric_limits<double>::quiet_NaN();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      const Example& e = P.examples[i];
      bool ok = false;
      if (is_mlp) {
        const MlpForward f = mlp_forward(e.x, V, W, act, cfg.act_slope);
        std::size_t p = 0;
        for (std::size_t k = 1; k < f.logits.size(); ++k)
          if (f.logits[k] > f.logits[p]) p = k;
        const Vec yt = label_of(i);
        std::size_t truth = 0;
        for (std::size_t k = 1; k < yt.size(); ++k)
          if (yt[k] > yt[truth]) truth = k;
        ok = p == truth;
      } else if (kind == LearnerKind::Lr) {
        const double m = dot(w, e.x);
        ok = (m >= 0 ? 1.0 : -1.0) == e.y[0];
      } else if (kind == LearnerKind::MulticlassLinear) {
        const Vec logits = mclinear_logits(w, K, e.x);
        std::size_t p = 0;
        for (std::size_t k = 1; k < K; ++k)
          if (logits[k] > logits[p]) p = k;
        const Vec yt = label_of(i);
        std::size_t truth = 0;
        for (std::size_t k = 1; k < yt.size(); ++k)
          if (yt[k] > yt[truth]) truth = k;
        ok = p == truth;
      } else {
        return std::numeric_limits<double>::quiet_NaN();
      }
      if (ok) ++correct;
    }
    return double(correct) / double(P.size());
  };
  auto distance = [&]() {
    if (is_mlp) return dist2(flat_mlp(V, W), mlp_star_flat);
    return dist2(w, wstar_flat);
  };

  ConvergenceTrace trace;
  trace.label_len =
      (kind == LearnerKind::Lsr || kind == LearnerKind::Lr) ? 1 : K;

  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const double eta = sched.at(t - 1);
    TraceRow row;
    row.t = t;

    detail::MicroTimer teacher_clock;
    std::size_t idx = 0;
    Vec y;
    bool weight_update_done = false;
    Vec w_direct;  // for weight-space teachers

    if (cfg.teacher_kind == "imt") {
      const Selection sel =
          imt_select(P, w, wstar_flat, eta, ctx,
                     cfg.subsample ? std::optional<std::size_t>(cfg.subsample)
                                   : std::nullopt,
                     &rng);
      idx = sel.index;
      y = label_of(idx);
    } else if (cfg.teacher_kind == "mixed") {
      auto [i, lbl] = mixed_teach_step(P, w, wstar_flat, eta, ctx, constraint);
      idx = i;
      y = std::move(lbl);
    } else {
      idx = rng.uniform_index(P.size());
      const Example& e = P.examples[idx];
      const Vec yt = label_of(idx);
      if (cfg.teacher_kind == "sgd") {
        y = yt;
      } else if (cfg.teacher_kind == "checkpoint") {
        y = ckpt_labeler(e, yt, w);
      } else if (cfg.teacher_kind == "last") {
        if (is_mlp) {
          y = synth_label_mlp(e.x, yt, V, W, *Vstar, *Wstar, eta, cfg.beta, constraint,
                              act, cfg.act_slope, cfg.lambda);
        } else if (kind == LearnerKind::Lsr) {
          y = Vec{synth_label_lsr_constrained(e.x, yt[0], w, wstar_flat, eta,
                                              cfg.lambda, constraint, reg_dims)};
        } else if (kind == LearnerKind::Lr) {
          y = Vec{synth_label_lr(e.x, yt[0], w, wstar_flat, eta, cfg.lambda,
                                 constraint, reg_dims)};
        } else {
          y = synth_label_vector(e.x, yt, w, wstar_flat, eta, K, cfg.lambda,
                                 constraint);
        }
      } else if (cfg.teacher_kind == "et_gain") {
        w_direct = et_gain_teacher(e.x, yt[0], w, wstar_flat, eta, cfg.c1, ctx);
        y = yt;
        weight_update_done = true;
      } else if (cfg.teacher_kind == "armijo") {
        const ArmijoResult res =
            armijo_teacher(e.x, yt[0], w, eta, cfg.c2, cfg.backtrack, ctx);
        w_direct = res.w_next;
        y = yt;
        weight_update_done = true;
      } else if (cfg.teacher_kind == "newton") {
        LsrObjective obj{P, cfg.lambda, reg_dims};
        w_direct = newton_last_teacher([&](const Vec& v) { return obj.grad(v); },
                                       [&](const Vec& v) { return obj.hess(v); }, w,
                                       wstar_flat, cfg.alpha);
        y = yt;
        weight_update_done = true;
      }
    }
    row.teacher_micros = cfg.record_timing ? teacher_clock.us() : 0.0;

    detail::MicroTimer learner_clock;
    if (weight_update_done) {
      w = std::move(w_direct);
    } else if (is_mlp) {
      const MlpGrads g =
          mlp_grad_raw(P.examples[idx].x, y, V, W, act, cfg.act_slope, cfg.lambda);
      sgd_step_mlp(V, W, g, eta);
    } else {
      Vec gsum = ctx.grad(P.examples[idx].x, y, w);
      for (std::size_t bi = 1; bi < cfg.batch; ++bi) {
        const std::size_t j = rng.uniform_index(P.size());
        axpy(gsum, 1.0, ctx.grad(P.examples[j].x, label_of(j), w));
      }
      axpy(w, -eta / double(cfg.batch), gsum);
    }
    row.learner_micros = cfg.record_timing ? learner_clock.us() : 0.0;

    row.objective = pool_objective();
    row.dist = distance();
    row.acc = pool_acc();
    row.example_id = idx;
    row.label = y;
    const double dist_now = row.dist;
    trace.rows.push_back(std::move(row));
    if (dist_now < cfg.epsilon) break;
  }
  return trace;
}

/// Build the pool and target once, then run every seed.
inline std::vector<ConvergenceTrace> run_teaching_all(const ExperimentConfig& cfg) {
  validate_run(cfg);
  const Pool pool = build_pool(cfg);
  const LearnerKind kind = detail::learner_kind_from(cfg.learner_kind);
  std::vector<ConvergenceTrace> traces;
  if (kind == LearnerKind::Mlp2) {
    const Activation act =
        cfg.activation == "relu" ? Activation::Relu : Activation::LeakyRelu;
    const auto [Vs, Ws] = compute_mlp_wstar(pool, cfg.hidden, cfg.lambda, act,
                                            cfg.act_slope, cfg.data_seed ^ 0xabc);
    for (auto seed : cfg.seeds)
      traces.push_back(run_teaching(cfg, pool, {}, seed, &Vs, &Ws));
    return traces;
  }
  const std::size_t K = pool.classes == 1 ? 2 : pool.classes;
  const Vec wstar = compute_wstar(pool, kind, cfg.lambda, cfg.bias, K);
  for (auto seed : cfg.seeds) traces.push_back(run_teaching(cfg, pool, wstar, seed));
  return traces;
}

// ---------------------------------------------------------------------------
// Aggregation and paired comparison
// ---------------------------------------------------------------------------

struct CurveStats {
  Vec mean, stderr_;
};

inline CurveStats aggregate(const std::vector<Vec>& curves) {
  require(!curves.empty(), "aggregate: no curves");
  const std::size_t n = curves.size(), len = curves[0].size();
  for (const auto& c : curves)
    require(c.size() == len, "aggregate: ragged curves");
  CurveStats s;
  s.mean.assign(len, 0.0);
  s.stderr_.assign(len, 0.0);
  for (const auto& c : curves) axpy(s.mean, 1.0 / double(n), c);
  if (n > 1) {
    for (std::size_t t = 0; t < len; ++t) {
      double var = 0.0;
      for (const auto& c : curves) {
        const double d = c[t] - s.mean[t];
        var += d * d / double(n - 1);
      }
      s.stderr_[t] = std::sqrt(var / double(n));
    }
  }
  return s;
}

/// One-sided sign-test p-value for "A < B": probability of at least
/// `wins` successes among wins+losses fair coin flips.
inline double sign_test_p(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  auto log_choose = [](std::size_t nn, std::size_t kk) {
    double s = 0.0;
    for (std::size_t i = 0; i < kk; ++i)
      s += std::log(double(nn - i)) - std::log(double(i + 1));
    return s;
  };
  // sum_{k >= wins} C(n,k) / 2^n
  double p = 0.0;
  for (std::size_t k = wins; k <= n; ++k)
    p += std::exp(log_choose(n, k) - double(n) * std::log(2.0));
  return std::min(p, 1.0);
}

struct CompareReport {
  std::size_t wins = 0, losses = 0, ties = 0;  // A beating B at the final point
  double p_final = 1.0;
  double mean_a = 0.0, mean_b = 0.0;
  bool a_dominates_everywhere = true;  // mean_a(t) <= mean_b(t) for all t
};

inline CompareReport compare(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  require(a.size() == b.size() && !a.empty(), "compare: need paired runs");
  const CurveStats sa = aggregate(a), sb = aggregate(b);
  CompareReport rep;
  for (std::size_t t = 0; t < sa.mean.size(); ++t)
    if (sa.mean[t] > sb.mean[t]) rep.a_dominates_everywhere = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double fa = a[i].back(), fb = b[i].back();
    if (fa < fb) ++rep.wins;
    else if (fa > fb) ++rep.losses;
    else ++rep.ties;
  }
  rep.p_final = sign_test_p(rep.wins, rep.losses);
  rep.mean_a = sa.mean.back();
  rep.mean_b = sb.mean.back();
  return rep;
}

// ---------------------------------------------------------------------------
// SVG line charts
// ---------------------------------------------------------------------------

struct SvgSeries {
  std::string name;
  Vec ys;       // x is the index (iteration)
  std::string color = "#1f77b4";
};

inline void write_svg_chart(const std::string& path,
                            const std::vector<SvgSeries>& series,
                            const std::string& title, const std::string& x_label,
                            const std::string& y_label, bool log_y = false) {
  require(!series.empty(), "write_svg_chart: no series");
  const double W = 800, H = 500, ml = 70, mr = 160, mt = 40, mb = 50;
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  std::size_t len = 0;
  for (const auto& s : series) {
    len = std::max(len, s.ys.size());
    for (double v : s.ys) {
      if (log_y && v <= 0.0) continue;
      const double y = log_y ? std::log10(v) : v;
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  require(len >= 2, "write_svg_chart: series too short");
  require(std::isfinite(ymin) && std::isfinite(ymax), "write_svg_chart: no finite data");
  if (ymax - ymin < 1e-12) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  auto px = [&](double t) { return ml + (W - ml - mr) * t / double(len - 1); };
  auto py = [&](double v) {
    const double y = log_y ? std::log10(std::max(v, 1e-300)) : v;
    return H - mb - (H - mt - mb) * (y - ymin) / (ymax - ymin);
  };
  std::ofstream out(path);
  require(bool(out), "cannot write svg: " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
      << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  // axes
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
      << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << (mt + H - mb) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 18 " << (mt + H - mb) / 2 << ")\">" << y_label
      << (log_y ? " (log scale)" : "") << "</text>\n";
  // y ticks
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    const double ypix = H - mb - (H - mt - mb) * k / 4.0;
    out << "<line x1=\"" << ml - 4 << "\" y1=\"" << ypix << "\" x2=\"" << ml
        << "\" y2=\"" << ypix << "\" stroke=\"black\"/>\n";
    char buf[40];
    std::snprintf(buf, sizeof buf, log_y ? "1e%.2g" : "%.4g", yv);
    out << "<text x=\"" << ml - 8 << "\" y=\"" << ypix + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << buf
        << "</text>\n";
  }
  std::size_t si = 0;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" "
        << "points=\"";
    for (std::size_t t = 0; t < s.ys.size(); ++t) {
      if (log_y && s.ys[t] <= 0.0) continue;
      out << px(double(t)) << ',' << py(s.ys[t]) << ' ';
    }
    out << "\"/>\n";
    const double ly = mt + 18.0 * double(si + 1);
    out << "<line x1=\"" << W - mr + 10 << "\" y1=\"" << ly << "\" x2=\""
        << W - mr + 34 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - mr + 40 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.name << "</text>\n";
    ++si;
  }
  out << "</svg>\n";
  require(bool(out), "svg write failed: " + path);
}

}  // namespace last
