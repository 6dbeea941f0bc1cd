// Command-line front door: gen-data, teach, train-teacher, eval-teacher,
// theorem-suite, plot.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "last/last.hpp"

namespace {

using namespace last;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

std::string resolve_out_dir(const CommonArgs& args, const ExperimentConfig& cfg) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (!cfg.out_dir.empty() && cfg.out_dir != ".") return cfg.out_dir;
  if (const char* env = std::getenv("LAST_OUT_DIR"); env && *env) return env;
  return cfg.out_dir.empty() ? "." : cfg.out_dir;
}

ExperimentConfig resolve_config(const CommonArgs& args, bool config_required = true) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = load_config(args.config_path);
  } else if (config_required) {
    throw Error("--config is required for this command");
  }
  for (const auto& kv : args.overrides) apply_override(cfg, kv);
  if (args.seed_set) cfg.seeds = {args.seed};
  return cfg;
}

void print_banner(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::cout << "# resolved configuration\n" << render_config(cfg);
  std::cout << "# seeds:";
  for (auto s : cfg.seeds) std::cout << ' ' << s;
  std::cout << "\n# output dir: " << out_dir << "\n";
}

std::vector<std::size_t> parse_arch(const std::string& arch) {
  std::vector<std::size_t> dims;
  std::stringstream ss(arch);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) dims.push_back(std::stoul(item));
  }
  require(!dims.empty(), "teacher.arch must list at least one hidden width");
  return dims;
}

std::vector<Vec> named_action_space(const std::string& name) {
  if (name == "augmented")
    return {{0.0, 1.0},  {0.25, 0.75}, {0.5, 0.5}, {0.75, 0.25}, {1.0, 0.0},
            {0.0, 2.0},  {0.5, 1.5},   {1.0, 1.0}, {1.5, 0.5},   {2.0, 0.0}};
  if (name == "onehot")
    return {{0.0, 1.0}, {0.25, 0.75}, {0.5, 0.5}, {0.75, 0.25}, {1.0, 0.0}};
  throw Error("unknown teacher.actions: " + name + " (augmented | onehot)");
}

std::vector<double> parse_mu_grid(const std::string& grid) {
  std::vector<double> mu;
  std::stringstream ss(grid);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) mu.push_back(std::stod(item));
  }
  require(!mu.empty(), "teacher.mu_grid must list at least one value");
  return mu;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  require(bool(out), "cannot write training log: " + path);
  out << "episode,objective,eval_dist\r\n";
  for (const auto& r : log) {
    out << r.episode << ',' << csv_quote(format_g17(r.objective)) << ',';
    if (r.has_eval) out << csv_quote(format_g17(r.eval_dist));
    out << "\r\n";
  }
}

int cmd_gen_data(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve_config(args);
  const std::string out = resolve_out_dir(args, cfg);
  print_banner(cfg, out);
  const Pool pool = build_pool(cfg);
  std::filesystem::create_directories(out);
  const std::string path = out + "/pool.txt";
  save_pool(pool, path);
  std::cout << "wrote " << path << " (" << pool.size() << " examples, d=" << pool.d
            << ", labels=" << label_kind_name(pool.label_kind) << ")\n";
  return 0;
}

int cmd_teach(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve_config(args);
  validate_run(cfg);
  const std::string out = resolve_out_dir(args, cfg);
  print_banner(cfg, out);
  std::filesystem::create_directories(out);

  const std::vector<ConvergenceTrace> traces = run_teaching_all(cfg);
  std::vector<Vec> dists, objectives;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const std::string path =
        out + "/trace_seed" + std::to_string(cfg.seeds[i]) + ".csv";
    write_trace_csv(traces[i], path);
    std::cout << "wrote " << path << " (" << traces[i].rows.size()
              << " iterations, final dist "
              << format_g17(traces[i].rows.back().dist) << ")\n";
    dists.push_back(traces[i].dist_curve());
    objectives.push_back(traces[i].objective_curve());
  }
  const CurveStats dist_stats = aggregate(dists);
  const CurveStats obj_stats = aggregate(objectives);
  write_svg_chart(out + "/distance.svg",
                  {{cfg.teacher_kind, dist_stats.mean, "#1f77b4"}},
                  "distance to target", "iteration", "|w - w*|",
                  /*log_y=*/true);
  write_svg_chart(out + "/objective.svg",
                  {{cfg.teacher_kind, obj_stats.mean, "#d62728"}},
                  "pool objective", "iteration", "objective");
  std::cout << "wrote " << out << "/distance.svg and " << out << "/objective.svg\n";
  return 0;
}

int cmd_train_teacher(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve_config(args);
  const std::string out = resolve_out_dir(args, cfg);
  print_banner(cfg, out);
  std::filesystem::create_directories(out);

  Pool pool = build_pool(cfg);
  const bool is_lsr = cfg.learner_kind == "lsr";
  if (cfg.bias) pool = augment_bias(pool);
  ParamLearnerSpec spec;
  spec.kind = is_lsr ? LearnerKind::Lsr : LearnerKind::MulticlassLinear;
  spec.d = pool.d;
  spec.K = pool.classes == 1 ? 2 : pool.classes;
  spec.lambda = cfg.lambda;
  spec.init_sd = cfg.student_init_sd;
  const Vec wstar = compute_wstar(pool, spec.kind, cfg.lambda, /*bias=*/false, spec.K);

  const std::uint64_t seed = cfg.seeds.front();
  const std::vector<std::size_t> hidden = parse_arch(cfg.arch);
  auto dims_with = [&](std::size_t in, std::size_t out_dim) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out_dim);
    return dims;
  };

  TrainResult result;
  TeacherNet net;
  if (cfg.teacher_kind == "unrolled") {
    net = TeacherNet::make(dims_with(omniscient_state_dim(spec, true), spec.label_len()),
                           TeacherNet::Head::Label, seed ^ 0x7e);
    TeacherOpt opt(net, AdamHyper{cfg.adam_lr, 0.9, 0.999, 1e-8, cfg.adam_wd});
    UnrolledCfg ucfg;
    ucfg.ep.students = cfg.students;
    ucfg.ep.reset_rate = cfg.reset_rate;
    ucfg.ep.unroll = cfg.unroll;
    ucfg.ep.decay = cfg.decay;
    ucfg.episodes = cfg.episodes;
    ucfg.learner_eta = cfg.learner_eta;
    ucfg.batch = cfg.batch;
    ucfg.seed = seed;
    ucfg.eval_every = cfg.eval_every;
    result = train_unrolled_omniscient(net, opt, pool, spec, wstar, ucfg);
  } else if (cfg.teacher_kind == "pg") {
    require(!is_lsr, "teacher.kind=pg expects a classification learner");
    const std::vector<Vec> actions = named_action_space(cfg.action_space);
    net = TeacherNet::make(
        dims_with(spec.weight_len() + actions.size(), actions.size()),
        TeacherNet::Head::ActionLogits, seed ^ 0x7e);
    TeacherOpt opt(net, AdamHyper{cfg.adam_lr, 0.9, 0.999, 1e-8, 0.0});
    PgCfg pcfg;
    pcfg.ep.students = cfg.students;
    pcfg.ep.horizon = cfg.horizon;
    pcfg.ep.gamma = cfg.gamma;
    pcfg.ep.baseline = cfg.pg_baseline;
    pcfg.episodes = cfg.episodes;
    pcfg.learner_eta = cfg.learner_eta;
    pcfg.seed = seed;
    pcfg.eval_every = cfg.eval_every;
    result = train_pg_omniscient(net, opt, pool, spec, wstar, actions, pcfg);
  } else if (cfg.teacher_kind == "blast_unrolled") {
    require(!is_lsr, "teacher.kind=blast_unrolled expects a classification learner");
    net = TeacherNet::make(
        dims_with(omniscient_state_dim(spec, false), spec.label_len()),
        TeacherNet::Head::ResidualLabel, seed ^ 0x7e);
    TeacherOpt opt(net, AdamHyper{cfg.adam_lr, 0.9, 0.999, 1e-8, cfg.adam_wd});
    BlastUnrolledCfg bcfg;
    bcfg.ep.students = cfg.students;
    bcfg.ep.reset_rate = cfg.reset_rate;
    bcfg.ep.unroll = cfg.unroll;
    bcfg.ep.decay = cfg.decay;
    bcfg.episodes = cfg.episodes;
    bcfg.learner_eta = cfg.learner_eta;
    bcfg.batch_r = cfg.batch_r;
    bcfg.batch_a = cfg.batch_a;
    bcfg.alpha_residual = cfg.alpha_residual < 1.0 ? cfg.alpha_residual : 0.5;
    bcfg.seed = seed;
    bcfg.eval_every = cfg.eval_every;
    result = blast_unrolled(net, opt, pool, pool, spec, wstar, bcfg);
  } else if (cfg.teacher_kind == "blast_pg") {
    require(!is_lsr, "teacher.kind=blast_pg expects a classification learner");
    const std::vector<double> grid = parse_mu_grid(cfg.mu_grid);
    net = TeacherNet::make(dims_with(omniscient_state_dim(spec, false), grid.size()),
                           TeacherNet::Head::MuLogits, seed ^ 0x7e);
    TeacherOpt opt(net, AdamHyper{cfg.adam_lr, 0.9, 0.999, 1e-8, 0.0});
    BlastPgCfg pcfg;
    pcfg.ep.students = cfg.students;
    pcfg.ep.horizon = cfg.horizon;
    pcfg.episodes = cfg.episodes;
    pcfg.learner_eta = cfg.learner_eta;
    pcfg.mu_grid = grid;
    pcfg.p_source = cfg.p_source == "prediction" ? BlastPgCfg::PSource::Prediction
                                                 : BlastPgCfg::PSource::Uniform;
    pcfg.reward = cfg.reward == "iterations"
                      ? BlastPgCfg::Reward::IterationsToAccuracy
                      : BlastPgCfg::Reward::HoldoutAccuracy;
    pcfg.zeta = cfg.zeta;
    pcfg.seed = seed;
    pcfg.eval_every = cfg.eval_every;
    result = blast_pg(net, opt, pool, pool, spec, wstar, pcfg);
  } else {
    throw Error("train-teacher: teacher.kind must be unrolled | pg | "
                "blast_unrolled | blast_pg (got '" + cfg.teacher_kind + "')");
  }

  const std::string ckpt = out + "/teacher.ckpt";
  save_teacher(net, ckpt);
  write_train_log(result.log, out + "/train_log.csv");
  std::cout << "wrote " << ckpt << " and " << out << "/train_log.csv\n";
  std::cout << "eval " << format_g17(result.eval_initial) << " -> "
            << format_g17(result.eval_final) << " (fixed-seed protocol)\n";
  return 0;
}

int cmd_eval_teacher(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve_config(args);
  require(!cfg.checkpoint.empty(), "eval-teacher needs teacher.checkpoint");
  const std::string out = resolve_out_dir(args, cfg);
  print_banner(cfg, out);
  std::filesystem::create_directories(out);

  Pool pool = build_pool(cfg);
  if (cfg.bias) pool = augment_bias(pool);
  ParamLearnerSpec spec;
  spec.kind =
      cfg.learner_kind == "lsr" ? LearnerKind::Lsr : LearnerKind::MulticlassLinear;
  spec.d = pool.d;
  spec.K = pool.classes == 1 ? 2 : pool.classes;
  spec.lambda = cfg.lambda;
  spec.init_sd = cfg.student_init_sd;
  const Vec wstar = compute_wstar(pool, spec.kind, cfg.lambda, false, spec.K);

  const TeacherNet net = load_teacher(cfg.checkpoint);
  const bool omniscient =
      net.input_dim() == omniscient_state_dim(spec, /*include_target=*/true);
  const Labeler teacher = teacher_labeler(net, spec, omniscient ? &wstar : nullptr,
                                          cfg.alpha_residual);
  const std::uint64_t seed = cfg.seeds.front();

  auto eval_arm = [&](const Labeler& lab) {
    SeededRng rng(seed);
    Vec w0 = init_student(wstar, spec.init_sd, rng);
    RollCurves curves;
    roll_teach(pool, spec, w0, cfg.learner_eta, cfg.eval_steps, cfg.batch, lab, rng,
               &wstar, &pool, &curves);
    return curves;
  };
  const RollCurves teacher_curves = eval_arm(teacher);
  const RollCurves sgd_curves = eval_arm(identity_labeler());

  write_svg_chart(out + "/eval_distance.svg",
                  {{"teacher", teacher_curves.dist, "#1f77b4"},
                   {"sgd", sgd_curves.dist, "#d62728"}},
                  "evaluation: distance to target", "iteration", "|w - w*|", true);
  write_svg_chart(out + "/eval_loss.svg",
                  {{"teacher", teacher_curves.val_loss, "#1f77b4"},
                   {"sgd", sgd_curves.val_loss, "#d62728"}},
                  "evaluation: pool loss", "iteration", "loss");
  std::cout << "teacher final dist " << format_g17(teacher_curves.dist.back())
            << ", sgd final dist " << format_g17(sgd_curves.dist.back()) << "\n";
  std::cout << "wrote " << out << "/eval_distance.svg and " << out
            << "/eval_loss.svg\n";
  return 0;
}

int cmd_theorem(const CommonArgs& args, const std::string& kind) {
  const ExperimentConfig cfg = resolve_config(args, /*config_required=*/false);
  const std::string out = resolve_out_dir(args, cfg);
  std::cout << "# theorem-suite kind=" << kind << " seed=" << cfg.seeds.front()
            << "\n";
  const TheoremReport report = theorem_suite(kind, cfg.seeds.front());
  std::cout << (report.pass ? "PASS" : "FAIL") << " " << report.kind << ": "
            << report.details << "\n";
  if (!out.empty() && out != ".") {
    std::filesystem::create_directories(out);
    std::ofstream txt(out + "/theorem_" + kind + ".txt");
    txt << (report.pass ? "PASS" : "FAIL") << " " << report.kind << ": "
        << report.details << "\n";
  }
  return report.pass ? 0 : 2;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& column,
             const std::string& output, bool log_scale) {
  require(!inputs.empty(), "plot needs at least one --input trace csv");
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  std::vector<SvgSeries> series;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ConvergenceTrace trace = read_trace_csv(inputs[i]);
    Vec ys;
    for (const auto& r : trace.rows) {
      if (column == "dist") ys.push_back(r.dist);
      else if (column == "objective") ys.push_back(r.objective);
      else if (column == "acc") ys.push_back(r.acc);
      else throw Error("plot: unknown column '" + column + "'");
    }
    series.push_back({std::filesystem::path(inputs[i]).stem().string(), ys,
                      palette[i % 6]});
  }
  write_svg_chart(output, series, column + " vs iteration", "iteration", column,
                  log_scale);
  std::cout << "wrote " << output << "\n";
  return 0;
}

/// Levenshtein-based hint for a mistyped flag or subcommand.
std::string suggest(const std::string& got, const std::vector<std::string>& known) {
  auto distance = [](const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
      cur[0] = i;
      for (std::size_t j = 1; j <= b.size(); ++j)
        cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
      std::swap(prev, cur);
    }
    return prev[b.size()];
  };
  std::string best;
  std::size_t best_d = 4;  // only suggest close matches
  for (const auto& k : known) {
    const std::size_t d = distance(got, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label synthesis teaching toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment config file");
    sub->add_option("--set", common.overrides,
                    "dotted-key override, key=value (repeatable, last wins)");
    sub->add_option("--seed", common.seed, "replace run.seeds with a single seed")
        ->each([&](const std::string&) { common.seed_set = true; });
    sub->add_option("--out", common.out_dir,
                    "output directory (default: run.out_dir or $LAST_OUT_DIR)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a pool and write it");
  add_common(gen);
  CLI::App* teach =
      app.add_subcommand("teach", "run teaching and write trace csv + svg");
  add_common(teach);
  CLI::App* train = app.add_subcommand(
      "train-teacher", "train a parameterized teacher, write checkpoint + log");
  add_common(train);
  CLI::App* eval = app.add_subcommand(
      "eval-teacher", "evaluate a teacher checkpoint against the sgd baseline");
  add_common(eval);

  CLI::App* theorem =
      app.add_subcommand("theorem-suite", "run a theorem property suite");
  add_common(theorem);
  std::string kind = "et";
  theorem->add_option("--kind", kind, "et | armijo | super_et | monotonicity");

  CLI::App* plot = app.add_subcommand("plot", "chart trace csv files as svg");
  std::vector<std::string> plot_inputs;
  std::string plot_column = "dist", plot_output = "chart.svg";
  bool plot_log = false;
  plot->add_option("--input", plot_inputs, "trace csv files")->required();
  plot->add_option("--column", plot_column, "dist | objective | acc");
  plot->add_option("--output", plot_output, "output svg path");
  plot->add_flag("--log", plot_log, "log-scale y axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::vector<std::string> known{"gen-data",      "teach", "train-teacher",
                                   "eval-teacher",  "theorem-suite", "plot",
                                   "--config",      "--set", "--seed",
                                   "--out",         "--kind", "--input",
                                   "--column",      "--output", "--log"};
    std::cerr << "error: " << e.what() << "\n";
    for (int i = 1; i < argc; ++i) {
      const std::string hint = suggest(argv[i], known);
      if (!hint.empty() && hint != argv[i])
        std::cerr << "  (did you mean '" << hint << "'?)\n";
    }
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common);
    if (teach->parsed()) return cmd_teach(common);
    if (train->parsed()) return cmd_train_teacher(common);
    if (eval->parsed()) return cmd_eval_teacher(common);
    if (theorem->parsed()) return cmd_theorem(common, kind);
    if (plot->parsed()) return cmd_plot(plot_inputs, plot_column, plot_output, plot_log);
  } catch (const last::Error& e) {
    // configuration and input problems exit 1; anything else counts as a
    // runtime failure
    const std::string what = e.what();
    const bool validation = what.find("config") != std::string::npos ||
                            what.find("cannot open") != std::string::npos ||
                            what.find("unknown") != std::string::npos ||
                            what.find("requires") != std::string::npos ||
                            what.find("needs") != std::string::npos ||
                            what.find("must") != std::string::npos;
    std::cerr << "error: " << what << "\n";
    return validation ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
