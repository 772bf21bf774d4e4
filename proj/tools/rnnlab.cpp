// rnnlab command-line entry point: data generation, training, gradient
// checks and analyses. Every command writes its artifacts plus one
// manifest.json into --out-dir.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rnnlab/analysis.hpp"
#include "rnnlab/error.hpp"
#include "rnnlab/gradcheck.hpp"
#include "rnnlab/io.hpp"
#include "rnnlab/optim.hpp"
#include "rnnlab/tasks.hpp"

#ifndef RNNLAB_GIT_DESCRIBE
#define RNNLAB_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using namespace rnnlab;
using io::Json;

namespace {

enum Exit : int { ok = 0, usage = 1, budget = 2, diverged = 3, check_failed = 4 };

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv)
      : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["argv"] = std::move(argv);
    doc_["git_describe"] = RNNLAB_GIT_DESCRIBE;
    doc_["started_at"] = utc_now();
  }

  Json& operator[](const char* key) { return doc_[key]; }
  void artifact(const fs::path& p) { doc_["artifacts"].push_back(p.string()); }

  void write(const fs::path& out_dir, const std::string& status) {
    doc_["status"] = status;
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_json(out_dir / "manifest.json", doc_);
  }

 private:
  Json doc_ = Json::object();
  std::chrono::steady_clock::time_point start_;
};

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count < 2) return {lo};
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw Error("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Rows separated by ';', entries by ','.
Matrix parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string row;
  while (std::getline(ss, row, ';')) rows.push_back(parse_numbers(row));
  if (rows.empty()) throw Error("empty matrix");
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw Error("matrix rows differ in length");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), rows.front().size(), std::move(flat));
}

Json complex_json(std::complex<double> z) { return Json::array({z.real(), z.imag()}); }

// Training/generation flags shared by several subcommands. Only flags the
// user actually passed end up in the override document.
struct RunFlags {
  std::string task, activation, clip, alpha_schedule, mode, time_reduction;
  std::size_t T = 0, hidden = 0, batch = 0, max_updates = 0, eval_every = 0, test_size = 0;
  std::uint64_t seed = 0;
  double lr = 0, threshold = 0, alpha = 0;
  std::vector<std::pair<CLI::Option*, std::function<void(Json&)>>> bound;

  void add(CLI::App* app, bool training) {
    bind(app->add_option("--task", task, "Task name"), [this](Json& j) { j["task"] = task; });
    bind(app->add_option("--T", T, "Nominal sequence length"), [this](Json& j) { j["T"] = T; });
    bind(app->add_option("--seed", seed, "Run seed"), [this](Json& j) { j["seed"] = seed; });
    if (!training) return;
    bind(app->add_option("--hidden", hidden, "Hidden units"), [this](Json& j) { j["hidden"] = hidden; });
    bind(app->add_option("--activation", activation, "tanh, sigmoid or identity"),
         [this](Json& j) { j["activation"] = activation; });
    bind(app->add_option("--mode", mode, "SGD, SGD-C or SGD-CR"), [this](Json& j) { j["mode"] = mode; });
    bind(app->add_option("--lr", lr, "Learning rate"), [this](Json& j) { j["lr"] = lr; });
    bind(app->add_option("--clip", clip, "none, norm or elementwise"), [this](Json& j) { j["clip"] = clip; });
    bind(app->add_option("--threshold", threshold, "Clipping threshold"),
         [this](Json& j) { j["threshold"] = threshold; });
    bind(app->add_option("--alpha", alpha, "Regularizer weight"), [this](Json& j) { j["alpha"] = alpha; });
    bind(app->add_option("--alpha-schedule", alpha_schedule, "const, inv-t or inv-2t"),
         [this](Json& j) { j["alpha_schedule"] = alpha_schedule; });
    bind(app->add_option("--batch", batch, "Minibatch size"), [this](Json& j) { j["batch"] = batch; });
    bind(app->add_option("--max-updates", max_updates, "Update budget"),
         [this](Json& j) { j["max_updates"] = max_updates; });
    bind(app->add_option("--eval-every", eval_every, "Updates between evaluations"),
         [this](Json& j) { j["eval_every"] = eval_every; });
    bind(app->add_option("--test-size", test_size, "Held-out sequences"),
         [this](Json& j) { j["test_size"] = test_size; });
    bind(app->add_option("--time-reduction", time_reduction, "sum or mean over scored steps"),
         [this](Json& j) { j["time_reduction"] = time_reduction; });
  }

  void bind(CLI::Option* opt, std::function<void(Json&)> apply) { bound.emplace_back(opt, std::move(apply)); }

  Json overrides() const {
    Json j = Json::object();
    for (const auto& [opt, apply] : bound)
      if (opt->count() > 0) apply(j);
    return j;
  }
};

io::RunConfig load_config(const std::string& config_path, const RunFlags& flags) {
  Json doc = Json::object();
  if (!config_path.empty()) {
    doc = io::read_json(config_path);
    // A manifest from an earlier run carries its config under "config".
    if (doc.is_object() && doc.contains("command") && doc.contains("config")) doc = doc["config"];
  }
  if (!doc.is_object()) throw io::ConfigError({"(root): expected a JSON object"});
  const Json overrides = flags.overrides();
  for (auto it = overrides.begin(); it != overrides.end(); ++it) doc[it.key()] = it.value();
  return io::config_from_json(doc);
}

int cmd_gen_data(const RunFlags& flags, std::size_t count, std::size_t pattern_length, std::size_t symbols,
                 const fs::path& out_dir, const std::vector<std::string>& argv) {
  Manifest m("gen-data", argv);
  Json spec_doc = flags.overrides();
  spec_doc["pattern_length"] = pattern_length;
  spec_doc["symbol_count"] = symbols;
  const io::RunConfig cfg = io::config_from_json(spec_doc);
  const auto samples = tasks::make_set(cfg.task, cfg.seed, 0, count);
  const fs::path data = out_dir / "data.jsonl";
  io::write_dataset(data, samples);
  Json echo = io::to_json(cfg.task);
  echo["n"] = count;
  echo["seed"] = cfg.seed;
  m["config"] = echo;
  m["seed"] = cfg.seed;
  m.artifact(data);
  m.write(out_dir, "ok");
  std::cout << "wrote " << samples.size() << " samples to " << data.string() << "\n";
  return ok;
}

int cmd_train(const std::string& config_path, const RunFlags& flags, const fs::path& out_dir,
              const std::vector<std::string>& argv) {
  const io::RunConfig cfg = load_config(config_path, flags);
  Manifest m("train", argv);
  m["config"] = io::to_json(cfg);
  m["seed"] = cfg.seed;

  RnnParams params = model::init_params(cfg.hidden, cfg.task.input_dim(), cfg.task.output_dim(), cfg.activation,
                                        cfg.seed, cfg.init_stddev);
  const TrainResult result = optim::train(std::move(params), cfg.task, cfg.train);

  const fs::path checkpoint = out_dir / "checkpoint.json";
  const fs::path updates = out_dir / "updates.csv";
  const fs::path evals = out_dir / "evals.csv";
  io::save_checkpoint(checkpoint, result.params, Json{{"seed", cfg.seed}, {"updates", result.updates_run}});
  io::write_text(updates, io::update_log_csv(result.log));
  io::write_text(evals, io::eval_log_csv(result.log));
  for (const auto& p : {checkpoint, updates, evals}) m.artifact(p);

  const std::string status(optim::status_name(result.status));
  Json outcome{{"status", status}, {"updates_run", result.updates_run}};
  if (result.final_eval) {
    outcome["error_rate"] = result.final_eval->error_rate;
    outcome["eval_samples"] = result.final_eval->samples;
  }
  if (!result.message.empty()) outcome["message"] = result.message;
  m["outcome"] = outcome;
  m.write(out_dir, status);

  std::cout << "status " << status << " after " << result.updates_run << " updates";
  if (result.final_eval)
    std::cout << ", error " << io::format_double(result.final_eval->error_rate) << " on "
              << result.final_eval->samples << " sequences";
  std::cout << "\n";
  switch (result.status) {
    case TrainStatus::success: return ok;
    case TrainStatus::budget_exhausted: return budget;
    case TrainStatus::diverged: return diverged;
  }
  return budget;
}

int cmd_grad_check(std::size_t hidden, std::size_t steps, const std::string& activation, std::uint64_t seed,
                   const fs::path& out_dir, const std::vector<std::string>& argv) {
  Manifest m("grad-check", argv);
  const Activation act = Activation::parse(activation);
  m["config"] = Json{{"hidden", hidden}, {"T", steps}, {"activation", act.name()}, {"seed", seed}};
  m["seed"] = seed;
  const auto inst = gradcheck::random_instance(hidden, steps, act, seed);
  const auto report = gradcheck::check(inst.params, inst.x0, inst.inputs,
                                       {LossKind::softmax_per_step, TimeReduction::sum}, inst.target);
  constexpr double limit = 1e-4;
  std::printf("%-10s %s\n", "block", "max relative error");
  Json rows = Json::array();
  for (const auto& b : report.bptt) {
    std::printf("%-10s %.3e\n", b.block.c_str(), b.rel_error);
    rows.push_back(Json{{"block", b.block}, {"rel_error", b.rel_error}});
  }
  if (report.omega_checked) std::printf("%-10s %.3e\n", "omega", report.omega_rel_error);
  else std::printf("%-10s %s\n", "omega", "no included terms");
  const bool pass = report.bptt_max <= limit && (!report.omega_checked || report.omega_rel_error <= limit);
  std::printf("%s (limit %.0e)\n", pass ? "PASS" : "FAIL", limit);
  m["outcome"] = Json{{"bptt", rows},
                      {"bptt_max", report.bptt_max},
                      {"omega_rel_error", report.omega_checked ? Json(report.omega_rel_error) : Json()},
                      {"limit", limit}};
  m.write(out_dir, pass ? "pass" : "fail");
  return pass ? ok : check_failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rnnlab: recurrent network training and gradient-dynamics toolkit"};
  app.require_subcommand(1);
  std::string out_dir = ".";
  const std::vector<std::string> args(argv, argv + argc);

  auto* gen = app.add_subcommand("gen-data", "Write a JSON-lines dataset for a task");
  RunFlags gen_flags;
  gen_flags.add(gen, false);
  std::size_t gen_count = 100;
  std::size_t pattern_length = 5;
  std::size_t symbols = 2;
  gen->add_option("--n", gen_count, "Number of sequences")->capture_default_str();
  gen->add_option("--pattern-length", pattern_length, "Memorization pattern length")->capture_default_str();
  gen->add_option("--symbols", symbols, "Memorization alphabet size")->capture_default_str();
  gen->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train one model with SGD, SGD-C or SGD-CR");
  RunFlags train_flags;
  train_flags.add(train, true);
  std::string config_path;
  train->add_option("--config", config_path, "JSON config (or a previous manifest)");
  train->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  auto* check = app.add_subcommand("grad-check", "Compare analytic gradients with finite differences");
  std::size_t gc_hidden = 20;
  std::size_t gc_steps = 10;
  std::string gc_activation = "tanh";
  std::uint64_t gc_seed = 1;
  check->add_option("--hidden,--n", gc_hidden, "Hidden units")->capture_default_str();
  check->add_option("--T", gc_steps, "Sequence length")->capture_default_str();
  check->add_option("--activation", gc_activation, "tanh, sigmoid or identity")->capture_default_str();
  check->add_option("--seed", gc_seed, "Instance seed")->capture_default_str();
  check->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "Analyses of gradient dynamics");
  analyze->require_subcommand(1);
  analyze->fallthrough();
  analyze->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  auto* conditions = analyze->add_subcommand("conditions", "Vanishing/exploding conditions of W_rec");
  std::string checkpoint;
  std::size_t cond_hidden = 50;
  std::string cond_activation = "tanh";
  std::uint64_t cond_seed = 1;
  double init_std = 0.1;
  conditions->add_option("--checkpoint", checkpoint, "Checkpoint to inspect instead of a fresh init");
  conditions->add_option("--hidden", cond_hidden, "Hidden units of the fresh init")->capture_default_str();
  conditions->add_option("--activation", cond_activation, "Activation of the fresh init")->capture_default_str();
  conditions->add_option("--seed", cond_seed, "Seed of the fresh init")->capture_default_str();
  conditions->add_option("--init-std", init_std, "Weight std of the fresh init")->capture_default_str();

  auto* bif = analyze->add_subcommand("bifurcation", "Attractors of x <- w*sigmoid(x) + b over a bias grid");
  double bif_w = 5.0, b_min = -5.0, b_max = 0.0, bif_tol = 1e-8;
  std::size_t b_steps = 51, bif_iters = 50'000;
  bif->add_option("--w", bif_w, "Recurrent weight")->capture_default_str();
  bif->add_option("--b-min", b_min)->capture_default_str();
  bif->add_option("--b-max", b_max)->capture_default_str();
  bif->add_option("--b-steps", b_steps, "Grid points")->capture_default_str();
  bif->add_option("--iters", bif_iters)->capture_default_str();
  bif->add_option("--tol", bif_tol)->capture_default_str();

  auto* surface = analyze->add_subcommand("surface", "Error surface of a single sigmoid unit");
  double w_min = -1.0, w_max = 6.0, sb_min = -4.0, sb_max = 1.0;
  std::size_t w_steps = 201, sb_steps = 201, surf_T = 50;
  surface->add_option("--w-min", w_min)->capture_default_str();
  surface->add_option("--w-max", w_max)->capture_default_str();
  surface->add_option("--w-steps", w_steps)->capture_default_str();
  surface->add_option("--b-min", sb_min)->capture_default_str();
  surface->add_option("--b-max", sb_max)->capture_default_str();
  surface->add_option("--b-steps", sb_steps)->capture_default_str();
  surface->add_option("--T", surf_T, "Unrolled steps")->capture_default_str();

  auto* direction = analyze->add_subcommand("direction", "Leading eigen-term of an error row carried l steps");
  std::string matrix_text, error_text;
  unsigned steps_l = 50;
  direction->add_option("--matrix", matrix_text, "Rows separated by ';', entries by ','")->required();
  direction->add_option("--error", error_text, "Error row, comma separated")->required();
  direction->add_option("--l", steps_l, "Steps")->capture_default_str();

  auto* suggest = analyze->add_subcommand("suggest-threshold", "Statistics of unclipped gradient norms");
  RunFlags suggest_flags;
  suggest_flags.add(suggest, true);
  std::size_t suggest_updates = 200;
  suggest->add_option("--updates", suggest_updates, "Unclipped updates to run")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  const fs::path out(out_dir);
  try {
    if (*gen) return cmd_gen_data(gen_flags, gen_count, pattern_length, symbols, out, args);
    if (*train) return cmd_train(config_path, train_flags, out, args);
    if (*check) return cmd_grad_check(gc_hidden, gc_steps, gc_activation, gc_seed, out, args);

    if (*conditions) {
      Manifest m("analyze conditions", args);
      RnnParams params;
      if (!checkpoint.empty()) {
        params = io::load_checkpoint(checkpoint);
        m["config"] = Json{{"checkpoint", checkpoint}};
      } else {
        params = model::init_params(cond_hidden, 1, 1, Activation::parse(cond_activation), cond_seed, init_std);
        m["config"] = Json{{"hidden", cond_hidden}, {"activation", cond_activation}, {"seed", cond_seed}, {"init_std", init_std}};
        m["seed"] = cond_seed;
      }
      const auto r = analysis::check_conditions(params);
      const Json doc{{"spectral_radius", r.spectral_radius},
                     {"spectral_norm", r.spectral_norm},
                     {"gamma", r.gamma},
                     {"vanishing_sufficient", r.vanishing_sufficient},
                     {"exploding_necessary", r.exploding_necessary},
                     {"eta", r.eta ? Json(*r.eta) : Json()}};
      io::write_json(out / "conditions.json", doc);
      m.artifact(out / "conditions.json");
      m["outcome"] = doc;
      m.write(out, "ok");
      std::cout << doc.dump(2) << "\n";
      return ok;
    }

    if (*bif) {
      Manifest m("analyze bifurcation", args);
      m["config"] = Json{{"w", bif_w}, {"b_min", b_min}, {"b_max", b_max}, {"b_steps", b_steps}, {"iters", bif_iters}, {"tol", bif_tol}};
      analysis::BifurcationOptions opts;
      opts.iters = bif_iters;
      opts.tol = bif_tol;
      const auto grid = linspace(b_min, b_max, b_steps);
      const auto sweep = analysis::bifurcation_sweep(bif_w, grid, opts);
      std::string csv = "b,count,attractors,non_point,unconverged\n";
      for (const auto& p : sweep.points) {
        std::string list;
        for (double x : p.fixed_points) list += (list.empty() ? "" : ";") + io::format_double(x);
        csv += io::format_double(p.bias) + "," + std::to_string(p.fixed_points.size()) + "," + list + "," +
               std::to_string(p.non_point) + "," + std::to_string(p.unconverged) + "\n";
      }
      io::write_text(out / "bifurcation.csv", csv);
      m.artifact(out / "bifurcation.csv");
      m["outcome"] = Json{{"boundaries", sweep.boundaries}};
      m.write(out, "ok");
      for (double b : sweep.boundaries) std::cout << "boundary " << io::format_double(b) << "\n";
      return ok;
    }

    if (*surface) {
      Manifest m("analyze surface", args);
      m["config"] = Json{{"w_min", w_min}, {"w_max", w_max}, {"w_steps", w_steps},
                         {"b_min", sb_min}, {"b_max", sb_max}, {"b_steps", sb_steps}, {"T", surf_T}};
      analysis::SurfaceOptions opts;
      opts.steps = surf_T;
      const auto scan = analysis::error_surface_scan(linspace(w_min, w_max, w_steps), linspace(sb_min, sb_max, sb_steps), opts);
      std::string csv = "w,b,E,gradnorm,saturated\n";
      for (std::size_t i = 0; i < scan.w_grid.size(); ++i)
        for (std::size_t j = 0; j < scan.b_grid.size(); ++j)
          csv += io::format_double(scan.w_grid[i]) + "," + io::format_double(scan.b_grid[j]) + "," +
                 io::format_double(scan.loss(i, j)) + "," + io::format_double(scan.grad_norm(i, j)) + "," +
                 (scan.saturated[i * scan.b_grid.size() + j] ? "1" : "0") + "\n";
      io::write_text(out / "surface.csv", csv);
      m.artifact(out / "surface.csv");
      const double ratio = scan.max_over_median_gradient();
      m["outcome"] = Json{{"max_over_median_gradient", ratio}};
      m.write(out, "ok");
      std::cout << "max/median gradient norm " << io::format_double(ratio) << "\n";
      return ok;
    }

    if (*direction) {
      Manifest m("analyze direction", args);
      m["config"] = Json{{"matrix", matrix_text}, {"error", error_text}, {"l", steps_l}};
      const auto r = analysis::exploding_direction(parse_matrix(matrix_text), Vector(parse_numbers(error_text)), steps_l);
      Json eig = Json::array();
      for (auto z : r.eigenvalues) eig.push_back(complex_json(z));
      const Json doc{{"approx", r.approx.values()},
                     {"exact", r.exact.values()},
                     {"rel_error", r.rel_error},
                     {"eigenvalue", complex_json(r.eigenvalue)},
                     {"kept_terms", r.kept_terms},
                     {"eigenvalues", eig}};
      io::write_json(out / "direction.json", doc);
      m.artifact(out / "direction.json");
      m["outcome"] = Json{{"rel_error", r.rel_error}};
      m.write(out, "ok");
      std::cout << "rel_error " << io::format_double(r.rel_error) << "\n";
      return ok;
    }

    if (*suggest) {
      const io::RunConfig cfg = load_config("", suggest_flags);
      Manifest m("analyze suggest-threshold", args);
      m["config"] = io::to_json(cfg);
      m["seed"] = cfg.seed;
      const RnnParams params = model::init_params(cfg.hidden, cfg.task.input_dim(), cfg.task.output_dim(),
                                                  cfg.activation, cfg.seed, cfg.init_stddev);
      const auto stats = optim::suggest_threshold(params, cfg.task, cfg.train, suggest_updates);
      const Json doc{{"updates", stats.updates}, {"mean_grad_norm", stats.mean}, {"max_grad_norm", stats.max}};
      io::write_json(out / "threshold.json", doc);
      m.artifact(out / "threshold.json");
      m["outcome"] = doc;
      m.write(out, "ok");
      std::cout << "mean " << io::format_double(stats.mean) << " max " << io::format_double(stats.max) << " over "
                << stats.updates << " updates\n";
      return ok;
    }
  } catch (const UnsupportedError& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return usage;
  } catch (const io::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage;
  }
  return usage;
}
