#include "rnnlab/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace rnnlab::io {
namespace {

namespace fs = std::filesystem;

Json to_json(const Matrix& m) {
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const Json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

Vector vector_from_json(const Json& j) { return Vector(j.get<std::vector<double>>()); }

std::vector<Json> vectors_to_json(const std::vector<Vector>& vs) {
  std::vector<Json> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.emplace_back(v.values());
  return out;
}

std::vector<Vector> vectors_from_json(const Json& j) {
  std::vector<Vector> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(vector_from_json(v));
  return out;
}

// Named training modes as presets over the clip kind and α.
struct ModePreset {
  const char* name;
  ClipKind clip;
  bool regularized;
};

constexpr ModePreset kModes[] = {
    {"SGD", ClipKind::none, false},
    {"SGD-C", ClipKind::norm, false},
    {"SGD-CR", ClipKind::norm, true},
};

class Reader {
 public:
  Reader(const Json& j, std::vector<std::string>& problems) : j_(j), problems_(problems) {}

  template <typename T>
  void read(const char* key, T& out, const char* expected) {
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw std::invalid_argument("");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw std::invalid_argument("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      problems_.push_back(std::string(key) + ": expected " + expected + ", got " + v.dump());
    }
  }

  template <typename Parsed>
  void read_named(const char* key, Parsed& out, const std::function<Parsed(std::string_view)>& parse) {
    std::string name;
    if (!j_.contains(key)) return;
    read(key, name, "a string");
    if (!j_.at(key).is_string()) return;
    try {
      out = parse(name);
    } catch (const Error& e) {
      problems_.push_back(std::string(key) + ": " + e.what());
    }
  }

 private:
  const Json& j_;
  std::vector<std::string>& problems_;
};

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid config:";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error(join_problems(problems)), problems_(std::move(problems)) {}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json to_json(const RnnParams& params) {
  return Json{{"hidden", params.hidden()},
              {"inputs", params.inputs()},
              {"outputs", params.outputs()},
              {"activation", params.activation.name()},
              {"w_rec", to_json(params.w_rec)},
              {"w_in", to_json(params.w_in)},
              {"b", params.b.values()},
              {"w_out", to_json(params.w_out)},
              {"b_out", params.b_out.values()}};
}

RnnParams params_from_json(const Json& j) {
  try {
    RnnParams p{.w_rec = matrix_from_json(j.at("w_rec")),
                .w_in = matrix_from_json(j.at("w_in")),
                .b = vector_from_json(j.at("b")),
                .w_out = matrix_from_json(j.at("w_out")),
                .b_out = vector_from_json(j.at("b_out")),
                .activation = Activation::parse(j.at("activation").get<std::string>())};
    p.validate();
    return p;
  } catch (const Json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
}

Json to_json(const TaskSample& sample) {
  Json target{{"steps", sample.target.steps}};
  if (!sample.target.labels.empty()) target["labels"] = sample.target.labels;
  if (!sample.target.values.empty()) target["values"] = vectors_to_json(sample.target.values);
  return Json{{"length", sample.length()},
              {"nominal_length", sample.nominal_length},
              {"inputs", vectors_to_json(sample.inputs)},
              {"target", std::move(target)},
              {"eval_steps", sample.eval_steps},
              {"positions", sample.positions}};
}

TaskSample sample_from_json(const Json& j) {
  try {
    TaskSample s;
    s.inputs = vectors_from_json(j.at("inputs"));
    s.nominal_length = j.value("nominal_length", s.inputs.size());
    const Json& t = j.at("target");
    s.target.steps = t.at("steps").get<std::vector<std::size_t>>();
    if (t.contains("labels")) s.target.labels = t.at("labels").get<std::vector<std::size_t>>();
    if (t.contains("values")) s.target.values = vectors_from_json(t.at("values"));
    s.eval_steps = j.value("eval_steps", s.target.steps);
    s.positions = j.value("positions", std::vector<std::size_t>{});
    return s;
  } catch (const Json::exception& e) {
    throw Error(std::string("dataset: ") + e.what());
  }
}

Json to_json(const TaskSpec& spec) {
  Json j{{"task", tasks::task_name(spec.kind)}, {"T", spec.T}};
  if (!spec.lengths.empty()) j["lengths"] = spec.lengths;
  if (spec.kind == TaskKind::noiseless_memorization) {
    j["pattern_length"] = spec.pattern_length;
    j["symbol_count"] = spec.symbol_count;
  }
  return j;
}

Json to_json(const RunConfig& c) {
  Json j = to_json(c.task);
  const TrainConfig& t = c.train;
  j["hidden"] = c.hidden;
  j["activation"] = c.activation.name();
  j["init_stddev"] = c.init_stddev;
  j["seed"] = c.seed;
  j["lr"] = t.learning_rate;
  j["lr_halving"] = t.lr_halving;
  j["clip"] = optim::clip_name(t.clip.kind);
  j["threshold"] = t.clip.threshold;
  j["alpha"] = t.alpha0;
  j["alpha_schedule"] = optim::schedule_name(t.alpha_schedule);
  j["batch"] = t.batch;
  j["max_updates"] = t.max_updates;
  j["eval_every"] = t.eval_every;
  j["epoch_updates"] = t.epoch_updates;
  j["test_size"] = t.test_size;
  j["probe_size"] = t.probe_size;
  j["success_error"] = t.success_error;
  j["regression_tolerance"] = t.regression_tolerance;
  j["time_reduction"] = t.time_reduction == TimeReduction::sum ? "sum" : "mean";
  j["record_updates"] = t.record_updates;
  j["kernel"] = t.reference_kernel ? "reference" : "batched";
  return j;
}

RunConfig config_from_json(const Json& j, RunConfig c) {
  std::vector<std::string> problems;
  if (!j.is_object()) throw ConfigError({"(root): expected a JSON object"});

  static const std::vector<std::string> known = {
      "task", "T", "lengths", "pattern_length", "symbol_count", "hidden", "activation",
      "init_stddev", "seed", "mode", "lr", "lr_halving", "clip", "threshold", "alpha",
      "alpha_schedule", "batch", "max_updates", "eval_every", "epoch_updates", "test_size",
      "probe_size", "success_error", "regression_tolerance", "time_reduction",
      "record_updates", "kernel"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) problems.push_back(key + ": unknown key");

  Reader r(j, problems);
  TrainConfig& t = c.train;
  r.read_named<TaskKind>("task", c.task.kind, tasks::parse_task);
  r.read("T", c.task.T, "a positive integer");
  if (j.contains("lengths")) {
    if (!j.at("lengths").is_array()) {
      problems.push_back("lengths: expected an array of integers");
    } else {
      c.task.lengths.clear();
      for (std::size_t i = 0; i < j.at("lengths").size(); ++i) {
        const Json& v = j.at("lengths")[i];
        if (v.is_number_integer() && v.get<std::int64_t>() > 0) c.task.lengths.push_back(v.get<std::size_t>());
        else problems.push_back("lengths[" + std::to_string(i) + "]: expected a positive integer, got " + v.dump());
      }
    }
  }
  r.read("pattern_length", c.task.pattern_length, "a positive integer");
  r.read("symbol_count", c.task.symbol_count, "a positive integer");
  r.read("hidden", c.hidden, "a positive integer");
  r.read_named<Activation>("activation", c.activation, Activation::parse);
  r.read("init_stddev", c.init_stddev, "a number");
  r.read("seed", c.seed, "a non-negative integer");
  r.read("lr", t.learning_rate, "a number");
  r.read("lr_halving", t.lr_halving, "a boolean");
  r.read_named<ClipKind>("clip", t.clip.kind, optim::parse_clip);
  r.read("threshold", t.clip.threshold, "a number");
  r.read("alpha", t.alpha0, "a number");
  r.read_named<AlphaSchedule>("alpha_schedule", t.alpha_schedule, optim::parse_schedule);
  r.read("batch", t.batch, "a positive integer");
  r.read("max_updates", t.max_updates, "a non-negative integer");
  r.read("eval_every", t.eval_every, "a positive integer");
  r.read("epoch_updates", t.epoch_updates, "a non-negative integer");
  r.read("test_size", t.test_size, "a positive integer");
  r.read("probe_size", t.probe_size, "a non-negative integer");
  r.read("success_error", t.success_error, "a number");
  r.read("regression_tolerance", t.regression_tolerance, "a number");
  r.read_named<TimeReduction>("time_reduction", t.time_reduction, [](std::string_view s) {
    if (s == "sum") return TimeReduction::sum;
    if (s == "mean") return TimeReduction::mean;
    throw Error("expected 'sum' or 'mean', got '" + std::string(s) + "'");
  });
  r.read("record_updates", t.record_updates, "a boolean");
  r.read_named<bool>("kernel", t.reference_kernel, [](std::string_view s) {
    if (s == "reference") return true;
    if (s == "batched") return false;
    throw Error("expected 'batched' or 'reference', got '" + std::string(s) + "'");
  });

  if (j.contains("mode")) {
    std::string mode;
    r.read("mode", mode, "a string");
    const ModePreset* preset = nullptr;
    for (const auto& m : kModes)
      if (mode == m.name) preset = &m;
    if (!preset) {
      if (j.at("mode").is_string()) problems.push_back("mode: expected SGD, SGD-C or SGD-CR, got '" + mode + "'");
    } else {
      if (j.contains("clip") && t.clip.kind != preset->clip)
        problems.push_back("clip: conflicts with mode " + mode);
      if (j.contains("alpha") && preset->regularized != (t.alpha0 > 0.0))
        problems.push_back("alpha: conflicts with mode " + mode);
      t.clip.kind = preset->clip;
      if (!preset->regularized) t.alpha0 = 0.0;
      else if (!(t.alpha0 > 0.0)) problems.push_back("alpha: mode SGD-CR needs a positive alpha");
    }
  }

  if (problems.empty()) {
    const auto check = [&](const char* scope, const auto& fn) {
      try {
        fn();
      } catch (const Error& e) {
        problems.push_back(std::string(scope) + ": " + e.what());
      }
    };
    check("task", [&] { c.task.validate(); });
    check("train", [&] { t.validate(); });
    if (c.hidden == 0) problems.push_back("hidden: must be positive");
    if (!(c.init_stddev >= 0.0)) problems.push_back("init_stddev: must be non-negative");
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  t.rng_seed = c.seed;
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw Error("'" + path.string() + "': " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void save_checkpoint(const fs::path& path, const RnnParams& params, const Json& meta) {
  Json j = to_json(params);
  if (!meta.empty()) j["meta"] = meta;
  write_json(path, j);
}

RnnParams load_checkpoint(const fs::path& path) { return params_from_json(read_json(path)); }

void write_dataset(const fs::path& path, std::span<const TaskSample> samples) {
  std::string text;
  for (const auto& s : samples) text += to_json(s).dump() + "\n";
  write_text(path, text);
}

std::vector<TaskSample> read_dataset(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<TaskSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string update_log_csv(const TrainLog& log) {
  std::string out = "update,loss,grad_norm,grad_norm_clipped,clipped,omega,mean_ratio,alpha,lr\n";
  for (const auto& u : log.updates) {
    out += std::to_string(u.update) + "," + format_double(u.loss) + "," + format_double(u.grad_norm) + "," +
           format_double(u.grad_norm_clipped) + "," + (u.clipped ? "1" : "0") + "," + format_double(u.omega) +
           "," + format_double(u.mean_ratio) + "," + format_double(u.alpha) + "," + format_double(u.lr) + "\n";
  }
  return out;
}

std::string eval_log_csv(const TrainLog& log) {
  std::string out = "update,probe_samples,probe_error,full_samples,full_error\n";
  for (const auto& e : log.evals) {
    out += std::to_string(e.update) + "," + std::to_string(e.probe.samples) + "," + format_double(e.probe.error_rate) + ",";
    if (e.full) out += std::to_string(e.full->samples) + "," + format_double(e.full->error_rate);
    else out += ",";
    out += "\n";
  }
  return out;
}

}  // namespace rnnlab::io
