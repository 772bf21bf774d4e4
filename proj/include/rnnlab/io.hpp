#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rnnlab/error.hpp"
#include "rnnlab/optim.hpp"

namespace rnnlab::io {

using Json = nlohmann::ordered_json;

/// 17 significant digits ("%.17g"), enough to read back the same double.
std::string format_double(double v);

Json to_json(const RnnParams& params);
RnnParams params_from_json(const Json& j);

Json to_json(const TaskSample& sample);
TaskSample sample_from_json(const Json& j);

Json to_json(const TaskSpec& spec);

/// Everything a training run needs, parsed from one flat JSON document.
struct RunConfig {
  TaskSpec task;
  std::size_t hidden = 50;
  Activation activation{ActivationKind::tanh};
  double init_stddev = 0.1;
  std::uint64_t seed = 1;
  TrainConfig train;
};

Json to_json(const RunConfig& config);

/// Applies the keys of `j` on top of `base`. Every schema violation is
/// collected with its key path before a single ConfigError is thrown.
RunConfig config_from_json(const Json& j, RunConfig base = {});

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Whole-file helpers. Parent directories are created; failures throw Error
/// naming the path.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

void save_checkpoint(const std::filesystem::path& path, const RnnParams& params, const Json& meta = Json::object());
RnnParams load_checkpoint(const std::filesystem::path& path);

/// JSON-lines, one sample per line.
void write_dataset(const std::filesystem::path& path, std::span<const TaskSample> samples);
std::vector<TaskSample> read_dataset(const std::filesystem::path& path);

std::string update_log_csv(const TrainLog& log);
std::string eval_log_csv(const TrainLog& log);

}  // namespace rnnlab::io
