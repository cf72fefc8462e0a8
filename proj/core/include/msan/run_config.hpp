#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "msan/synth.hpp"
#include "msan/trainer.hpp"

namespace msan::io {

/// Everything a command may read from a `key = value` config file. Keys
/// match the field names of TrainConfig and SynthConfig; `seed` feeds both.
struct RunConfig {
  train::TrainConfig train;
  synth::SynthConfig synth;

  // Command-specific keys.
  int target_subject = 0;      // train, pretrain, export-embeddings
  std::optional<double> rate_hz;  // features: sampling rate of CSV input
  double window_s = 1.0;
  double stride_s = 1.0;
  int raw_channels = 62;       // features with --input synth
  double raw_duration_s = 60.0;
  int raw_class = 0;

  void set_seed(std::uint64_t seed) {
    train.seed = seed;
    synth.seed = seed;
  }
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and unparsable values throw ConfigError naming the key and line.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical text form; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& cfg);

}  // namespace msan::io
