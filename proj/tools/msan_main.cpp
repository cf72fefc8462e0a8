// msan: command-line front end for synthetic data, feature extraction,
// training, leave-one-subject-out evaluation and embedding export.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msan/dataset_io.hpp"
#include "msan/errors.hpp"
#include "msan/pca.hpp"
#include "msan/run_config.hpp"
#include "msan/runtime.hpp"
#include "msan/signal.hpp"
#include "msan/synth.hpp"
#include "msan/tensor_io.hpp"
#include "msan/trainer.hpp"

namespace fs = std::filesystem;
using namespace msan;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kData = 3 };

struct Common {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

io::RunConfig load_config(const Common& c) {
  io::RunConfig cfg = c.config.empty() ? io::RunConfig{} : io::load_run_config(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  return cfg;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

int num_classes_of(const std::vector<synth::SubjectData>& subjects) {
  int k = 0;
  for (const auto& s : subjects)
    for (int l : s.labels) k = std::max(k, l + 1);
  return k;
}

std::size_t index_of_subject(const std::vector<synth::SubjectData>& subjects, int subject_id) {
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (subjects[i].subject_id == subject_id) return i;
  throw ConfigError("target_subject " + std::to_string(subject_id) + " is not in the dataset");
}

void run_synth(const Common& c) {
  require(c.out, "--out");
  const io::RunConfig cfg = load_config(c);
  const auto subjects = synth::generate_benchmark(cfg.synth);
  io::write_dataset(c.out, subjects, cfg.synth.feature_dims, cfg.synth.num_classes);
  std::printf("wrote %zu subjects to %s\n", subjects.size(), c.out.c_str());
}

void run_features(const Common& c, const std::string& input, const std::string& layout_path) {
  require(c.out, "--out");
  require(input, "--input");
  require(layout_path, "--layout");
  const io::RunConfig cfg = load_config(c);
  const signal::ElectrodeLayout layout = signal::load_layout(layout_path);

  signal::Recording rec;
  if (input == "synth") {
    const double rate = cfg.rate_hz.value_or(200.0);
    rec = synth::generate_raw_eeg(cfg.raw_channels, rate, cfg.raw_duration_s, cfg.raw_class, cfg.synth.seed);
    // Toy channels take the layout's electrode names in grid order.
    const auto names = layout.channel_order();
    if (names.size() < rec.channel_names.size()) {
      throw ConfigError("raw_channels = " + std::to_string(cfg.raw_channels) + " exceeds the " +
                        std::to_string(names.size()) + " electrodes of the layout");
    }
    for (std::size_t i = 0; i < rec.channel_names.size(); ++i) rec.channel_names[i] = names[i];
  } else {
    if (!cfg.rate_hz) throw ConfigError("rate_hz must be set in the config for CSV input");
    rec = io::load_raw_csv(input, *cfg.rate_hz);
  }
  const auto maps = signal::extract_features(rec, signal::default_bands(), layout,
                                             {cfg.window_s, cfg.stride_s, 1e-8});
  const Tensor stacked = signal::stack_maps(maps);
  io::save_tensor(c.out, stacked);
  std::printf("wrote %s %s\n", shape_string(stacked.dims()).c_str(), c.out.c_str());
}

struct Split {
  std::vector<synth::SubjectData> subjects;
  train::DomainDataset data;
  train::HeldOutLabels truth;
};

Split load_split(const Common& c, const io::RunConfig& cfg) {
  require(c.data, "--data");
  Split s;
  s.subjects = io::read_dataset(c.data);
  const std::size_t held = index_of_subject(s.subjects, cfg.target_subject);
  s.data = train::loso_split(s.subjects, held, num_classes_of(s.subjects), &s.truth);
  return s;
}

void run_pretrain(const Common& c) {
  require(c.out, "--out");
  const io::RunConfig cfg = load_config(c);
  cfg.train.validate();
  const Split s = load_split(c, cfg);
  const fs::path out(c.out);
  ensure_dir(out);
  const train::PretrainResult r = train::pretrain(s.data, cfg.train);
  io::save_checkpoint(out / "autoencoder.msck", io::autoencoder_entries(r.autoencoder));
  io::write_text_atomic(out / "ae_loss.csv", io::format_loss_csv(r.loss));
  std::printf("final reconstruction loss %s\n", r.loss.empty() ? "n/a" : io::format_real(r.loss.back()).c_str());
}

void write_fit_outputs(const fs::path& dir, const train::Metrics& metrics, const std::vector<double>& ae_loss,
                       train::Mode mode) {
  io::write_text_atomic(dir / "metrics.csv", io::format_metrics_csv(metrics));
  if (mode == train::Mode::msan_pt) io::write_text_atomic(dir / "ae_loss.csv", io::format_loss_csv(ae_loss));
}

void run_train(const Common& c) {
  require(c.out, "--out");
  const io::RunConfig cfg = load_config(c);
  cfg.train.validate();
  const Split s = load_split(c, cfg);
  const fs::path out(c.out);
  ensure_dir(out);
  const train::FitResult r = train::fit(s.data, cfg.train, &s.truth);
  write_fit_outputs(out, r.metrics, r.ae_loss, cfg.train.mode);
  io::save_checkpoint(out / "checkpoint.msck", io::bundle_entries(r.bundle));
  std::printf("%s target accuracy %s\n", train::mode_name(cfg.train.mode), io::format_real(r.metrics.accuracy).c_str());
}

void run_loso(const Common& c) {
  require(c.out, "--out");
  require(c.data, "--data");
  const io::RunConfig cfg = load_config(c);
  cfg.train.validate();
  const auto subjects = io::read_dataset(c.data);
  const fs::path out(c.out);
  ensure_dir(out);
  const auto result = train::loso_run(subjects, cfg.train, [&](const train::FoldResult& f) {
    const fs::path dir = out / ("fold_" + std::to_string(f.subject_id));
    ensure_dir(dir);
    write_fit_outputs(dir, f.metrics, f.ae_loss, cfg.train.mode);
    std::printf("fold %zu subject %d accuracy %s\n", f.fold, f.subject_id, io::format_real(f.accuracy).c_str());
    std::fflush(stdout);
  });
  io::write_text_atomic(out / "summary.csv", io::format_summary_csv(result));
  std::printf("mean %s std %s\n", io::format_real(result.mean).c_str(), io::format_real(result.std).c_str());
}

void run_export(const Common& c, const std::string& checkpoint) {
  require(c.out, "--out");
  require(checkpoint, "--checkpoint");
  const io::RunConfig cfg = load_config(c);
  const Split s = load_split(c, cfg);
  nets::ModelBundle bundle = io::bundle_from_entries(io::load_checkpoint(checkpoint));
  if (bundle.input_width() != s.data.source.features.cols()) {
    throw ConfigError("checkpoint expects " + std::to_string(bundle.input_width()) + " input features, data has " +
                      std::to_string(s.data.source.features.cols()));
  }
  const std::array<const Tensor*, 2> parts{&s.data.source.features, &s.data.target.features};
  const Tensor feats = bundle.feature.infer(concat_rows(parts));
  const io::Projection p = io::pca_project(feats, 2);

  std::string csv = "domain,label,pc1,pc2\n";
  const std::size_t ns = s.data.source.features.rows();
  for (std::size_t i = 0; i < feats.rows(); ++i) {
    const bool target = i >= ns;
    const int label = target ? s.truth.labels[i - ns] : s.data.source.labels[i];
    csv += std::string(target ? "1," : "0,") + std::to_string(label) + "," + io::format_real(p.scores.at(i, 0)) + "," +
           io::format_real(p.scores.at(i, 1)) + "\n";
  }
  const fs::path out(c.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  io::write_text_atomic(out, csv);
  std::printf("wrote %zu rows to %s\n", feats.rows(), c.out.c_str());
}

void add_common(CLI::App* cmd, Common& c, bool needs_data) {
  cmd->add_option("--config", c.config, "key = value run configuration");
  if (needs_data) cmd->add_option("--data", c.data, "dataset directory written by `msan synth`");
  cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();

  CLI::App app{"Multi-subdomain adversarial network for cross-subject EEG emotion recognition"};
  app.require_subcommand(1);
  Common common;
  std::string input, layout, checkpoint;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-subject dataset");
  add_common(synth_cmd, common, false);
  auto* features_cmd = app.add_subcommand("features", "differential-entropy feature maps from raw signals");
  add_common(features_cmd, common, false);
  features_cmd->add_option("--input", input, "raw CSV (one channel per row) or `synth`");
  features_cmd->add_option("--layout", layout, "electrode layout file");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "autoencoder pre-training on one source/target split");
  add_common(pretrain_cmd, common, true);
  auto* train_cmd = app.add_subcommand("train", "train on one source/target split");
  add_common(train_cmd, common, true);
  auto* loso_cmd = app.add_subcommand("loso", "leave-one-subject-out evaluation");
  add_common(loso_cmd, common, true);
  auto* export_cmd = app.add_subcommand("export-embeddings", "PCA of G_f features for every sample");
  add_common(export_cmd, common, true);
  export_cmd->add_option("--checkpoint", checkpoint, "checkpoint written by `msan train`");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*synth_cmd) run_synth(common);
    else if (*features_cmd) run_features(common, input, layout);
    else if (*pretrain_cmd) run_pretrain(common);
    else if (*train_cmd) run_train(common);
    else if (*loso_cmd) run_loso(common);
    else if (*export_cmd) run_export(common, checkpoint);
    return kOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfig;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kData;
  } catch (const LayoutError& e) {
    std::fprintf(stderr, "layout error: %s\n", e.what());
    return kData;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ArgumentError& e) {
    // Reached from user data, e.g. a sampling rate too low for the bands.
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kData;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
}
