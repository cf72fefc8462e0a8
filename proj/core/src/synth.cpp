#include "msan/synth.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "msan/errors.hpp"
#include "msan/rng.hpp"

namespace msan::synth {
namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

/// Orthonormal columns by modified Gram-Schmidt.
Eigen::MatrixXd orthonormal_columns(Rng& rng, Eigen::Index dim, Eigen::Index count) {
  Eigen::MatrixXd m = gaussian_matrix(rng, dim, count);
  for (Eigen::Index c = 0; c < count; ++c) {
    for (Eigen::Index p = 0; p < c; ++p) m.col(c) -= m.col(p).dot(m.col(c)) * m.col(p);
    m.col(c).normalize();
  }
  return m;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_subjects < 2) throw ConfigError("num_subjects must be >= 2");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (samples_per_class < 1) throw ConfigError("samples_per_class must be >= 1");
  for (auto d : feature_dims)
    if (d == 0) throw ConfigError("feature_dims entries must be positive");
  if (static_cast<std::size_t>(num_classes) > feature_width()) {
    throw ConfigError("num_classes exceeds the feature width h*w*b");
  }
  if (!(class_separation >= 0.0)) throw ConfigError("class_separation must be non-negative");
  if (!(subject_shift >= 0.0)) throw ConfigError("subject_shift must be non-negative");
  if (!(noise_sigma > 0.0)) throw ConfigError("noise_sigma must be positive");
}

Tensor SubjectData::matrix() const {
  if (features.empty()) throw DataError("subject " + std::to_string(subject_id) + " has no samples");
  const std::size_t width = features.front().values.size();
  Buffer data;
  data.reserve(features.size() * width);
  for (const auto& f : features) {
    if (f.values.size() != width) throw ShapeError("feature maps differ in size");
    data.insert(data.end(), f.values.storage().begin(), f.values.storage().end());
  }
  return Tensor({features.size(), width}, std::move(data));
}

std::vector<SubjectData> generate_benchmark(const SynthConfig& cfg) {
  cfg.validate();
  const auto dim = static_cast<Eigen::Index>(cfg.feature_width());
  const auto k = static_cast<Eigen::Index>(cfg.num_classes);

  Rng proto_rng(derive_seed(cfg.seed, 0));
  const Eigen::MatrixXd prototypes =
      orthonormal_columns(proto_rng, dim, k) * (cfg.class_separation / std::numbers::sqrt2);

  const Shape map_dims{cfg.feature_dims[0], cfg.feature_dims[1], cfg.feature_dims[2]};
  std::vector<SubjectData> subjects;
  subjects.reserve(static_cast<std::size_t>(cfg.num_subjects));
  for (int s = 0; s < cfg.num_subjects; ++s) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(s) + 1));
    const Eigen::MatrixXd g = gaussian_matrix(rng, dim, dim);
    const Eigen::MatrixXd skew =
        (g - g.transpose()) * (kRotationPerShift * cfg.subject_shift / std::sqrt(2.0 * static_cast<double>(dim)));
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
    const Eigen::MatrixXd rotation = (eye - skew).partialPivLu().solve(eye + skew);
    Eigen::VectorXd translation(dim);
    for (Eigen::Index i = 0; i < dim; ++i) translation(i) = rng.normal();
    const double norm = translation.norm();
    translation *= norm > 0.0 ? cfg.subject_shift / norm : 0.0;

    const Eigen::MatrixXd centres = (rotation * prototypes).colwise() + translation;

    SubjectData subject;
    subject.subject_id = s;
    for (int c = 0; c < cfg.num_classes; ++c) {
      for (int i = 0; i < cfg.samples_per_class; ++i) {
        Tensor values(map_dims);
        for (Eigen::Index j = 0; j < dim; ++j) {
          values[static_cast<std::size_t>(j)] = centres(j, c) + cfg.noise_sigma * rng.normal();
        }
        subject.features.push_back({std::move(values), subject.features.size()});
        subject.labels.push_back(c);
      }
    }
    subjects.push_back(std::move(subject));
  }
  return subjects;
}

signal::Recording generate_raw_eeg(int channels, double rate_hz, double duration_s, int class_id, std::uint64_t seed) {
  if (channels < 1 || !(rate_hz > 0.0) || !(duration_s > 0.0) || class_id < 0) {
    throw ArgumentError("generate_raw_eeg needs positive channels, rate and duration and a non-negative class");
  }
  const auto n = static_cast<std::size_t>(std::llround(rate_hz * duration_s));
  signal::Recording rec;
  rec.rate_hz = rate_hz;
  rec.samples = Tensor({static_cast<std::size_t>(channels), n});
  Rng rng(seed);
  for (int c = 0; c < channels; ++c) {
    rec.channel_names.push_back("ch" + std::to_string(c));
    std::array<double, 5> phase{};
    for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
    auto row = rec.samples.row(static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate_hz;
      double v = 0.0;
      for (std::size_t b = 0; b < 5; ++b) {
        const double amp = kBandBaseAmplitude[b] * (1.0 + class_id * kBandClassGain[b]);
        v += amp * std::sin(2.0 * std::numbers::pi * kBandCentresHz[b] * t + phase[b]);
      }
      row[i] = v + kRawNoiseSigma * rng.normal();
    }
  }
  return rec;
}

}  // namespace msan::synth
