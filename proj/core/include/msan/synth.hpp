#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "msan/signal.hpp"
#include "msan/tensor.hpp"

namespace msan::synth {

struct SynthConfig {
  int num_subjects = 8;
  int num_classes = 3;
  int samples_per_class = 100;
  std::array<std::size_t, 3> feature_dims{4, 4, 5};  // h, w, bands
  double class_separation = 1.0;
  double subject_shift = 2.0;
  double noise_sigma = 0.2;
  std::uint64_t seed = 0;

  std::size_t feature_width() const { return feature_dims[0] * feature_dims[1] * feature_dims[2]; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct SubjectData {
  int subject_id = 0;
  std::vector<signal::FeatureMap> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  /// Features flattened to [n x (h*w*b)].
  Tensor matrix() const;
};

/// Multi-subject benchmark with per-subject distribution shift.
///
/// Class k has prototype mu_k = (class_separation / sqrt 2) * u_k with
/// orthonormal u_k, so prototypes sit class_separation apart. Subject s
/// draws a rotation R_s (Cayley transform of a random skew matrix with
/// scale 0.25 * subject_shift) and a translation t_s of norm subject_shift,
/// and emits x = R_s mu_k + t_s + noise_sigma * N(0, I).
///
/// Prototypes use stream 0 of the seed, subject s uses stream s + 1.
std::vector<SubjectData> generate_benchmark(const SynthConfig& cfg);

/// Scale of the rotation generator per unit of subject_shift.
inline constexpr double kRotationPerShift = 0.25;

/// Centre frequency (Hz) of the synthetic oscillator in each default band.
inline constexpr std::array<double, 5> kBandCentresHz{2.5, 6.0, 11.0, 22.5, 40.5};
/// Class-independent amplitude of each band oscillator.
inline constexpr std::array<double, 5> kBandBaseAmplitude{2.0, 1.5, 1.0, 0.7, 0.5};
/// Per-band amplitude growth per class index: amplitude = base * (1 + class_id * gain).
inline constexpr std::array<double, 5> kBandClassGain{0.25, 0.5, 1.0, 0.5, 0.25};
inline constexpr double kRawNoiseSigma = 0.1;

/// Channels named ch0..ch{n-1}; each is a sum of five band-centred sinusoids
/// with random phases plus white noise. Class 1 doubles the alpha amplitude
/// relative to class 0.
signal::Recording generate_raw_eeg(int channels, double rate_hz, double duration_s, int class_id, std::uint64_t seed);

}  // namespace msan::synth
