#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msan/autodiff.hpp"

namespace msan::nets {

enum class Activation { relu, tanh };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Fully connected stack. `widths` lists the input width first; the
/// activation sits between layers and never after the last one.
struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation activation = Activation::relu;

  std::size_t layers() const { return widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  /// sum over layers of w_i * w_{i+1} + w_{i+1}
  std::size_t parameter_count() const;
  /// Throws ConfigError unless there are >= 2 positive widths.
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

/// Parameters of one MLP. Weights are [in x out], biases [out].
struct Mlp {
  MlpSpec spec;
  std::vector<ad::Parameter> weights;
  std::vector<ad::Parameter> biases;

  ad::Var forward(ad::Tape& tape, ad::Var x);
  /// Forward pass without keeping a tape.
  Tensor infer(const Tensor& x);
  std::vector<ad::Parameter*> parameters();
};

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
/// Parameter names are `<prefix>.<layer>.weight` / `<prefix>.<layer>.bias`.
Mlp init_params(const MlpSpec& spec, std::uint64_t seed, const std::string& prefix = "mlp");

/// Feature extractor, class predictor and domain classifier.
struct ModelBundle {
  Mlp feature;     // G_f, three weight layers
  Mlp classifier;  // D_c
  Mlp domain;      // D_d, two outputs: source 0, target 1

  std::size_t input_width() const { return feature.spec.input_width(); }
  std::size_t num_classes() const { return classifier.spec.output_width(); }
  std::vector<ad::Parameter*> parameters();
  /// Checks the width contracts between the three networks.
  void validate() const;
};

struct Autoencoder {
  Mlp encoder;  // same spec as G_f
  Mlp decoder;  // mirror of the encoder

  std::vector<ad::Parameter*> parameters();
  void validate() const;
};

/// Default widths: G_f [in, 256, 128, 64], D_c [64, 32, K], D_d [64, 32, 2].
struct Architecture {
  MlpSpec feature;
  MlpSpec classifier;
  MlpSpec domain;

  static Architecture defaults(std::size_t input_width, std::size_t num_classes);
};

ModelBundle make_bundle(const Architecture& arch, std::uint64_t seed);
/// Encoder copies the G_f spec; decoder mirrors its widths.
Autoencoder make_autoencoder(const MlpSpec& feature_spec, std::uint64_t seed);

ad::Var forward_features(ad::Tape& tape, ModelBundle& bundle, ad::Var x);
ad::Var predict_class(ad::Tape& tape, ModelBundle& bundle, ad::Var features);
/// The caller decides whether `features` passed through grl first.
ad::Var predict_domain(ad::Tape& tape, ModelBundle& bundle, ad::Var features);
ad::Var ae_reconstruct(ad::Tape& tape, Autoencoder& ae, ad::Var x);

/// Copies every encoder weight and bias into G_f. D_c and D_d are untouched.
/// Throws ConfigError when the encoder and G_f specs differ.
void transfer_pretrained(const Autoencoder& ae, ModelBundle& bundle);

}  // namespace msan::nets
