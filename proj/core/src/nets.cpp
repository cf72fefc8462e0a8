#include "msan/nets.hpp"

#include <cmath>

#include "msan/errors.hpp"
#include "msan/rng.hpp"

namespace msan::nets {

const char* activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) n += widths[i] * widths[i + 1] + widths[i + 1];
  return n;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least two widths");
  for (auto w : widths)
    if (w == 0) throw ConfigError("MLP widths must be positive");
}

ad::Var Mlp::forward(ad::Tape& tape, ad::Var x) {
  if (x.value().rank() != 2 || x.value().cols() != spec.input_width()) {
    throw ShapeError("MLP expects input width " + std::to_string(spec.input_width()) + ", got " +
                     shape_string(x.value().dims()));
  }
  ad::Var h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = ad::add_bias(ad::matmul(h, tape.parameter(weights[l])), tape.parameter(biases[l]));
    if (l + 1 < weights.size()) h = spec.activation == Activation::relu ? ad::relu(h) : ad::tanh(h);
  }
  return h;
}

Tensor Mlp::infer(const Tensor& x) {
  ad::Tape tape;
  return forward(tape, tape.constant(x)).value();
}

std::vector<ad::Parameter*> Mlp::parameters() {
  std::vector<ad::Parameter*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

Mlp init_params(const MlpSpec& spec, std::uint64_t seed, const std::string& prefix) {
  spec.validate();
  Rng rng(seed);
  Mlp mlp;
  mlp.spec = spec;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w({in, out});
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    const std::string base = prefix + "." + std::to_string(l);
    mlp.weights.emplace_back(base + ".weight", std::move(w));
    mlp.biases.emplace_back(base + ".bias", Tensor({out}));
  }
  return mlp;
}

std::vector<ad::Parameter*> ModelBundle::parameters() {
  auto out = feature.parameters();
  for (auto* p : classifier.parameters()) out.push_back(p);
  for (auto* p : domain.parameters()) out.push_back(p);
  return out;
}

void ModelBundle::validate() const {
  feature.spec.validate();
  classifier.spec.validate();
  domain.spec.validate();
  if (feature.spec.layers() != 3) throw ConfigError("feature extractor must have exactly 3 weight layers");
  if (classifier.spec.input_width() != feature.spec.output_width() ||
      domain.spec.input_width() != feature.spec.output_width()) {
    throw ConfigError("classifier input widths must equal the feature width");
  }
  if (domain.spec.output_width() != 2) throw ConfigError("domain classifier must have 2 outputs");
}

std::vector<ad::Parameter*> Autoencoder::parameters() {
  auto out = encoder.parameters();
  for (auto* p : decoder.parameters()) out.push_back(p);
  return out;
}

void Autoencoder::validate() const {
  encoder.spec.validate();
  decoder.spec.validate();
  if (decoder.spec.input_width() != encoder.spec.output_width() ||
      decoder.spec.output_width() != encoder.spec.input_width()) {
    throw ConfigError("decoder widths must mirror the encoder");
  }
}

Architecture Architecture::defaults(std::size_t input_width, std::size_t num_classes) {
  Architecture a;
  a.feature = {{input_width, 256, 128, 64}, Activation::relu};
  a.classifier = {{64, 32, num_classes}, Activation::relu};
  a.domain = {{64, 32, 2}, Activation::relu};
  return a;
}

ModelBundle make_bundle(const Architecture& arch, std::uint64_t seed) {
  ModelBundle b;
  b.feature = init_params(arch.feature, derive_seed(seed, 1), "gf");
  b.classifier = init_params(arch.classifier, derive_seed(seed, 2), "dc");
  b.domain = init_params(arch.domain, derive_seed(seed, 3), "dd");
  b.validate();
  return b;
}

Autoencoder make_autoencoder(const MlpSpec& feature_spec, std::uint64_t seed) {
  MlpSpec dec{{feature_spec.widths.rbegin(), feature_spec.widths.rend()}, feature_spec.activation};
  Autoencoder ae;
  ae.encoder = init_params(feature_spec, derive_seed(seed, 11), "enc");
  ae.decoder = init_params(dec, derive_seed(seed, 12), "dec");
  return ae;
}

ad::Var forward_features(ad::Tape& tape, ModelBundle& bundle, ad::Var x) {
  return bundle.feature.forward(tape, x);
}

ad::Var predict_class(ad::Tape& tape, ModelBundle& bundle, ad::Var features) {
  return bundle.classifier.forward(tape, features);
}

ad::Var predict_domain(ad::Tape& tape, ModelBundle& bundle, ad::Var features) {
  return bundle.domain.forward(tape, features);
}

ad::Var ae_reconstruct(ad::Tape& tape, Autoencoder& ae, ad::Var x) {
  return ae.decoder.forward(tape, ae.encoder.forward(tape, x));
}

void transfer_pretrained(const Autoencoder& ae, ModelBundle& bundle) {
  if (!(ae.encoder.spec == bundle.feature.spec)) {
    throw ConfigError("encoder spec does not match the feature extractor spec");
  }
  for (std::size_t l = 0; l < ae.encoder.weights.size(); ++l) {
    bundle.feature.weights[l].value = ae.encoder.weights[l].value;
    bundle.feature.biases[l].value = ae.encoder.biases[l].value;
    bundle.feature.weights[l].zero_grad();
    bundle.feature.biases[l].zero_grad();
  }
}

}  // namespace msan::nets
