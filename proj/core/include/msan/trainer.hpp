#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msan/autodiff.hpp"
#include "msan/cluster.hpp"
#include "msan/nets.hpp"
#include "msan/optim.hpp"
#include "msan/rng.hpp"
#include "msan/synth.hpp"

namespace msan::train {

/// Ablation ladder: source-only, global adversarial, global + subdomain
/// adversarial, and the latter with autoencoder pre-training.
enum class Mode { nontransfer, dan, msan, msan_pt };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& name);

struct TrainConfig {
  Mode mode = Mode::msan_pt;
  double lr = 0.001;
  int epochs = 50;
  int batch_source = 64;
  int batch_target = 64;
  double q = 0.10;
  int subdomain_warmup_epochs = 5;
  int pseudo_refresh_every = 1;
  double grl_lambda = 1.0;
  /// Scale grl_lambda by 2 / (1 + exp(-10 p)) - 1 over training progress p.
  bool grl_ramp = false;
  int ae_pretrain_epochs = 30;
  optim::Kind optimizer = optim::Kind::adam;
  /// Autoencoder stage only; unset means `optimizer` and `lr`.
  std::optional<optim::Kind> ae_optimizer;
  std::optional<double> ae_lr;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first offending field. A warm-up equal to
  /// `epochs` is accepted and leaves the subdomain terms inactive.
  void validate() const;
};

struct SourceData {
  Tensor features;  // [n x d]
  std::vector<int> labels;
};

/// Unlabelled target samples. Ground truth never travels with this type.
struct TargetData {
  Tensor features;  // [n x d]
};

struct DomainDataset {
  SourceData source;
  TargetData target;
  int num_classes = 0;

  void validate() const;
};

/// Target ground truth, consumed only by `evaluate`.
struct HeldOutLabels {
  std::vector<int> labels;
};

struct Batch {
  Tensor source_x;
  std::vector<int> source_y;
  Tensor target_x;

  std::size_t source_rows() const { return source_x.rows(); }
  std::size_t target_rows() const { return target_x.rows(); }
};

struct GlobalLoss {
  ad::Var total;
  ad::Var class_loss;
  ad::Var domain_loss;
};

/// Class loss on the source rows plus domain loss on all rows with the
/// features routed through gradient reversal. One backward pass yields the
/// minimising update for G_f and D_c and the maximising one for D_d.
GlobalLoss loss_global(ad::Tape& tape, nets::ModelBundle& bundle, const Batch& batch, double lambda = 1.0);

/// Source pool from which subdomain partners are drawn.
struct PartnerPool {
  const SourceData* source = nullptr;
  const Tensor* target = nullptr;
  int num_classes = 0;
};

struct SubdomainLoss {
  ad::Var total;
  ad::Var domain_term;  // all batch rows, through reversal
  ad::Var same_term;    // pseudo target + same-class source partner, through reversal
  ad::Var diff_term;    // pseudo target + different-class source partner, no reversal
  std::size_t pairs = 0;
};

/// Adjusted domain loss. For every pseudo-labelled target sample with label
/// i, one source partner of class i and one of a class j != i are drawn
/// uniformly from `rng`. Same-class pairs see reversed gradients; mixed
/// pairs keep their gradient direction. An empty pseudo set reduces to the
/// domain term of `loss_global`.
SubdomainLoss loss_subdomain(ad::Tape& tape, nets::ModelBundle& bundle, const Batch& batch,
                             const cluster::PseudoLabelSet& pseudo, const PartnerPool& pool, Rng& rng,
                             double lambda = 1.0);

/// Minimises mse(x, decoder(encoder(x))) by mini-batch descent. Returns the
/// mean batch loss of every epoch.
std::vector<double> pretrain_autoencoder(nets::Autoencoder& ae, const Tensor& all_features, const TrainConfig& cfg);

struct PretrainResult {
  nets::Autoencoder autoencoder;
  std::vector<double> loss;  // per epoch
};

/// Autoencoder stage of msan_pt on the pooled source and target features,
/// seeded exactly as inside `fit`.
PretrainResult pretrain(const DomainDataset& data, const TrainConfig& cfg);

/// Pseudo-labels in the current G_f feature space: source class centroids
/// seed K-means on the target features, then the nearest fraction q of
/// each cluster is kept.
cluster::PseudoLabelSet refresh_pseudo_labels(nets::ModelBundle& bundle, const DomainDataset& data, double q);

struct Evaluation {
  double accuracy = 0.0;
  std::vector<double> per_class;  // 0 for classes absent from `labels`
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
};

/// Argmax of D_c(G_f(x)) against `labels`; argmax ties go to the lower class.
Evaluation evaluate(nets::ModelBundle& bundle, const Tensor& features, std::span<const int> labels);

struct EpochRecord {
  int epoch = 0;
  double class_loss = 0.0;
  double domain_loss = 0.0;
  double subdomain_loss = 0.0;
  double target_acc = 0.0;  // NaN when no held-out labels were supplied
};

struct Metrics {
  std::vector<EpochRecord> epochs;
  double accuracy = 0.0;
  std::vector<double> per_class;
};

struct FitResult {
  nets::ModelBundle bundle;
  Metrics metrics;
  std::optional<nets::Autoencoder> autoencoder;
  std::vector<double> ae_loss;
};

/// Trains one source/target pairing under `cfg.mode`. `held_out` is only
/// used to report target accuracy after each epoch.
FitResult fit(const DomainDataset& data, const TrainConfig& cfg, const HeldOutLabels* held_out = nullptr);

struct FoldResult {
  std::size_t fold = 0;
  int subject_id = 0;
  double accuracy = 0.0;
  Metrics metrics;
  std::vector<double> ae_loss;
};

struct LosoResult {
  std::vector<FoldResult> folds;
  double mean = 0.0;
  double std = 0.0;  // population
};

/// Seed used for the fold that holds out `subject_id`.
std::uint64_t fold_seed(std::uint64_t seed, int subject_id);

/// Source/target split holding out subject `held_out`; remaining subjects are
/// pooled in ascending subject_id order.
DomainDataset loso_split(std::span<const synth::SubjectData> subjects, std::size_t held_out, int num_classes,
                         HeldOutLabels* truth);

/// Leave-one-subject-out evaluation over every subject.
LosoResult loso_run(std::span<const synth::SubjectData> subjects, const TrainConfig& cfg,
                    const std::function<void(const FoldResult&)>& on_fold = {});

double mean_of(std::span<const double> v);
double population_std(std::span<const double> v);

}  // namespace msan::train
