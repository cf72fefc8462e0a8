#include "msan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "msan/errors.hpp"

namespace msan::train {
namespace {

enum Stream : std::uint64_t { kInit = 1, kBatches = 2, kPairs = 3, kAutoencoder = 4 };

std::vector<int> domain_labels(std::size_t source_rows, std::size_t target_rows) {
  std::vector<int> labels(source_rows, 0);
  labels.resize(source_rows + target_rows, 1);
  return labels;
}

/// Pairs of the pseudo set with drawn source partners.
struct PartnerDraw {
  std::vector<std::size_t> targets;
  std::vector<std::size_t> same;
  std::vector<std::size_t> diff;
};

std::vector<std::vector<std::size_t>> indices_by_class(std::span<const int> labels, int num_classes) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
  return by_class;
}

PartnerDraw draw_partners(const cluster::PseudoLabelSet& pseudo, const std::vector<std::vector<std::size_t>>& by_class,
                          Rng& rng) {
  std::size_t total = 0;
  for (const auto& c : by_class) total += c.size();
  PartnerDraw draw;
  for (const auto& e : pseudo.entries) {
    const auto i = static_cast<std::size_t>(e.label);
    if (i >= by_class.size() || by_class[i].empty()) {
      throw DataError("no source sample of class " + std::to_string(e.label) + " to pair with target " +
                      std::to_string(e.target_index));
    }
    const std::size_t others = total - by_class[i].size();
    if (others == 0) {
      throw DataError("no source sample outside class " + std::to_string(e.label) + " to pair with target " +
                      std::to_string(e.target_index));
    }
    draw.targets.push_back(e.target_index);
    draw.same.push_back(by_class[i][rng.below(by_class[i].size())]);
    auto r = static_cast<std::size_t>(rng.below(others));
    for (std::size_t j = 0; j < by_class.size(); ++j) {
      if (j == i) continue;
      if (r < by_class[j].size()) {
        draw.diff.push_back(by_class[j][r]);
        break;
      }
      r -= by_class[j].size();
    }
  }
  return draw;
}

/// Subdomain domain-loss terms given features already computed on one stacked forward pass.
SubdomainLoss subdomain_terms(ad::Tape& tape, nets::ModelBundle& bundle, ad::Var feats, std::size_t source_rows,
                              std::size_t target_rows, std::size_t pairs, double lambda) {
  SubdomainLoss out;
  out.pairs = pairs;
  const std::size_t batch_rows = source_rows + target_rows;
  const auto batch_domains = domain_labels(source_rows, target_rows);
  ad::Var batch_feats = ad::slice_rows(feats, 0, batch_rows);
  out.domain_term =
      ad::softmax_cross_entropy(nets::predict_domain(tape, bundle, ad::grl(batch_feats, lambda)), batch_domains);
  out.total = out.domain_term;
  if (pairs == 0) return out;

  const ad::Var pseudo_feats = ad::slice_rows(feats, batch_rows, batch_rows + pairs);
  const ad::Var same_feats = ad::slice_rows(feats, batch_rows + pairs, batch_rows + 2 * pairs);
  const ad::Var diff_feats = ad::slice_rows(feats, batch_rows + 2 * pairs, batch_rows + 3 * pairs);
  const auto pair_domains = domain_labels(0, pairs);
  std::vector<int> pair_labels(pair_domains.begin(), pair_domains.end());
  pair_labels.resize(2 * pairs, 0);  // targets first (1), then source partners (0)

  const std::array<ad::Var, 2> same_pair{pseudo_feats, same_feats};
  out.same_term = ad::softmax_cross_entropy(
      nets::predict_domain(tape, bundle, ad::grl(ad::concat_rows(same_pair), lambda)), pair_labels);
  const std::array<ad::Var, 2> diff_pair{pseudo_feats, diff_feats};
  out.diff_term =
      ad::softmax_cross_entropy(nets::predict_domain(tape, bundle, ad::concat_rows(diff_pair)), pair_labels);
  out.total = ad::add(ad::add(out.domain_term, out.same_term), out.diff_term);
  return out;
}

Tensor stack_rows(const Tensor& a, const Tensor& b) {
  const std::array<const Tensor*, 2> parts{&a, &b};
  return msan::concat_rows(parts);
}

/// Stacks batch rows with the pseudo targets and their partners.
Tensor stack_subdomain_input(const Batch& batch, const PartnerPool& pool, const PartnerDraw& draw) {
  const Tensor pseudo = gather_rows(*pool.target, draw.targets);
  const Tensor same = gather_rows(pool.source->features, draw.same);
  const Tensor diff = gather_rows(pool.source->features, draw.diff);
  const std::array<const Tensor*, 5> parts{&batch.source_x, &batch.target_x, &pseudo, &same, &diff};
  return msan::concat_rows(parts);
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

}  // namespace

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::nontransfer: return "nontransfer";
    case Mode::dan: return "dan";
    case Mode::msan: return "msan";
    case Mode::msan_pt: return "msan_pt";
  }
  return "unknown";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::nontransfer, Mode::dan, Mode::msan, Mode::msan_pt})
    if (name == mode_name(m)) return m;
  throw ConfigError("unknown mode '" + name + "' (expected nontransfer, dan, msan or msan_pt)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_source < 1) throw ConfigError("batch_source must be >= 1");
  if (batch_target < 1) throw ConfigError("batch_target must be >= 1");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("q must lie in (0, 1]");
  if (subdomain_warmup_epochs < 0 || subdomain_warmup_epochs > epochs) {
    throw ConfigError("subdomain_warmup_epochs must lie in [0, epochs]");
  }
  if (pseudo_refresh_every < 1) throw ConfigError("pseudo_refresh_every must be >= 1");
  if (!(grl_lambda >= 0.0)) throw ConfigError("grl_lambda must be non-negative");
  if (ae_pretrain_epochs < 0) throw ConfigError("ae_pretrain_epochs must be >= 0");
  if (ae_lr && !(*ae_lr > 0.0)) throw ConfigError("ae_lr must be positive");
}

void DomainDataset::validate() const {
  if (num_classes < 2) throw DataError("need at least two classes");
  if (source.features.rank() != 2 || source.features.rows() == 0) throw DataError("source set is empty");
  if (target.features.rank() != 2 || target.features.rows() == 0) throw DataError("target set is empty");
  if (source.features.cols() != target.features.cols()) {
    throw ShapeError("source width " + std::to_string(source.features.cols()) + " differs from target width " +
                     std::to_string(target.features.cols()));
  }
  if (source.labels.size() != source.features.rows()) throw DataError("source label count differs from row count");
  for (int l : source.labels)
    if (l < 0 || l >= num_classes) throw DataError("source label " + std::to_string(l) + " out of range");
}

GlobalLoss loss_global(ad::Tape& tape, nets::ModelBundle& bundle, const Batch& batch, double lambda) {
  const std::size_t ns = batch.source_rows();
  if (ns == 0) throw ArgumentError("loss_global needs at least one source sample");
  const std::size_t nt = batch.target_x.rank() == 2 ? batch.target_rows() : 0;
  const ad::Var x = tape.constant(nt ? stack_rows(batch.source_x, batch.target_x) : batch.source_x);
  const ad::Var feats = nets::forward_features(tape, bundle, x);
  GlobalLoss out;
  out.class_loss =
      ad::softmax_cross_entropy(nets::predict_class(tape, bundle, ad::slice_rows(feats, 0, ns)), batch.source_y);
  out.domain_loss = ad::softmax_cross_entropy(nets::predict_domain(tape, bundle, ad::grl(feats, lambda)),
                                              domain_labels(ns, nt));
  out.total = ad::add(out.class_loss, out.domain_loss);
  return out;
}

SubdomainLoss loss_subdomain(ad::Tape& tape, nets::ModelBundle& bundle, const Batch& batch,
                             const cluster::PseudoLabelSet& pseudo, const PartnerPool& pool, Rng& rng,
                             double lambda) {
  if (!pool.source || !pool.target) throw ArgumentError("partner pool is incomplete");
  const auto by_class = indices_by_class(pool.source->labels, pool.num_classes);
  const PartnerDraw draw = draw_partners(pseudo, by_class, rng);
  const ad::Var x = tape.constant(stack_subdomain_input(batch, pool, draw));
  const ad::Var feats = nets::forward_features(tape, bundle, x);
  return subdomain_terms(tape, bundle, feats, batch.source_rows(), batch.target_rows(), draw.targets.size(), lambda);
}

std::vector<double> pretrain_autoencoder(nets::Autoencoder& ae, const Tensor& all_features, const TrainConfig& cfg) {
  if (all_features.rank() != 2 || all_features.rows() == 0) throw ArgumentError("autoencoder needs a non-empty dataset");
  ae.validate();
  Rng rng(derive_seed(cfg.seed, kAutoencoder));
  auto opt = optim::make_optimizer(cfg.ae_optimizer.value_or(cfg.optimizer), ae.parameters(), cfg.ae_lr.value_or(cfg.lr));
  const std::size_t n = all_features.rows();
  const auto batch = static_cast<std::size_t>(cfg.batch_source);
  std::vector<std::size_t> order(n);
  std::vector<double> curve;
  for (int epoch = 0; epoch < cfg.ae_pretrain_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(batch, n - start));
      const Tensor xb = gather_rows(all_features, idx);
      opt->zero_grad();
      ad::Tape tape;
      const ad::Var x = tape.constant(xb);
      const ad::Var loss = ad::mse(nets::ae_reconstruct(tape, ae, x), x);
      tape.backward(loss);
      opt->step();
      total += loss.value()[0];
      ++steps;
    }
    curve.push_back(total / static_cast<double>(steps));
  }
  return curve;
}

PretrainResult pretrain(const DomainDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  const auto arch = nets::Architecture::defaults(data.source.features.cols(), static_cast<std::size_t>(data.num_classes));
  PretrainResult out{nets::make_autoencoder(arch.feature, derive_seed(cfg.seed, kAutoencoder)), {}};
  out.loss = pretrain_autoencoder(out.autoencoder, stack_rows(data.source.features, data.target.features), cfg);
  return out;
}

cluster::PseudoLabelSet refresh_pseudo_labels(nets::ModelBundle& bundle, const DomainDataset& data, double q) {
  const Tensor source_feats = bundle.feature.infer(data.source.features);
  const Tensor target_feats = bundle.feature.infer(data.target.features);
  const Tensor centers = cluster::source_centroids(source_feats, data.source.labels, data.num_classes);
  const cluster::ClusterState state = cluster::kmeans_refine(centers, target_feats);
  return cluster::select_top_fraction(state, q);
}

Evaluation evaluate(nets::ModelBundle& bundle, const Tensor& features, std::span<const int> labels) {
  if (features.rank() != 2 || features.rows() == 0) throw ArgumentError("evaluate needs a non-empty feature matrix");
  if (labels.size() != features.rows()) {
    throw ShapeError(std::to_string(labels.size()) + " labels for " + std::to_string(features.rows()) + " samples");
  }
  const Tensor logits = bundle.classifier.infer(bundle.feature.infer(features));
  const std::size_t k = logits.cols();
  Evaluation ev;
  ev.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ArgumentError("label " + std::to_string(labels[i]) + " out of range");
    }
    const std::size_t pred = argmax_row(logits.row(i));
    ++ev.confusion[static_cast<std::size_t>(labels[i])][pred];
    if (pred == static_cast<std::size_t>(labels[i])) ++correct;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  ev.per_class.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t count = std::accumulate(ev.confusion[c].begin(), ev.confusion[c].end(), std::size_t{0});
    if (count) ev.per_class[c] = static_cast<double>(ev.confusion[c][c]) / static_cast<double>(count);
  }
  return ev;
}

FitResult fit(const DomainDataset& data, const TrainConfig& cfg, const HeldOutLabels* held_out) {
  cfg.validate();
  data.validate();
  if (held_out && held_out->labels.size() != data.target.features.rows()) {
    throw DataError("held-out label count differs from target row count");
  }

  const std::size_t width = data.source.features.cols();
  const auto arch = nets::Architecture::defaults(width, static_cast<std::size_t>(data.num_classes));
  FitResult result{nets::make_bundle(arch, derive_seed(cfg.seed, kInit)), {}, std::nullopt, {}};
  nets::ModelBundle& bundle = result.bundle;

  if (cfg.mode == Mode::msan_pt) {
    PretrainResult pre = pretrain(data, cfg);
    nets::transfer_pretrained(pre.autoencoder, bundle);
    result.ae_loss = std::move(pre.loss);
    result.autoencoder = std::move(pre.autoencoder);
  }

  const bool adversarial = cfg.mode != Mode::nontransfer;
  const bool subdomain = cfg.mode == Mode::msan || cfg.mode == Mode::msan_pt;
  auto opt = optim::make_optimizer(cfg.optimizer, bundle.parameters(), cfg.lr);
  Rng batch_rng(derive_seed(cfg.seed, kBatches));
  Rng pair_rng(derive_seed(cfg.seed, kPairs));

  const std::size_t ns = data.source.features.rows();
  const std::size_t nt = data.target.features.rows();
  const auto bs = static_cast<std::size_t>(cfg.batch_source);
  const auto bt = static_cast<std::size_t>(cfg.batch_target);
  const std::size_t steps_per_epoch = (ns + bs - 1) / bs;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
  const auto by_class = indices_by_class(data.source.labels, data.num_classes);
  const PartnerPool pool{&data.source, &data.target.features, data.num_classes};

  std::vector<std::size_t> source_order(ns), target_order(nt);
  std::iota(target_order.begin(), target_order.end(), 0);
  batch_rng.shuffle(target_order);
  std::size_t target_cursor = 0;
  auto next_target_batch = [&] {
    std::vector<std::size_t> idx;
    idx.reserve(bt);
    while (idx.size() < bt) {
      if (target_cursor == nt) {
        batch_rng.shuffle(target_order);
        target_cursor = 0;
      }
      idx.push_back(target_order[target_cursor++]);
    }
    return idx;
  };

  cluster::PseudoLabelSet pseudo;
  std::size_t pseudo_cursor = 0;
  std::size_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool subdomain_active = subdomain && epoch >= cfg.subdomain_warmup_epochs;
    if (subdomain_active && (epoch - cfg.subdomain_warmup_epochs) % cfg.pseudo_refresh_every == 0) {
      pseudo = refresh_pseudo_labels(bundle, data, cfg.q);
      pseudo_cursor = 0;
    }
    if (subdomain_active) pair_rng.shuffle(pseudo.entries);

    std::iota(source_order.begin(), source_order.end(), 0);
    batch_rng.shuffle(source_order);

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const std::size_t begin = s * bs;
      const std::span<const std::size_t> src_idx(source_order.data() + begin, std::min(bs, ns - begin));
      Batch batch;
      batch.source_x = gather_rows(data.source.features, src_idx);
      for (std::size_t i : src_idx) batch.source_y.push_back(data.source.labels[i]);

      const double lambda =
          cfg.grl_lambda *
          (cfg.grl_ramp ? ad::grl_ramp(static_cast<double>(step) / static_cast<double>(total_steps)) : 1.0);

      opt->zero_grad();
      ad::Tape tape;
      ad::Var loss;
      if (!adversarial) {
        const ad::Var feats = nets::forward_features(tape, bundle, tape.constant(batch.source_x));
        loss = ad::softmax_cross_entropy(nets::predict_class(tape, bundle, feats), batch.source_y);
        rec.class_loss += loss.value()[0];
      } else {
        const auto tgt_idx = next_target_batch();
        batch.target_x = gather_rows(data.target.features, tgt_idx);
        if (!subdomain_active) {
          const GlobalLoss g = loss_global(tape, bundle, batch, lambda);
          loss = g.total;
          rec.class_loss += g.class_loss.value()[0];
          rec.domain_loss += g.domain_loss.value()[0];
        } else {
          // At most batch_target pseudo-labelled samples per step, cycling
          // through the epoch's (fixed) pseudo set.
          cluster::PseudoLabelSet chunk;
          const std::size_t take = std::min(bt, pseudo.size());
          for (std::size_t i = 0; i < take; ++i) {
            chunk.entries.push_back(pseudo.entries[pseudo_cursor]);
            pseudo_cursor = (pseudo_cursor + 1) % pseudo.size();
          }
          const PartnerDraw draw = draw_partners(chunk, by_class, pair_rng);
          const ad::Var feats =
              nets::forward_features(tape, bundle, tape.constant(stack_subdomain_input(batch, pool, draw)));
          const ad::Var class_loss = ad::softmax_cross_entropy(
              nets::predict_class(tape, bundle, ad::slice_rows(feats, 0, batch.source_rows())), batch.source_y);
          const SubdomainLoss sd = subdomain_terms(tape, bundle, feats, batch.source_rows(), batch.target_rows(),
                                                   draw.targets.size(), lambda);
          loss = ad::add(class_loss, sd.total);
          rec.class_loss += class_loss.value()[0];
          rec.domain_loss += sd.domain_term.value()[0];
          if (sd.pairs) rec.subdomain_loss += sd.same_term.value()[0] + sd.diff_term.value()[0];
        }
      }
      tape.backward(loss);
      opt->step();
    }
    const auto denom = static_cast<double>(steps_per_epoch);
    rec.class_loss /= denom;
    rec.domain_loss /= denom;
    rec.subdomain_loss /= denom;
    rec.target_acc = held_out ? evaluate(bundle, data.target.features, held_out->labels).accuracy
                              : std::numeric_limits<double>::quiet_NaN();
    result.metrics.epochs.push_back(rec);
  }

  if (held_out) {
    const Evaluation ev = evaluate(bundle, data.target.features, held_out->labels);
    result.metrics.accuracy = ev.accuracy;
    result.metrics.per_class = ev.per_class;
  } else {
    result.metrics.accuracy = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

std::uint64_t fold_seed(std::uint64_t seed, int subject_id) {
  return derive_seed(seed, 1000 + static_cast<std::uint64_t>(subject_id));
}

DomainDataset loso_split(std::span<const synth::SubjectData> subjects, std::size_t held_out, int num_classes,
                         HeldOutLabels* truth) {
  if (held_out >= subjects.size()) throw ArgumentError("held-out subject index out of range");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (i != held_out) order.push_back(i);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return subjects[a].subject_id < subjects[b].subject_id; });

  DomainDataset data;
  data.num_classes = num_classes;
  std::vector<Tensor> mats;
  mats.reserve(order.size());
  for (std::size_t i : order) {
    mats.push_back(subjects[i].matrix());
    data.source.labels.insert(data.source.labels.end(), subjects[i].labels.begin(), subjects[i].labels.end());
  }
  std::vector<const Tensor*> parts;
  for (const auto& m : mats) parts.push_back(&m);
  data.source.features = msan::concat_rows(parts);
  data.target.features = subjects[held_out].matrix();
  if (truth) truth->labels = subjects[held_out].labels;
  return data;
}

LosoResult loso_run(std::span<const synth::SubjectData> subjects, const TrainConfig& cfg,
                    const std::function<void(const FoldResult&)>& on_fold) {
  if (subjects.size() < 2) throw ArgumentError("leave-one-subject-out needs at least 2 subjects");
  cfg.validate();
  int num_classes = 0;
  for (const auto& s : subjects)
    for (int l : s.labels) num_classes = std::max(num_classes, l + 1);

  LosoResult out;
  std::vector<double> accs;
  for (std::size_t f = 0; f < subjects.size(); ++f) {
    HeldOutLabels truth;
    const DomainDataset data = loso_split(subjects, f, num_classes, &truth);
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = fold_seed(cfg.seed, subjects[f].subject_id);
    FitResult fitted = fit(data, fold_cfg, &truth);
    FoldResult fr{f, subjects[f].subject_id, fitted.metrics.accuracy, std::move(fitted.metrics),
                  std::move(fitted.ae_loss)};
    accs.push_back(fr.accuracy);
    if (on_fold) on_fold(fr);
    out.folds.push_back(std::move(fr));
  }
  out.mean = mean_of(accs);
  out.std = population_std(accs);
  return out;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace msan::train
