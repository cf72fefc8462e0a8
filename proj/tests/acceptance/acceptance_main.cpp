// Acceptance checks. Prints one PASS/FAIL line per criterion on stdout and
// progress on stderr. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "msan/autodiff.hpp"
#include "msan/cluster.hpp"
#include "msan/dataset_io.hpp"
#include "msan/errors.hpp"
#include "msan/run_config.hpp"
#include "msan/runtime.hpp"
#include "msan/signal.hpp"
#include "msan/synth.hpp"
#include "msan/tensor_io.hpp"
#include "msan/trainer.hpp"

namespace fs = std::filesystem;
using namespace msan;

namespace {

const fs::path kSource = MSAN_SOURCE_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

Tensor random_tensor(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(dims));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Central difference of f with respect to one coordinate, restoring it.
double central(const std::function<double()>& f, double& coord, double h = 1e-5) {
  const double orig = coord;
  coord = orig + h;
  const double fp = f();
  coord = orig - h;
  const double fm = f();
  coord = orig;
  return (fp - fm) / (2.0 * h);
}

io::RunConfig load_config(const std::string& name) { return io::load_run_config(kSource / "configs" / name); }

// ---------------------------------------------------------------------------
// 1. Autodiff against finite differences.

struct OpCase {
  std::string name;
  std::function<std::vector<Tensor>(Rng&)> make;
  /// Builds the op output from leaves; the instance index seeds any constants.
  std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&, std::uint64_t)> build;
  /// Multiplier applied to the numeric derivative. Only the reversal op uses
  /// something other than 1: its backward is deliberately not its derivative.
  std::function<double(std::uint64_t)> oracle_factor = [](std::uint64_t) { return 1.0; };
};

std::size_t dim_in(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

Tensor away_from_zero(Rng& rng, Shape dims) {
  Tensor t = random_tensor(rng, std::move(dims));
  for (double& v : t.data()) v = (v < 0 ? -1.0 : 1.0) * (0.05 + std::abs(v));
  return t;
}

double lambda_for(std::uint64_t inst) { return 0.25 + 0.075 * static_cast<double>(inst % 10); }

std::vector<OpCase> op_cases() {
  std::vector<OpCase> c;
  c.push_back({"matmul",
               [](Rng& r) {
                 const std::size_t m = dim_in(r, 1, 5), k = dim_in(r, 1, 5), n = dim_in(r, 1, 5);
                 return std::vector<Tensor>{random_tensor(r, {m, k}), random_tensor(r, {k, n})};
               },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t) { return ad::matmul(v[0], v[1]); }});
  c.push_back({"add_bias",
               [](Rng& r) {
                 const std::size_t m = dim_in(r, 1, 5), n = dim_in(r, 1, 5);
                 return std::vector<Tensor>{random_tensor(r, {m, n}), random_tensor(r, {n})};
               },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t) { return ad::add_bias(v[0], v[1]); }});
  c.push_back({"relu",
               [](Rng& r) { return std::vector<Tensor>{away_from_zero(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})}; },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t) { return ad::relu(v[0]); }});
  c.push_back({"tanh",
               [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)}, -2, 2)}; },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t) { return ad::tanh(v[0]); }});
  c.push_back({"grl",
               [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})}; },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t i) { return ad::grl(v[0], lambda_for(i)); },
               [](std::uint64_t i) { return -lambda_for(i); }});
  c.push_back({"softmax_cross_entropy",
               [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {dim_in(r, 1, 6), dim_in(r, 2, 5)}, -3, 3)}; },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t i) {
                 Rng lr(1000 + i);
                 std::vector<int> labels(v[0].dims()[0]);
                 for (int& l : labels) l = static_cast<int>(lr.below(v[0].dims()[1]));
                 return ad::softmax_cross_entropy(v[0], labels);
               }});
  c.push_back({"mse",
               [](Rng& r) {
                 const Shape s{dim_in(r, 1, 5), dim_in(r, 1, 5)};
                 return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, s)};
               },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t) { return ad::mse(v[0], v[1]); }});
  c.push_back({"sum",
               [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})}; },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t) { return ad::sum(v[0]); }});
  c.push_back({"add",
               [](Rng& r) {
                 const Shape s{dim_in(r, 1, 5), dim_in(r, 1, 5)};
                 return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, s)};
               },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t) { return ad::add(v[0], v[1]); }});
  c.push_back({"scale",
               [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})}; },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t i) {
                 return ad::scale(v[0], -1.5 + 0.37 * static_cast<double>(i));
               }});
  c.push_back({"slice_rows",
               [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {dim_in(r, 2, 6), dim_in(r, 1, 4)})}; },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t i) {
                 const std::size_t rows = v[0].dims()[0];
                 const std::size_t begin = i % (rows - 1);
                 return ad::slice_rows(v[0], begin, begin + 1 + (i / 2) % (rows - begin));
               }});
  c.push_back({"concat_rows",
               [](Rng& r) {
                 const std::size_t n = dim_in(r, 1, 4);
                 std::vector<Tensor> parts;
                 const std::size_t count = dim_in(r, 2, 3);
                 for (std::size_t p = 0; p < count; ++p) parts.push_back(random_tensor(r, {dim_in(r, 1, 3), n}));
                 return parts;
               },
               [](ad::Tape&, std::vector<ad::Var>& v, std::uint64_t) { return ad::concat_rows(v); }});
  return c;
}

/// Scalar probe of an op output: mse against a fixed random target, so every
/// output element receives a distinct upstream gradient.
ad::Var probe(ad::Tape& t, ad::Var out, std::uint64_t inst) {
  if (out.value().size() == 1) return ad::sum(out);
  Rng r(5000 + inst);
  return ad::mse(out, t.constant(random_tensor(r, out.dims())));
}

double op_error(const OpCase& op, std::uint64_t inst) {
  Rng rng(derive_seed(17, inst));
  std::vector<Tensor> inputs = op.make(rng);

  std::vector<std::vector<double>> analytic;
  {
    ad::Tape t;
    std::vector<ad::Var> leaves;
    for (const Tensor& x : inputs) leaves.push_back(t.input(x));
    t.backward(probe(t, op.build(t, leaves, inst), inst));
    for (const ad::Var& l : leaves) analytic.emplace_back(l.grad().begin(), l.grad().end());
  }
  const auto value = [&] {
    ad::Tape t;
    std::vector<ad::Var> leaves;
    for (const Tensor& x : inputs) leaves.push_back(t.constant(x));
    return probe(t, op.build(t, leaves, inst), inst).value()[0];
  };
  const double factor = op.oracle_factor(inst);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i)
      worst = std::max(worst, relative_error(analytic[k][i], factor * central(value, inputs[k].data()[i])));
  return worst;
}

/// Full adversarial objective on a small network: class loss plus the
/// subdomain-adjusted domain loss. G_f descends class - lambda (domain +
/// same) + diff; D_c and D_d descend the plain sum.
double msan_loss_error(std::uint64_t inst) {
  Rng rng(derive_seed(29, inst));
  nets::Architecture arch;
  arch.feature = {{4, 6, 5, 3}, nets::Activation::tanh};
  arch.classifier = {{3, 4, 3}, nets::Activation::tanh};
  arch.domain = {{3, 4, 2}, nets::Activation::tanh};
  nets::ModelBundle b = nets::make_bundle(arch, 300 + inst);
  const double lambda = 0.2 + 0.08 * static_cast<double>(inst);

  train::SourceData source;
  source.features = random_tensor(rng, {15, 4});
  for (int i = 0; i < 15; ++i) source.labels.push_back(i % 3);
  const Tensor target = random_tensor(rng, {8, 4});
  train::Batch batch;
  std::vector<std::size_t> src, tgt;
  for (std::size_t i = 0; i < 6; ++i) src.push_back(rng.below(15));
  for (std::size_t i = 0; i < 5; ++i) tgt.push_back(rng.below(8));
  batch.source_x = gather_rows(source.features, src);
  for (std::size_t i : src) batch.source_y.push_back(source.labels[i]);
  batch.target_x = gather_rows(target, tgt);
  cluster::PseudoLabelSet pseudo;
  for (std::size_t i = 0; i < 3; ++i) pseudo.entries.push_back({rng.below(8), static_cast<int>(rng.below(3)), 0.1});
  const train::PartnerPool pool{&source, &target, 3};

  struct Terms {
    ad::Var total;
    double cls = 0, dom = 0, same = 0, diff = 0;
  };
  const auto step = [&](ad::Tape& t) {
    Rng partners(77 + inst);
    const ad::Var feats = nets::forward_features(t, b, t.constant(batch.source_x));
    const ad::Var cls = ad::softmax_cross_entropy(nets::predict_class(t, b, feats), batch.source_y);
    const train::SubdomainLoss sd = train::loss_subdomain(t, b, batch, pseudo, pool, partners, lambda);
    return Terms{ad::add(cls, sd.total), cls.value()[0], sd.domain_term.value()[0], sd.same_term.value()[0],
                 sd.diff_term.value()[0]};
  };
  for (auto* p : b.parameters()) p->zero_grad();
  {
    ad::Tape t;
    t.backward(step(t).total);
  }
  const std::function<double()> surrogate = [&] {
    ad::Tape t;
    const Terms s = step(t);
    return s.cls - lambda * (s.dom + s.same) + s.diff;
  };
  const std::function<double()> plain = [&] {
    ad::Tape t;
    const Terms s = step(t);
    return s.cls + s.dom + s.same + s.diff;
  };
  const auto gf = b.feature.parameters();
  double worst = 0.0;
  for (auto* p : b.parameters()) {
    const bool in_gf = std::find(gf.begin(), gf.end(), p) != gf.end();
    for (std::size_t i = 0; i < p->value.size(); ++i)
      worst = std::max(worst, relative_error(p->grad[i], central(in_gf ? surrogate : plain, p->value.data()[i])));
  }
  return worst;
}

Verdict criterion_autodiff() {
  const auto t0 = Clock::now();
  constexpr std::uint64_t kInstances = 10;
  std::string worst_name;
  double worst = 0.0;
  for (const OpCase& op : op_cases())
    for (std::uint64_t i = 0; i < kInstances; ++i) {
      const double e = op_error(op, i);
      if (e > worst || std::isnan(e)) worst = std::isnan(e) ? INFINITY : e, worst_name = op.name;
    }
  double msan_worst = 0.0;
  for (std::uint64_t i = 0; i < kInstances; ++i) msan_worst = std::max(msan_worst, msan_loss_error(i));
  const double secs = seconds_since(t0);
  const bool pass = worst < 1e-4 && msan_worst < 1e-4 && secs < 30.0;
  return {pass, "12 ops x 10 instances, worst rel err " + fmt(worst) + " (" + worst_name + "); full loss " +
                    fmt(msan_worst) + "; " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Gradient reversal.

Verdict criterion_grl() {
  Rng rng(8);
  const Tensor x = random_tensor(rng, {7, 5});
  const Tensor target = random_tensor(rng, {7, 5});
  bool forward_ok = true, backward_ok = true;
  for (double lambda : {0.0, 0.5, 1.0}) {
    ad::Tape plain_tape, grl_tape;
    const ad::Var xp = plain_tape.input(x);
    plain_tape.backward(ad::mse(ad::tanh(xp), plain_tape.constant(target)));
    const ad::Var xg = grl_tape.input(x);
    const ad::Var y = ad::grl(xg, lambda);
    forward_ok = forward_ok && y.value().bit_equal(x);
    grl_tape.backward(ad::mse(ad::tanh(y), grl_tape.constant(target)));
    // The upstream gradient at x is the same in both graphs, so the reversed
    // one must be exactly -lambda times it.
    for (std::size_t i = 0; i < x.size(); ++i) backward_ok = backward_ok && xg.grad()[i] == -lambda * xp.grad()[i];
  }

  nets::ModelBundle b = nets::make_bundle(nets::Architecture::defaults(20, 3), 4);
  const Tensor batch = random_tensor(rng, {16, 20});
  std::vector<int> domain(16);
  for (std::size_t i = 0; i < 16; ++i) domain[i] = i < 8 ? 0 : 1;
  const auto feature_grads = [&](bool reversed) {
    for (auto* p : b.parameters()) p->zero_grad();
    ad::Tape t;
    ad::Var f = nets::forward_features(t, b, t.constant(batch));
    if (reversed) f = ad::grl(f, 1.0);
    t.backward(ad::softmax_cross_entropy(nets::predict_domain(t, b, f), domain));
    std::vector<double> g;
    for (auto* p : b.feature.parameters()) g.insert(g.end(), p->grad.begin(), p->grad.end());
    return g;
  };
  const std::vector<double> with = feature_grads(true), without = feature_grads(false);
  double worst = 0.0, largest = 0.0;
  for (std::size_t i = 0; i < with.size(); ++i) {
    worst = std::max(worst, std::abs(with[i] + without[i]));
    largest = std::max(largest, std::abs(without[i]));
  }
  const bool negation_ok = worst <= 1e-9 && largest > 0.0;
  return {forward_ok && backward_ok && negation_ok,
          std::string("forward identity ") + (forward_ok ? "exact" : "BROKEN") + ", backward -lambda*g " +
              (backward_ok ? "exact" : "BROKEN") + " for lambda 0/0.5/1; G_f grad with+without max |sum| " +
              fmt(worst) + " over " + std::to_string(with.size()) + " entries"};
}

// ---------------------------------------------------------------------------
// 3. Differential entropy.

Verdict criterion_entropy() {
  double worst = 0.0;
  for (double var : {0.25, 1.0, 4.0}) {
    const double closed = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(var * 100)));
      std::vector<double> w(2000);
      for (double& v : w) v = rng.normal(0.0, std::sqrt(var));
      worst = std::max(worst, std::abs(signal::differential_entropy(w) - closed));
    }
  }
  double scale_worst = 0.0;
  Rng rng(3);
  std::vector<double> w(2000);
  for (double& v : w) v = rng.normal(0.0, 1.0);
  const double base = signal::differential_entropy(w);
  for (double s : {0.5, 2.0, 10.0, -3.0}) {
    std::vector<double> scaled(w);
    for (double& v : scaled) v *= s;
    scale_worst = std::max(scale_worst, std::abs(signal::differential_entropy(scaled) - base - std::log(std::abs(s))));
  }
  return {worst <= 0.05 && scale_worst <= 1e-9, "max |DE - closed form| " + fmt(worst) +
                                                    " nats over 60 windows; max scaling deviation " + fmt(scale_worst)};
}

// ---------------------------------------------------------------------------
// 4. 62-channel grid.

Verdict criterion_layout() {
  const signal::ElectrodeLayout layout = signal::load_layout(kSource / "data" / "layouts" / "seed62_17x19.txt");
  const std::vector<std::string> order = layout.channel_order();
  signal::Recording rec = synth::generate_raw_eeg(static_cast<int>(order.size()), 200.0, 3.0, 1, 11);
  rec.channel_names = order;
  const auto maps = signal::extract_features(rec, signal::default_bands(), layout);

  std::set<std::pair<std::size_t, std::size_t>> mapped;
  for (const auto& [name, cell] : layout.placements()) mapped.insert({cell.row, cell.col});
  bool shapes_ok = maps.size() == 3, zeros_ok = true, mapped_ok = true;
  for (const auto& m : maps) {
    shapes_ok = shapes_ok && m.values.dims() == Shape{17, 19, 5};
    if (!shapes_ok) break;
    for (std::size_t r = 0; r < 17; ++r)
      for (std::size_t c = 0; c < 19; ++c)
        for (std::size_t b = 0; b < 5; ++b) {
          const double v = m.values[(r * 19 + c) * 5 + b];
          if (mapped.contains({r, c}))
            mapped_ok = mapped_ok && std::isfinite(v) && v != 0.0;
          else
            zeros_ok = zeros_ok && v == 0.0;
        }
  }
  const bool pass = order.size() == 62 && mapped.size() == 62 && shapes_ok && zeros_ok && mapped_ok;
  return {pass, std::to_string(order.size()) + " channels, " + std::to_string(maps.size()) + " maps of 17x19x5; " +
                    std::to_string(17 * 19 - mapped.size()) + " unmapped cells " + (zeros_ok ? "all zero" : "NONZERO")};
}

// ---------------------------------------------------------------------------
// 5. Clustering and pseudo-labels.

Verdict criterion_cluster() {
  io::RunConfig cfg = load_config("separable.cfg");
  std::size_t runs = 0, selected = 0, impure = 0, count_mismatch = 0, inertia_rises = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.set_seed(seed);
    const auto subjects = synth::generate_benchmark(cfg.synth);
    for (std::size_t held = 0; held < subjects.size(); ++held) {
      train::HeldOutLabels truth;
      const train::DomainDataset d = train::loso_split(subjects, held, cfg.synth.num_classes, &truth);
      const Tensor init = cluster::source_centroids(d.source.features, d.source.labels, d.num_classes);
      const cluster::ClusterState state = cluster::kmeans_refine(init, d.target.features);
      for (std::size_t i = 1; i < state.inertia_history.size(); ++i)
        inertia_rises += state.inertia_history[i] > state.inertia_history[i - 1];
      const cluster::PseudoLabelSet set = cluster::select_top_fraction(state, 0.10);
      std::map<int, std::size_t> sizes;
      for (int a : state.assignments) ++sizes[a];
      std::size_t expected = 0;
      for (const auto& [k, n] : sizes) expected += static_cast<std::size_t>(std::ceil(0.10 * static_cast<double>(n)));
      count_mismatch += set.size() != expected;
      for (const auto& e : set.entries) impure += e.label != truth.labels[e.target_index];
      selected += set.size();
      ++runs;
    }
  }
  const double purity = selected ? 1.0 - static_cast<double>(impure) / static_cast<double>(selected) : 0.0;
  return {inertia_rises == 0 && impure == 0 && count_mismatch == 0 && selected > 0,
          std::to_string(runs) + " clusterings over 10 seeds; inertia rises " + std::to_string(inertia_rises) +
              "; purity " + fmt(100.0 * purity) + "% of " + std::to_string(selected) + "; count mismatches " +
              std::to_string(count_mismatch)};
}

// ---------------------------------------------------------------------------
// 6 and 7. Ablation runs.

/// P(X >= wins) for X ~ Binomial(n, 1/2).
double sign_test_p(int wins, int n) {
  double p = 0.0;
  for (int k = wins; k <= n; ++k) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
  return p * std::pow(0.5, n);
}

/// Wins of a over b and the p-value with ties dropped.
std::pair<int, double> paired_sign_test(const std::vector<double>& a, const std::vector<double>& b) {
  int wins = 0, n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) continue;
    ++n;
    wins += a[i] > b[i];
  }
  return {wins, sign_test_p(wins, n)};
}

/// Source class centroids classifying the held-out subject in input space.
double nearest_centroid_accuracy(const std::vector<synth::SubjectData>& subjects, int num_classes) {
  std::vector<double> acc;
  for (std::size_t held = 0; held < subjects.size(); ++held) {
    train::HeldOutLabels truth;
    const train::DomainDataset d = train::loso_split(subjects, held, num_classes, &truth);
    const Tensor c = cluster::source_centroids(d.source.features, d.source.labels, num_classes);
    std::size_t correct = 0;
    const std::size_t n = d.target.features.rows(), w = d.target.features.cols();
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = INFINITY;
      for (int k = 0; k < num_classes; ++k) {
        double dist = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
          const double diff = d.target.features[i * w + j] - c[static_cast<std::size_t>(k) * w + j];
          dist += diff * diff;
        }
        if (dist < best_d) best_d = dist, best = k;
      }
      correct += best == truth.labels[i];
    }
    acc.push_back(static_cast<double>(correct) / static_cast<double>(n));
  }
  return train::mean_of(acc);
}

/// LOSO mean accuracy per seed for each mode.
std::map<train::Mode, std::vector<double>> ablation(const std::string& config, const std::vector<train::Mode>& modes,
                                                    int seeds, double* oracle) {
  io::RunConfig cfg = load_config(config);
  std::map<train::Mode, std::vector<double>> out;
  std::vector<double> oracle_acc;
  for (int s = 0; s < seeds; ++s) {
    cfg.set_seed(static_cast<std::uint64_t>(s));
    const auto subjects = synth::generate_benchmark(cfg.synth);
    oracle_acc.push_back(nearest_centroid_accuracy(subjects, cfg.synth.num_classes));
    for (train::Mode m : modes) {
      train::TrainConfig tc = cfg.train;
      tc.mode = m;
      const auto t0 = Clock::now();
      const double mean = train::loso_run(subjects, tc).mean;
      out[m].push_back(mean);
      std::cerr << "  " << config << " seed " << s << " " << train::mode_name(m) << " " << fmt(mean) << " ("
                << fmt(seconds_since(t0), 3) << " s)\n";
    }
  }
  if (oracle) *oracle = train::mean_of(oracle_acc);
  return out;
}

Verdict criterion_ordering() {
  using train::Mode;
  const auto t0 = Clock::now();
  double oracle = 0.0;
  auto acc = ablation("default.cfg", {Mode::nontransfer, Mode::dan, Mode::msan}, 10, &oracle);
  const double secs = seconds_since(t0);
  const double nt = train::mean_of(acc[Mode::nontransfer]), dan = train::mean_of(acc[Mode::dan]),
               ms = train::mean_of(acc[Mode::msan]);
  const auto [w1, p1] = paired_sign_test(acc[Mode::msan], acc[Mode::dan]);
  const auto [w2, p2] = paired_sign_test(acc[Mode::dan], acc[Mode::nontransfer]);
  const bool pass = ms > dan && dan > nt && ms - dan >= 0.02 && dan - nt >= 0.05 && p1 < 0.05 && p2 < 0.05 &&
                    secs < 1800.0;
  return {pass, "msan " + fmt(ms) + " > dan " + fmt(dan) + " > nontransfer " + fmt(nt) + "; msan-dan " +
                    fmt(100 * (ms - dan), 3) + " pts (" + std::to_string(w1) + "/10 wins, p " + fmt(p1, 3) +
                    "), dan-nontransfer " + fmt(100 * (dan - nt), 3) + " pts (" + std::to_string(w2) + "/10, p " +
                    fmt(p2, 3) + "); nearest-centroid oracle " + fmt(oracle) + "; " + fmt(secs / 60.0, 3) + " min"};
}

Verdict criterion_stability() {
  using train::Mode;
  double oracle = 0.0;
  auto acc = ablation("high_shift.cfg", {Mode::msan, Mode::msan_pt}, 10, &oracle);
  const double m = train::mean_of(acc[Mode::msan]), pt = train::mean_of(acc[Mode::msan_pt]);
  const double sd_m = train::population_std(acc[Mode::msan]), sd_pt = train::population_std(acc[Mode::msan_pt]);
  return {sd_pt <= sd_m && pt >= m - 0.01, "std over 10 seeds msan_pt " + fmt(sd_pt) + " vs msan " + fmt(sd_m) +
                                               "; mean msan_pt " + fmt(pt) + " vs msan " + fmt(m) +
                                               "; nearest-centroid oracle " + fmt(oracle)};
}

// ---------------------------------------------------------------------------
// 8. Reproducibility and checkpoint format.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Writes metrics and summary files of one LOSO run the way the CLI does.
void loso_files(const io::RunConfig& cfg, const fs::path& dir) {
  const auto subjects = synth::generate_benchmark(cfg.synth);
  const train::LosoResult r = train::loso_run(subjects, cfg.train);
  for (const auto& f : r.folds) {
    fs::create_directories(dir / ("fold_" + std::to_string(f.fold)));
    io::write_text_atomic(dir / ("fold_" + std::to_string(f.fold)) / "metrics.csv", io::format_metrics_csv(f.metrics));
  }
  io::write_text_atomic(dir / "summary.csv", io::format_summary_csv(r));
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t* files) {
  std::vector<fs::path> names;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file() && (e.path().extension() == ".csv")) names.push_back(fs::relative(e.path(), a));
  *files = names.size();
  for (const auto& n : names)
    if (!fs::exists(b / n) || slurp(a / n) != slurp(b / n)) return false;
  return !names.empty();
}

#ifdef MSAN_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(MSAN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}
#endif

template <typename F>
bool throws_format_error(F&& f) {
  try {
    f();
  } catch (const FormatError&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Verdict criterion_reproducible() {
  const fs::path dir = fs::temp_directory_path() / "msan_acceptance_repro";
  fs::remove_all(dir);
  const io::RunConfig cfg = load_config("quick.cfg");
  loso_files(cfg, dir / "a");
  loso_files(cfg, dir / "b");
  std::size_t files = 0;
  bool files_ok = same_tree(dir / "a", dir / "b", &files);
  std::string detail = std::to_string(files) + " metrics/summary files identical in-process";
#ifdef MSAN_CLI_PATH
  {
    const std::string quick = "--config " + (kSource / "configs" / "quick.cfg").string();
    const std::string data = (dir / "data").string();
    std::size_t cli_files = 0;
    const bool ran = run_cli("synth " + quick + " --out " + data) == 0 &&
                     run_cli("loso " + quick + " --data " + data + " --out " + (dir / "c").string()) == 0 &&
                     run_cli("loso " + quick + " --data " + data + " --out " + (dir / "d").string()) == 0;
    const bool cli_ok = ran && same_tree(dir / "c", dir / "d", &cli_files);
    files_ok = files_ok && cli_ok;
    detail += ", " + std::to_string(cli_files) + " across two CLI processes";
  }
#endif

  train::TrainConfig tc = cfg.train;
  tc.mode = train::Mode::msan_pt;
  const auto subjects = synth::generate_benchmark(cfg.synth);
  const train::DomainDataset d = train::loso_split(subjects, 0, cfg.synth.num_classes, nullptr);
  train::FitResult fit = train::fit(d, tc);
  const fs::path ck = dir / "model.msck";
  io::save_checkpoint(ck, io::bundle_entries(fit.bundle));
  nets::ModelBundle back = io::bundle_from_entries(io::load_checkpoint(ck));
  bool roundtrip = true;
  const auto pa = fit.bundle.parameters(), pb = back.parameters();
  roundtrip = pa.size() == pb.size();
  for (std::size_t i = 0; roundtrip && i < pa.size(); ++i)
    roundtrip = pa[i]->name == pb[i]->name && pa[i]->value.bit_equal(pb[i]->value);
  roundtrip = roundtrip && io::encode_checkpoint(io::bundle_entries(back)) == io::read_file(ck);

  const io::Bytes good = io::read_file(ck);
  std::vector<io::Bytes> bad;
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{9}, good.size() / 2, good.size() - 1})
    bad.emplace_back(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
  io::Bytes flipped = good;
  flipped[1] ^= 0xFF;
  bad.push_back(flipped);
  io::Bytes version = good;
  version[4] = 0x7F;
  bad.push_back(version);
  io::Bytes trailing = good;
  trailing.push_back(0);
  bad.push_back(trailing);
  bad.push_back(io::encode_tensor(fit.bundle.feature.weights[0].value));
  const std::string text = "epoch,loss\n1,0.5\n";
  bad.emplace_back(text.begin(), text.end());
  std::size_t rejected = 0;
  for (std::size_t i = 0; i < bad.size(); ++i) {
    const fs::path p = dir / ("bad_" + std::to_string(i) + ".msck");
    io::write_file_atomic(p, bad[i]);
    rejected += throws_format_error([&] { (void)io::load_checkpoint(p); });
  }
  fs::remove_all(dir);
  const bool pass = files_ok && roundtrip && rejected == bad.size();
  return {pass, detail + "; checkpoint roundtrip " + (roundtrip ? "bit-exact" : "DIFFERS") + "; " +
                    std::to_string(rejected) + "/" + std::to_string(bad.size()) +
                    " corrupt or foreign files raise a format error"};
}

// ---------------------------------------------------------------------------
// 9. Target labels never reach training.

Verdict criterion_label_hygiene() {
  io::RunConfig cfg = load_config("quick.cfg");
  const auto subjects = synth::generate_benchmark(cfg.synth);
  std::size_t compared = 0, differing = 0;
  for (train::Mode m : {train::Mode::nontransfer, train::Mode::dan, train::Mode::msan, train::Mode::msan_pt}) {
    train::TrainConfig tc = cfg.train;
    tc.mode = m;
    for (std::size_t held = 0; held < subjects.size(); ++held) {
      train::HeldOutLabels truth;
      const train::DomainDataset d = train::loso_split(subjects, held, cfg.synth.num_classes, &truth);
      train::HeldOutLabels corrupted = truth;
      Rng rng(derive_seed(held, 9));
      for (int& l : corrupted.labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(d.num_classes)));
      train::FitResult a = train::fit(d, tc, &truth);
      train::FitResult b = train::fit(d, tc, &corrupted);
      const auto pa = a.bundle.parameters(), pb = b.bundle.parameters();
      for (std::size_t i = 0; i < pa.size(); ++i) {
        ++compared;
        differing += !pa[i]->value.bit_equal(pb[i]->value);
      }
    }
  }
  return {differing == 0 && compared > 0, std::to_string(compared) +
                                              " parameter tensors compared over 4 modes x " +
                                              std::to_string(subjects.size()) + " folds; " +
                                              std::to_string(differing) + " differ after label corruption"};
}

struct Criterion {
  int id;
  const char* title;
  Verdict (*check)();
};

const Criterion kCriteria[] = {
    {1, "autodiff matches finite differences", criterion_autodiff},
    {2, "gradient reversal", criterion_grl},
    {3, "differential entropy", criterion_entropy},
    {4, "62-channel 17x19 grid", criterion_layout},
    {5, "k-means and pseudo-label selection", criterion_cluster},
    {6, "ablation ordering nontransfer < dan < msan", criterion_ordering},
    {7, "pre-training stabilises high-shift runs", criterion_stability},
    {8, "reproducible outputs and checkpoint format", criterion_reproducible},
    {9, "target labels never reach training", criterion_label_hygiene},
};

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    try {
      wanted.insert(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::cerr << "usage: " << argv[0] << " [criterion number...]\n";
      return 2;
    }
  }
  // ctest hides the output of passing tests, so the verdicts also go to a file.
  std::ofstream report("acceptance_report.txt");
  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    std::cerr << "criterion " << c.id << ": " << c.title << "\n";
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::ostringstream line;
    line << "criterion " << c.id << " " << (v.pass ? "PASS" : "FAIL") << " " << c.title << ": " << v.detail << '\n';
    std::cout << line.str() << std::flush;
    report << line.str() << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
