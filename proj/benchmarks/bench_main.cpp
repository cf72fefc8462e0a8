#include <benchmark/benchmark.h>

#include "msan/autodiff.hpp"
#include "msan/cluster.hpp"
#include "msan/nets.hpp"
#include "msan/optim.hpp"
#include "msan/signal.hpp"
#include "msan/synth.hpp"
#include "msan/trainer.hpp"

using namespace msan;

namespace {

Tensor random_tensor(Rng& rng, Shape dims) {
  Tensor t(std::move(dims));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor(rng, {n, n}), b = random_tensor(rng, {n, n});
  for (auto _ : state) {
    ad::Tape t;
    benchmark::DoNotOptimize(ad::matmul(t.constant(a), t.constant(b)).value()[0]);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

// Forward and backward through G_f and D_c on one batch of the default width.
void BM_FeatureBackward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  nets::ModelBundle b = nets::make_bundle(nets::Architecture::defaults(80, 3), 2);
  Rng rng(3);
  const Tensor x = random_tensor(rng, {rows, 80});
  std::vector<int> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = static_cast<int>(i % 3);
  for (auto _ : state) {
    ad::Tape t;
    const ad::Var f = nets::forward_features(t, b, t.constant(x));
    t.backward(ad::softmax_cross_entropy(nets::predict_class(t, b, f), y));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_FeatureBackward)->Arg(64)->Arg(128);

// One subdomain-adversarial step: forward, backward and an SGD update.
void BM_TrainStep(benchmark::State& state) {
  synth::SynthConfig sc;
  sc.num_subjects = 3;
  const auto subjects = synth::generate_benchmark(sc);
  const train::DomainDataset d = train::loso_split(subjects, 0, sc.num_classes, nullptr);
  nets::ModelBundle b = nets::make_bundle(nets::Architecture::defaults(d.source.features.cols(), 3), 5);
  const cluster::PseudoLabelSet pseudo = train::refresh_pseudo_labels(b, d, 0.1);
  std::vector<std::size_t> src(64), tgt(64);
  for (std::size_t i = 0; i < 64; ++i) src[i] = i * 3, tgt[i] = i * 2;
  train::Batch batch{gather_rows(d.source.features, src), {}, gather_rows(d.target.features, tgt)};
  for (std::size_t i : src) batch.source_y.push_back(d.source.labels[i]);
  const train::PartnerPool pool{&d.source, &d.target.features, 3};
  auto params = b.parameters();
  auto opt = optim::make_optimizer(optim::Kind::sgd, params, 0.01);
  Rng rng(7);
  for (auto _ : state) {
    for (auto* p : params) p->zero_grad();
    ad::Tape t;
    const ad::Var f = nets::forward_features(t, b, t.constant(batch.source_x));
    const ad::Var cls = ad::softmax_cross_entropy(nets::predict_class(t, b, f), batch.source_y);
    const train::SubdomainLoss sd = train::loss_subdomain(t, b, batch, pseudo, pool, rng);
    t.backward(ad::add(cls, sd.total));
    opt->step();
  }
}
BENCHMARK(BM_TrainStep);

void BM_FeatureExtraction(benchmark::State& state) {
  const signal::ElectrodeLayout layout = signal::load_layout(MSAN_SOURCE_DIR "/data/layouts/seed62_17x19.txt");
  signal::Recording rec = synth::generate_raw_eeg(62, 200.0, static_cast<double>(state.range(0)), 0, 1);
  rec.channel_names = layout.channel_order();
  for (auto _ : state) benchmark::DoNotOptimize(signal::extract_features(rec, signal::default_bands(), layout).size());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FeatureExtraction)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
  Rng rng(4);
  const Tensor target = random_tensor(rng, {static_cast<std::size_t>(state.range(0)), 64});
  const Tensor init = random_tensor(rng, {3, 64});
  for (auto _ : state) benchmark::DoNotOptimize(cluster::kmeans_refine(init, target).iterations_run);
}
BENCHMARK(BM_KMeans)->Arg(300)->Arg(3000);

}  // namespace

BENCHMARK_MAIN();
