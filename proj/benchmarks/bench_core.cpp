#include <benchmark/benchmark.h>

#include "cci/cci.hpp"
#include "cci/kmeans.hpp"
#include "cci/rng.hpp"
#include "cci/synthetic.hpp"
#include "cci/vit.hpp"

using namespace cci;

namespace {

ImageTensor random_image(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor t(size);
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

// 64x64 input, 8x8 patches (N = 64), width 64, 4 blocks.
const ModelBundle& bench_bundle() {
  static const ModelBundle bundle = random_bundle(tiny_config(64, 8, 4, 64, 4), 1);
  return bundle;
}

}  // namespace

static void BM_EncodeUnmasked(benchmark::State& state) {
  const ViTEncoder enc(bench_bundle());
  const auto image = random_image(64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(image));
}
BENCHMARK(BM_EncodeUnmasked);

// Masked fraction in percent.
static void BM_EncodeMasked(benchmark::State& state) {
  const ViTEncoder enc(bench_bundle());
  const auto image = random_image(64, 2);
  ClusterMask mask(64);
  for (std::size_t j = 0; j < 64 * static_cast<std::size_t>(state.range(0)) / 100; ++j) mask.set(j, true);
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(image, &mask));
}
BENCHMARK(BM_EncodeMasked)->Arg(25)->Arg(50)->Arg(90);

static void BM_SessionEmbedMasked(benchmark::State& state) {
  const ViTEncoder enc(bench_bundle());
  const auto session = enc.open(random_image(64, 2));
  ClusterMask mask(64);
  for (std::size_t j = 0; j < 32; ++j) mask.set(j, true);
  for (auto _ : state) benchmark::DoNotOptimize(session->embed(&mask));
}
BENCHMARK(BM_SessionEmbedMasked);

static void BM_KMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  Matrix m(n, 64);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 64; ++j) m(i, j) = static_cast<float>(rng.uniform(-1, 1));
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(m, 7, 0));
}
BENCHMARK(BM_KMeans)->Arg(64)->Arg(196);

static void BM_ComputeCci(benchmark::State& state) {
  const ViTEncoder enc(bench_bundle());
  const auto image = random_image(64, 4);
  Rng rng(5);
  std::vector<float> text(bench_bundle().config().embed_dim);
  for (float& v : text) v = static_cast<float>(rng.uniform(-1, 1));
  CciOptions opt;
  opt.workers = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(compute_cci(enc, image, text, opt));
}
BENCHMARK(BM_ComputeCci)->Arg(1)->Arg(4);

BENCHMARK_MAIN();
