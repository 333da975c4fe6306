#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ccvit/bench/bench.hpp"
#include "ccvit/common/random.hpp"
#include "ccvit/data/synthetic.hpp"
#include "ccvit/tokenizer/kmeans.hpp"

namespace {

using namespace ccvit;

std::vector<float> uniform(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> out(count);
    for (auto& v : out) v = u(rng);
    return out;
}

// Nearest-centroid tokenization of a 64-image batch at 224 x 224, P = 16.
void BM_TokenizeBatch(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0));
    const std::size_t dim = 3 * 16 * 16;
    const bench::CentroidTokenizer tok(tokenizer::Codebook(16, dim, uniform(k * dim, 1)));
    data::SceneOptions so;
    so.count = 64;
    so.size = 224;
    std::vector<imaging::PatchGrid> grids;
    for (const auto& img : data::smooth_scenes(so)) grids.push_back(imaging::patchify(img, 16));
    for (auto _ : state) benchmark::DoNotOptimize(tok.tokenize_batch(grids));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grids.size()));
}
BENCHMARK(BM_TokenizeBatch)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_AssignNearest(benchmark::State& state) {
    const std::size_t n = 4096, dim = 192, k = static_cast<std::size_t>(state.range(0));
    const auto x = uniform(n * dim, 2);
    const tokenizer::Codebook cb(8, dim, uniform(k * dim, 3));
    for (auto _ : state) benchmark::DoNotOptimize(tokenizer::assign_nearest(x, cb));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_AssignNearest)->Arg(512)->Arg(8192)->Unit(benchmark::kMillisecond);

void BM_KMeansIteration(benchmark::State& state) {
    const std::size_t n = 16384, dim = 192;
    const auto x = uniform(n * dim, 4);
    tokenizer::KMeansOptions o;
    o.clusters = static_cast<std::size_t>(state.range(0));
    o.iterations = 1;
    o.patch_size = 8;
    for (auto _ : state) benchmark::DoNotOptimize(tokenizer::train_codebook(x, dim, o));
}
BENCHMARK(BM_KMeansIteration)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

} // namespace
