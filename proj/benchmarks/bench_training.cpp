#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ccvit/common/random.hpp"
#include "ccvit/data/synthetic.hpp"
#include "ccvit/tokenizer/codebook.hpp"
#include "ccvit/trainer/trainer.hpp"

namespace {

using namespace ccvit;

// One optimizer step of the desk model on 64 x 64 textures.
void BM_TrainStep(benchmark::State& state) {
    data::TextureOptions to;
    to.count = 256;
    to.atoms = 64;
    const auto images = data::quantized_textures(to);
    const auto atoms = data::texture_atoms(to);
    const tokenizer::Codebook cb(8, 192, atoms);
    const auto set = trainer::Dataset::from_images(images, cb, 64);
    auto mc = model::ModelConfig::desk();
    mc.vocab = cb.size();
    trainer::TrainConfig tc;
    tc.batch_size = static_cast<std::size_t>(state.range(0));
    tc.epochs = 1000;
    trainer::Trainer tr(tc, mc, set, 1);
    for (auto _ : state) benchmark::DoNotOptimize(tr.train_step());
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

} // namespace
