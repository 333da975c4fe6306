#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ccvit/imaging/image.hpp"
#include "ccvit/imaging/noise.hpp"
#include "ccvit/tokenizer/codebook.hpp"

namespace ccvit::bench {

// Anything that maps a patch grid to a token grid. Implementations must be
// deterministic per input.
class TokenizerPort {
public:
    virtual ~TokenizerPort() = default;
    virtual std::string name() const = 0;
    virtual std::size_t patch_size() const = 0;
    virtual tokenizer::TokenGrid tokenize(const imaging::PatchGrid& grid) const = 0;
    // Defaults to one call per grid; override to amortize across a batch.
    virtual std::vector<tokenizer::TokenGrid> tokenize_batch(std::span<const imaging::PatchGrid> grids) const;
};

// Nearest-centroid tokenizer over a codebook.
class CentroidTokenizer final : public TokenizerPort {
public:
    explicit CentroidTokenizer(tokenizer::Codebook codebook, std::string name = "centroid");

    std::string name() const override { return name_; }
    std::size_t patch_size() const override { return codebook_.patch_size(); }
    tokenizer::TokenGrid tokenize(const imaging::PatchGrid& grid) const override;
    std::vector<tokenizer::TokenGrid> tokenize_batch(std::span<const imaging::PatchGrid> grids) const override;

    const tokenizer::Codebook& codebook() const { return codebook_; }

private:
    tokenizer::Codebook codebook_;
    std::string name_;
};

// Deliberately non-local toy: the nearest-centroid index shifted by a hash of
// the whole image's 8-bit pixels, modulo K. Any visible pixel change moves
// every token.
class GlobalReferenceTokenizer final : public TokenizerPort {
public:
    explicit GlobalReferenceTokenizer(tokenizer::Codebook codebook);

    std::string name() const override { return "global-reference"; }
    std::size_t patch_size() const override { return codebook_.patch_size(); }
    tokenizer::TokenGrid tokenize(const imaging::PatchGrid& grid) const override;

private:
    tokenizer::Codebook codebook_;
};

std::unique_ptr<TokenizerPort> reference_tokenizer_global(const tokenizer::Codebook& codebook);

// Percentage of patch positions whose token survives the noise, averaged over
// images. Image i uses noise seed derive_seed(spec.seed, {i}); the mask patch
// size follows the tokenizer. `per_image` receives each image's percentage.
double unchanged_ratio(const TokenizerPort& tok, std::span<const imaging::Image> images,
                       const imaging::NoiseSpec& spec, std::vector<double>* per_image = nullptr);

struct RobustnessRow {
    std::string tokenizer;
    imaging::NoiseKind kind = imaging::NoiseKind::mask;
    double parameter = 0.0;
    double unchanged = 0.0;  // percent
    std::size_t images = 0;
    std::uint64_t seed = 0;
};

struct NoiseSetting {
    imaging::NoiseKind kind;
    double parameter;
};

// Mask 0.1/0.2/0.5, Gaussian noise sigma 1/10/25, blur sigma 0.5/1/2.
std::vector<NoiseSetting> standard_noise_grid();

std::vector<RobustnessRow> robustness_report(const TokenizerPort& tok, std::span<const imaging::Image> images,
                                             std::span<const NoiseSetting> grid, std::uint64_t seed);

// Published reference rows for parametric tokenizers (not recomputed).
std::vector<RobustnessRow> published_baselines();

void write_robustness_csv(std::ostream& out, std::span<const RobustnessRow> rows);
// One line per tokenizer with a column per noise setting.
void write_robustness_table(std::ostream& out, std::span<const RobustnessRow> rows);

struct LatencyResult {
    std::string tokenizer;
    std::size_t batch = 0;
    std::size_t repetitions = 0;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double peak_rss_mb = -1.0;  // negative when unavailable
    std::vector<double> samples_ms;
};

// Times tokenize_batch over `grids` after `warmup` untimed runs.
LatencyResult latency_bench(const TokenizerPort& tok, std::span<const imaging::PatchGrid> grids,
                            std::size_t repetitions, std::size_t warmup = 3);

// VmHWM from /proc/self/status in MiB, or a negative value.
double peak_rss_mb();

void write_latency_csv(std::ostream& out, std::span<const LatencyResult> rows);
void write_latency_table(std::ostream& out, std::span<const LatencyResult> rows);

} // namespace ccvit::bench
