#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccvit/imaging/image.hpp"
#include "ccvit/tokenizer/codebook.hpp"

namespace ccvit::corruption {

enum class PositionTag : std::uint8_t { original = 0, masked = 1, replaced = 2 };

// Solid rectangle of patch positions on the grid.
struct Block {
    std::size_t top = 0;
    std::size_t left = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const Block&, const Block&) = default;
};

struct BlockwiseMaskOptions {
    std::size_t min_block = 16;    // lower bound of a block's sampled area
    std::size_t max_block = 0;     // upper bound; 0 means the target count
    double min_aspect = 0.3;       // aspect ratio drawn log-uniformly in [min, 1/min]
    std::size_t max_attempts = 100;
};

struct MaskSample {
    std::vector<std::size_t> positions;  // sorted
    std::vector<Block> blocks;           // accepted blocks in sampling order
};

// Unions random rectangles until at least target_count positions are
// covered. A block is capped at the outstanding count while that count is at
// least min_block, so the result lands in [target, target + min_block).
MaskSample sample_blockwise_mask(std::size_t grid_h, std::size_t grid_w, std::size_t target_count, std::uint64_t seed,
                                 const BlockwiseMaskOptions& options = {});

// Uniform sample without replacement from positions outside `masked`.
std::vector<std::size_t> sample_replacements(std::size_t n, std::span<const std::size_t> masked, std::size_t count,
                                             std::uint64_t seed);

struct CorruptionConfig {
    std::size_t mask_count = 75;
    std::size_t replace_count = 20;
    bool replacement = true;  // false forces an empty replaced set
    BlockwiseMaskOptions blocks;

    // Counts from ratios of n, rounded to nearest.
    static CorruptionConfig from_ratios(std::size_t n, double mask_ratio, double replace_ratio);
};

struct CorruptionPlan {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<std::size_t> masked;    // sorted
    std::vector<std::size_t> replaced;  // sorted, disjoint from masked
    std::vector<Block> blocks;
    std::uint64_t seed = 0;

    std::size_t n() const { return grid_h * grid_w; }
    double mask_ratio() const { return n() ? static_cast<double>(masked.size()) / static_cast<double>(n()) : 0.0; }
    double replace_ratio() const { return n() ? static_cast<double>(replaced.size()) / static_cast<double>(n()) : 0.0; }

    // Line-oriented debug format:
    //   ccvit-plan 1
    //   grid <h> <w>
    //   seed <seed>
    //   masked <positions...>
    //   replaced <positions...>
    std::string to_text() const;
    static CorruptionPlan from_text(const std::string& text);

    friend bool operator==(const CorruptionPlan& a, const CorruptionPlan& b) {
        return a.grid_h == b.grid_h && a.grid_w == b.grid_w && a.masked == b.masked && a.replaced == b.replaced &&
               a.seed == b.seed;
    }
};

// Blockwise mask M then |R| replacements among the unmasked positions. On
// grids too small for the configured min_block, the block size is capped at
// n - |R| - mask_count + 1 so R always fits.
CorruptionPlan make_plan(std::size_t grid_h, std::size_t grid_w, const CorruptionConfig& config, std::uint64_t seed);

// One corrupted image: the per-position input to the model and the targets
// taken from the uncorrupted grid.
struct CorruptedBatch {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t dim = 0;
    std::vector<PositionTag> tags;
    std::vector<float> patches;  // n x dim; masked rows are zero, replaced rows hold C_a(i)
    std::vector<tokenizer::TokenId> token_targets;
    std::vector<float> pixel_targets;  // n x dim, the original patches

    std::size_t count() const { return tags.size(); }
    std::size_t corrupted_count() const;
};

CorruptedBatch corrupt(const imaging::PatchGrid& grid, const tokenizer::Codebook& codebook, const CorruptionPlan& plan);

// Same, reusing tokens already computed for `grid`.
CorruptedBatch corrupt(const imaging::PatchGrid& grid, const tokenizer::TokenGrid& tokens,
                       const tokenizer::Codebook& codebook, const CorruptionPlan& plan);

} // namespace ccvit::corruption
