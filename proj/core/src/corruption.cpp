#include "ccvit/corruption/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"

namespace ccvit::corruption {

MaskSample sample_blockwise_mask(std::size_t grid_h, std::size_t grid_w, std::size_t target_count, std::uint64_t seed,
                                 const BlockwiseMaskOptions& options) {
    const std::size_t n = grid_h * grid_w;
    if (target_count >= n)
        throw InvalidArgument("blockwise mask target " + std::to_string(target_count) + " must be below n=" +
                              std::to_string(n));
    if (options.min_block == 0 || !(options.min_aspect > 0.0 && options.min_aspect <= 1.0))
        throw InvalidArgument("invalid blockwise mask options");

    Rng rng(seed);
    std::vector<char> mask(n, 0);
    MaskSample out;
    std::size_t covered = 0;
    const std::size_t cap = options.max_block == 0 ? target_count : options.max_block;
    const double log_lo = std::log(options.min_aspect), log_hi = -log_lo;

    while (covered < target_count) {
        const std::size_t remaining = target_count - covered;
        const std::size_t area_hi = std::max(options.min_block, std::min(remaining, cap));
        const std::size_t area_lo = std::min(options.min_block, area_hi);
        bool placed = false;
        for (std::size_t attempt = 0; attempt < options.max_attempts && !placed; ++attempt) {
            const double area = std::uniform_real_distribution<double>(static_cast<double>(area_lo),
                                                                       static_cast<double>(area_hi))(rng);
            const double aspect = std::exp(std::uniform_real_distribution<double>(log_lo, log_hi)(rng));
            const auto h = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
            const auto w = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
            if (h == 0 || w == 0 || h > grid_h || w > grid_w || h * w > area_hi) continue;
            const std::size_t top = std::uniform_int_distribution<std::size_t>(0, grid_h - h)(rng);
            const std::size_t left = std::uniform_int_distribution<std::size_t>(0, grid_w - w)(rng);
            std::size_t fresh = 0;
            for (std::size_t y = top; y < top + h; ++y)
                for (std::size_t x = left; x < left + w; ++x) fresh += mask[y * grid_w + x] == 0;
            if (fresh == 0) continue;
            for (std::size_t y = top; y < top + h; ++y)
                for (std::size_t x = left; x < left + w; ++x) mask[y * grid_w + x] = 1;
            covered += fresh;
            out.blocks.push_back({top, left, h, w});
            placed = true;
        }
        if (!placed) {
            // Geometry refused every draw; fall back to a 1x1 block.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i)
                if (!mask[i]) free.push_back(i);
            const std::size_t pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
            mask[pick] = 1;
            ++covered;
            out.blocks.push_back({pick / grid_w, pick % grid_w, 1, 1});
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) out.positions.push_back(i);
    return out;
}

std::vector<std::size_t> sample_replacements(std::size_t n, std::span<const std::size_t> masked, std::size_t count,
                                             std::uint64_t seed) {
    std::vector<char> is_masked(n, 0);
    for (auto m : masked) {
        if (m >= n) throw InvalidArgument("masked position out of range");
        is_masked[m] = 1;
    }
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i)
        if (!is_masked[i]) pool.push_back(i);
    if (count > pool.size())
        throw InvalidArgument("cannot replace " + std::to_string(count) + " patches; only " +
                              std::to_string(pool.size()) + " are unmasked");
    Rng rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

CorruptionConfig CorruptionConfig::from_ratios(std::size_t n, double mask_ratio, double replace_ratio) {
    if (mask_ratio < 0.0 || replace_ratio < 0.0 || mask_ratio + replace_ratio >= 1.0)
        throw InvalidArgument("corruption ratios must be non-negative and sum below 1");
    CorruptionConfig c;
    c.mask_count = static_cast<std::size_t>(std::lround(mask_ratio * static_cast<double>(n)));
    c.replace_count = static_cast<std::size_t>(std::lround(replace_ratio * static_cast<double>(n)));
    return c;
}

CorruptionPlan make_plan(std::size_t grid_h, std::size_t grid_w, const CorruptionConfig& config, std::uint64_t seed) {
    CorruptionPlan plan;
    plan.grid_h = grid_h;
    plan.grid_w = grid_w;
    plan.seed = seed;
    const std::size_t n = grid_h * grid_w;
    const std::size_t replace = config.replacement ? config.replace_count : 0;
    if (config.mask_count + replace > n) throw InvalidArgument("corruption counts exceed the patch count");
    if (config.mask_count > 0) {
        // Cap the block size so the mask overshoot always leaves room for R.
        auto blocks = config.blocks;
        if (config.mask_count < n) blocks.min_block = std::min(blocks.min_block, n - replace - config.mask_count + 1);
        auto m = sample_blockwise_mask(grid_h, grid_w, config.mask_count, derive_seed(seed, "mask"), blocks);
        plan.masked = std::move(m.positions);
        plan.blocks = std::move(m.blocks);
    }
    if (config.replacement && config.replace_count > 0)
        plan.replaced = sample_replacements(plan.n(), plan.masked, config.replace_count, derive_seed(seed, "replace"));
    return plan;
}

namespace {

std::vector<std::size_t> read_positions(std::istringstream& line) {
    std::vector<std::size_t> out;
    std::size_t v;
    while (line >> v) out.push_back(v);
    return out;
}

} // namespace

std::string CorruptionPlan::to_text() const {
    std::ostringstream os;
    os << "ccvit-plan 1\n";
    os << "grid " << grid_h << ' ' << grid_w << '\n';
    os << "seed " << seed << '\n';
    os << "masked";
    for (auto p : masked) os << ' ' << p;
    os << "\nreplaced";
    for (auto p : replaced) os << ' ' << p;
    os << '\n';
    return os.str();
}

CorruptionPlan CorruptionPlan::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    CorruptionPlan plan;
    bool header = false, grid = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "ccvit-plan") {
            int version = 0;
            ls >> version;
            if (version != 1) throw FormatError("unsupported plan version");
            header = true;
        } else if (key == "grid") {
            if (!(ls >> plan.grid_h >> plan.grid_w)) throw FormatError("malformed grid line in plan");
            grid = true;
        } else if (key == "seed") {
            ls >> plan.seed;
        } else if (key == "masked") {
            plan.masked = read_positions(ls);
        } else if (key == "replaced") {
            plan.replaced = read_positions(ls);
        } else {
            throw FormatError("unknown plan key '" + key + "'");
        }
    }
    if (!header || !grid) throw FormatError("plan text lacks header or grid line");
    std::vector<char> seen(plan.n(), 0);
    for (const auto* set : {&plan.masked, &plan.replaced})
        for (auto p : *set) {
            if (p >= plan.n() || seen[p]) throw FormatError("plan positions out of range or overlapping");
            seen[p] = 1;
        }
    return plan;
}

std::size_t CorruptedBatch::corrupted_count() const {
    return static_cast<std::size_t>(std::count_if(tags.begin(), tags.end(), [](PositionTag t) {
        return t != PositionTag::original;
    }));
}

CorruptedBatch corrupt(const imaging::PatchGrid& grid, const tokenizer::Codebook& codebook, const CorruptionPlan& plan) {
    return corrupt(grid, tokenizer::tokenize(grid, codebook), codebook, plan);
}

CorruptedBatch corrupt(const imaging::PatchGrid& grid, const tokenizer::TokenGrid& tokens,
                       const tokenizer::Codebook& codebook, const CorruptionPlan& plan) {
    if (plan.n() != grid.count() || plan.grid_w != grid.grid_w)
        throw ShapeError("plan grid does not match patch grid");
    if (grid.dim() != codebook.dim()) throw ShapeError("patch dimension does not match codebook");
    if (tokens.count() != grid.count()) throw ShapeError("token grid does not match patch grid");

    const std::size_t n = grid.count(), dim = grid.dim();
    CorruptedBatch out;
    out.grid_h = grid.grid_h;
    out.grid_w = grid.grid_w;
    out.dim = dim;
    out.tags.assign(n, PositionTag::original);
    out.patches = grid.data;
    out.pixel_targets = grid.data;
    out.token_targets = tokens.tokens;
    for (auto p : plan.masked) {
        if (p >= n) throw InvalidArgument("masked position out of range");
        out.tags[p] = PositionTag::masked;
        std::fill_n(out.patches.begin() + static_cast<std::ptrdiff_t>(p * dim), dim, 0.0f);
    }
    for (auto p : plan.replaced) {
        if (p >= n) throw InvalidArgument("replaced position out of range");
        if (out.tags[p] != PositionTag::original) throw InvalidArgument("masked and replaced positions overlap");
        out.tags[p] = PositionTag::replaced;
        const auto c = codebook.centroid(tokens.tokens[p]);
        std::copy(c.begin(), c.end(), out.patches.begin() + static_cast<std::ptrdiff_t>(p * dim));
    }
    return out;
}

} // namespace ccvit::corruption
