#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ccvit/imaging/image.hpp"

namespace ccvit::tokenizer {

using TokenId = std::uint32_t;

struct CodebookMetadata {
    std::uint64_t vectors = 0;     // N used for training
    std::uint32_t iterations = 0;
    double final_cost = 0.0;       // mean L2 distance to the assigned centroid
    std::uint64_t seed = 0;

    friend bool operator==(const CodebookMetadata&, const CodebookMetadata&) = default;
};

// K centroids in flattened patch space. Each centroid reshapes to a
// C x P x P patch, so a codebook is both a token vocabulary and a palette of
// renderable patches.
class Codebook {
public:
    Codebook() = default;
    Codebook(std::size_t patch_size, std::size_t dim, std::vector<float> centroids, CodebookMetadata meta = {});

    std::size_t size() const { return count_; }
    std::size_t dim() const { return dim_; }
    std::size_t patch_size() const { return patch_size_; }
    std::size_t channels() const { return dim_ / (patch_size_ * patch_size_); }
    const CodebookMetadata& metadata() const { return meta_; }
    void set_metadata(const CodebookMetadata& meta) { meta_ = meta; }

    std::span<const float> centroid(std::size_t k) const { return {centroids_.data() + k * dim_, dim_}; }
    std::span<const float> data() const { return centroids_; }
    std::span<const double> squared_norms() const { return norms_; }

    // Throws Error unless every centroid's nearest centroid is itself, which
    // also implies all centroids are pairwise distinct. O(K^2 D).
    void validate() const;

    friend bool operator==(const Codebook& a, const Codebook& b) {
        return a.patch_size_ == b.patch_size_ && a.dim_ == b.dim_ && a.centroids_ == b.centroids_ && a.meta_ == b.meta_;
    }

private:
    std::size_t patch_size_ = 0;
    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    std::vector<float> centroids_;
    std::vector<double> norms_;
    CodebookMetadata meta_;
};

struct TokenGrid {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<TokenId> tokens;

    std::size_t count() const { return tokens.size(); }
    friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

struct Assignment {
    std::vector<TokenId> tokens;
    std::vector<double> distances;  // exact L2 distance to the chosen centroid
};

// Exact nearest centroid for each of the N rows of `vectors` (N x D,
// row-major): argmin_k ||x - C_k||_2 with ties to the lowest index. Distances
// are screened with the ||x||^2 - 2x.c + ||c||^2 expansion in single
// precision, then every candidate inside the expansion's rounding bound is
// re-ranked with the direct difference in double precision.
Assignment assign_nearest(std::span<const float> vectors, std::size_t dim, std::span<const float> centroids,
                          std::span<const double> centroid_norms);

Assignment assign_nearest(std::span<const float> vectors, const Codebook& codebook);

TokenGrid tokenize(const imaging::PatchGrid& grid, const Codebook& codebook);

// Replaces every token by its centroid patch.
imaging::PatchGrid detokenize(const TokenGrid& tokens, const Codebook& codebook);

// Binary layout (little-endian): "CCVB", u32 version (1), u32 K, u32 D,
// u32 P, K*D f32 centroids, then u64 N, u32 iterations, f64 final cost,
// u64 seed.
void save_codebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

} // namespace ccvit::tokenizer
