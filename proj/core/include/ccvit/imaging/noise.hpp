#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccvit/imaging/image.hpp"

namespace ccvit::imaging {

enum class NoiseKind { mask, gaussian_noise, gaussian_blur };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& text);

// One corruption for the tokenizer robustness protocol.
//   mask:            parameter is the ratio r in (0,1) of patches to fill
//   gaussian_noise:  parameter is sigma on the 0..255 scale
//   gaussian_blur:   parameter is sigma in pixels
struct NoiseSpec {
    NoiseKind kind = NoiseKind::mask;
    double parameter = 0.1;
    std::uint64_t seed = 0;
    std::size_t patch_size = 16;  // mask only
    float mask_fill = 0.5f;       // mask only

    void validate() const;
};

// floor(r * n): the count that keeps at least a (1 - r) share of patches.
std::size_t mask_patch_count(std::size_t n, double ratio);

// Uniformly chosen distinct patch positions, sorted ascending.
std::vector<std::size_t> sample_mask_patches(std::size_t n, std::size_t count, std::uint64_t seed);

// Fills the listed patches (grid positions for patch size P) with `fill`.
Image fill_patches(const Image& img, std::size_t patch_size, std::span<const std::size_t> positions, float fill);

// Mask noise selects patches uniformly at random. Gaussian noise with a
// fixed seed draws the same standard normals for every sigma, so
// realizations are nested. Blur is separable with radius ceil(3 sigma) and
// mirrored borders.
Image apply_noise(const Image& img, const NoiseSpec& spec);

} // namespace ccvit::imaging
