#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "ccvit/imaging/image.hpp"

namespace ccvit::data {

// Quantized-texture images: every patch is one of `atoms` textured atom
// patches plus small Gaussian noise, and each image tiles a random
// period x period motif of atoms across the grid. A masked patch is therefore
// predictable from any visible patch `period` positions away.
struct TextureOptions {
    std::size_t count = 64;
    std::size_t grid = 8;          // patches per side
    std::size_t patch_size = 8;
    std::size_t channels = 3;
    std::size_t atoms = 512;
    std::size_t period = 2;
    double noise = 0.01;
    std::uint64_t seed = 0;
};

// atoms x (channels*P*P) patch vectors in [0, 1].
std::vector<float> texture_atoms(const TextureOptions& options);

// Image `index` depends only on (seed, index), so any prefix of a longer run
// matches a shorter one.
imaging::Image quantized_texture(const TextureOptions& options, std::span<const float> atoms, std::size_t index);

std::vector<imaging::Image> quantized_textures(const TextureOptions& options, std::size_t first = 0);

// Natural-looking smooth scenes: colour gradients, soft blobs and a striped
// region.
struct SceneOptions {
    std::size_t count = 64;
    std::size_t size = 112;
    std::uint64_t seed = 0;
};

std::vector<imaging::Image> smooth_scenes(const SceneOptions& options);

// Writes <dir>/<stem>_0000.png, ... and returns the paths.
std::vector<std::filesystem::path> write_images(std::span<const imaging::Image> images,
                                                const std::filesystem::path& dir, std::string_view stem);

} // namespace ccvit::data
