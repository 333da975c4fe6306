#pragma once

#include <filesystem>
#include <vector>

#include "ccvit/imaging/image.hpp"

namespace ccvit::imaging {

// Decodes PNG (8/16-bit, any color type) or binary PPM/PGM (P6/P5, maxval
// <= 255). Grayscale is expanded to three channels.
Image read_image(const std::filesystem::path& path);

// Reads and resizes to resolution x resolution.
Image load_image(const std::filesystem::path& path, std::size_t resolution);

// Encodes by extension: .png or .ppm. Values are clamped to [0, 1] and
// rounded to 8 bits.
void write_image(const std::filesystem::path& path, const Image& img);

// All supported image files below `root`, recursively, in lexicographic
// path order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& root);

} // namespace ccvit::imaging
