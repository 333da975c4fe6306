#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ccvit::imaging {

// Planar CHW image with values in [0, 1].
struct Image {
    std::size_t channels = 3;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
        : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

    float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }

    friend bool operator==(const Image&, const Image&) = default;
};

// An image split into n = (H/P)(W/P) patches, each flattened to a vector of
// D = C*P*P values. Patches are in row-major grid order; inside a patch the
// layout is channel-major, then row-major: index = c*P*P + y*P + x.
struct PatchGrid {
    std::size_t patch_size = 0;
    std::size_t channels = 3;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<float> data;  // count() x dim()

    std::size_t count() const { return grid_h * grid_w; }
    std::size_t dim() const { return channels * patch_size * patch_size; }

    std::span<float> patch(std::size_t i) { return {data.data() + i * dim(), dim()}; }
    std::span<const float> patch(std::size_t i) const { return {data.data() + i * dim(), dim()}; }

    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

// Bilinear resampling with half-pixel centers; an exact copy when the size is
// unchanged.
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);

// Throws InvalidArgument unless P divides both image dimensions.
PatchGrid patchify(const Image& img, std::size_t patch_size);

Image unpatchify(const PatchGrid& grid);

// Places images left to right with `gap` pixels of `fill` between them.
// All images must share height and channel count.
Image concat_horizontal(std::span<const Image> images, std::size_t gap = 0, float fill = 1.0f);

} // namespace ccvit::imaging
