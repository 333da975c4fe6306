#include "ccvit/imaging/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ccvit/common/error.hpp"

namespace ccvit::imaging {
namespace {

struct Tap {
    std::size_t lo;
    std::size_t hi;
    float frac;
};

std::vector<Tap> taps(std::size_t src, std::size_t dst) {
    std::vector<Tap> out(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
        double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src - 1));
        const auto lo = static_cast<std::size_t>(std::floor(s));
        const std::size_t hi = std::min(lo + 1, src - 1);
        out[i] = {lo, hi, static_cast<float>(s - static_cast<double>(lo))};
    }
    return out;
}

} // namespace

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0 || img.height == 0 || img.width == 0)
        throw InvalidArgument("resize to or from an empty image");
    if (height == img.height && width == img.width) return img;
    const auto ty = taps(img.height, height);
    const auto tx = taps(img.width, width);
    Image out(img.channels, height, width);
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                // a + f*(b - a) keeps constant regions exactly constant.
                const float top = img.at(c, ty[y].lo, tx[x].lo) +
                                  tx[x].frac * (img.at(c, ty[y].lo, tx[x].hi) - img.at(c, ty[y].lo, tx[x].lo));
                const float bot = img.at(c, ty[y].hi, tx[x].lo) +
                                  tx[x].frac * (img.at(c, ty[y].hi, tx[x].hi) - img.at(c, ty[y].hi, tx[x].lo));
                out.at(c, y, x) = top + ty[y].frac * (bot - top);
            }
        }
    }
    return out;
}

PatchGrid patchify(const Image& img, std::size_t patch_size) {
    if (patch_size == 0) throw InvalidArgument("patch size must be positive");
    if (img.height % patch_size != 0 || img.width % patch_size != 0)
        throw InvalidArgument("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                              " is not divisible by patch size " + std::to_string(patch_size));
    PatchGrid grid;
    grid.patch_size = patch_size;
    grid.channels = img.channels;
    grid.grid_h = img.height / patch_size;
    grid.grid_w = img.width / patch_size;
    grid.data.resize(grid.count() * grid.dim());
    const std::size_t P = patch_size;
    for (std::size_t gy = 0; gy < grid.grid_h; ++gy) {
        for (std::size_t gx = 0; gx < grid.grid_w; ++gx) {
            float* dst = grid.patch(gy * grid.grid_w + gx).data();
            for (std::size_t c = 0; c < img.channels; ++c)
                for (std::size_t y = 0; y < P; ++y)
                    for (std::size_t x = 0; x < P; ++x) *dst++ = img.at(c, gy * P + y, gx * P + x);
        }
    }
    return grid;
}

Image unpatchify(const PatchGrid& grid) {
    if (grid.data.size() != grid.count() * grid.dim()) throw ShapeError("patch grid data does not match its dims");
    const std::size_t P = grid.patch_size;
    Image img(grid.channels, grid.grid_h * P, grid.grid_w * P);
    for (std::size_t gy = 0; gy < grid.grid_h; ++gy) {
        for (std::size_t gx = 0; gx < grid.grid_w; ++gx) {
            const float* src = grid.patch(gy * grid.grid_w + gx).data();
            for (std::size_t c = 0; c < grid.channels; ++c)
                for (std::size_t y = 0; y < P; ++y)
                    for (std::size_t x = 0; x < P; ++x) img.at(c, gy * P + y, gx * P + x) = *src++;
        }
    }
    return img;
}

Image concat_horizontal(std::span<const Image> images, std::size_t gap, float fill) {
    if (images.empty()) throw InvalidArgument("nothing to concatenate");
    const auto& first = images.front();
    std::size_t width = 0;
    for (const auto& im : images) {
        if (im.height != first.height || im.channels != first.channels)
            throw ShapeError("concatenated images must share height and channels");
        width += im.width;
    }
    width += gap * (images.size() - 1);
    Image out(first.channels, first.height, width, fill);
    std::size_t x0 = 0;
    for (const auto& im : images) {
        for (std::size_t c = 0; c < im.channels; ++c)
            for (std::size_t y = 0; y < im.height; ++y)
                for (std::size_t x = 0; x < im.width; ++x) out.at(c, y, x0 + x) = im.at(c, y, x);
        x0 += im.width + gap;
    }
    return out;
}

} // namespace ccvit::imaging
