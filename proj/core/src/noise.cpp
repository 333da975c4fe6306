#include "ccvit/imaging/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"

namespace ccvit::imaging {

std::string to_string(NoiseKind kind) {
    switch (kind) {
    case NoiseKind::mask: return "mask";
    case NoiseKind::gaussian_noise: return "gaussian_noise";
    case NoiseKind::gaussian_blur: return "gaussian_blur";
    }
    return "unknown";
}

NoiseKind parse_noise_kind(const std::string& text) {
    if (text == "mask") return NoiseKind::mask;
    if (text == "gaussian_noise" || text == "noise") return NoiseKind::gaussian_noise;
    if (text == "gaussian_blur" || text == "blur") return NoiseKind::gaussian_blur;
    throw InvalidArgument("unknown noise kind '" + text + "'");
}

void NoiseSpec::validate() const {
    if (kind == NoiseKind::mask) {
        if (!(parameter > 0.0 && parameter < 1.0)) throw InvalidArgument("mask ratio must lie in (0, 1)");
        if (patch_size == 0) throw InvalidArgument("mask noise needs a positive patch size");
    } else if (!(parameter > 0.0) || !std::isfinite(parameter)) {
        throw InvalidArgument(to_string(kind) + " sigma must be positive");
    }
}

std::size_t mask_patch_count(std::size_t n, double ratio) {
    // The epsilon absorbs representation error, e.g. 0.1 * 10 = 0.99999...
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

std::vector<std::size_t> sample_mask_patches(std::size_t n, std::size_t count, std::uint64_t seed) {
    if (count > n) throw InvalidArgument("cannot mask more patches than exist");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Image fill_patches(const Image& img, std::size_t patch_size, std::span<const std::size_t> positions, float fill) {
    if (patch_size == 0 || img.height % patch_size || img.width % patch_size)
        throw InvalidArgument("image is not divisible by the mask patch size");
    const std::size_t gw = img.width / patch_size;
    const std::size_t n = gw * (img.height / patch_size);
    Image out = img;
    for (auto pos : positions) {
        if (pos >= n) throw InvalidArgument("mask position out of range");
        const std::size_t y0 = (pos / gw) * patch_size, x0 = (pos % gw) * patch_size;
        for (std::size_t c = 0; c < img.channels; ++c)
            for (std::size_t y = 0; y < patch_size; ++y)
                for (std::size_t x = 0; x < patch_size; ++x) out.at(c, y0 + y, x0 + x) = fill;
    }
    return out;
}

namespace {

// Mirror index into [0, n) with period 2n: ... c b a | a b c | c b a ...
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

Image gaussian_blur(const Image& img, double sigma) {
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
        w[static_cast<std::size_t>(k + radius)] = v;
        total += v;
    }
    for (auto& v : w) v /= total;

    Image tmp = img, out = img;
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k)
                    acc += w[static_cast<std::size_t>(k + radius)] *
                           img.at(c, y, reflect(static_cast<std::ptrdiff_t>(x) + k, img.width));
                tmp.at(c, y, x) = static_cast<float>(acc);
            }
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k)
                    acc += w[static_cast<std::size_t>(k + radius)] *
                           tmp.at(c, reflect(static_cast<std::ptrdiff_t>(y) + k, img.height), x);
                out.at(c, y, x) = static_cast<float>(acc);
            }
    }
    return out;
}

} // namespace

Image apply_noise(const Image& img, const NoiseSpec& spec) {
    spec.validate();
    switch (spec.kind) {
    case NoiseKind::mask: {
        if (img.height % spec.patch_size || img.width % spec.patch_size)
            throw InvalidArgument("image is not divisible by the mask patch size");
        const std::size_t n = (img.height / spec.patch_size) * (img.width / spec.patch_size);
        const auto positions = sample_mask_patches(n, mask_patch_count(n, spec.parameter), spec.seed);
        return fill_patches(img, spec.patch_size, positions, spec.mask_fill);
    }
    case NoiseKind::gaussian_noise: {
        Image out = img;
        Rng rng(spec.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double sigma = spec.parameter / 255.0;
        for (auto& v : out.pixels) v = static_cast<float>(std::clamp(v + sigma * normal(rng), 0.0, 1.0));
        return out;
    }
    case NoiseKind::gaussian_blur: return gaussian_blur(img, spec.parameter);
    }
    throw InvalidArgument("unknown noise kind");
}

} // namespace ccvit::imaging
