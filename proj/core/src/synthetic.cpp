#include "ccvit/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"
#include "ccvit/imaging/image_io.hpp"

namespace ccvit::data {

std::vector<float> texture_atoms(const TextureOptions& options) {
    const std::size_t p = options.patch_size, c = options.channels, dim = c * p * p;
    if (p == 0 || c == 0 || options.atoms == 0) throw InvalidArgument("texture atoms need a positive size");
    Rng rng(derive_seed(options.seed, "atoms"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<float> out(options.atoms * dim);
    for (std::size_t a = 0; a < options.atoms; ++a) {
        const double angle = unit(rng) * 2.0 * std::numbers::pi;
        const double freq = 1.0 + std::floor(unit(rng) * 3.0);
        const double phase = unit(rng) * 2.0 * std::numbers::pi;
        const double gx = std::cos(angle), gy = std::sin(angle);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double base = 0.15 + 0.7 * unit(rng);
            const double slope = 0.4 * unit(rng) - 0.2;
            const double wave = 0.15 * unit(rng);
            for (std::size_t y = 0; y < p; ++y)
                for (std::size_t x = 0; x < p; ++x) {
                    const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(p) - 0.5;
                    const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(p) - 0.5;
                    const double along = u * gx + v * gy, across = -u * gy + v * gx;
                    const double value =
                        base + slope * along + wave * std::sin(2.0 * std::numbers::pi * freq * across + phase);
                    out[a * dim + ch * p * p + y * p + x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
                }
        }
    }
    return out;
}

imaging::Image quantized_texture(const TextureOptions& options, std::span<const float> atoms, std::size_t index) {
    const std::size_t p = options.patch_size, c = options.channels, dim = c * p * p, period = options.period;
    if (period == 0 || atoms.size() != options.atoms * dim) throw InvalidArgument("atom bank does not match options");
    Rng rng(derive_seed(options.seed, {0x7e87u, index}));
    std::uniform_int_distribution<std::size_t> pick(0, options.atoms - 1);
    std::vector<std::size_t> motif(period * period);
    for (auto& m : motif) m = pick(rng);
    std::uniform_int_distribution<std::size_t> shift(0, period - 1);
    const std::size_t oy = shift(rng), ox = shift(rng);
    std::normal_distribution<double> noise(0.0, options.noise);

    const std::size_t side = options.grid * p;
    imaging::Image img(c, side, side);
    for (std::size_t gy = 0; gy < options.grid; ++gy)
        for (std::size_t gx = 0; gx < options.grid; ++gx) {
            const float* atom = atoms.data() + motif[((gy + oy) % period) * period + (gx + ox) % period] * dim;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t x = 0; x < p; ++x) {
                        const double v = atom[ch * p * p + y * p + x] + (options.noise > 0.0 ? noise(rng) : 0.0);
                        img.at(ch, gy * p + y, gx * p + x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                    }
        }
    return img;
}

std::vector<imaging::Image> quantized_textures(const TextureOptions& options, std::size_t first) {
    const auto atoms = texture_atoms(options);
    std::vector<imaging::Image> out;
    out.reserve(options.count);
    for (std::size_t i = 0; i < options.count; ++i) out.push_back(quantized_texture(options, atoms, first + i));
    return out;
}

std::vector<imaging::Image> smooth_scenes(const SceneOptions& options) {
    std::vector<imaging::Image> out;
    out.reserve(options.count);
    const std::size_t s = options.size;
    for (std::size_t i = 0; i < options.count; ++i) {
        Rng rng(derive_seed(options.seed, {0x5ce7u, i}));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        imaging::Image img(3, s, s);
        double from[3], to[3];
        for (int ch = 0; ch < 3; ++ch) {
            from[ch] = unit(rng);
            to[ch] = unit(rng);
        }
        const double angle = unit(rng) * 2.0 * std::numbers::pi;
        struct Blob { double cx, cy, radius, color[3], weight; };
        std::vector<Blob> blobs(3 + static_cast<std::size_t>(unit(rng) * 4.0));
        for (auto& b : blobs) {
            b.cx = unit(rng);
            b.cy = unit(rng);
            b.radius = 0.05 + 0.2 * unit(rng);
            for (double& col : b.color) col = unit(rng);
            b.weight = 0.5 + 0.5 * unit(rng);
        }
        const double stripe_freq = 4.0 + 12.0 * unit(rng), stripe_angle = unit(rng) * std::numbers::pi;
        const double sx0 = unit(rng) * 0.5, sy0 = unit(rng) * 0.5, stripe_size = 0.3 + 0.2 * unit(rng);
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
                const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(s);
                const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(s);
                const double t = std::clamp(0.5 + (u - 0.5) * std::cos(angle) + (v - 0.5) * std::sin(angle), 0.0, 1.0);
                double col[3];
                for (int ch = 0; ch < 3; ++ch) col[ch] = from[ch] + (to[ch] - from[ch]) * t;
                for (const auto& b : blobs) {
                    const double d2 = ((u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy)) / (b.radius * b.radius);
                    const double w = b.weight * std::exp(-0.5 * d2);
                    for (int ch = 0; ch < 3; ++ch) col[ch] += (b.color[ch] - col[ch]) * w;
                }
                if (u >= sx0 && u < sx0 + stripe_size && v >= sy0 && v < sy0 + stripe_size) {
                    const double phase = (u * std::cos(stripe_angle) + v * std::sin(stripe_angle)) * stripe_freq;
                    const double wave = 0.15 * std::sin(2.0 * std::numbers::pi * phase);
                    for (double& c : col) c += wave;
                }
                for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = static_cast<float>(std::clamp(col[ch], 0.0, 1.0));
            }
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<std::filesystem::path> write_images(std::span<const imaging::Image> images,
                                                const std::filesystem::path& dir, std::string_view stem) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "_%04zu.png", i);
        paths.push_back(dir / (std::string(stem) + name));
        imaging::write_image(paths.back(), images[i]);
    }
    return paths;
}

} // namespace ccvit::data
