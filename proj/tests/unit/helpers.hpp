#pragma once

#include <cstdint>
#include <filesystem>
#include <unistd.h>
#include <random>
#include <string>
#include <vector>

#include "ccvit/common/random.hpp"
#include "ccvit/imaging/image.hpp"
#include "ccvit/numerics/tensor.hpp"
#include "ccvit/tokenizer/codebook.hpp"

namespace ccvit::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("ccvit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<float> uniform_floats(std::size_t count, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    Rng rng(seed);
    std::uniform_real_distribution<float> u(lo, hi);
    std::vector<float> out(count);
    for (auto& v : out) v = u(rng);
    return out;
}

template <typename T>
numerics::Tensor<T> random_tensor(numerics::Shape shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    numerics::Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(n(rng));
    return t;
}

inline imaging::Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    imaging::Image img(3, h, w);
    img.pixels = uniform_floats(img.pixels.size(), seed);
    return img;
}

// K random centroids in [0,1]^D for patch size P (3 channels).
inline tokenizer::Codebook random_codebook(std::size_t k, std::size_t patch_size, std::uint64_t seed) {
    const std::size_t dim = 3 * patch_size * patch_size;
    return tokenizer::Codebook(patch_size, dim, uniform_floats(k * dim, seed), {});
}

} // namespace ccvit::testing
