#include "ccvit/tokenizer/kmeans.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"
#include "ccvit/imaging/image_io.hpp"

namespace ccvit::tokenizer {
namespace {

std::uint64_t hash_row(const float* row, std::size_t dim) {
    return fnv1a(std::string_view(reinterpret_cast<const char*>(row), dim * sizeof(float)));
}

std::vector<double> squared_norms(const std::vector<float>& centroids, std::size_t dim) {
    std::vector<double> out(centroids.size() / dim);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += static_cast<double>(centroids[k * dim + i]) * centroids[k * dim + i];
        out[k] = s;
    }
    return out;
}

double distance(const float* a, const float* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

[[noreturn]] void too_few_distinct(std::size_t k) {
    throw InvalidArgument("input holds fewer than K=" + std::to_string(k) + " distinct vectors");
}

std::vector<float> init_random(std::span<const float> x, std::size_t n, std::size_t dim, std::size_t k, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<float> out;
    out.reserve(k * dim);
    std::unordered_multimap<std::uint64_t, std::size_t> seen;
    for (std::size_t idx : order) {
        const float* row = x.data() + idx * dim;
        const auto h = hash_row(row, dim);
        const auto [lo, hi] = seen.equal_range(h);
        const bool dup = std::any_of(lo, hi, [&](const auto& e) {
            return std::equal(row, row + dim, x.data() + e.second * dim);
        });
        if (dup) continue;
        seen.emplace(h, idx);
        out.insert(out.end(), row, row + dim);
        if (out.size() == k * dim) return out;
    }
    too_few_distinct(k);
}

std::vector<float> init_plus_plus(std::span<const float> x, std::size_t n, std::size_t dim, std::size_t k, Rng& rng) {
    std::vector<float> out;
    out.reserve(k * dim);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t first = pick(rng);
    out.insert(out.end(), x.data() + first * dim, x.data() + (first + 1) * dim);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = distance(x.data() + i * dim, x.data() + first * dim, dim);
        d2[i] = d * d;
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (out.size() < k * dim) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        if (!(total > 0.0)) too_few_distinct(k);
        double target = unit(rng) * total;
        std::size_t chosen = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (d2[i] <= 0.0) continue;
            chosen = i;
            target -= d2[i];
            if (target < 0.0) break;
        }
        const float* c = x.data() + chosen * dim;
        out.insert(out.end(), c, c + dim);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = distance(x.data() + i * dim, c, dim);
            d2[i] = std::min(d2[i], d * d);
        }
    }
    return out;
}

} // namespace

KMeansResult train_codebook(std::span<const float> vectors, std::size_t dim, const KMeansOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t k = options.clusters;
    if (dim == 0 || vectors.size() % dim != 0) throw InvalidArgument("vector data is not a whole number of rows");
    if (options.patch_size == 0 || dim % (options.patch_size * options.patch_size) != 0)
        throw InvalidArgument("vector dimension is not a multiple of patch_size^2");
    if (k == 0) throw InvalidArgument("K must be positive");
    if (options.iterations == 0) throw InvalidArgument("k-means needs at least one iteration");
    const std::size_t n = vectors.size() / dim;
    if (n < k) throw InvalidArgument("k-means needs N >= K (N=" + std::to_string(n) + ", K=" + std::to_string(k) + ")");

    Rng rng(options.seed);
    std::vector<float> centroids = options.init == KMeansInit::kmeans_plus_plus
                                       ? init_plus_plus(vectors, n, dim, k, rng)
                                       : init_random(vectors, n, dim, k, rng);
    auto norms = squared_norms(centroids, dim);
    auto asg = assign_nearest(vectors, dim, centroids, norms);

    KMeansResult result;
    result.costs.push_back(mean(asg.distances));

    std::vector<double> sums(k * dim);
    std::vector<std::size_t> counts(k);
    std::vector<double> old_cost(k), new_cost(k);
    std::vector<float> proposal(k * dim);
    std::uniform_int_distribution<int> coin(0, 1);

    for (std::size_t it = 1; it <= options.iterations; ++it) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = asg.tokens[i];
            ++counts[c];
            const float* row = vectors.data() + i * dim;
            double* acc = sums.data() + c * dim;
            for (std::size_t j = 0; j < dim; ++j) acc[j] += row[j];
        }
        proposal = centroids;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (std::size_t j = 0; j < dim; ++j) proposal[c * dim + j] = static_cast<float>(sums[c * dim + j] * inv);
        }

        // Keep a mean only if it lowers (or keeps) the cluster's L2 sum.
        std::fill(old_cost.begin(), old_cost.end(), 0.0);
        std::fill(new_cost.begin(), new_cost.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = asg.tokens[i];
            old_cost[c] += asg.distances[i];
            new_cost[c] += distance(vectors.data() + i * dim, proposal.data() + c * dim, dim);
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0 && new_cost[c] <= old_cost[c])
                std::copy_n(proposal.begin() + static_cast<std::ptrdiff_t>(c * dim), dim,
                            centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));

        std::vector<double> population(counts.begin(), counts.end());
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            const auto big = static_cast<std::size_t>(
                std::distance(population.begin(), std::max_element(population.begin(), population.end())));
            for (std::size_t j = 0; j < dim; ++j) {
                const double jitter = coin(rng) ? options.split_jitter : -options.split_jitter;
                centroids[c * dim + j] = static_cast<float>(centroids[big * dim + j] + jitter);
            }
            population[big] /= 2.0;
            population[c] = population[big];
            ++result.empty_repairs;
        }

        norms = squared_norms(centroids, dim);
        asg = assign_nearest(vectors, dim, centroids, norms);
        const double cost = mean(asg.distances);
        // Slack covers summation-order rounding only.
        if (cost > result.costs.back() * (1.0 + 1e-12))
            throw NumericError("k-means cost increased at iteration " + std::to_string(it) + ": " +
                               std::to_string(result.costs.back()) + " -> " + std::to_string(cost));
        result.costs.push_back(cost);
    }

    CodebookMetadata meta;
    meta.vectors = n;
    meta.iterations = static_cast<std::uint32_t>(options.iterations);
    meta.final_cost = result.costs.back();
    meta.seed = options.seed;
    result.codebook = Codebook(options.patch_size, dim, std::move(centroids), meta);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

TrainingVectors sample_training_vectors(const std::vector<std::filesystem::path>& files, const SampleOptions& options) {
    if (files.empty()) throw InvalidArgument("dataset is empty");
    std::vector<std::filesystem::path> chosen;
    if (options.images_per_class > 0) {
        std::map<std::filesystem::path, std::vector<std::filesystem::path>> classes;
        for (const auto& f : files) classes[f.parent_path()].push_back(f);
        for (auto& [dir, members] : classes) {
            std::sort(members.begin(), members.end());
            Rng rng(derive_seed(options.seed, dir.filename().string()));
            std::shuffle(members.begin(), members.end(), rng);
            const std::size_t take = std::min(options.images_per_class, members.size());
            chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
        }
    } else {
        chosen = files;
        std::sort(chosen.begin(), chosen.end());
        Rng rng(options.seed);
        std::shuffle(chosen.begin(), chosen.end(), rng);
        if (options.total_images > 0 && options.total_images < chosen.size()) chosen.resize(options.total_images);
    }
    std::sort(chosen.begin(), chosen.end());

    TrainingVectors out;
    for (const auto& path : chosen) {
        const auto grid = imaging::patchify(imaging::load_image(path, options.resolution), options.patch_size);
        out.dim = grid.dim();
        out.data.insert(out.data.end(), grid.data.begin(), grid.data.end());
    }
    out.sources = std::move(chosen);
    return out;
}

TrainingVectors sample_training_vectors(std::span<const imaging::Image> images, const SampleOptions& options) {
    if (images.empty()) throw InvalidArgument("dataset is empty");
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(options.seed);
    std::shuffle(order.begin(), order.end(), rng);
    if (options.total_images > 0 && options.total_images < order.size()) order.resize(options.total_images);
    std::sort(order.begin(), order.end());

    TrainingVectors out;
    for (auto i : order) {
        const auto& img = images[i];
        const auto grid = imaging::patchify(img.height == options.resolution && img.width == options.resolution
                                                ? img
                                                : imaging::resize_bilinear(img, options.resolution, options.resolution),
                                            options.patch_size);
        out.dim = grid.dim();
        out.data.insert(out.data.end(), grid.data.begin(), grid.data.end());
    }
    return out;
}

} // namespace ccvit::tokenizer
