#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccvit/imaging/image.hpp"
#include "ccvit/tokenizer/codebook.hpp"

namespace ccvit::tokenizer {

enum class KMeansInit { random_sample, kmeans_plus_plus };

struct KMeansOptions {
    std::size_t clusters = 8192;
    std::size_t iterations = 20;
    std::uint64_t seed = 0;
    KMeansInit init = KMeansInit::random_sample;
    std::size_t patch_size = 16;
    double split_jitter = 1e-4;
};

struct KMeansResult {
    Codebook codebook;
    // Mean L2 distance of every vector to its assigned centroid, one entry
    // per assignment pass: costs[0] after initialization, costs[t] after
    // iteration t.
    std::vector<double> costs;
    std::size_t empty_repairs = 0;
    double seconds = 0.0;
};

// Lloyd's algorithm over the N rows of `vectors` (N x dim).
//
// Initialization draws K distinct input vectors uniformly (or by k-means++).
// Each iteration recomputes cluster means and reassigns. A mean only
// replaces its centroid when it does not raise that cluster's summed L2
// distance, so the reported mean-L2 cost never increases; for the usual
// case the update is the plain mean. An empty cluster is refilled with a
// jittered copy of the most populated cluster's centroid.
//
// Throws InvalidArgument when N < K or fewer than K distinct vectors exist.
KMeansResult train_codebook(std::span<const float> vectors, std::size_t dim, const KMeansOptions& options);

struct SampleOptions {
    std::size_t resolution = 224;
    std::size_t patch_size = 16;
    // When non-zero, images are grouped by parent directory (one class per
    // directory) and this many are drawn per class.
    std::size_t images_per_class = 0;
    // Otherwise this many images overall; 0 takes every image.
    std::size_t total_images = 0;
    std::uint64_t seed = 0;
};

struct TrainingVectors {
    std::size_t dim = 0;
    std::vector<float> data;  // count() x dim
    std::vector<std::filesystem::path> sources;

    std::size_t count() const { return dim == 0 ? 0 : data.size() / dim; }
};

// Deterministically chooses images from `files` and emits every patch of
// each chosen image, in the sorted order of the chosen paths.
TrainingVectors sample_training_vectors(const std::vector<std::filesystem::path>& files, const SampleOptions& options);

// Same selection rule over images already in memory (no class grouping).
TrainingVectors sample_training_vectors(std::span<const imaging::Image> images, const SampleOptions& options);

} // namespace ccvit::tokenizer
