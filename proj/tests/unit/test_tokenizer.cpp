#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "ccvit/common/error.hpp"
#include "ccvit/imaging/image_io.hpp"
#include "ccvit/tokenizer/codebook.hpp"
#include "ccvit/tokenizer/kmeans.hpp"
#include "helpers.hpp"

namespace ccvit {
namespace {

using testing::random_codebook;
using testing::TempDir;
using testing::uniform_floats;
using tokenizer::Codebook;
using tokenizer::KMeansOptions;

// Lowest-index argmin of the exact double distance.
std::size_t brute_nearest(const float* x, std::span<const float> centroids, std::size_t dim) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k * dim < centroids.size(); ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double diff = static_cast<double>(x[j]) - centroids[k * dim + j];
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

TEST(AssignNearest, MatchesBruteForceIncludingTies) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const std::size_t dim = 12, k = 40, n = 700;
        auto cents = uniform_floats(k * dim, seed);
        // Duplicate a few centroids so exact ties occur; the lower index must win.
        std::copy_n(cents.begin(), dim, cents.begin() + 17 * dim);
        std::copy_n(cents.begin() + 5 * dim, dim, cents.begin() + 30 * dim);
        auto x = uniform_floats(n * dim, seed + 50);
        std::copy_n(cents.begin(), dim, x.begin());  // a vector equal to a duplicated centroid
        std::vector<double> norms(k);
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t j = 0; j < dim; ++j) norms[c] += static_cast<double>(cents[c * dim + j]) * cents[c * dim + j];
        const auto asg = tokenizer::assign_nearest(x, dim, cents, norms);
        for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(asg.tokens[i], brute_nearest(x.data() + i * dim, cents, dim)) << i;
        EXPECT_EQ(asg.tokens[0], 0u);
        EXPECT_EQ(asg.distances[0], 0.0);
    }
}

TEST(AssignNearest, ExactForLargeOffsetVectors) {
    // A shared large offset makes the norm expansion lose precision; the
    // exact re-rank must still agree with brute force.
    const std::size_t dim = 48, k = 64, n = 500;
    auto cents = uniform_floats(k * dim, 3, 100.0f, 100.01f);
    auto x = uniform_floats(n * dim, 4, 100.0f, 100.01f);
    const Codebook cb(4, dim, cents);
    const auto asg = tokenizer::assign_nearest(x, cb);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(asg.tokens[i], brute_nearest(x.data() + i * dim, cents, dim));
}

TEST(Codebook, TokenizeDetokenizeIsIdempotentForEveryCentroid) {
    const auto cb = random_codebook(256, 2, 7);
    imaging::PatchGrid grid{2, 3, 16, 16, {cb.data().begin(), cb.data().end()}};
    const auto tokens = tokenizer::tokenize(grid, cb);
    for (std::size_t k = 0; k < cb.size(); ++k) EXPECT_EQ(tokens.tokens[k], k);
    EXPECT_EQ(tokenizer::detokenize(tokens, cb), grid);
}

TEST(Codebook, TokensDependOnlyOnTheirOwnPatch) {
    const auto cb = random_codebook(32, 2, 8);
    imaging::PatchGrid grid{2, 3, 3, 3, uniform_floats(9 * 12, 9)};
    const auto before = tokenizer::tokenize(grid, cb);
    for (std::size_t i = 0; i < 9; ++i) {
        auto changed = grid;
        for (auto& v : changed.patch(i)) v = 1.0f - v;
        const auto after = tokenizer::tokenize(changed, cb);
        for (std::size_t j = 0; j < 9; ++j)
            if (j != i) {
                EXPECT_EQ(after.tokens[j], before.tokens[j]);
            }
    }
}

TEST(Codebook, ValidateRejectsDuplicateCentroids) {
    auto cents = uniform_floats(4 * 12, 1);
    EXPECT_NO_THROW(Codebook(2, 12, cents).validate());
    std::copy_n(cents.begin(), 12, cents.begin() + 24);
    EXPECT_THROW(Codebook(2, 12, cents).validate(), Error);
}

TEST(Codebook, ShapeErrors) {
    const auto cb = random_codebook(8, 2, 1);
    imaging::PatchGrid wrong{4, 3, 1, 1, std::vector<float>(48)};
    EXPECT_THROW(tokenizer::tokenize(wrong, cb), ShapeError);
    tokenizer::TokenGrid bad{1, 1, {8}};
    EXPECT_THROW(tokenizer::detokenize(bad, cb), InvalidArgument);
    EXPECT_THROW(Codebook(2, 12, std::vector<float>(13)), InvalidArgument);
}

TEST(CodebookFile, RoundTripsBitExactly) {
    TempDir dir("cb");
    auto cb = random_codebook(16, 2, 3);
    cb.set_metadata({1234, 20, 0.125, 99});
    tokenizer::save_codebook(cb, dir / "a.ccvb");
    EXPECT_EQ(tokenizer::load_codebook(dir / "a.ccvb"), cb);
}

TEST(CodebookFile, DamagedFilesAreRejected) {
    TempDir dir("cbbad");
    const auto cb = random_codebook(4, 2, 3);
    tokenizer::save_codebook(cb, dir / "good.ccvb");
    std::ifstream in(dir / "good.ccvb", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream(dir / name, std::ios::binary) << content;
        return dir / name;
    };
    EXPECT_THROW(tokenizer::load_codebook(write("magic", "XXXX" + bytes.substr(4))), FormatError);
    EXPECT_THROW(tokenizer::load_codebook(write("short", bytes.substr(0, bytes.size() - 5))), FormatError);
    EXPECT_THROW(tokenizer::load_codebook(write("long", bytes + "z")), FormatError);
    auto v2 = bytes;
    v2[4] = 2;
    EXPECT_THROW(tokenizer::load_codebook(write("version", v2)), FormatError);
    EXPECT_THROW(tokenizer::load_codebook(dir / "absent.ccvb"), FormatError);
}

TEST(KMeans, CostNeverIncreases) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const std::size_t dim = 12;
        const auto x = uniform_floats(600 * dim, seed);
        KMeansOptions o;
        o.clusters = 24;
        o.iterations = 20;
        o.patch_size = 2;
        o.seed = seed;
        o.init = seed % 2 ? tokenizer::KMeansInit::kmeans_plus_plus : tokenizer::KMeansInit::random_sample;
        const auto r = tokenizer::train_codebook(x, dim, o);
        ASSERT_EQ(r.costs.size(), 21u);
        for (std::size_t t = 1; t < r.costs.size(); ++t) EXPECT_LE(r.costs[t], r.costs[t - 1]);
        EXPECT_LT(r.costs.back(), r.costs.front());
        EXPECT_NO_THROW(r.codebook.validate());
    }
}

TEST(KMeans, FinalCostIsMeanDistanceToNearestCentroid) {
    const std::size_t dim = 12;
    const auto x = uniform_floats(300 * dim, 5);
    KMeansOptions o;
    o.clusters = 10;
    o.iterations = 5;
    o.patch_size = 2;
    const auto r = tokenizer::train_codebook(x, dim, o);
    double total = 0.0;
    for (std::size_t i = 0; i < 300; ++i) {
        const auto k = brute_nearest(x.data() + i * dim, r.codebook.data(), dim);
        double d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double diff = static_cast<double>(x[i * dim + j]) - r.codebook.centroid(k)[j];
            d += diff * diff;
        }
        total += std::sqrt(d);
    }
    EXPECT_NEAR(r.costs.back(), total / 300.0, 1e-9);
}

TEST(KMeans, AsManyVectorsAsClustersReachesZeroCost) {
    const std::size_t dim = 12, k = 32;
    const auto x = uniform_floats(k * dim, 6);
    KMeansOptions o;
    o.clusters = k;
    o.patch_size = 2;
    const auto r = tokenizer::train_codebook(x, dim, o);
    EXPECT_EQ(r.costs.back(), 0.0);
}

TEST(KMeans, TwoSymmetricClustersRecoverTheirMeans) {
    const std::size_t dim = 4;
    const float centers[2][4] = {{0.25f, 0.5f, 0.125f, 0.75f}, {4.0f, 3.5f, 5.0f, 4.25f}};
    std::vector<float> x;
    for (const auto& c : centers)
        for (std::size_t axis = 0; axis < dim; ++axis)
            for (float sign : {-1.0f, 1.0f}) {
                for (std::size_t j = 0; j < dim; ++j) x.push_back(c[j] + (j == axis ? sign * 0.0625f : 0.0f));
            }
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        KMeansOptions o;
        o.clusters = 2;
        o.patch_size = 1;
        o.seed = seed;
        const auto r = tokenizer::train_codebook(x, dim, o);
        const auto& cb = r.codebook;
        const std::size_t first = cb.centroid(0)[0] < 2.0f ? 0 : 1;
        for (std::size_t j = 0; j < dim; ++j) {
            EXPECT_NEAR(cb.centroid(first)[j], centers[0][j], 1e-6);
            EXPECT_NEAR(cb.centroid(1 - first)[j], centers[1][j], 1e-6);
        }
    }
}

TEST(KMeans, RejectsTooFewVectors) {
    KMeansOptions o;
    o.clusters = 10;
    o.patch_size = 2;
    EXPECT_THROW(tokenizer::train_codebook(uniform_floats(9 * 12, 1), 12, o), InvalidArgument);
    std::vector<float> dup(20 * 12, 0.5f);
    EXPECT_THROW(tokenizer::train_codebook(dup, 12, o), InvalidArgument);
    o.init = tokenizer::KMeansInit::kmeans_plus_plus;
    EXPECT_THROW(tokenizer::train_codebook(dup, 12, o), InvalidArgument);
}

TEST(KMeans, SameSeedGivesIdenticalCodebook) {
    const auto x = uniform_floats(400 * 12, 2);
    KMeansOptions o;
    o.clusters = 16;
    o.patch_size = 2;
    o.seed = 11;
    const auto a = tokenizer::train_codebook(x, 12, o), b = tokenizer::train_codebook(x, 12, o);
    EXPECT_EQ(a.codebook, b.codebook);
    EXPECT_EQ(a.costs, b.costs);
}

TEST(KMeans, CostStaysMonotoneOnImbalancedBlobs) {
    // A dense blob and four far outliers.
    std::vector<float> x;
    for (int i = 0; i < 40; ++i) x.push_back(static_cast<float>(i) * 1e-3f);
    for (int i = 0; i < 4; ++i) x.push_back(100.0f + static_cast<float>(i));
    KMeansOptions o;
    o.clusters = 6;
    o.patch_size = 1;
    o.iterations = 10;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        o.seed = seed;
        const auto r = tokenizer::train_codebook(x, 1, o);
        for (std::size_t t = 1; t < r.costs.size(); ++t) EXPECT_LE(r.costs[t], r.costs[t - 1]);
    }
}

TEST(SampleVectors, PerClassSelectionIsDeterministicAndSorted) {
    TempDir dir("classes");
    for (const char* cls : {"cat", "dog"}) {
        std::filesystem::create_directories(dir / cls);
        for (int i = 0; i < 3; ++i)
            imaging::write_image(dir / (std::string(cls) + "/" + std::to_string(i) + ".png"),
                                 testing::random_image(8, 8, static_cast<std::uint64_t>(i + (cls[0] == 'c' ? 0 : 9))));
    }
    const auto files = imaging::list_images(dir.path());
    tokenizer::SampleOptions o;
    o.resolution = 8;
    o.patch_size = 4;
    o.images_per_class = 2;
    o.seed = 3;
    const auto a = tokenizer::sample_training_vectors(files, o), b = tokenizer::sample_training_vectors(files, o);
    ASSERT_EQ(a.sources.size(), 4u);
    EXPECT_TRUE(std::is_sorted(a.sources.begin(), a.sources.end()));
    EXPECT_EQ(a.sources, b.sources);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.count(), 4u * 4u);
    EXPECT_EQ(a.dim, 48u);
    std::size_t cats = 0;
    for (const auto& s : a.sources) cats += s.parent_path().filename() == "cat";
    EXPECT_EQ(cats, 2u);
}

TEST(SampleVectors, InMemoryTotalSelection) {
    std::vector<imaging::Image> images;
    for (int i = 0; i < 5; ++i) images.push_back(testing::random_image(8, 8, i));
    tokenizer::SampleOptions o;
    o.resolution = 8;
    o.patch_size = 2;
    o.total_images = 3;
    const auto v = tokenizer::sample_training_vectors(images, o);
    EXPECT_EQ(v.count(), 3u * 16u);
}

} // namespace
} // namespace ccvit
