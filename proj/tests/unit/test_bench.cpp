#include <gtest/gtest.h>

#include <sstream>

#include "ccvit/bench/bench.hpp"
#include "ccvit/common/error.hpp"
#include "helpers.hpp"

namespace ccvit {
namespace {

using imaging::NoiseKind;
using imaging::NoiseSpec;

class BenchTest : public ::testing::Test {
protected:
    tokenizer::Codebook cb = testing::random_codebook(64, 4, 8);
    bench::CentroidTokenizer centroid{cb};
    std::vector<imaging::Image> images = make_images(12);

    static std::vector<imaging::Image> make_images(std::size_t count) {
        std::vector<imaging::Image> out;
        for (std::size_t i = 0; i < count; ++i) out.push_back(testing::random_image(40, 40, 500 + i));
        return out;
    }
};

TEST_F(BenchTest, IdentityBlurKeepsEveryToken) {
    NoiseSpec spec;
    spec.kind = NoiseKind::gaussian_blur;
    spec.parameter = 1e-3;
    EXPECT_EQ(bench::unchanged_ratio(centroid, images, spec), 100.0);
}

TEST_F(BenchTest, MaskFloorHoldsOnEveryImage) {
    for (double r : {0.1, 0.2, 0.5, 0.9}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            NoiseSpec spec{NoiseKind::mask, r, seed, 4, 0.5f};
            std::vector<double> per_image;
            const double mean = bench::unchanged_ratio(centroid, images, spec, &per_image);
            ASSERT_EQ(per_image.size(), images.size());
            for (double v : per_image) {
                EXPECT_GE(v, 100.0 * (1.0 - r) - 1e-9);
                EXPECT_LE(v, 100.0);
            }
            EXPECT_GE(mean, 100.0 * (1.0 - r) - 1e-9);
        }
    }
}

TEST_F(BenchTest, MaskPatchSizeFollowsTheTokenizer) {
    NoiseSpec spec{NoiseKind::mask, 0.5, 1, 16, 0.5f};
    std::vector<double> per_image;
    bench::unchanged_ratio(centroid, images, spec, &per_image);
    // With P=4 on 40x40 there are 100 positions and at most 50 change.
    for (double v : per_image) EXPECT_GE(v, 50.0);
}

TEST_F(BenchTest, GaussianNoiseRatioIsMonotoneInSigma) {
    double previous = 100.0;
    for (double sigma : {1.0, 10.0, 25.0, 60.0}) {
        NoiseSpec spec{NoiseKind::gaussian_noise, sigma, 3, 4, 0.5f};
        const double r = bench::unchanged_ratio(centroid, images, spec);
        EXPECT_LE(r, previous + 1e-9) << "sigma " << sigma;
        previous = r;
    }
    EXPECT_LT(previous, 100.0);
}

TEST_F(BenchTest, CentroidTokenizerIsLocal) {
    Rng rng(4);
    std::uniform_int_distribution<std::size_t> pick(0, 99);
    for (int trial = 0; trial < 50; ++trial) {
        auto img = images[static_cast<std::size_t>(trial) % images.size()];
        const auto before = centroid.tokenize(imaging::patchify(img, 4));
        const std::size_t j = pick(rng);
        const auto noisy = testing::random_image(4, 4, 900 + static_cast<std::uint64_t>(trial));
        auto grid = imaging::patchify(img, 4);
        std::copy(noisy.pixels.begin(), noisy.pixels.end(), grid.patch(j).begin());
        const auto after = centroid.tokenize(grid);
        for (std::size_t i = 0; i < before.count(); ++i)
            if (i != j) {
                EXPECT_EQ(before.tokens[i], after.tokens[i]);
            }
    }
}

TEST_F(BenchTest, GlobalReferenceBreaksLocality) {
    auto global = bench::reference_tokenizer_global(cb);
    const auto grid = imaging::patchify(images[0], 4);
    const auto a = global->tokenize(grid);
    EXPECT_EQ(a, global->tokenize(grid));
    // A perturbation leaves the other tokens alone only when the image hash
    // collides modulo K (probability 1/64 here).
    std::size_t violating = 0;
    for (std::size_t j = 0; j < 20; ++j) {
        auto edited = grid;
        edited.patch(j)[0] = edited.patch(j)[0] > 0.5f ? 0.0f : 1.0f;
        const auto b = global->tokenize(edited);
        for (std::size_t i = 0; i < a.count(); ++i)
            if (i != j && a.tokens[i] != b.tokens[i]) {
                ++violating;
                break;
            }
    }
    EXPECT_GE(violating, 15u);
}

TEST_F(BenchTest, GlobalReferenceDropsBelowCentroidUnderMask) {
    auto global = bench::reference_tokenizer_global(cb);
    NoiseSpec spec{NoiseKind::mask, 0.1, 2, 4, 0.5f};
    EXPECT_LT(bench::unchanged_ratio(*global, images, spec), bench::unchanged_ratio(centroid, images, spec));
}

TEST_F(BenchTest, BatchTokenizeMatchesSingle) {
    std::vector<imaging::PatchGrid> grids;
    for (const auto& img : images) grids.push_back(imaging::patchify(img, 4));
    const auto batch = centroid.tokenize_batch(grids);
    ASSERT_EQ(batch.size(), grids.size());
    for (std::size_t i = 0; i < grids.size(); ++i) EXPECT_EQ(batch[i], centroid.tokenize(grids[i]));
}

TEST_F(BenchTest, ReportIsDeterministicAndCsvHasHeader) {
    const auto grid = bench::standard_noise_grid();
    ASSERT_EQ(grid.size(), 9u);
    const auto a = bench::robustness_report(centroid, images, grid, 5);
    const auto b = bench::robustness_report(centroid, images, grid, 5);
    std::ostringstream ca, cb2;
    bench::write_robustness_csv(ca, a);
    bench::write_robustness_csv(cb2, b);
    EXPECT_EQ(ca.str(), cb2.str());
    EXPECT_EQ(ca.str().rfind("tokenizer,noise,parameter,unchanged_ratio,images,seed\n", 0), 0u);
    std::istringstream lines(ca.str());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(lines, line)) ++rows;
    EXPECT_EQ(rows, 10u);

    std::ostringstream table;
    auto all = a;
    const auto published = bench::published_baselines();
    all.insert(all.end(), published.begin(), published.end());
    bench::write_robustness_table(table, all);
    EXPECT_NE(table.str().find("centroid"), std::string::npos);
    EXPECT_NE(table.str().find("BEiT"), std::string::npos);
}

TEST_F(BenchTest, LatencyReportCarriesNameBatchMeanStd) {
    std::vector<imaging::PatchGrid> grids;
    for (const auto& img : images) grids.push_back(imaging::patchify(img, 4));
    const auto r = bench::latency_bench(centroid, grids, 8, 2);
    EXPECT_EQ(r.tokenizer, "centroid");
    EXPECT_EQ(r.batch, grids.size());
    EXPECT_EQ(r.samples_ms.size(), 8u);
    EXPECT_GT(r.mean_ms, 0.0);
    EXPECT_GE(r.std_ms, 0.0);
    std::ostringstream csv, table;
    const std::vector<bench::LatencyResult> rows{r};
    bench::write_latency_csv(csv, rows);
    bench::write_latency_table(table, rows);
    EXPECT_EQ(csv.str().rfind("tokenizer,batch,repetitions,mean_ms,std_ms,peak_rss_mb\n", 0), 0u);
    EXPECT_NE(table.str().find("centroid"), std::string::npos);
}

TEST(PeakRss, ReportsAPositiveValueOnLinux) {
    EXPECT_GT(bench::peak_rss_mb(), 0.0);
}

} // namespace
} // namespace ccvit
