#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "ccvit/common/error.hpp"
#include "ccvit/imaging/image.hpp"
#include "ccvit/imaging/image_io.hpp"
#include "ccvit/imaging/noise.hpp"
#include "helpers.hpp"

namespace ccvit {
namespace {

using imaging::Image;
using imaging::NoiseKind;
using imaging::NoiseSpec;
using testing::random_image;
using testing::TempDir;

TEST(Patchify, RoundTripsForRandomSizes) {
    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t p = 1 + rng() % 6, gh = 1 + rng() % 5, gw = 1 + rng() % 5;
        const auto img = random_image(gh * p, gw * p, trial);
        const auto grid = imaging::patchify(img, p);
        ASSERT_EQ(grid.count(), gh * gw);
        ASSERT_EQ(grid.dim(), 3 * p * p);
        EXPECT_EQ(imaging::unpatchify(grid), img);
    }
}

TEST(Patchify, UsesChannelMajorLayoutInsidePatch) {
    const auto img = random_image(4, 6, 3);
    const auto grid = imaging::patchify(img, 2);
    // Patch 4 is grid row 1, column 1: pixels y in [2,4), x in [2,4).
    const auto patch = grid.patch(4);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 0; x < 2; ++x) EXPECT_EQ(patch[c * 4 + y * 2 + x], img.at(c, 2 + y, 2 + x));
}

TEST(Patchify, RejectsNonDivisibleSize) {
    EXPECT_THROW(imaging::patchify(Image(3, 10, 16), 4), InvalidArgument);
    EXPECT_THROW(imaging::patchify(Image(3, 16, 16), 0), InvalidArgument);
}

TEST(Resize, IdentityAndConstantPreservation) {
    const auto img = random_image(9, 7, 2);
    EXPECT_EQ(imaging::resize_bilinear(img, 9, 7), img);
    Image flat(3, 5, 8, 0.3f);
    const auto big = imaging::resize_bilinear(flat, 17, 3);
    for (float v : big.pixels) EXPECT_EQ(v, 0.3f);
}

TEST(Resize, UpsamplingStaysWithinInputRange) {
    const auto img = random_image(4, 4, 8);
    const auto up = imaging::resize_bilinear(img, 13, 11);
    for (float v : up.pixels) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(ImageIo, PngAndPpmRoundTripAtEightBits) {
    TempDir dir("io");
    auto img = random_image(6, 5, 4);
    for (auto& v : img.pixels) v = std::round(v * 255.0f) / 255.0f;
    for (const char* name : {"a.png", "a.ppm"}) {
        imaging::write_image(dir / name, img);
        const auto back = imaging::read_image(dir / name);
        ASSERT_EQ(back.height, 6u);
        ASSERT_EQ(back.width, 5u);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 1e-6) << name;
    }
}

TEST(ImageIo, GrayPgmExpandsToThreeChannels) {
    TempDir dir("pgm");
    {
        std::ofstream out(dir / "g.pgm", std::ios::binary);
        out << "P5\n2 1\n255\n";
        out.put(static_cast<char>(0));
        out.put(static_cast<char>(255));
    }
    const auto img = imaging::read_image(dir / "g.pgm");
    ASSERT_EQ(img.channels, 3u);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(img.at(c, 0, 0), 0.0f);
        EXPECT_EQ(img.at(c, 0, 1), 1.0f);
    }
}

TEST(ImageIo, MalformedFilesRaiseFormatError) {
    TempDir dir("bad");
    {
        std::ofstream(dir / "x.png") << "not a png";
        std::ofstream(dir / "y.ppm") << "P6\n4 4\n255\nab";
    }
    EXPECT_THROW(imaging::read_image(dir / "x.png"), FormatError);
    EXPECT_THROW(imaging::read_image(dir / "y.ppm"), FormatError);
    EXPECT_THROW(imaging::read_image(dir / "missing.png"), FormatError);
}

TEST(ImageIo, ListImagesIsRecursiveAndSorted) {
    TempDir dir("list");
    std::filesystem::create_directories(dir / "b");
    const auto img = random_image(2, 2, 1);
    imaging::write_image(dir / "b/z.png", img);
    imaging::write_image(dir / "a.ppm", img);
    std::ofstream(dir / "notes.txt") << "x";
    const auto files = imaging::list_images(dir.path());
    ASSERT_EQ(files.size(), 2u);
    EXPECT_EQ(files[0].filename(), "a.ppm");
    EXPECT_EQ(files[1].filename(), "z.png");
}

TEST(Noise, MaskCountFloorsTheRatio) {
    EXPECT_EQ(imaging::mask_patch_count(196, 0.1), 19u);
    EXPECT_EQ(imaging::mask_patch_count(196, 0.2), 39u);
    EXPECT_EQ(imaging::mask_patch_count(196, 0.5), 98u);
    EXPECT_EQ(imaging::mask_patch_count(10, 0.3), 3u);
}

TEST(Noise, MaskFillsExactlyTheChosenPatches) {
    const auto img = random_image(32, 32, 5);
    NoiseSpec spec{NoiseKind::mask, 0.25, 7, 8, 0.5f};
    const auto noisy = imaging::apply_noise(img, spec);
    const auto before = imaging::patchify(img, 8), after = imaging::patchify(noisy, 8);
    std::size_t filled = 0;
    for (std::size_t i = 0; i < before.count(); ++i) {
        const auto a = before.patch(i), b = after.patch(i);
        const bool same = std::equal(a.begin(), a.end(), b.begin());
        const bool flat = std::all_of(b.begin(), b.end(), [](float v) { return v == 0.5f; });
        EXPECT_TRUE(same || flat);
        filled += !same;
    }
    EXPECT_EQ(filled, 4u);
}

TEST(Noise, SampledMaskPositionsAreDistinctAndSorted) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto pos = imaging::sample_mask_patches(49, 20, seed);
        ASSERT_EQ(pos.size(), 20u);
        EXPECT_TRUE(std::is_sorted(pos.begin(), pos.end()));
        EXPECT_EQ(std::adjacent_find(pos.begin(), pos.end()), pos.end());
        EXPECT_LT(pos.back(), 49u);
    }
}

TEST(Noise, TinyBlurIsIdentity) {
    const auto img = random_image(16, 16, 6);
    EXPECT_EQ(imaging::apply_noise(img, {NoiseKind::gaussian_blur, 0.01, 0}), img);
}

TEST(Noise, BlurPreservesConstantImages) {
    Image flat(3, 12, 12, 0.6f);
    const auto out = imaging::apply_noise(flat, {NoiseKind::gaussian_blur, 2.0, 0});
    for (float v : out.pixels) EXPECT_NEAR(v, 0.6f, 1e-6);
}

TEST(Noise, GaussianRealizationsAreNestedAcrossSigma) {
    Image mid(3, 8, 8, 0.5f);
    const auto a = imaging::apply_noise(mid, {NoiseKind::gaussian_noise, 1.0, 42});
    const auto b = imaging::apply_noise(mid, {NoiseKind::gaussian_noise, 10.0, 42});
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double da = a.pixels[i] - 0.5, db = b.pixels[i] - 0.5;
        if (std::abs(db) < 0.45) {
            EXPECT_NEAR(db, 10.0 * da, 1e-5);
        }
    }
}

TEST(Noise, SpecValidation) {
    EXPECT_THROW((NoiseSpec{NoiseKind::mask, 1.0}.validate()), InvalidArgument);
    EXPECT_THROW((NoiseSpec{NoiseKind::gaussian_noise, 0.0}.validate()), InvalidArgument);
    EXPECT_NO_THROW((NoiseSpec{NoiseKind::gaussian_blur, 0.5}.validate()));
    EXPECT_EQ(imaging::parse_noise_kind("blur"), NoiseKind::gaussian_blur);
    EXPECT_THROW(imaging::parse_noise_kind("salt"), InvalidArgument);
}

} // namespace
} // namespace ccvit
