#include "ccvit/tokenizer/codebook.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <fstream>
#include <limits>

#include "ccvit/common/binary_io.hpp"
#include "ccvit/common/error.hpp"

namespace ccvit::tokenizer {
namespace {

constexpr char kMagic[] = "CCVB";
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kChunk = 256;

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const MatRM>;

double exact_sq_distance(const float* a, const float* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s;
}

} // namespace

Codebook::Codebook(std::size_t patch_size, std::size_t dim, std::vector<float> centroids, CodebookMetadata meta)
    : patch_size_(patch_size), dim_(dim), centroids_(std::move(centroids)), meta_(meta) {
    if (patch_size_ == 0 || dim_ == 0 || dim_ % (patch_size_ * patch_size_) != 0)
        throw InvalidArgument("codebook dimension must be a positive multiple of patch_size^2");
    if (centroids_.empty() || centroids_.size() % dim_ != 0)
        throw InvalidArgument("codebook centroid data is not a whole number of vectors");
    count_ = centroids_.size() / dim_;
    norms_.resize(count_);
    for (std::size_t k = 0; k < count_; ++k) {
        double s = 0.0;
        for (float v : centroid(k)) s += static_cast<double>(v) * v;
        norms_[k] = s;
    }
}

void Codebook::validate() const {
    const auto asg = assign_nearest(centroids_, *this);
    for (std::size_t k = 0; k < count_; ++k)
        if (asg.tokens[k] != k)
            throw Error("codebook invariant violated: centroid " + std::to_string(k) + " is nearest to centroid " +
                        std::to_string(asg.tokens[k]));
}

Assignment assign_nearest(std::span<const float> vectors, std::size_t dim, std::span<const float> centroids,
                          std::span<const double> centroid_norms) {
    if (dim == 0 || vectors.size() % dim != 0) throw ShapeError("vector data is not a whole number of rows");
    if (centroids.size() % dim != 0 || centroids.empty())
        throw ShapeError("centroid dimension does not match vector dimension " + std::to_string(dim));
    const std::size_t n = vectors.size() / dim;
    const std::size_t k = centroids.size() / dim;
    if (centroid_norms.size() != k) throw ShapeError("centroid norm count mismatch");

    Assignment out;
    out.tokens.resize(n);
    out.distances.resize(n);
    const double max_norm = *std::max_element(centroid_norms.begin(), centroid_norms.end());
    // Rounding bound for a float dot product of length dim, doubled for the
    // -2x.c term and again for comparing two screened distances.
    const double bound_scale = 8.0 * static_cast<double>(dim) * FLT_EPSILON;

    CMap cmat(centroids.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
    MatRM gram;
    std::vector<std::size_t> candidates;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t rows = std::min(kChunk, n - start);
        CMap xmat(vectors.data() + start * dim, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
        gram.noalias() = xmat * cmat.transpose();
        for (std::size_t r = 0; r < rows; ++r) {
            const float* x = vectors.data() + (start + r) * dim;
            double xnorm = 0.0;
            for (std::size_t i = 0; i < dim; ++i) xnorm += static_cast<double>(x[i]) * x[i];
            const float* g = gram.data() + r * k;
            double best_screen = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c)
                best_screen = std::min(best_screen, centroid_norms[c] - 2.0 * static_cast<double>(g[c]));
            const double tol = bound_scale * std::sqrt(xnorm * max_norm) + 1e-12;
            candidates.clear();
            for (std::size_t c = 0; c < k; ++c)
                if (centroid_norms[c] - 2.0 * static_cast<double>(g[c]) <= best_screen + tol) candidates.push_back(c);
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = candidates.front();
            for (auto c : candidates) {
                const double d = exact_sq_distance(x, centroids.data() + c * dim, dim);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            out.tokens[start + r] = static_cast<TokenId>(arg);
            out.distances[start + r] = std::sqrt(best);
        }
    }
    return out;
}

Assignment assign_nearest(std::span<const float> vectors, const Codebook& codebook) {
    return assign_nearest(vectors, codebook.dim(), codebook.data(), codebook.squared_norms());
}

TokenGrid tokenize(const imaging::PatchGrid& grid, const Codebook& codebook) {
    if (grid.dim() != codebook.dim())
        throw ShapeError("patch dimension " + std::to_string(grid.dim()) + " does not match codebook dimension " +
                         std::to_string(codebook.dim()));
    TokenGrid out;
    out.grid_h = grid.grid_h;
    out.grid_w = grid.grid_w;
    out.tokens = assign_nearest(grid.data, codebook).tokens;
    return out;
}

imaging::PatchGrid detokenize(const TokenGrid& tokens, const Codebook& codebook) {
    if (tokens.tokens.size() != tokens.grid_h * tokens.grid_w) throw ShapeError("token grid dims do not match its length");
    imaging::PatchGrid grid;
    grid.patch_size = codebook.patch_size();
    grid.channels = codebook.channels();
    grid.grid_h = tokens.grid_h;
    grid.grid_w = tokens.grid_w;
    grid.data.resize(grid.count() * grid.dim());
    for (std::size_t i = 0; i < tokens.tokens.size(); ++i) {
        const TokenId t = tokens.tokens[i];
        if (t >= codebook.size())
            throw InvalidArgument("token " + std::to_string(t) + " outside codebook of size " +
                                  std::to_string(codebook.size()));
        std::copy_n(codebook.centroid(t).data(), codebook.dim(), grid.patch(i).data());
    }
    return grid;
}

void save_codebook(const Codebook& codebook, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    BinaryWriter w(out);
    w.bytes({kMagic, 4});
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(codebook.size()));
    w.u32(static_cast<std::uint32_t>(codebook.dim()));
    w.u32(static_cast<std::uint32_t>(codebook.patch_size()));
    w.f32s(codebook.data());
    const auto& m = codebook.metadata();
    w.u64(m.vectors);
    w.u32(m.iterations);
    w.f64(m.final_cost);
    w.u64(m.seed);
    if (!w.good()) throw Error("write failed: " + path.string());
}

Codebook load_codebook(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open codebook " + path.string());
    BinaryReader r(in);
    if (r.bytes(4, "codebook magic") != std::string(kMagic, 4))
        throw FormatError(path.string() + " is not a codebook file (bad magic)");
    const auto version = r.u32("codebook version");
    if (version != kVersion)
        throw FormatError("unsupported codebook version " + std::to_string(version) + " in " + path.string());
    const std::size_t k = r.u32("codebook size");
    const std::size_t d = r.u32("codebook dimension");
    const std::size_t p = r.u32("codebook patch size");
    if (k == 0 || d == 0 || p == 0 || d % (p * p) != 0 || k * d > (std::size_t{1} << 31))
        throw FormatError(path.string() + ": implausible codebook header");
    auto centroids = r.f32s(k * d, "centroids");
    CodebookMetadata m;
    m.vectors = r.u64("metadata");
    m.iterations = r.u32("metadata");
    m.final_cost = r.f64("metadata");
    m.seed = r.u64("metadata");
    if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after codebook");
    return Codebook(p, d, std::move(centroids), m);
}

} // namespace ccvit::tokenizer
