#include "ccvit/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "ccvit/common/binary_io.hpp"
#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"

namespace ccvit::model {

using corruption::CorruptedBatch;
using corruption::PositionTag;
using numerics::Parameter;
using numerics::RowRef;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

void ModelConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("model config: ") + what);
    };
    need(patch_size > 0 && channels > 0, "patch size and channels must be positive");
    need(embed_dim > 0 && heads > 0 && embed_dim % heads == 0, "embed_dim must be a positive multiple of heads");
    need(depth > 0, "depth must be positive");
    need(tap_layer >= 1 && tap_layer <= depth, "tap_layer must lie in [1, depth]");
    need(pixel_depth > 0, "pixel_depth must be positive");
    need(mlp_ratio > 0, "mlp_ratio must be positive");
    need(vocab > 1, "vocab must exceed 1");
    need(grid_h > 0 && grid_w > 0, "grid must be non-empty");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.patch_size = 2;
    c.channels = 3;
    c.embed_dim = 8;
    c.depth = 2;
    c.tap_layer = 1;
    c.pixel_depth = 2;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.vocab = 6;
    c.grid_h = 2;
    c.grid_w = 3;
    return c;
}

std::size_t relative_bias_rows(std::size_t grid_h, std::size_t grid_w) {
    return (2 * grid_h - 1) * (2 * grid_w - 1) + 3;
}

std::vector<std::size_t> relative_position_index(std::size_t grid_h, std::size_t grid_w) {
    const std::size_t n = grid_h * grid_w, len = n + 1;
    const std::size_t offsets = (2 * grid_h - 1) * (2 * grid_w - 1);
    std::vector<std::size_t> index(len * len);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t yi = i / grid_w, xi = i % grid_w;
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t yj = j / grid_w, xj = j % grid_w;
            const std::size_t dy = yi + grid_h - 1 - yj, dx = xi + grid_w - 1 - xj;
            index[(i + 1) * len + (j + 1)] = dy * (2 * grid_w - 1) + dx;
        }
        index[(i + 1) * len] = offsets;       // patch attends to CLS
        index[i + 1] = offsets + 1;           // CLS attends to patch
    }
    index[0] = offsets + 2;
    return index;
}

namespace {

double truncated_normal(Rng& rng, double std) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        const double v = normal(rng);
        if (std::abs(v) <= 2.0) return v * std;
    }
}

// Fixed input standardization: [0,1] pixels map to roughly zero mean, unit
// scale before the patch projection.
constexpr float kPixelMean = 0.5f;
constexpr float kPixelScale = 4.0f;

template <typename T>
Tensor<T> patch_matrix(std::span<const CorruptedBatch> batch, std::size_t dim) {
    const std::size_t n = batch.front().count();
    Tensor<T> out(Shape{batch.size() * n, dim});
    std::size_t k = 0;
    for (const auto& b : batch)
        for (float v : b.patches) out[k++] = static_cast<T>((v - kPixelMean) * kPixelScale);
    return out;
}

} // namespace

template <typename T>
std::size_t CcvitModel<T>::add(std::string name, Shape shape, bool decay) {
    Parameter<T> p;
    p.name = std::move(name);
    p.value = Tensor<T>(std::move(shape));
    p.decay = decay;
    p.zero_grad();
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

template <typename T>
CcvitModel<T>::CcvitModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const std::size_t d = config_.embed_dim, m = config_.mlp_dim(), dim = config_.patch_dim();
    const std::size_t rel = relative_bias_rows(config_.grid_h, config_.grid_w);

    add("patch_embed.weight", {dim, d}, true);
    add("patch_embed.bias", {d}, false);
    add("cls_token", {1, d}, false);
    add("mask_token", {1, d}, false);
    auto add_layers = [&](const std::string& prefix, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            const std::string p = prefix + "." + std::to_string(i) + ".";
            add(p + "norm1.gamma", {d}, false);
            add(p + "norm1.beta", {d}, false);
            add(p + "qkv.weight", {d, 3 * d}, true);
            add(p + "qkv.bias", {3 * d}, false);
            add(p + "rel_bias", {rel, config_.heads}, false);
            add(p + "proj.weight", {d, d}, true);
            add(p + "proj.bias", {d}, false);
            add(p + "norm2.gamma", {d}, false);
            add(p + "norm2.beta", {d}, false);
            add(p + "fc1.weight", {d, m}, true);
            add(p + "fc1.bias", {m}, false);
            add(p + "fc2.weight", {m, d}, true);
            add(p + "fc2.bias", {d}, false);
        }
    };
    add_layers("token", config_.depth);
    add_layers("pixel", config_.pixel_depth);
    add("token_norm.gamma", {d}, false);
    add("token_norm.beta", {d}, false);
    add("token_head.weight", {d, config_.vocab}, true);
    add("token_head.bias", {config_.vocab}, false);
    add("pixel_norm.gamma", {d}, false);
    add("pixel_norm.beta", {d}, false);
    add("pixel_head.weight", {d, dim}, true);
    add("pixel_head.bias", {dim}, false);

    Rng rng(seed);
    for (auto& p : params_) {
        const auto& name = p.name;
        auto ends_with = [&](std::string_view s) { return name.size() >= s.size() && name.ends_with(s); };
        if (ends_with(".gamma")) {
            p.value.fill(T{1});
        } else if (ends_with("weight") || name == "cls_token" || name == "mask_token") {
            double scale = 1.0;
            if (ends_with("proj.weight") || ends_with("fc2.weight")) {
                const std::size_t block_depth = name.starts_with("token.") ? config_.depth : config_.pixel_depth;
                scale = 1.0 / std::sqrt(2.0 * static_cast<double>(block_depth));
            }
            for (auto& v : p.value.data()) v = static_cast<T>(truncated_normal(rng, 0.02) * scale);
        }
    }
    build_slots();
}

template <typename T>
void CcvitModel<T>::build_slots() {
    auto find = [&](const std::string& name) {
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return i;
        throw InvalidArgument("model has no parameter '" + name + "'");
    };
    auto layers = [&](const std::string& prefix, std::size_t count) {
        std::vector<LayerSlots> out;
        for (std::size_t i = 0; i < count; ++i) {
            const std::string p = prefix + "." + std::to_string(i) + ".";
            out.push_back({find(p + "norm1.gamma"), find(p + "norm1.beta"), find(p + "qkv.weight"),
                           find(p + "qkv.bias"), find(p + "rel_bias"), find(p + "proj.weight"),
                           find(p + "proj.bias"), find(p + "norm2.gamma"), find(p + "norm2.beta"),
                           find(p + "fc1.weight"), find(p + "fc1.bias"), find(p + "fc2.weight"),
                           find(p + "fc2.bias")});
        }
        return out;
    };
    slots_.patch_weight = find("patch_embed.weight");
    slots_.patch_bias = find("patch_embed.bias");
    slots_.cls = find("cls_token");
    slots_.mask = find("mask_token");
    slots_.token = layers("token", config_.depth);
    slots_.pixel = layers("pixel", config_.pixel_depth);
    slots_.token_norm_gamma = find("token_norm.gamma");
    slots_.token_norm_beta = find("token_norm.beta");
    slots_.token_head_weight = find("token_head.weight");
    slots_.token_head_bias = find("token_head.bias");
    slots_.pixel_norm_gamma = find("pixel_norm.gamma");
    slots_.pixel_norm_beta = find("pixel_norm.beta");
    slots_.pixel_head_weight = find("pixel_head.weight");
    slots_.pixel_head_bias = find("pixel_head.bias");

    const auto rel = relative_position_index(config_.grid_h, config_.grid_w);
    const std::size_t heads = config_.heads, len = config_.sequence();
    bias_index_.assign(heads * len * len, 0);
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t ij = 0; ij < len * len; ++ij) bias_index_[h * len * len + ij] = rel[ij] * heads + h;
}

template <typename T>
Parameter<T>& CcvitModel<T>::parameter(std::string_view name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw InvalidArgument("model has no parameter '" + std::string(name) + "'");
}

template <typename T>
const Parameter<T>& CcvitModel<T>::parameter(std::string_view name) const {
    return const_cast<CcvitModel*>(this)->parameter(name);
}

template <typename T>
std::size_t CcvitModel<T>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.value.size();
    return total;
}

template <typename T>
void CcvitModel<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template <typename T>
Var<T> CcvitModel<T>::embed(Tape<T>& tape, std::span<const CorruptedBatch> batch) {
    if (batch.empty()) throw InvalidArgument("empty batch");
    const std::size_t n = config_.positions(), dim = config_.patch_dim();
    for (const auto& b : batch)
        if (b.grid_h != config_.grid_h || b.grid_w != config_.grid_w || b.dim != dim || b.count() != n ||
            b.patches.size() != n * dim)
            throw ShapeError("batch item does not match the model's grid " + std::to_string(config_.grid_h) + "x" +
                             std::to_string(config_.grid_w) + " and patch dimension " + std::to_string(dim));

    auto patches = tape.constant(patch_matrix<T>(batch, dim));
    auto projected = numerics::linear(patches, tape.parameter(params_[slots_.patch_weight]),
                                      tape.parameter(params_[slots_.patch_bias]));
    auto cls = tape.parameter(params_[slots_.cls]);
    auto mask = tape.parameter(params_[slots_.mask]);

    std::vector<RowRef> rows;
    rows.reserve(batch.size() * (n + 1));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        rows.push_back({0, 0});
        for (std::size_t i = 0; i < n; ++i) {
            if (batch[b].tags[i] == PositionTag::masked)
                rows.push_back({1, 0});
            else
                rows.push_back({2, static_cast<std::uint32_t>(b * n + i)});
        }
    }
    return numerics::gather_rows<T>({cls, mask, projected}, rows);
}

template <typename T>
Var<T> CcvitModel<T>::layer(const std::vector<Var<T>>& bound, const LayerSlots& s, Var<T> x,
                            std::size_t sequences) const {
    const std::size_t len = config_.sequence(), heads = config_.heads;
    auto h = numerics::layer_norm(x, bound[s.norm1_gamma], bound[s.norm1_beta]);
    auto qkv = numerics::linear(h, bound[s.qkv_weight], bound[s.qkv_bias]);
    auto bias = numerics::gather(bound[s.rel_bias], bias_index_, Shape{heads, len, len});
    auto attended = numerics::attention(qkv, bias, sequences, heads);
    x = numerics::add(x, numerics::linear(attended, bound[s.proj_weight], bound[s.proj_bias]));
    h = numerics::layer_norm(x, bound[s.norm2_gamma], bound[s.norm2_beta]);
    h = numerics::gelu(numerics::linear(h, bound[s.fc1_weight], bound[s.fc1_bias]));
    return numerics::add(x, numerics::linear(h, bound[s.fc2_weight], bound[s.fc2_bias]));
}

template <typename T>
ForwardOutput<T> CcvitModel<T>::forward(Tape<T>& tape, std::span<const CorruptedBatch> batch) {
    auto x = embed(tape, batch);
    std::vector<Var<T>> bound;
    bound.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const bool embedding = i == slots_.patch_weight || i == slots_.patch_bias || i == slots_.cls || i == slots_.mask;
        // Embedding parameters are already bound by embed(); skip rebinding.
        bound.push_back(embedding ? Var<T>() : tape.parameter(params_[i]));
    }

    const std::size_t sequences = batch.size(), n = config_.positions(), len = config_.sequence();
    ForwardOutput<T> out;
    out.batch = sequences;
    for (std::size_t l = 0; l < config_.depth; ++l) {
        x = layer(bound, slots_.token[l], x, sequences);
        if (l + 1 == config_.tap_layer) out.tapped = x;
    }
    out.final_hidden = x;

    std::vector<RowRef> patch_rows;
    patch_rows.reserve(sequences * n);
    for (std::size_t b = 0; b < sequences; ++b)
        for (std::size_t i = 1; i <= n; ++i) patch_rows.push_back({0, static_cast<std::uint32_t>(b * len + i)});

    auto token_states = numerics::gather_rows<T>({out.final_hidden}, patch_rows);
    token_states = numerics::layer_norm(token_states, bound[slots_.token_norm_gamma], bound[slots_.token_norm_beta]);
    out.token_logits = numerics::linear(token_states, bound[slots_.token_head_weight], bound[slots_.token_head_bias]);

    if (config_.pixel_target) {
        std::vector<RowRef> pixel_rows;
        pixel_rows.reserve(sequences * len);
        for (std::size_t b = 0; b < sequences; ++b) {
            pixel_rows.push_back({0, static_cast<std::uint32_t>(b * len)});
            for (std::size_t i = 1; i <= n; ++i) pixel_rows.push_back({1, static_cast<std::uint32_t>(b * len + i)});
        }
        auto p = numerics::gather_rows<T>({out.final_hidden, out.tapped}, pixel_rows);
        for (const auto& s : slots_.pixel) p = layer(bound, s, p, sequences);
        auto pixel_states = numerics::gather_rows<T>({p}, patch_rows);
        pixel_states =
            numerics::layer_norm(pixel_states, bound[slots_.pixel_norm_gamma], bound[slots_.pixel_norm_beta]);
        out.pixel_pred = numerics::linear(pixel_states, bound[slots_.pixel_head_weight], bound[slots_.pixel_head_bias]);
    }
    return out;
}

template <typename T>
LossTerms<T> CcvitModel<T>::loss(Tape<T>& tape, const ForwardOutput<T>& out,
                                 std::span<const CorruptedBatch> batch) const {
    if (batch.size() != out.batch) throw ShapeError("loss batch does not match forward batch");
    const std::size_t n = config_.positions(), dim = config_.patch_dim(), vocab = config_.vocab;
    LossTerms<T> terms;
    std::vector<RowRef> rows;
    std::vector<std::size_t> targets;
    std::vector<T> pixels;
    const auto& logits = out.token_logits.value();
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& item = batch[b];
        for (std::size_t i = 0; i < n; ++i) {
            if (item.tags[i] == PositionTag::original) continue;
            const std::size_t row = b * n + i;
            rows.push_back({0, static_cast<std::uint32_t>(row)});
            targets.push_back(item.token_targets[i]);
            if (item.tags[i] == PositionTag::masked) {
                ++terms.masked;
                const T* r = logits.ptr() + row * vocab;
                const auto best = static_cast<std::size_t>(std::max_element(r, r + vocab) - r);
                terms.masked_correct += best == item.token_targets[i];
            }
            if (config_.pixel_target) {
                const float* src = item.pixel_targets.data() + i * dim;
                if (config_.normalize_pixels) {
                    double mean = 0.0, var = 0.0;
                    for (std::size_t k = 0; k < dim; ++k) mean += src[k];
                    mean /= static_cast<double>(dim);
                    for (std::size_t k = 0; k < dim; ++k) var += (src[k] - mean) * (src[k] - mean);
                    var /= static_cast<double>(dim);
                    const double inv = 1.0 / std::sqrt(var + 1e-6);
                    for (std::size_t k = 0; k < dim; ++k) pixels.push_back(static_cast<T>((src[k] - mean) * inv));
                } else {
                    for (std::size_t k = 0; k < dim; ++k) pixels.push_back(static_cast<T>(src[k]));
                }
            }
        }
    }
    if (rows.empty()) throw InvalidArgument("loss needs at least one corrupted position");
    terms.corrupted = rows.size();

    terms.ce = numerics::cross_entropy(numerics::gather_rows<T>({out.token_logits}, rows), targets);
    terms.total = terms.ce;
    if (config_.pixel_target) {
        if (!out.pixel_pred.valid()) throw InvalidArgument("pixel target enabled but forward produced no pixels");
        auto target = tape.constant(Tensor<T>(Shape{rows.size(), dim}, std::move(pixels)));
        terms.mse = numerics::mse(numerics::gather_rows<T>({out.pixel_pred}, rows), target);
        terms.total = numerics::add(terms.ce, terms.mse);
    }
    return terms;
}

template class CcvitModel<float>;
template class CcvitModel<double>;

namespace {

constexpr char kMagic[4] = {'C', 'C', 'V', 'M'};
constexpr std::uint32_t kVersion = 1;

} // namespace

void save_checkpoint(const std::filesystem::path& path, const CcvitModel<float>& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    BinaryWriter w(out);
    const auto& c = model.config();
    w.bytes({kMagic, 4});
    w.u32(kVersion);
    for (std::size_t v : {c.patch_size, c.channels, c.embed_dim, c.depth, c.tap_layer, c.pixel_depth, c.heads,
                          c.mlp_ratio, c.vocab, c.grid_h, c.grid_w})
        w.u64(v);
    w.u8(c.pixel_target ? 1 : 0);
    w.u8(c.normalize_pixels ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) w.u64(d);
        w.f32s(p.value.data());
    }
    if (!w.good()) throw Error("write failed: " + path.string());
}

CcvitModel<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    BinaryReader r(in);
    if (r.bytes(4, "checkpoint magic") != std::string(kMagic, 4))
        throw FormatError(path.string() + " is not a model checkpoint (bad magic)");
    const auto version = r.u32("checkpoint version");
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
    ModelConfig c;
    for (std::size_t* field : {&c.patch_size, &c.channels, &c.embed_dim, &c.depth, &c.tap_layer, &c.pixel_depth,
                               &c.heads, &c.mlp_ratio, &c.vocab, &c.grid_h, &c.grid_w}) {
        *field = r.u64("model config");
        if (*field > (1u << 20)) throw FormatError(path.string() + ": implausible model config");
    }
    c.pixel_target = r.u8("model config") != 0;
    c.normalize_pixels = r.u8("model config") != 0;
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    CcvitModel<float> model(c, 0);
    const std::size_t count = r.u32("parameter count");
    if (count != model.parameters().size())
        throw FormatError(path.string() + ": parameter count " + std::to_string(count) + " does not match config");
    for (std::size_t i = 0; i < count; ++i) {
        const auto name = r.str("parameter name");
        auto found = std::find_if(model.parameters().begin(), model.parameters().end(),
                                  [&](const auto& q) { return q.name == name; });
        if (found == model.parameters().end())
            throw FormatError(path.string() + ": unknown parameter '" + name + "'");
        auto& p = *found;
        const std::size_t rank = r.u32("parameter rank");
        Shape shape;
        for (std::size_t k = 0; k < rank; ++k) shape.push_back(r.u64("parameter shape"));
        if (shape != p.value.shape())
            throw FormatError(path.string() + ": parameter '" + name + "' has shape " + numerics::shape_string(shape) +
                              ", expected " + numerics::shape_string(p.value.shape()));
        p.value = Tensor<float>(shape, r.f32s(p.value.size(), "parameter data"));
    }
    if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after checkpoint");
    return model;
}

} // namespace ccvit::model
