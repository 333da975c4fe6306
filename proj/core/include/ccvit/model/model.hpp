#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccvit/corruption/corruption.hpp"
#include "ccvit/numerics/ops.hpp"
#include "ccvit/numerics/tape.hpp"

namespace ccvit::model {

struct ModelConfig {
    std::size_t patch_size = 8;
    std::size_t channels = 3;
    std::size_t embed_dim = 192;
    std::size_t depth = 6;        // token-block layers
    std::size_t tap_layer = 3;    // token-block layer whose patch states feed the pixel block
    std::size_t pixel_depth = 2;
    std::size_t heads = 3;
    std::size_t mlp_ratio = 4;
    std::size_t vocab = 512;      // codebook size K
    std::size_t grid_h = 8;
    std::size_t grid_w = 8;
    bool pixel_target = true;     // false trains the token head only
    bool normalize_pixels = false;  // per-patch mean/std normalization of pixel targets

    std::size_t patch_dim() const { return channels * patch_size * patch_size; }
    std::size_t positions() const { return grid_h * grid_w; }
    std::size_t sequence() const { return positions() + 1; }
    std::size_t mlp_dim() const { return embed_dim * mlp_ratio; }

    void validate() const;

    // 64x64 images, P=8, d=192, six layers tapped at the third.
    static ModelConfig desk();
    // Small enough for 64-bit finite differences.
    static ModelConfig tiny();

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Row-major [len x len] index into a relative bias table of
// relative_bias_rows() rows: grid offsets first, then all-to-CLS, CLS-to-all
// and CLS-to-CLS.
std::vector<std::size_t> relative_position_index(std::size_t grid_h, std::size_t grid_w);
std::size_t relative_bias_rows(std::size_t grid_h, std::size_t grid_w);

template <typename T>
struct ForwardOutput {
    std::size_t batch = 0;
    numerics::Var<T> token_logits;  // (batch*n) x K
    numerics::Var<T> pixel_pred;    // (batch*n) x D; invalid when the pixel target is off
    numerics::Var<T> tapped;        // (batch*(n+1)) x d, token-block output at the tap layer
    numerics::Var<T> final_hidden;  // (batch*(n+1)) x d, token-block output
};

template <typename T>
struct LossTerms {
    numerics::Var<T> ce;
    numerics::Var<T> mse;    // invalid when the pixel target is off
    numerics::Var<T> total;
    std::size_t corrupted = 0;      // |T| summed over the batch
    std::size_t masked = 0;
    std::size_t masked_correct = 0; // argmax hits at masked positions

    double ce_value() const { return ce.valid() ? static_cast<double>(ce.value()[0]) : 0.0; }
    double mse_value() const { return mse.valid() ? static_cast<double>(mse.value()[0]) : 0.0; }
    double total_value() const { return static_cast<double>(total.value()[0]); }
};

template <typename T>
class CcvitModel {
public:
    CcvitModel() = default;
    CcvitModel(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    // Toggling the pixel target does not change the parameter set.
    void set_pixel_target(bool on) { config_.pixel_target = on; }

    std::vector<numerics::Parameter<T>>& parameters() { return params_; }
    const std::vector<numerics::Parameter<T>>& parameters() const { return params_; }
    numerics::Parameter<T>& parameter(std::string_view name);
    const numerics::Parameter<T>& parameter(std::string_view name) const;
    std::size_t parameter_count() const;
    void zero_grad();

    // Row 0 of each sequence is the CLS embedding, masked slots get the mask
    // embedding and other slots the projected patch, standardized as
    // (pixel - 0.5) * 4 first. (batch*(n+1)) x d.
    numerics::Var<T> embed(numerics::Tape<T>& tape, std::span<const corruption::CorruptedBatch> batch);

    ForwardOutput<T> forward(numerics::Tape<T>& tape, std::span<const corruption::CorruptedBatch> batch);

    // Mean cross-entropy and mean squared error over corrupted positions only.
    // Throws InvalidArgument when no position is corrupted.
    LossTerms<T> loss(numerics::Tape<T>& tape, const ForwardOutput<T>& out,
                      std::span<const corruption::CorruptedBatch> batch) const;

    template <typename U>
    CcvitModel<U> converted() const;

private:
    template <typename U>
    friend class CcvitModel;

    struct LayerSlots {
        std::size_t norm1_gamma, norm1_beta, qkv_weight, qkv_bias, rel_bias, proj_weight, proj_bias;
        std::size_t norm2_gamma, norm2_beta, fc1_weight, fc1_bias, fc2_weight, fc2_bias;
    };
    struct Slots {
        std::size_t patch_weight, patch_bias, cls, mask;
        std::vector<LayerSlots> token, pixel;
        std::size_t token_norm_gamma, token_norm_beta, token_head_weight, token_head_bias;
        std::size_t pixel_norm_gamma, pixel_norm_beta, pixel_head_weight, pixel_head_bias;
    };

    void build_slots();
    std::size_t add(std::string name, numerics::Shape shape, bool decay);
    numerics::Var<T> layer(const std::vector<numerics::Var<T>>& bound, const LayerSlots& s, numerics::Var<T> x,
                           std::size_t sequences) const;

    ModelConfig config_;
    std::vector<numerics::Parameter<T>> params_;
    Slots slots_{};
    std::vector<std::size_t> bias_index_;
};

template <typename T>
template <typename U>
CcvitModel<U> CcvitModel<T>::converted() const {
    CcvitModel<U> out;
    out.config_ = config_;
    out.slots_ = {};
    out.bias_index_ = bias_index_;
    out.params_.reserve(params_.size());
    for (const auto& p : params_) {
        numerics::Parameter<U> q;
        q.name = p.name;
        q.value = p.value.template cast<U>();
        q.decay = p.decay;
        q.zero_grad();
        out.params_.push_back(std::move(q));
    }
    out.build_slots();
    return out;
}

// Binary checkpoint: "CCVM", version, config header, then named float32
// tensors. Round-trips bit-exactly for float models.
void save_checkpoint(const std::filesystem::path& path, const CcvitModel<float>& model);
CcvitModel<float> load_checkpoint(const std::filesystem::path& path);

} // namespace ccvit::model
