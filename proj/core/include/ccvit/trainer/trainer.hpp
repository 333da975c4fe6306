#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ccvit/corruption/corruption.hpp"
#include "ccvit/imaging/image.hpp"
#include "ccvit/model/model.hpp"
#include "ccvit/tokenizer/codebook.hpp"

namespace ccvit::trainer {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    std::size_t accumulation = 1;
    std::size_t max_steps = 0;       // 0 runs every epoch
    double peak_lr = 1.5e-3;
    double min_lr = 1e-5;
    double warmup_epochs = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double weight_decay = 0.05;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    std::size_t mask_count = 26;     // round(0.4 * 64)
    std::size_t replace_count = 6;   // round(0.1 * 64)
    bool replacement = true;
    bool resample_corruption = true; // false keeps one plan per example for every epoch
    corruption::BlockwiseMaskOptions blocks;

    void validate() const;
    corruption::CorruptionConfig corruption() const;
};

// Linear warmup to the peak, then cosine decay to min_lr at total_steps.
// Steps are 1-based; step 0 yields 0.
struct Schedule {
    std::size_t total_steps = 1;
    std::size_t warmup_steps = 0;
    double peak_lr = 1.5e-3;
    double min_lr = 1e-5;
};

double lr_at(std::size_t step, const Schedule& schedule);

struct AdamWHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double weight_decay = 0.0;
    double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
    std::size_t step = 0;
    std::vector<numerics::Tensor<T>> m;
    std::vector<numerics::Tensor<T>> v;
};

// Decoupled weight decay (only on parameters with decay set) followed by the
// bias-corrected Adam update. Returns false and leaves everything untouched
// when any gradient is non-finite.
template <typename T>
bool adamw_step(std::span<numerics::Parameter<T>> params, AdamMoments<T>& moments, const AdamWHyper& hyper);

// A tokenized training example.
struct Example {
    imaging::PatchGrid grid;
    tokenizer::TokenGrid tokens;
};

class Dataset {
public:
    Dataset() = default;
    static Dataset from_images(std::span<const imaging::Image> images, const tokenizer::Codebook& codebook,
                               std::size_t resolution);
    static Dataset from_files(const std::vector<std::filesystem::path>& files, const tokenizer::Codebook& codebook,
                              std::size_t resolution);

    std::size_t size() const { return examples_.size(); }
    const Example& operator[](std::size_t i) const { return examples_[i]; }
    const tokenizer::Codebook& codebook() const { return *codebook_; }
    Dataset subset(std::size_t first, std::size_t count) const;

private:
    std::vector<Example> examples_;
    std::shared_ptr<const tokenizer::Codebook> codebook_;
};

struct StepMetrics {
    double loss_ce = 0.0;
    double loss_mse = 0.0;
    double loss = 0.0;
    std::size_t corrupted = 0;
    std::size_t masked = 0;
    std::size_t masked_correct = 0;

    double token_top1() const { return masked ? static_cast<double>(masked_correct) / static_cast<double>(masked) : 0.0; }
};

// Forward and backward over micro-batches, weighting each micro-batch loss by
// its share of corrupted positions so the accumulated gradient equals the
// per-position mean over the union. Gradients add onto the parameters' grad.
template <typename T>
StepMetrics accumulate_gradients(model::CcvitModel<T>& model,
                                 std::span<const std::vector<corruption::CorruptedBatch>> micro_batches);

struct MetricRow {
    std::size_t step = 0;
    double lr = 0.0;
    double loss_ce = 0.0;
    double loss_mse = 0.0;
    double token_top1 = 0.0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct EvalResult {
    double loss_ce = 0.0;
    double loss_mse = 0.0;
    double token_top1 = 0.0;
    std::size_t masked = 0;
};

class Trainer {
public:
    Trainer(const TrainConfig& config, const model::ModelConfig& model_config, const Dataset& data,
            std::uint64_t model_seed);

    const TrainConfig& config() const { return config_; }
    const Schedule& schedule() const { return schedule_; }
    std::size_t steps_per_epoch() const { return steps_per_epoch_; }
    std::size_t total_steps() const { return schedule_.total_steps; }
    std::size_t step() const { return step_; }
    bool finished() const { return step() >= total_steps(); }

    model::CcvitModel<float>& model() { return model_; }
    const model::CcvitModel<float>& model() const { return model_; }
    const std::vector<MetricRow>& metrics() const { return metrics_; }

    // The corrupted examples feeding optimizer step `step` (1-based), one
    // vector per micro-batch.
    std::vector<std::vector<corruption::CorruptedBatch>> batches_for(std::size_t step) const;

    // One optimizer step. Throws NumericError when the loss diverges.
    MetricRow train_step();

    // Runs until finished, `max_seconds` elapse (0 = no limit) or `stop`
    // returns true after a step. Progress lines go to `log` once per epoch.
    void run(double max_seconds = 0.0, const std::function<bool(const MetricRow&)>& stop = {},
             std::ostream* log = nullptr);

    // Masked-token accuracy and losses under fixed per-example plans.
    EvalResult evaluate(const Dataset& data, std::uint64_t seed, std::size_t batch_size = 32);

    // Full resumable state: weights, optimizer moments, step and metrics.
    void save_state(const std::filesystem::path& path) const;
    // Throws FormatError when the file is damaged or was written under a
    // different configuration.
    void load_state(const std::filesystem::path& path);
    // Warm start: weights only, fresh optimizer.
    void load_weights(const std::filesystem::path& checkpoint);

    std::uint64_t fingerprint() const;

private:
    TrainConfig config_;
    const Dataset* data_;
    model::CcvitModel<float> model_;
    AdamMoments<float> moments_;
    std::size_t step_ = 0;
    Schedule schedule_;
    std::size_t steps_per_epoch_ = 0;
    std::vector<MetricRow> metrics_;
};

// Masked-token accuracy of an arbitrary model on fixed plans; shared by the
// trainer and the ablation harness.
EvalResult evaluate_model(model::CcvitModel<float>& model, const Dataset& data,
                          const corruption::CorruptionConfig& corruption, std::uint64_t seed,
                          std::size_t batch_size = 32);

} // namespace ccvit::trainer
