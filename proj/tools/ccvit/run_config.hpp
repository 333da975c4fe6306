#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccvit/model/model.hpp"
#include "ccvit/tokenizer/kmeans.hpp"
#include "ccvit/trainer/trainer.hpp"

namespace ccvit::cli {

// Grammar, one item per line:
//   # comment          (also after a value)
//   [section]
//   key = value
// Keys before any section header belong to the global section. Booleans
// accept true/false/1/0/yes/no/on/off. Unknown sections or keys are errors.
struct RunConfig {
    std::uint64_t seed = 0;

    struct Paths {
        std::filesystem::path data = "data";
        std::filesystem::path codebook = "codebook.ccvb";
        std::filesystem::path run_dir = "run";
    } paths;

    struct Tokenizer {
        std::size_t k = 512;
        std::size_t iterations = 20;
        std::size_t images_per_class = 50;
        std::size_t total_images = 0;
        std::size_t resolution = 64;
        std::size_t patch_size = 8;
        bool kmeans_plus_plus = false;
    } tokenizer;

    struct Corruption {
        std::size_t mask_count = 26;
        std::size_t replace_count = 6;
        bool replacement = true;
        std::size_t min_block = 16;
        std::size_t max_block = 0;
        double min_aspect = 0.3;
    } corruption;

    struct Model {
        std::size_t embed_dim = 192;
        std::size_t depth = 6;
        std::size_t tap_layer = 3;
        std::size_t pixel_depth = 2;
        std::size_t heads = 3;
        std::size_t mlp_ratio = 4;
        bool pixel_target = true;
        bool normalize_pixels = false;
        std::uint64_t init_seed = 0;
    } model;

    struct Trainer {
        std::size_t epochs = 10;
        std::size_t batch_size = 16;
        std::size_t accumulation = 1;
        std::size_t max_steps = 0;
        double lr = 1.5e-3;
        double min_lr = 1e-5;
        double warmup_epochs = 1.0;
        double beta1 = 0.9;
        double beta2 = 0.98;
        double weight_decay = 0.05;
        double eps = 1e-8;
        std::size_t validation_images = 0;
        std::size_t checkpoint_every = 0;  // steps; 0 saves only at the end
        double time_budget = 0.0;          // seconds; 0 means none
    } trainer;

    struct Bench {
        std::size_t images = 64;
        std::size_t latency_batch = 64;
        std::size_t repetitions = 20;
        std::size_t warmup = 3;
    } bench;

    // Throws InvalidArgument naming the line on any syntax error or unknown key.
    static RunConfig parse(const std::string& text, const std::string& origin = "config");
    static RunConfig load(const std::filesystem::path& path);

    // "section.key=value" (or "key=value" for the global section).
    void set(const std::string& assignment);
    void set(const std::string& section, const std::string& key, const std::string& value);

    // Cross-field checks; throws InvalidArgument.
    void validate() const;
    // Only the [tokenizer] section, for commands that ignore the rest.
    void validate_tokenizer() const;

    // Canonical text in the same grammar; parse(to_text()) round-trips.
    std::string to_text() const;

    std::size_t grid() const { return tokenizer.resolution / tokenizer.patch_size; }
    model::ModelConfig model_config(std::size_t vocab) const;
    trainer::TrainConfig train_config() const;
    tokenizer::KMeansOptions kmeans_options() const;
    tokenizer::SampleOptions sample_options() const;
};

} // namespace ccvit::cli
