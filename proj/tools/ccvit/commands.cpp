#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>

#include "ccvit/bench/bench.hpp"
#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"
#include "ccvit/corruption/corruption.hpp"
#include "ccvit/data/synthetic.hpp"
#include "ccvit/imaging/image_io.hpp"
#include "ccvit/model/model.hpp"
#include "ccvit/tokenizer/kmeans.hpp"
#include "ccvit/trainer/trainer.hpp"
#include "manifest.hpp"
#include "run_config.hpp"

namespace ccvit::cli {
namespace {

namespace fs = std::filesystem;

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

fs::path parent_or_cwd(const fs::path& p) {
    return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw InvalidArgument("data directory " + dir.string() + " does not exist");
    auto files = imaging::list_images(dir);
    if (files.empty()) throw InvalidArgument("no images (.png/.ppm/.pgm/.pnm) under " + dir.string());
    return files;
}

RunConfig base_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& o : overrides) cfg.set(o);
    return cfg;
}

struct TrainCentroidsArgs {
    std::string config, data, out = "codebook.ccvb", init;
    std::vector<std::string> overrides;
    std::optional<std::size_t> k, iters, images, total_images, resolution, patch_size;
    std::optional<std::uint64_t> seed;
};

int train_centroids(const TrainCentroidsArgs& a, std::ostream& out) {
    auto cfg = base_config(a.config, a.overrides);
    if (!a.data.empty()) cfg.paths.data = a.data;
    if (a.k) cfg.tokenizer.k = *a.k;
    if (a.iters) cfg.tokenizer.iterations = *a.iters;
    if (a.images) cfg.tokenizer.images_per_class = *a.images;
    if (a.total_images) {
        cfg.tokenizer.total_images = *a.total_images;
        cfg.tokenizer.images_per_class = 0;
    }
    if (a.resolution) cfg.tokenizer.resolution = *a.resolution;
    if (a.patch_size) cfg.tokenizer.patch_size = *a.patch_size;
    if (a.seed) cfg.seed = *a.seed;
    if (!a.init.empty()) cfg.tokenizer.kmeans_plus_plus = a.init == "kmeans++";
    cfg.validate_tokenizer();

    const auto files = dataset_files(cfg.paths.data);
    const auto vectors = tokenizer::sample_training_vectors(files, cfg.sample_options());
    out << "sampled " << vectors.count() << " patch vectors from " << vectors.sources.size() << " images\n";
    const auto result = tokenizer::train_codebook(vectors.data, vectors.dim, cfg.kmeans_options());
    const fs::path dest = a.out;
    if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
    tokenizer::save_codebook(result.codebook, dest);
    out << "final cost " << fmt("%.6f", result.costs.back()) << " after " << cfg.tokenizer.iterations
        << " iterations (initial " << fmt("%.6f", result.costs.front()) << ", " << result.empty_repairs
        << " empty-cluster repairs)\n";
    out << "wall time " << fmt("%.2f", result.seconds) << " s\n";
    out << "wrote " << dest.string() << '\n';

    ManifestEntry m;
    m.command = "train-centroids";
    m.set("seed", std::to_string(cfg.seed));
    m.set("k", std::to_string(cfg.tokenizer.k));
    m.set("iterations", std::to_string(cfg.tokenizer.iterations));
    m.set("vectors", std::to_string(vectors.count()));
    m.set("final_cost", fmt("%.9g", result.costs.back()));
    m.inputs.push_back(cfg.paths.data);
    m.artifacts.push_back(dest);
    append_manifest(parent_or_cwd(dest), m);
    return 0;
}

struct TokenizeArgs {
    std::string codebook, image, detokenize;
    std::size_t resolution = 0;
};

int tokenize_cmd(const TokenizeArgs& a, std::ostream& out) {
    const auto cb = tokenizer::load_codebook(a.codebook);
    auto img = a.resolution ? imaging::load_image(a.image, a.resolution) : imaging::read_image(a.image);
    const auto grid = imaging::patchify(img, cb.patch_size());
    const auto tokens = tokenizer::tokenize(grid, cb);
    out << "grid " << tokens.grid_h << "x" << tokens.grid_w << " (K=" << cb.size() << ")\n";
    for (std::size_t y = 0; y < tokens.grid_h; ++y) {
        for (std::size_t x = 0; x < tokens.grid_w; ++x) out << (x ? " " : "") << tokens.tokens[y * tokens.grid_w + x];
        out << '\n';
    }
    if (!a.detokenize.empty()) {
        const auto recon = imaging::unpatchify(tokenizer::detokenize(tokens, cb));
        double se = 0.0;
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            const double d = static_cast<double>(img.pixels[i]) - recon.pixels[i];
            se += d * d;
        }
        imaging::write_image(a.detokenize, recon);
        out << "per-pixel mse " << fmt("%.8g", se / static_cast<double>(img.pixels.size())) << '\n';
        out << "wrote " << a.detokenize << '\n';
    }
    return 0;
}

struct PretrainArgs {
    std::string config, resume, init_weights;
    std::vector<std::string> overrides;
};

int pretrain(const PretrainArgs& a, std::ostream& out) {
    auto cfg = base_config(a.config, a.overrides);
    cfg.validate();
    const auto cb = tokenizer::load_codebook(cfg.paths.codebook);
    if (cb.patch_size() != cfg.tokenizer.patch_size)
        throw InvalidArgument("codebook patch size " + std::to_string(cb.patch_size()) +
                              " differs from tokenizer.patch_size " + std::to_string(cfg.tokenizer.patch_size));
    const auto files = dataset_files(cfg.paths.data);
    auto all = trainer::Dataset::from_files(files, cb, cfg.tokenizer.resolution);
    const std::size_t val = std::min(cfg.trainer.validation_images, all.size() - 1);
    const auto train_set = all.subset(0, all.size() - val);
    const auto val_set = val ? all.subset(all.size() - val, val) : trainer::Dataset{};

    trainer::Trainer tr(cfg.train_config(), cfg.model_config(cb.size()), train_set, cfg.model.init_seed);
    if (!a.resume.empty()) {
        tr.load_state(a.resume);
        out << "resumed at step " << tr.step() << '\n';
    }
    if (!a.init_weights.empty()) {
        tr.load_weights(a.init_weights);
        out << "warm start from " << a.init_weights << '\n';
    }
    const fs::path dir = cfg.paths.run_dir;
    fs::create_directories(dir);
    {
        std::ofstream cfg_out(dir / "config.txt");
        cfg_out << cfg.to_text();
    }
    out << "model parameters " << tr.model().parameter_count() << ", " << train_set.size() << " training images, "
        << tr.steps_per_epoch() << " steps per epoch, " << tr.total_steps() << " steps\n";

    const auto state_path = dir / "state.ccvs", model_path = dir / "model.ccvm", metrics_path = dir / "metrics.csv";
    auto save = [&] {
        tr.save_state(state_path);
        model::save_checkpoint(model_path, tr.model());
        trainer::write_metrics_csv(metrics_path, tr.metrics());
    };
    const std::size_t every = cfg.trainer.checkpoint_every;
    tr.run(cfg.trainer.time_budget,
           [&](const trainer::MetricRow& row) {
               if (every && row.step % every == 0) save();
               return false;
           },
           &out);
    save();

    ManifestEntry m;
    m.command = "pretrain";
    m.set("seed", std::to_string(cfg.seed));
    m.set("steps", std::to_string(tr.step()));
    m.set("pixel_target", cfg.model.pixel_target ? "true" : "false");
    m.set("replacement", cfg.corruption.replacement ? "true" : "false");
    if (val) {
        const auto ev = tr.evaluate(val_set, derive_seed(cfg.seed, "validation"));
        out << "validation masked top1 " << fmt("%.4f", ev.token_top1) << " ce " << fmt("%.4f", ev.loss_ce) << '\n';
        m.set("validation_top1", fmt("%.6f", ev.token_top1));
    }
    m.inputs = {cfg.paths.data, cfg.paths.codebook};
    if (!a.resume.empty()) m.inputs.push_back(a.resume);
    m.artifacts = {dir / "config.txt", model_path, state_path, metrics_path};
    append_manifest(dir, m);
    out << "wrote " << model_path.string() << ", " << state_path.string() << ", " << metrics_path.string() << '\n';
    return 0;
}

struct BenchArgs {
    std::string codebook, data, grid = "full", out_dir = "bench";
    std::size_t images = 64, resolution = 0, latency_batch = 64, repetitions = 20, warmup = 3;
    std::uint64_t seed = 0;
    bool global_reference = false;
};

int bench_cmd(const BenchArgs& a, std::ostream& out) {
    const auto cb = tokenizer::load_codebook(a.codebook);
    auto files = dataset_files(a.data);
    if (files.size() > a.images) files.resize(a.images);
    std::vector<imaging::Image> images;
    for (const auto& f : files)
        images.push_back(a.resolution ? imaging::load_image(f, a.resolution) : imaging::read_image(f));

    std::vector<bench::NoiseSetting> grid;
    if (a.grid == "full") {
        grid = bench::standard_noise_grid();
    } else if (a.grid == "mask") {
        grid = {{imaging::NoiseKind::mask, 0.1}, {imaging::NoiseKind::mask, 0.2}, {imaging::NoiseKind::mask, 0.5}};
    } else {
        throw InvalidArgument("unknown noise grid '" + a.grid + "' (expected full or mask)");
    }

    std::vector<std::unique_ptr<bench::TokenizerPort>> toks;
    toks.push_back(std::make_unique<bench::CentroidTokenizer>(cb));
    if (a.global_reference) toks.push_back(bench::reference_tokenizer_global(cb));

    std::vector<bench::RobustnessRow> rows;
    std::vector<bench::LatencyResult> latency;
    std::vector<imaging::PatchGrid> batch;
    for (std::size_t i = 0; i < a.latency_batch; ++i)
        batch.push_back(imaging::patchify(images[i % images.size()], cb.patch_size()));
    for (const auto& t : toks) {
        auto r = bench::robustness_report(*t, images, grid, a.seed);
        rows.insert(rows.end(), r.begin(), r.end());
        latency.push_back(bench::latency_bench(*t, batch, a.repetitions, a.warmup));
    }

    const fs::path dir = a.out_dir;
    fs::create_directories(dir);
    {
        std::ofstream csv(dir / "robustness.csv");
        bench::write_robustness_csv(csv, rows);
        std::ofstream lat(dir / "latency.csv");
        bench::write_latency_csv(lat, latency);
    }
    auto all_rows = rows;
    const auto published = bench::published_baselines();
    all_rows.insert(all_rows.end(), published.begin(), published.end());
    std::ofstream report(dir / "report.txt");
    for (std::ostream* s : {static_cast<std::ostream*>(&out), static_cast<std::ostream*>(&report)}) {
        *s << "Unchanged-token ratio (%), " << images.size() << " images, seed " << a.seed << "\n\n";
        bench::write_robustness_table(*s, all_rows);
        *s << "\nTokenizer latency after " << a.warmup << " warmup runs, " << a.repetitions << " repetitions\n\n";
        bench::write_latency_table(*s, latency);
    }
    report.close();

    ManifestEntry m;
    m.command = "bench";
    m.set("seed", std::to_string(a.seed));
    m.set("images", std::to_string(images.size()));
    m.set("grid", a.grid);
    m.inputs = {a.codebook, a.data};
    m.artifacts = {dir / "robustness.csv", dir / "latency.csv"};
    append_manifest(dir, m);
    return 0;
}

struct ReconstructArgs {
    std::string checkpoint, codebook, image, out = "reconstruction.png";
    std::uint64_t plan_seed = 0;
    std::optional<std::size_t> mask_count, replace_count;
};

int reconstruct(const ReconstructArgs& a, std::ostream& out) {
    auto model = model::load_checkpoint(a.checkpoint);
    const auto cb = tokenizer::load_codebook(a.codebook);
    const auto& mc = model.config();
    if (cb.size() != mc.vocab || cb.dim() != mc.patch_dim())
        throw InvalidArgument("codebook does not match the checkpoint's vocabulary or patch size");
    const auto img = imaging::load_image(a.image, mc.grid_h * mc.patch_size);
    const auto grid = imaging::patchify(img, mc.patch_size);
    const std::size_t n = mc.positions();
    corruption::CorruptionConfig cc = corruption::CorruptionConfig::from_ratios(n, 0.4, 0.1);
    if (a.mask_count) cc.mask_count = *a.mask_count;
    if (a.replace_count) cc.replace_count = *a.replace_count;
    const auto plan = corruption::make_plan(mc.grid_h, mc.grid_w, cc, a.plan_seed);
    const auto batch = corruption::corrupt(grid, cb, plan);

    numerics::Tape<float> tape;
    std::vector<corruption::CorruptedBatch> items{batch};
    auto fwd = model.forward(tape, items);
    const auto& logits = fwd.token_logits.value();

    imaging::PatchGrid corrupted = grid, restored = grid;
    corrupted.data = batch.patches;
    const std::size_t dim = mc.patch_dim();
    double se = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.tags[i] == corruption::PositionTag::masked)
            std::fill_n(corrupted.data.begin() + static_cast<std::ptrdiff_t>(i * dim), dim, 0.5f);
        if (batch.tags[i] == corruption::PositionTag::original) continue;
        const float* row = logits.ptr() + i * mc.vocab;
        const auto token = static_cast<std::size_t>(std::max_element(row, row + mc.vocab) - row);
        hits += token == batch.token_targets[i];
        for (std::size_t k = 0; k < dim; ++k) {
            float v = (mc.pixel_target && !mc.normalize_pixels) ? fwd.pixel_pred.value()[i * dim + k]
                                                                : cb.centroid(token)[k];
            v = std::clamp(v, 0.0f, 1.0f);
            restored.data[i * dim + k] = v;
            const double d = static_cast<double>(v) - grid.data[i * dim + k];
            se += d * d;
        }
    }
    const std::size_t corrupted_count = plan.masked.size() + plan.replaced.size();
    std::vector<imaging::Image> panels{img, imaging::unpatchify(corrupted), imaging::unpatchify(restored)};
    imaging::write_image(a.out, imaging::concat_horizontal(panels, 2, 1.0f));
    out << "corrupted " << plan.masked.size() << " masked + " << plan.replaced.size() << " replaced of " << n
        << " patches\n";
    out << "mse on corrupted positions " << fmt("%.8g", se / static_cast<double>(corrupted_count * dim)) << '\n';
    out << "token top1 on corrupted positions "
        << fmt("%.4f", static_cast<double>(hits) / static_cast<double>(corrupted_count)) << '\n';
    out << "wrote " << a.out << '\n';

    ManifestEntry m;
    m.command = "reconstruct";
    m.set("plan_seed", std::to_string(a.plan_seed));
    m.inputs = {a.checkpoint, a.codebook, a.image};
    m.artifacts = {a.out};
    append_manifest(parent_or_cwd(a.out), m);
    return 0;
}

struct SynthArgs {
    std::string kind = "textures", out_dir = "data";
    std::size_t count = 64, grid = 8, patch_size = 8, atoms = 512, size = 112;
    std::uint64_t seed = 0;
};

int synth(const SynthArgs& a, std::ostream& out) {
    std::vector<imaging::Image> images;
    if (a.kind == "textures") {
        data::TextureOptions o;
        o.count = a.count;
        o.grid = a.grid;
        o.patch_size = a.patch_size;
        o.atoms = a.atoms;
        o.seed = a.seed;
        images = data::quantized_textures(o);
    } else if (a.kind == "scenes") {
        images = data::smooth_scenes({a.count, a.size, a.seed});
    } else {
        throw InvalidArgument("unknown synthetic kind '" + a.kind + "' (expected textures or scenes)");
    }
    const auto paths = data::write_images(images, a.out_dir, a.kind);
    out << "wrote " << paths.size() << " images to " << a.out_dir << '\n';
    ManifestEntry m;
    m.command = "synth";
    m.set("kind", a.kind);
    m.set("count", std::to_string(a.count));
    m.set("seed", std::to_string(a.seed));
    append_manifest(a.out_dir, m);
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Centroid-based masked image modeling toolkit"};
    app.name(args.empty() ? "ccvit" : fs::path(args.front()).filename().string());
    app.require_subcommand(1);

    TrainCentroidsArgs tc;
    auto* c_tc = app.add_subcommand("train-centroids", "Learn a k-means patch codebook");
    c_tc->add_option("--config", tc.config, "Run config file");
    c_tc->add_option("--set", tc.overrides, "Override section.key=value");
    c_tc->add_option("--data", tc.data, "Image directory (searched recursively)");
    c_tc->add_option("--k", tc.k, "Number of centroids");
    c_tc->add_option("--iters", tc.iters, "Lloyd iterations");
    c_tc->add_option("--images", tc.images, "Images sampled per class directory");
    c_tc->add_option("--total-images", tc.total_images, "Images sampled overall (ignores classes)");
    c_tc->add_option("--resolution", tc.resolution, "Square resize before patchifying");
    c_tc->add_option("--patch-size", tc.patch_size, "Patch side in pixels");
    c_tc->add_option("--seed", tc.seed, "Random seed");
    c_tc->add_option("--init", tc.init, "Initialization: random or kmeans++")
        ->check(CLI::IsMember({"random", "kmeans++"}));
    c_tc->add_option("--out", tc.out, "Codebook output file");

    TokenizeArgs tk;
    auto* c_tk = app.add_subcommand("tokenize", "Print an image's token grid");
    c_tk->add_option("--codebook", tk.codebook, "Codebook file")->required();
    c_tk->add_option("--image", tk.image, "Image file")->required();
    c_tk->add_option("--detokenize", tk.detokenize, "Write the centroid reconstruction here");
    c_tk->add_option("--resolution", tk.resolution, "Square resize before tokenizing (0 keeps the size)");

    PretrainArgs pt;
    auto* c_pt = app.add_subcommand("pretrain", "Pre-train the model");
    c_pt->add_option("--config", pt.config, "Run config file")->required();
    c_pt->add_option("--set", pt.overrides, "Override section.key=value");
    c_pt->add_option("--resume", pt.resume, "Training state to continue from");
    c_pt->add_option("--init-weights", pt.init_weights, "Model checkpoint for a warm start");

    BenchArgs bn;
    auto* c_bn = app.add_subcommand("bench", "Tokenizer robustness and latency report");
    c_bn->add_option("--codebook", bn.codebook, "Codebook file")->required();
    c_bn->add_option("--data", bn.data, "Image directory")->required();
    c_bn->add_option("--grid", bn.grid, "Noise grid: full or mask");
    c_bn->add_option("--images", bn.images, "Maximum number of images");
    c_bn->add_option("--resolution", bn.resolution, "Square resize (0 keeps the size)");
    c_bn->add_option("--seed", bn.seed, "Noise seed");
    c_bn->add_option("--latency-batch", bn.latency_batch, "Images per timed batch");
    c_bn->add_option("--repetitions", bn.repetitions, "Timed batches");
    c_bn->add_option("--warmup", bn.warmup, "Untimed warmup batches");
    c_bn->add_option("--out", bn.out_dir, "Report directory");
    c_bn->add_flag("--global-reference", bn.global_reference, "Also report the non-local reference tokenizer");

    ReconstructArgs rc;
    auto* c_rc = app.add_subcommand("reconstruct", "Corrupt an image and render the model's reconstruction");
    c_rc->add_option("--checkpoint", rc.checkpoint, "Model checkpoint")->required();
    c_rc->add_option("--codebook", rc.codebook, "Codebook file")->required();
    c_rc->add_option("--image", rc.image, "Image file")->required();
    c_rc->add_option("--plan-seed", rc.plan_seed, "Corruption plan seed");
    c_rc->add_option("--mask-count", rc.mask_count, "Masked patches (default 40% of n)");
    c_rc->add_option("--replace-count", rc.replace_count, "Replaced patches (default 10% of n)");
    c_rc->add_option("--out", rc.out, "Side-by-side output image");

    SynthArgs sy;
    auto* c_sy = app.add_subcommand("synth", "Generate a synthetic dataset");
    c_sy->add_option("--kind", sy.kind, "textures or scenes");
    c_sy->add_option("--count", sy.count, "Number of images");
    c_sy->add_option("--grid", sy.grid, "Patches per side (textures)");
    c_sy->add_option("--patch-size", sy.patch_size, "Patch side (textures)");
    c_sy->add_option("--atoms", sy.atoms, "Atom patches (textures)");
    c_sy->add_option("--size", sy.size, "Image side (scenes)");
    c_sy->add_option("--seed", sy.seed, "Random seed");
    c_sy->add_option("--out", sy.out_dir, "Output directory");

    try {
        std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run with --help for usage\n";
        return 2;
    }

    try {
        if (c_tc->parsed()) return train_centroids(tc, out);
        if (c_tk->parsed()) return tokenize_cmd(tk, out);
        if (c_pt->parsed()) return pretrain(pt, out);
        if (c_bn->parsed()) return bench_cmd(bn, out);
        if (c_rc->parsed()) return reconstruct(rc, out);
        if (c_sy->parsed()) return synth(sy, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace ccvit::cli
