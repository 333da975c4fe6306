#include "ccvit/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ccvit/common/binary_io.hpp"
#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"
#include "ccvit/imaging/image_io.hpp"

namespace ccvit::trainer {

using corruption::CorruptedBatch;
using numerics::Parameter;
using numerics::Tape;
using numerics::Tensor;

void TrainConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("train config: ") + what);
    };
    need(epochs > 0 || max_steps > 0, "epochs or max_steps must be positive");
    need(batch_size > 0, "batch_size must be positive");
    need(accumulation >= 1, "accumulation must be at least 1");
    need(peak_lr > 0.0 && min_lr >= 0.0 && min_lr <= peak_lr, "need 0 <= min_lr <= peak_lr and peak_lr > 0");
    need(warmup_epochs >= 0.0, "warmup_epochs must be non-negative");
    need(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
    need(weight_decay >= 0.0, "weight_decay must be non-negative");
    need(eps > 0.0, "eps must be positive");
    need(mask_count + replace_count > 0, "at least one patch must be corrupted");
}

corruption::CorruptionConfig TrainConfig::corruption() const {
    corruption::CorruptionConfig c;
    c.mask_count = mask_count;
    c.replace_count = replace_count;
    c.replacement = replacement;
    c.blocks = blocks;
    return c;
}

double lr_at(std::size_t step, const Schedule& s) {
    if (step == 0) return 0.0;
    if (step <= s.warmup_steps) return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    const std::size_t decay = s.total_steps > s.warmup_steps ? s.total_steps - s.warmup_steps : 0;
    if (decay == 0) return s.min_lr;
    const double progress =
        std::min(1.0, static_cast<double>(step - s.warmup_steps) / static_cast<double>(decay));
    return s.min_lr + (s.peak_lr - s.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
bool adamw_step(std::span<Parameter<T>> params, AdamMoments<T>& moments, const AdamWHyper& hyper) {
    for (const auto& p : params)
        if (!p.grad.all_finite()) return false;
    if (moments.m.size() != params.size()) {
        moments.m.clear();
        moments.v.clear();
        for (const auto& p : params) {
            moments.m.emplace_back(p.value.shape());
            moments.v.emplace_back(p.value.shape());
        }
    }
    const auto t = static_cast<double>(++moments.step);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t), bc2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p.grad.size() != p.value.size()) throw ShapeError("gradient shape does not match parameter " + p.name);
        auto value = p.value.data();
        const auto grad = p.grad.data();
        auto m = moments.m[i].data();
        auto v = moments.v[i].data();
        const double shrink = p.decay ? 1.0 - hyper.lr * hyper.weight_decay : 1.0;
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double g = grad[k];
            const double mk = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g;
            const double vk = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g * g;
            m[k] = static_cast<T>(mk);
            v[k] = static_cast<T>(vk);
            const double update = (mk / bc1) / (std::sqrt(vk / bc2) + hyper.eps);
            value[k] = static_cast<T>(value[k] * shrink - hyper.lr * update);
        }
    }
    return true;
}

template bool adamw_step<float>(std::span<Parameter<float>>, AdamMoments<float>&, const AdamWHyper&);
template bool adamw_step<double>(std::span<Parameter<double>>, AdamMoments<double>&, const AdamWHyper&);

Dataset Dataset::from_images(std::span<const imaging::Image> images, const tokenizer::Codebook& codebook,
                             std::size_t resolution) {
    Dataset out;
    out.codebook_ = std::make_shared<const tokenizer::Codebook>(codebook);
    out.examples_.reserve(images.size());
    for (const auto& img : images) {
        Example ex;
        ex.grid = imaging::patchify(img.height == resolution && img.width == resolution
                                        ? img
                                        : imaging::resize_bilinear(img, resolution, resolution),
                                    codebook.patch_size());
        ex.tokens = tokenizer::tokenize(ex.grid, codebook);
        out.examples_.push_back(std::move(ex));
    }
    return out;
}

Dataset Dataset::from_files(const std::vector<std::filesystem::path>& files, const tokenizer::Codebook& codebook,
                            std::size_t resolution) {
    std::vector<imaging::Image> images;
    images.reserve(files.size());
    for (const auto& f : files) images.push_back(imaging::load_image(f, resolution));
    return from_images(images, codebook, resolution);
}

Dataset Dataset::subset(std::size_t first, std::size_t count) const {
    if (first + count > size()) throw InvalidArgument("dataset subset out of range");
    Dataset out;
    out.codebook_ = codebook_;
    out.examples_.assign(examples_.begin() + static_cast<std::ptrdiff_t>(first),
                         examples_.begin() + static_cast<std::ptrdiff_t>(first + count));
    return out;
}

template <typename T>
StepMetrics accumulate_gradients(model::CcvitModel<T>& model,
                                 std::span<const std::vector<CorruptedBatch>> micro_batches) {
    StepMetrics metrics;
    for (const auto& micro : micro_batches)
        for (const auto& item : micro) metrics.corrupted += item.corrupted_count();
    if (metrics.corrupted == 0) throw InvalidArgument("no corrupted positions in step");
    for (const auto& micro : micro_batches) {
        Tape<T> tape;
        auto out = model.forward(tape, micro);
        auto terms = model.loss(tape, out, micro);
        const double weight = static_cast<double>(terms.corrupted) / static_cast<double>(metrics.corrupted);
        tape.backward(numerics::scale(terms.total, static_cast<T>(weight)));
        metrics.loss_ce += weight * terms.ce_value();
        metrics.loss_mse += weight * terms.mse_value();
        metrics.loss += weight * terms.total_value();
        metrics.masked += terms.masked;
        metrics.masked_correct += terms.masked_correct;
    }
    return metrics;
}

template StepMetrics accumulate_gradients<float>(model::CcvitModel<float>&,
                                                 std::span<const std::vector<CorruptedBatch>>);
template StepMetrics accumulate_gradients<double>(model::CcvitModel<double>&,
                                                  std::span<const std::vector<CorruptedBatch>>);

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "step,lr,loss_ce,loss_mse,token_top1\n";
    char line[160];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.step, r.lr, r.loss_ce, r.loss_mse,
                      r.token_top1);
        out << line;
    }
    if (!out) throw Error("write failed: " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open metrics " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "step,lr,loss_ce,loss_mse,token_top1")
        throw FormatError(path.string() + ": unexpected metrics header");
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricRow r;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &r.step, &r.lr, &r.loss_ce, &r.loss_mse,
                        &r.token_top1) != 5)
            throw FormatError(path.string() + ": malformed metrics row '" + line + "'");
        rows.push_back(r);
    }
    return rows;
}

EvalResult evaluate_model(model::CcvitModel<float>& model, const Dataset& data,
                          const corruption::CorruptionConfig& corruption, std::uint64_t seed,
                          std::size_t batch_size) {
    if (data.size() == 0) throw InvalidArgument("evaluation dataset is empty");
    const auto& cfg = model.config();
    EvalResult result;
    std::size_t corrupted = 0, correct = 0;
    double ce = 0.0, mse = 0.0;
    for (std::size_t first = 0; first < data.size(); first += batch_size) {
        std::vector<CorruptedBatch> batch;
        for (std::size_t i = first; i < std::min(data.size(), first + batch_size); ++i) {
            const auto plan = corruption::make_plan(cfg.grid_h, cfg.grid_w, corruption, derive_seed(seed, {i}));
            batch.push_back(corruption::corrupt(data[i].grid, data[i].tokens, data.codebook(), plan));
        }
        Tape<float> tape;
        auto out = model.forward(tape, batch);
        auto terms = model.loss(tape, out, batch);
        ce += terms.ce_value() * static_cast<double>(terms.corrupted);
        mse += terms.mse_value() * static_cast<double>(terms.corrupted);
        corrupted += terms.corrupted;
        result.masked += terms.masked;
        correct += terms.masked_correct;
    }
    result.loss_ce = ce / static_cast<double>(corrupted);
    result.loss_mse = mse / static_cast<double>(corrupted);
    result.token_top1 = result.masked ? static_cast<double>(correct) / static_cast<double>(result.masked) : 0.0;
    return result;
}

Trainer::Trainer(const TrainConfig& config, const model::ModelConfig& model_config, const Dataset& data,
                 std::uint64_t model_seed)
    : config_(config), data_(&data), model_(model_config, model_seed) {
    config_.validate();
    const std::size_t per_step = config_.batch_size * config_.accumulation;
    if (data.size() < per_step)
        throw InvalidArgument("dataset holds " + std::to_string(data.size()) + " examples; one step needs " +
                              std::to_string(per_step));
    if (data.codebook().size() != model_config.vocab)
        throw InvalidArgument("codebook size " + std::to_string(data.codebook().size()) +
                              " does not match model vocab " + std::to_string(model_config.vocab));
    if (data.codebook().dim() != model_config.patch_dim())
        throw InvalidArgument("codebook patch dimension does not match the model");
    const auto& first = data[0].grid;
    if (first.grid_h != model_config.grid_h || first.grid_w != model_config.grid_w)
        throw InvalidArgument("dataset grid does not match the model grid");
    steps_per_epoch_ = data.size() / per_step;
    schedule_.total_steps = config_.max_steps ? config_.max_steps : config_.epochs * steps_per_epoch_;
    schedule_.warmup_steps = std::min(
        schedule_.total_steps,
        static_cast<std::size_t>(std::llround(config_.warmup_epochs * static_cast<double>(steps_per_epoch_))));
    schedule_.peak_lr = config_.peak_lr;
    schedule_.min_lr = config_.min_lr;
}

std::vector<std::vector<CorruptedBatch>> Trainer::batches_for(std::size_t step) const {
    const std::size_t b = config_.batch_size, a = config_.accumulation;
    const std::size_t per_epoch = steps_per_epoch_ * a * b;
    const auto& cfg = model_.config();
    const auto corruption = config_.corruption();
    std::vector<std::vector<CorruptedBatch>> out(a);
    std::size_t cached_epoch = static_cast<std::size_t>(-1);
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < a; ++j) {
        for (std::size_t k = 0; k < b; ++k) {
            const std::size_t pos = ((step - 1) * a + j) * b + k;
            const std::size_t epoch = pos / per_epoch;
            if (epoch != cached_epoch) {
                order.resize(data_->size());
                std::iota(order.begin(), order.end(), 0);
                Rng rng(derive_seed(config_.seed, {0x0de7u, epoch}));
                std::shuffle(order.begin(), order.end(), rng);
                cached_epoch = epoch;
            }
            const std::size_t id = order[pos % per_epoch];
            const auto seed = config_.resample_corruption ? derive_seed(config_.seed, {epoch, id})
                                                          : derive_seed(config_.seed, {0xf17edu, id});
            const auto plan = corruption::make_plan(cfg.grid_h, cfg.grid_w, corruption, seed);
            const auto& ex = (*data_)[id];
            out[j].push_back(corruption::corrupt(ex.grid, ex.tokens, data_->codebook(), plan));
        }
    }
    return out;
}

MetricRow Trainer::train_step() {
    const std::size_t step = step_ + 1;
    const auto batches = batches_for(step);
    model_.zero_grad();
    StepMetrics metrics;
    try {
        metrics = accumulate_gradients<float>(model_, batches);
    } catch (const NumericError& e) {
        throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(metrics.loss))
        throw NumericError("training diverged at step " + std::to_string(step) + ": loss is not finite");

    AdamWHyper hyper;
    hyper.lr = lr_at(step, schedule_);
    hyper.beta1 = config_.beta1;
    hyper.beta2 = config_.beta2;
    hyper.weight_decay = config_.weight_decay;
    hyper.eps = config_.eps;
    adamw_step<float>(model_.parameters(), moments_, hyper);
    step_ = step;

    MetricRow row{step, hyper.lr, metrics.loss_ce, metrics.loss_mse, metrics.token_top1()};
    metrics_.push_back(row);
    return row;
}

void Trainer::run(double max_seconds, const std::function<bool(const MetricRow&)>& stop, std::ostream* log) {
    const auto t0 = std::chrono::steady_clock::now();
    double ce = 0.0, mse = 0.0, top1 = 0.0;
    std::size_t seen = 0;
    while (!finished()) {
        const auto row = train_step();
        ce += row.loss_ce;
        mse += row.loss_mse;
        top1 += row.token_top1;
        ++seen;
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log && (row.step % steps_per_epoch_ == 0 || finished())) {
            char line[200];
            std::snprintf(line, sizeof line, "epoch %zu step %zu/%zu lr %.3g ce %.4f mse %.5f masked top1 %.4f (%.0fs)\n",
                          (row.step + steps_per_epoch_ - 1) / steps_per_epoch_, row.step, total_steps(), row.lr,
                          ce / static_cast<double>(seen), mse / static_cast<double>(seen),
                          top1 / static_cast<double>(seen), elapsed);
            *log << line << std::flush;
            ce = mse = top1 = 0.0;
            seen = 0;
        }
        if (stop && stop(row)) break;
        if (max_seconds > 0.0 && elapsed >= max_seconds) break;
    }
}

EvalResult Trainer::evaluate(const Dataset& data, std::uint64_t seed, std::size_t batch_size) {
    return evaluate_model(model_, data, config_.corruption(), seed, batch_size);
}

std::uint64_t Trainer::fingerprint() const {
    std::ostringstream os;
    const auto& c = config_;
    os.precision(17);
    os << c.epochs << ',' << c.batch_size << ',' << c.accumulation << ',' << c.max_steps << ',' << c.peak_lr << ','
       << c.min_lr << ',' << c.warmup_epochs << ',' << c.beta1 << ',' << c.beta2 << ',' << c.weight_decay << ','
       << c.eps << ',' << c.seed << ',' << c.mask_count << ',' << c.replace_count << ',' << c.replacement << ','
       << c.resample_corruption << ',' << c.blocks.min_block << ',' << c.blocks.max_block << ','
       << c.blocks.min_aspect << ',' << c.blocks.max_attempts << '|';
    const auto& m = model_.config();
    os << m.patch_size << ',' << m.channels << ',' << m.embed_dim << ',' << m.depth << ',' << m.tap_layer << ','
       << m.pixel_depth << ',' << m.heads << ',' << m.mlp_ratio << ',' << m.vocab << ',' << m.grid_h << ','
       << m.grid_w << ',' << m.pixel_target << ',' << m.normalize_pixels << '|' << data_->size();
    return fnv1a(os.str());
}

namespace {

constexpr char kStateMagic[4] = {'C', 'C', 'V', 'S'};
constexpr std::uint32_t kStateVersion = 1;

} // namespace

void Trainer::save_state(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    BinaryWriter w(out);
    w.bytes({kStateMagic, 4});
    w.u32(kStateVersion);
    w.u64(fingerprint());
    w.u64(step_);
    w.u64(moments_.step);
    const auto& params = model_.parameters();
    const bool has_moments = moments_.m.size() == params.size();
    w.u32(static_cast<std::uint32_t>(params.size()));
    w.u8(has_moments ? 1 : 0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        w.str(params[i].name);
        w.u64(params[i].value.size());
        w.f32s(params[i].value.data());
        if (has_moments) {
            w.f32s(moments_.m[i].data());
            w.f32s(moments_.v[i].data());
        }
    }
    w.u64(metrics_.size());
    for (const auto& r : metrics_) {
        w.u64(r.step);
        w.f64(r.lr);
        w.f64(r.loss_ce);
        w.f64(r.loss_mse);
        w.f64(r.token_top1);
    }
    if (!w.good()) throw Error("write failed: " + path.string());
}

void Trainer::load_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open training state " + path.string());
    BinaryReader r(in);
    if (r.bytes(4, "state magic") != std::string(kStateMagic, 4))
        throw FormatError(path.string() + " is not a training state file (bad magic)");
    const auto version = r.u32("state version");
    if (version != kStateVersion)
        throw FormatError("unsupported training state version " + std::to_string(version) + " in " + path.string());
    if (r.u64("state fingerprint") != fingerprint())
        throw FormatError(path.string() + " was written under a different training or model configuration");
    const std::size_t step = r.u64("state step");
    AdamMoments<float> moments;
    moments.step = r.u64("optimizer step");
    auto& params = model_.parameters();
    if (r.u32("parameter count") != params.size()) throw FormatError(path.string() + ": parameter count mismatch");
    const bool has_moments = r.u8("moment flag") != 0;
    std::vector<Tensor<float>> values;
    for (const auto& p : params) {
        if (r.str("parameter name") != p.name) throw FormatError(path.string() + ": parameter order mismatch");
        if (r.u64("parameter size") != p.value.size()) throw FormatError(path.string() + ": parameter size mismatch");
        values.emplace_back(p.value.shape(), r.f32s(p.value.size(), "parameter data"));
        if (has_moments) {
            moments.m.emplace_back(p.value.shape(), r.f32s(p.value.size(), "first moment"));
            moments.v.emplace_back(p.value.shape(), r.f32s(p.value.size(), "second moment"));
        }
    }
    const std::size_t rows = r.u64("metric count");
    if (rows > step) throw FormatError(path.string() + ": more metric rows than steps");
    std::vector<MetricRow> metrics(rows);
    for (auto& row : metrics) {
        row.step = r.u64("metric row");
        row.lr = r.f64("metric row");
        row.loss_ce = r.f64("metric row");
        row.loss_mse = r.f64("metric row");
        row.token_top1 = r.f64("metric row");
    }
    if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after training state");

    for (std::size_t i = 0; i < params.size(); ++i) params[i].value = std::move(values[i]);
    moments_ = std::move(moments);
    step_ = step;
    metrics_ = std::move(metrics);
}

void Trainer::load_weights(const std::filesystem::path& checkpoint) {
    auto loaded = model::load_checkpoint(checkpoint);
    auto a = loaded.config(), b = model_.config();
    a.pixel_target = b.pixel_target;
    if (!(a == b)) throw InvalidArgument(checkpoint.string() + " holds a model with a different architecture");
    auto& dst = model_.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].value = loaded.parameters()[i].value;
    moments_ = {};
    step_ = 0;
    metrics_.clear();
}

} // namespace ccvit::trainer
