#include "ccvit/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>

#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"

namespace ccvit::bench {

using imaging::NoiseKind;

std::vector<tokenizer::TokenGrid> TokenizerPort::tokenize_batch(std::span<const imaging::PatchGrid> grids) const {
    std::vector<tokenizer::TokenGrid> out;
    out.reserve(grids.size());
    for (const auto& g : grids) out.push_back(tokenize(g));
    return out;
}

CentroidTokenizer::CentroidTokenizer(tokenizer::Codebook codebook, std::string name)
    : codebook_(std::move(codebook)), name_(std::move(name)) {}

tokenizer::TokenGrid CentroidTokenizer::tokenize(const imaging::PatchGrid& grid) const {
    return tokenizer::tokenize(grid, codebook_);
}

std::vector<tokenizer::TokenGrid> CentroidTokenizer::tokenize_batch(std::span<const imaging::PatchGrid> grids) const {
    std::vector<float> all;
    for (const auto& g : grids) {
        if (g.dim() != codebook_.dim()) throw ShapeError("patch dimension does not match codebook");
        all.insert(all.end(), g.data.begin(), g.data.end());
    }
    auto asg = tokenizer::assign_nearest(all, codebook_);
    std::vector<tokenizer::TokenGrid> out;
    out.reserve(grids.size());
    std::size_t offset = 0;
    for (const auto& g : grids) {
        tokenizer::TokenGrid t{g.grid_h, g.grid_w, {}};
        t.tokens.assign(asg.tokens.begin() + static_cast<std::ptrdiff_t>(offset),
                        asg.tokens.begin() + static_cast<std::ptrdiff_t>(offset + g.count()));
        offset += g.count();
        out.push_back(std::move(t));
    }
    return out;
}

GlobalReferenceTokenizer::GlobalReferenceTokenizer(tokenizer::Codebook codebook) : codebook_(std::move(codebook)) {}

tokenizer::TokenGrid GlobalReferenceTokenizer::tokenize(const imaging::PatchGrid& grid) const {
    auto t = tokenizer::tokenize(grid, codebook_);
    std::string bytes(grid.data.size(), '\0');
    for (std::size_t i = 0; i < grid.data.size(); ++i)
        bytes[i] = static_cast<char>(std::lround(std::clamp(grid.data[i], 0.0f, 1.0f) * 255.0f));
    const std::uint64_t shift = fnv1a(bytes) % codebook_.size();
    for (auto& tok : t.tokens) tok = static_cast<tokenizer::TokenId>((tok + shift) % codebook_.size());
    return t;
}

std::unique_ptr<TokenizerPort> reference_tokenizer_global(const tokenizer::Codebook& codebook) {
    return std::make_unique<GlobalReferenceTokenizer>(codebook);
}

double unchanged_ratio(const TokenizerPort& tok, std::span<const imaging::Image> images,
                       const imaging::NoiseSpec& spec, std::vector<double>* per_image) {
    if (images.empty()) throw InvalidArgument("unchanged_ratio needs at least one image");
    if (per_image) per_image->clear();
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto s = spec;
        s.patch_size = tok.patch_size();
        s.seed = derive_seed(spec.seed, {i});
        const auto before = tok.tokenize(imaging::patchify(images[i], tok.patch_size()));
        const auto after = tok.tokenize(imaging::patchify(imaging::apply_noise(images[i], s), tok.patch_size()));
        std::size_t same = 0;
        for (std::size_t k = 0; k < before.tokens.size(); ++k) same += before.tokens[k] == after.tokens[k];
        const double pct = 100.0 * static_cast<double>(same) / static_cast<double>(before.tokens.size());
        if (per_image) per_image->push_back(pct);
        total += pct;
    }
    return total / static_cast<double>(images.size());
}

std::vector<NoiseSetting> standard_noise_grid() {
    return {{NoiseKind::mask, 0.1},           {NoiseKind::mask, 0.2},           {NoiseKind::mask, 0.5},
            {NoiseKind::gaussian_noise, 1.0}, {NoiseKind::gaussian_noise, 10.0}, {NoiseKind::gaussian_noise, 25.0},
            {NoiseKind::gaussian_blur, 0.5},  {NoiseKind::gaussian_blur, 1.0},  {NoiseKind::gaussian_blur, 2.0}};
}

std::vector<RobustnessRow> robustness_report(const TokenizerPort& tok, std::span<const imaging::Image> images,
                                             std::span<const NoiseSetting> grid, std::uint64_t seed) {
    std::vector<RobustnessRow> rows;
    for (const auto& g : grid) {
        imaging::NoiseSpec spec;
        spec.kind = g.kind;
        spec.parameter = g.parameter;
        spec.seed = derive_seed(seed, imaging::to_string(g.kind));
        rows.push_back({tok.name(), g.kind, g.parameter, unchanged_ratio(tok, images, spec), images.size(), seed});
    }
    return rows;
}

std::vector<RobustnessRow> published_baselines() {
    const auto grid = standard_noise_grid();
    const double beit[] = {34.34, 14.17, 1.41, 88.02, 32.54, 9.31, 61.18, 25.32, 6.93};
    const double beit2[] = {59.61, 33.56, 3.97, 95.03, 57.43, 24.02, 83.52, 61.29, 0.08};
    const double centroid[] = {90.01, 80.02, 50.05, 98.94, 88.61, 72.28, 96.38, 86.39, 66.72};
    std::vector<RobustnessRow> rows;
    auto add = [&](const char* name, const double* values) {
        for (std::size_t i = 0; i < grid.size(); ++i)
            rows.push_back({name, grid[i].kind, grid[i].parameter, values[i], 0, 0});
    };
    add("BEiT (published)", beit);
    add("BEiTv2 (published)", beit2);
    add("centroid ViT-B/16 (published)", centroid);
    return rows;
}

void write_robustness_csv(std::ostream& out, std::span<const RobustnessRow> rows) {
    out << "tokenizer,noise,parameter,unchanged_ratio,images,seed\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%s,%s,%g,%.4f,%zu,%llu\n", r.tokenizer.c_str(),
                      imaging::to_string(r.kind).c_str(), r.parameter, r.unchanged, r.images,
                      static_cast<unsigned long long>(r.seed));
        out << line;
    }
}

void write_robustness_table(std::ostream& out, std::span<const RobustnessRow> rows) {
    std::vector<std::pair<NoiseKind, double>> columns;
    std::vector<std::string> names;
    std::map<std::pair<std::string, std::pair<NoiseKind, double>>, double> cell;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.kind, r.parameter);
        if (std::find(columns.begin(), columns.end(), key) == columns.end()) columns.push_back(key);
        if (std::find(names.begin(), names.end(), r.tokenizer) == names.end()) names.push_back(r.tokenizer);
        cell[{r.tokenizer, key}] = r.unchanged;
    }
    std::size_t width = 6;
    for (const auto& n : names) width = std::max(width, n.size());
    char buf[64];
    std::string head1(width, ' '), head2 = std::string("Method") + std::string(width - 6, ' ');
    NoiseKind last = columns.empty() ? NoiseKind::mask : columns.front().first;
    bool first = true;
    for (const auto& [kind, param] : columns) {
        const bool new_group = first || kind != last;
        std::snprintf(buf, sizeof buf, " | %-8s", new_group ? imaging::to_string(kind).substr(0, 8).c_str() : "");
        head1 += buf;
        std::snprintf(buf, sizeof buf, " | %8g", param);
        head2 += buf;
        last = kind;
        first = false;
    }
    out << head1 << '\n' << head2 << '\n' << std::string(head2.size(), '-') << '\n';
    for (const auto& n : names) {
        std::string line = n + std::string(width - n.size(), ' ');
        for (const auto& c : columns) {
            auto it = cell.find({n, c});
            if (it == cell.end())
                std::snprintf(buf, sizeof buf, " | %8s", "-");
            else
                std::snprintf(buf, sizeof buf, " | %8.2f", it->second);
            line += buf;
        }
        out << line << '\n';
    }
}

double peak_rss_mb() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmHWM:", 0) == 0) {
            long kb = 0;
            if (std::sscanf(line.c_str(), "VmHWM: %ld", &kb) == 1) return static_cast<double>(kb) / 1024.0;
        }
    }
    return -1.0;
}

LatencyResult latency_bench(const TokenizerPort& tok, std::span<const imaging::PatchGrid> grids,
                            std::size_t repetitions, std::size_t warmup) {
    if (grids.empty() || repetitions == 0) throw InvalidArgument("latency_bench needs grids and repetitions");
    std::size_t sink = 0;
    for (std::size_t i = 0; i < warmup; ++i) sink += tok.tokenize_batch(grids).size();
    LatencyResult r;
    r.tokenizer = tok.name();
    r.batch = grids.size();
    r.repetitions = repetitions;
    for (std::size_t i = 0; i < repetitions; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        sink += tok.tokenize_batch(grids).size();
        r.samples_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    double sum = 0.0;
    for (double s : r.samples_ms) sum += s;
    r.mean_ms = sum / static_cast<double>(repetitions);
    double var = 0.0;
    for (double s : r.samples_ms) var += (s - r.mean_ms) * (s - r.mean_ms);
    r.std_ms = repetitions > 1 ? std::sqrt(var / static_cast<double>(repetitions - 1)) : 0.0;
    r.peak_rss_mb = peak_rss_mb();
    if (sink == 0) r.peak_rss_mb = -1.0;
    return r;
}

void write_latency_csv(std::ostream& out, std::span<const LatencyResult> rows) {
    out << "tokenizer,batch,repetitions,mean_ms,std_ms,peak_rss_mb\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%s,%zu,%zu,%.4f,%.4f,%.1f\n", r.tokenizer.c_str(), r.batch, r.repetitions,
                      r.mean_ms, r.std_ms, r.peak_rss_mb);
        out << line;
    }
}

void write_latency_table(std::ostream& out, std::span<const LatencyResult> rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%-20s %6s %20s %12s\n", "Tokenizer", "Batch", "Inference", "Peak memory");
    out << line;
    for (const auto& r : rows) {
        char latency[64], memory[32];
        std::snprintf(latency, sizeof latency, "%.2f+-%.2fms", r.mean_ms, r.std_ms);
        if (r.peak_rss_mb >= 0.0)
            std::snprintf(memory, sizeof memory, "%.1f MiB", r.peak_rss_mb);
        else
            std::snprintf(memory, sizeof memory, "n/a");
        std::snprintf(line, sizeof line, "%-20s %6zu %20s %12s\n", r.tokenizer.c_str(), r.batch, latency, memory);
        out << line;
    }
}

} // namespace ccvit::bench
