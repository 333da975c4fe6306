#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ccvit/common/error.hpp"

namespace ccvit::cli {
namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename Int>
Int parse_int(const std::string& v) {
    Int out{};
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || v.empty() || v.front() == '-')
        throw InvalidArgument("expected a non-negative integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw InvalidArgument("expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InvalidArgument("expected a boolean, got '" + v + "'");
}

std::string show(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

Field field(std::size_t& x) {
    return {[&x](const std::string& v) { x = parse_int<std::size_t>(v); }, [&x] { return std::to_string(x); }};
}
Field field(std::uint64_t& x, int) {
    return {[&x](const std::string& v) { x = parse_int<std::uint64_t>(v); }, [&x] { return std::to_string(x); }};
}
Field field(double& x) {
    return {[&x](const std::string& v) { x = parse_double(v); }, [&x] { return show(x); }};
}
Field field(bool& x) {
    return {[&x](const std::string& v) { x = parse_bool(v); }, [&x] { return std::string(x ? "true" : "false"); }};
}
Field field(std::filesystem::path& x) {
    return {[&x](const std::string& v) { x = v; }, [&x] { return x.string(); }};
}

// Ordered (section, key) -> accessor table bound to one config instance.
std::vector<std::pair<std::string, std::map<std::string, Field>>> fields(RunConfig& c) {
    return {
        {"", {{"seed", field(c.seed, 0)}}},
        {"paths",
         {{"data", field(c.paths.data)}, {"codebook", field(c.paths.codebook)}, {"run_dir", field(c.paths.run_dir)}}},
        {"tokenizer",
         {{"k", field(c.tokenizer.k)},
          {"iterations", field(c.tokenizer.iterations)},
          {"images_per_class", field(c.tokenizer.images_per_class)},
          {"total_images", field(c.tokenizer.total_images)},
          {"resolution", field(c.tokenizer.resolution)},
          {"patch_size", field(c.tokenizer.patch_size)},
          {"kmeans_plus_plus", field(c.tokenizer.kmeans_plus_plus)}}},
        {"corruption",
         {{"mask_count", field(c.corruption.mask_count)},
          {"replace_count", field(c.corruption.replace_count)},
          {"replacement", field(c.corruption.replacement)},
          {"min_block", field(c.corruption.min_block)},
          {"max_block", field(c.corruption.max_block)},
          {"min_aspect", field(c.corruption.min_aspect)}}},
        {"model",
         {{"embed_dim", field(c.model.embed_dim)},
          {"depth", field(c.model.depth)},
          {"tap_layer", field(c.model.tap_layer)},
          {"pixel_depth", field(c.model.pixel_depth)},
          {"heads", field(c.model.heads)},
          {"mlp_ratio", field(c.model.mlp_ratio)},
          {"pixel_target", field(c.model.pixel_target)},
          {"normalize_pixels", field(c.model.normalize_pixels)},
          {"init_seed", field(c.model.init_seed, 0)}}},
        {"trainer",
         {{"epochs", field(c.trainer.epochs)},
          {"batch_size", field(c.trainer.batch_size)},
          {"accumulation", field(c.trainer.accumulation)},
          {"max_steps", field(c.trainer.max_steps)},
          {"lr", field(c.trainer.lr)},
          {"min_lr", field(c.trainer.min_lr)},
          {"warmup_epochs", field(c.trainer.warmup_epochs)},
          {"beta1", field(c.trainer.beta1)},
          {"beta2", field(c.trainer.beta2)},
          {"weight_decay", field(c.trainer.weight_decay)},
          {"eps", field(c.trainer.eps)},
          {"validation_images", field(c.trainer.validation_images)},
          {"checkpoint_every", field(c.trainer.checkpoint_every)},
          {"time_budget", field(c.trainer.time_budget)}}},
        {"bench",
         {{"images", field(c.bench.images)},
          {"latency_batch", field(c.bench.latency_batch)},
          {"repetitions", field(c.bench.repetitions)},
          {"warmup", field(c.bench.warmup)}}},
    };
}

} // namespace

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    auto table = fields(*this);
    for (auto& [name, entries] : table) {
        if (name != section) continue;
        auto it = entries.find(key);
        if (it == entries.end())
            throw InvalidArgument("unknown key '" + key + "' in section [" + (section.empty() ? "global" : section) +
                                  "]");
        try {
            it->second.set(value);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument((section.empty() ? key : section + "." + key) + ": " + e.what());
        }
        return;
    }
    throw InvalidArgument("unknown section [" + section + "]");
}

void RunConfig::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw InvalidArgument("override '" + assignment + "' lacks '='");
    const auto lhs = trim(assignment.substr(0, eq));
    const auto value = trim(assignment.substr(eq + 1));
    const auto dot = lhs.find('.');
    if (dot == std::string::npos)
        set("", lhs, value);
    else
        set(lhs.substr(0, dot), lhs.substr(dot + 1), value);
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
    RunConfig c;
    std::istringstream in(text);
    std::string line, section;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto where = origin + ":" + std::to_string(number) + ": ";
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw InvalidArgument("unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                bool known = false;
                for (const auto& [name, entries] : fields(c)) known = known || name == section;
                if (!known || section.empty()) throw InvalidArgument("unknown section [" + section + "]");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw InvalidArgument("expected 'key = value'");
            c.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const InvalidArgument& e) {
            throw InvalidArgument(where + e.what());
        }
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

namespace {

void need(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("config: " + what);
}

} // namespace

void RunConfig::validate_tokenizer() const {
    need(tokenizer.k > 1, "tokenizer.k must exceed 1");
    need(tokenizer.iterations > 0, "tokenizer.iterations must be positive");
    need(tokenizer.patch_size > 0 && tokenizer.resolution % tokenizer.patch_size == 0,
         "tokenizer.resolution must be a positive multiple of tokenizer.patch_size");
    need(tokenizer.resolution > 0, "tokenizer.resolution must be positive");
}

void RunConfig::validate() const {
    validate_tokenizer();
    const std::size_t n = grid() * grid();
    need(corruption.mask_count < n, "corruption.mask_count must be below the patch count " + std::to_string(n));
    need(corruption.mask_count + corruption.replace_count <= n, "corruption counts exceed the patch count");
    need(corruption.min_block > 0, "corruption.min_block must be positive");
    need(corruption.min_aspect > 0.0 && corruption.min_aspect <= 1.0, "corruption.min_aspect must lie in (0, 1]");
    need(bench.images > 0 && bench.latency_batch > 0 && bench.repetitions > 0, "bench sizes must be positive");
    need(trainer.time_budget >= 0.0, "trainer.time_budget must be non-negative");
    model_config(tokenizer.k).validate();
    train_config().validate();
}

std::string RunConfig::to_text() const {
    auto copy = *this;
    std::ostringstream os;
    for (auto& [name, entries] : fields(copy)) {
        if (!name.empty()) os << "\n[" << name << "]\n";
        for (auto& [key, f] : entries) os << key << " = " << f.get() << '\n';
    }
    return os.str();
}

model::ModelConfig RunConfig::model_config(std::size_t vocab) const {
    model::ModelConfig m;
    m.patch_size = tokenizer.patch_size;
    m.channels = 3;
    m.embed_dim = model.embed_dim;
    m.depth = model.depth;
    m.tap_layer = model.tap_layer;
    m.pixel_depth = model.pixel_depth;
    m.heads = model.heads;
    m.mlp_ratio = model.mlp_ratio;
    m.vocab = vocab;
    m.grid_h = m.grid_w = grid();
    m.pixel_target = model.pixel_target;
    m.normalize_pixels = model.normalize_pixels;
    return m;
}

trainer::TrainConfig RunConfig::train_config() const {
    trainer::TrainConfig t;
    t.epochs = trainer.epochs;
    t.batch_size = trainer.batch_size;
    t.accumulation = trainer.accumulation;
    t.max_steps = trainer.max_steps;
    t.peak_lr = trainer.lr;
    t.min_lr = trainer.min_lr;
    t.warmup_epochs = trainer.warmup_epochs;
    t.beta1 = trainer.beta1;
    t.beta2 = trainer.beta2;
    t.weight_decay = trainer.weight_decay;
    t.eps = trainer.eps;
    t.seed = seed;
    t.mask_count = corruption.mask_count;
    t.replace_count = corruption.replace_count;
    t.replacement = corruption.replacement;
    t.blocks.min_block = corruption.min_block;
    t.blocks.max_block = corruption.max_block;
    t.blocks.min_aspect = corruption.min_aspect;
    return t;
}

tokenizer::KMeansOptions RunConfig::kmeans_options() const {
    tokenizer::KMeansOptions k;
    k.clusters = tokenizer.k;
    k.iterations = tokenizer.iterations;
    k.seed = seed;
    k.patch_size = tokenizer.patch_size;
    k.init = tokenizer.kmeans_plus_plus ? tokenizer::KMeansInit::kmeans_plus_plus : tokenizer::KMeansInit::random_sample;
    return k;
}

tokenizer::SampleOptions RunConfig::sample_options() const {
    tokenizer::SampleOptions s;
    s.resolution = tokenizer.resolution;
    s.patch_size = tokenizer.patch_size;
    s.images_per_class = tokenizer.images_per_class;
    s.total_images = tokenizer.total_images;
    s.seed = seed;
    return s;
}

} // namespace ccvit::cli
