#include "manifest.hpp"

#include <cstdio>
#include <fstream>

#include "ccvit/common/error.hpp"
#include "ccvit/common/random.hpp"

namespace ccvit::cli {

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot hash " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

void append_manifest(const std::filesystem::path& dir, const ManifestEntry& entry) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.txt", std::ios::app);
    if (!out) throw Error("cannot write manifest in " + dir.string());
    out << "[" << entry.command << "]\n";
    for (const auto& [k, v] : entry.settings) out << k << " = " << v << '\n';
    for (const auto& p : entry.inputs) {
        out << "input " << p.string();
        if (std::filesystem::is_regular_file(p)) out << " fnv1a:" << file_hash(p);
        out << '\n';
    }
    for (const auto& p : entry.artifacts) out << "artifact " << p.string() << " fnv1a:" << file_hash(p) << '\n';
    out << '\n';
}

} // namespace ccvit::cli
