#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ccvit::cli {

// FNV-1a 64 over the file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

// One command invocation recorded in <dir>/manifest.txt. Entries are appended
// so a run directory accumulates its history.
struct ManifestEntry {
    std::string command;
    std::vector<std::pair<std::string, std::string>> settings;
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> artifacts;

    void set(std::string key, std::string value) { settings.emplace_back(std::move(key), std::move(value)); }
};

void append_manifest(const std::filesystem::path& dir, const ManifestEntry& entry);

} // namespace ccvit::cli
