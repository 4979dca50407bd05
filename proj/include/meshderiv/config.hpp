/**
 * @file config.hpp
 * @brief Key-value run configuration with layered sources and the run manifest.
 *
 * Later layers override earlier ones: config file, then environment, then
 * command-line flags. Each entry remembers which layer set it.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace meshderiv {

struct ConfigEntry {
    std::string value;
    std::string source;  // "default", "file", "env" or "flag"
};

class RunConfig {
public:
    void set(const std::string& key, const std::string& value, const std::string& source = "flag");

    /// "key = value" lines; blank lines and '#' comments ignored. Keys may use
    /// '-' or '_' interchangeably. Throws ConfigError on malformed lines.
    void load_file(const std::filesystem::path& path);
    void load_text(const std::string& text, const std::string& origin = "<text>");

    /// MESHDERIV_SEED sets "seed".
    void load_env();

    bool has(const std::string& key) const;
    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    /// Typed getters record the fallback as a "default" entry so the manifest
    /// shows the fully resolved configuration. They throw ConfigError on
    /// unparsable values.
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, ConfigEntry>& entries() const { return entries_; }

private:
    static std::string canonical(const std::string& key);
    const ConfigEntry* find(const std::string& key) const;
    void note_default(const std::string& key, const std::string& value) const;

    std::map<std::string, ConfigEntry> entries_;
    mutable std::map<std::string, ConfigEntry> defaults_;

    friend std::string manifest_json(const std::string&, const RunConfig&, const std::vector<std::string>&);
};

/// JSON text of the run manifest: tool version, command, every resolved key
/// with its source, and the output files (sorted). No timestamps, so the
/// manifest is reproducible.
std::string manifest_json(const std::string& command, const RunConfig& cfg, const std::vector<std::string>& outputs);

/// Writes `<dir>/run.json` atomically.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& outputs);

}  // namespace meshderiv
