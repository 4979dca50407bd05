#include "meshderiv/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "meshderiv/dataset.hpp"
#include "meshderiv/errors.hpp"

namespace meshderiv {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string RunConfig::canonical(const std::string& key) {
    std::string k = key;
    while (!k.empty() && k.front() == '-') k.erase(k.begin());
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
}

void RunConfig::set(const std::string& key, const std::string& value, const std::string& source) {
    const std::string k = canonical(key);
    if (k.empty()) throw ConfigError("empty config key");
    entries_[k] = {value, source};
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
    std::istringstream is(text);
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(n) + ": missing key");
        set(key, trim(line.substr(eq + 1)), "file");
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    load_text(ss.str(), path.string());
}

void RunConfig::load_env() {
    if (const char* s = std::getenv("MESHDERIV_SEED")) set("seed", s, "env");
}

const ConfigEntry* RunConfig::find(const std::string& key) const {
    const auto it = entries_.find(canonical(key));
    return it == entries_.end() ? nullptr : &it->second;
}

bool RunConfig::has(const std::string& key) const {
    return find(key) != nullptr;
}

std::optional<std::string> RunConfig::get(const std::string& key) const {
    const ConfigEntry* e = find(key);
    if (!e) return std::nullopt;
    return e->value;
}

void RunConfig::note_default(const std::string& key, const std::string& value) const {
    defaults_[canonical(key)] = {value, "default"};
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    if (const ConfigEntry* e = find(key)) return e->value;
    note_default(key, fallback);
    return fallback;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    const ConfigEntry* e = find(key);
    if (!e) {
        note_default(key, std::to_string(fallback));
        return fallback;
    }
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(e->value.c_str(), &end, 10);
    if (errno || end == e->value.c_str() || *end != '\0' || v < INT32_MIN || v > INT32_MAX) {
        throw ConfigError("'" + key + "' expects an integer, got '" + e->value + "'");
    }
    return static_cast<int>(v);
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    const ConfigEntry* e = find(key);
    if (!e) {
        note_default(key, std::to_string(fallback));
        return fallback;
    }
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(e->value.c_str(), &end, 10);
    if (errno || end == e->value.c_str() || *end != '\0' || e->value.front() == '-') {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + e->value + "'");
    }
    return v;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    const ConfigEntry* e = find(key);
    if (!e) {
        std::ostringstream os;
        os.precision(17);
        os << fallback;
        note_default(key, os.str());
        return fallback;
    }
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(e->value.c_str(), &end);
    if (errno || end == e->value.c_str() || *end != '\0') {
        throw ConfigError("'" + key + "' expects a number, got '" + e->value + "'");
    }
    return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    const ConfigEntry* e = find(key);
    if (!e) {
        note_default(key, fallback ? "true" : "false");
        return fallback;
    }
    const std::string& v = e->value;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

std::string manifest_json(const std::string& command, const RunConfig& cfg, const std::vector<std::string>& outputs) {
    nlohmann::ordered_json j;
    j["tool"] = "meshderiv";
    j["version"] = MESHDERIV_VERSION;
    j["command"] = command;
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    std::map<std::string, ConfigEntry> all = cfg.defaults_;
    for (const auto& [k, v] : cfg.entries_) all[k] = v;
    for (const auto& [k, v] : all) c[k] = {{"value", v.value}, {"source", v.source}};
    j["config"] = c;
    std::vector<std::string> out = outputs;
    std::sort(out.begin(), out.end());
    j["outputs"] = out;
    return j.dump(2) + "\n";
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& outputs) {
    write_file_atomic(dir / "run.json", manifest_json(command, cfg, outputs));
}

}  // namespace meshderiv
