#include "dlt/config.hpp"

#include "dlt/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dlt {

namespace {

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    const std::size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
}

} // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_string(ss.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text,
                                    const std::string& origin) {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": empty section name");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (!cfg.values_.emplace(full, value).second)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": duplicate key " + full);
    }
    return cfg;
}

const std::string* ConfigFile::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
}

bool ConfigFile::has(const std::string& key) const {
    return values_.count(key) != 0;
}

std::string ConfigFile::get_string(const std::string& key) {
    const std::string* v = find(key);
    if (!v) throw ConfigError(origin_ + ": missing required key " + key);
    return *v;
}

std::string ConfigFile::get_string(const std::string& key,
                                   const std::string& fallback) {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

double ConfigFile::get_double(const std::string& key) {
    const std::string raw = get_string(key);
    char* end = nullptr;
    const double value = std::strtod(raw.c_str(), &end);
    if (end == raw.c_str() || *end != '\0')
        throw ConfigError(origin_ + ": key " + key + " is not a number: " + raw);
    return value;
}

double ConfigFile::get_double(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
}

long long ConfigFile::get_int(const std::string& key) {
    const std::string raw = get_string(key);
    char* end = nullptr;
    const long long value = std::strtoll(raw.c_str(), &end, 10);
    if (end == raw.c_str() || *end != '\0')
        throw ConfigError(origin_ + ": key " + key +
                          " is not an integer: " + raw);
    return value;
}

long long ConfigFile::get_int(const std::string& key, long long fallback) {
    return has(key) ? get_int(key) : fallback;
}

std::size_t ConfigFile::get_size(const std::string& key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const long long v = get_int(key);
    if (v < 0)
        throw ConfigError(origin_ + ": key " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string raw = get_string(key);
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    throw ConfigError(origin_ + ": key " + key + " is not a boolean: " + raw);
}

std::vector<long long> ConfigFile::get_int_list(
    const std::string& key, const std::vector<long long>& fallback) {
    if (!has(key)) return fallback;
    const std::string raw = get_string(key);
    std::vector<long long> out;
    std::stringstream ss(raw);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell = trim(cell);
        if (cell.empty())
            throw ConfigError(origin_ + ": key " + key + " has an empty element");
        char* end = nullptr;
        const long long v = std::strtoll(cell.c_str(), &end, 10);
        if (end == cell.c_str() || *end != '\0')
            throw ConfigError(origin_ + ": key " + key +
                              " has a non-integer element: " + cell);
        out.push_back(v);
    }
    return out;
}

void ConfigFile::require_all_consumed() const {
    std::string unknown;
    for (const auto& [key, value] : values_)
        if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty())
        throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

} // namespace dlt
