#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace dlt {

// INI-style "key = value" file with [section] headers. Every key must be
// consumed by a typed getter; leftovers are reported as errors so typos in
// config files never pass silently.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text,
                                   const std::string& origin = "<string>");

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key);
    std::string get_string(const std::string& key, const std::string& fallback);
    double get_double(const std::string& key);
    double get_double(const std::string& key, double fallback);
    long long get_int(const std::string& key);
    long long get_int(const std::string& key, long long fallback);
    std::size_t get_size(const std::string& key, std::size_t fallback);
    bool get_bool(const std::string& key, bool fallback);
    // Comma-separated integer list, e.g. "hidden = 64,64".
    std::vector<long long> get_int_list(const std::string& key,
                                        const std::vector<long long>& fallback);

    // Throws listing every key that no getter asked for.
    void require_all_consumed() const;

private:
    std::string origin_;
    std::map<std::string, std::string> values_;  // "section.key" -> raw value
    mutable std::set<std::string> consumed_;

    const std::string* find(const std::string& key) const;
};

} // namespace dlt
