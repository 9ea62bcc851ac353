#pragma once

// Flat `key = value` settings: a fixed table of keys with defaults, then a
// config file, then explicit overrides. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace sits {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

class RunConfig {
public:
    explicit RunConfig(std::vector<ConfigKey> keys);

    /// `#` starts a comment; blank lines are skipped.
    void load_file(const std::filesystem::path& path);
    void load_text(const std::string& text, const std::string& source = "config");
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::int64_t get_int64(const std::string& key) const;
    std::uint64_t get_uint64(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& key) const;

    const std::vector<ConfigKey>& keys() const { return keys_; }
    const std::map<std::string, std::string>& values() const { return values_; }

    /// Same text format, one key per line in declaration order.
    std::string to_text() const;
    nlohmann::json to_json() const;

private:
    std::vector<ConfigKey> keys_;
    std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(const std::string& text);

} // namespace sits
