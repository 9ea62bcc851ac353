#include "sits/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sits/error.hpp"

namespace sits {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text)
{
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': '" + text + "' is not a valid number");
    return value;
}

} // namespace

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

RunConfig::RunConfig(std::vector<ConfigKey> keys) : keys_(std::move(keys))
{
    for (const auto& k : keys_) {
        if (!values_.emplace(k.name, k.default_value).second) throw ConfigError("duplicate key '" + k.name + "'");
    }
}

void RunConfig::load_file(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    load_text(ss.str(), path.string());
}

void RunConfig::load_text(const std::string& text, const std::string& source)
{
    std::stringstream ss(text);
    std::string line;
    int number = 0;
    while (std::getline(ss, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        try {
            set(key, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

void RunConfig::set(const std::string& key, const std::string& value)
{
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
std::int64_t RunConfig::get_int64(const std::string& key) const { return parse_number<std::int64_t>(key, get(key)); }
std::uint64_t RunConfig::get_uint64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

std::vector<double> RunConfig::get_doubles(const std::string& key) const
{
    std::vector<double> out;
    for (const auto& item : split_list(get(key))) out.push_back(parse_number<double>(key, item));
    return out;
}

std::vector<std::string> RunConfig::get_strings(const std::string& key) const { return split_list(get(key)); }

std::string RunConfig::to_text() const
{
    std::string out;
    for (const auto& k : keys_) out += k.name + " = " + values_.at(k.name) + "\n";
    return out;
}

nlohmann::json RunConfig::to_json() const
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& k : keys_) j[k.name] = values_.at(k.name);
    return j;
}

} // namespace sits
