#include "sequre/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "sequre/error.hpp"

namespace sequre {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in)
{
    KeyValueConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(Errc::parse_error, "line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) fail(Errc::parse_error, "line " + std::to_string(line_no) + ": empty key");
        cfg.set(key, trim(line.substr(eq + 1)));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) fail(Errc::io_error, "cannot open " + path.string());
    return parse(in);
}

void KeyValueConfig::set(const std::string& key, const std::string& value)
{
    if (!values_.contains(key)) order_.push_back(key);
    values_[key] = value;
}

bool KeyValueConfig::contains(const std::string& key) const { return values_.contains(key); }

std::optional<std::string> KeyValueConfig::find(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    return find(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    const auto v = find(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument(*v);
        return d;
    } catch (const std::exception&) {
        fail(Errc::parse_error, key + ": not a number: " + *v);
    }
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const
{
    const auto v = find(key);
    if (!v) return fallback;
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size())
        fail(Errc::parse_error, key + ": not an integer: " + *v);
    return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const
{
    const auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    fail(Errc::parse_error, key + ": not a boolean: " + *v);
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(const std::string& prefix) const
{
    std::vector<std::string> out;
    for (const auto& k : order_)
        if (k.starts_with(prefix)) out.push_back(k);
    return out;
}

void KeyValueConfig::write(std::ostream& out) const
{
    for (const auto& k : order_) out << k << " = " << values_.at(k) << '\n';
}

}  // namespace sequre
