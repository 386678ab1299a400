#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sequre {

/// Flat `key = value` configuration with `#` comments. Keys keep file order for round-trips.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in);
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool contains(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Keys beginning with `prefix`, in insertion order.
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
    const std::vector<std::string>& keys() const { return order_; }

    void write(std::ostream& out) const;

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

}  // namespace sequre
