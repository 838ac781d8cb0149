#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mtdrive {

// Flat "key = value" config, one pair per line, '#' comments. Keys mirror the
// config struct field names.
class KvConfig {
public:
    static KvConfig parse_text(const std::string& text);
    static KvConfig parse_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& key) const;  // comma separated
    std::vector<std::string> get_str_list(const std::string& key) const;

    // Sorted "key = value" lines; the manifest snapshot.
    std::string canonical_text() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace mtdrive
