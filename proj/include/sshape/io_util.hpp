#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sshape/common.hpp"

namespace sshape {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorClass::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorClass::Io, "cannot write " + path);
    out << content;
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) {
        if (cur.back() == '\r') cur.pop_back();
        lines.push_back(cur);
    }
    return lines;
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

// Round-trip exact decimal formatting for doubles; plain digits for whole
// numbers to keep the CSVs readable.
inline std::string format_double(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    for (int prec = 1; prec <= 16; ++prec) {
        char s[40];
        std::snprintf(s, sizeof(s), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(s, "%lf", &back);
        if (back == v) return s;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        require(pos == s.size(), ErrorClass::Parse, "trailing characters in " + what);
        return v;
    } catch (const Error&) {
        throw;
    } catch (...) {
        fail(ErrorClass::Parse, "cannot parse number '" + s + "' in " + what);
    }
}

inline long parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        require(pos == s.size(), ErrorClass::Parse, "trailing characters in " + what);
        return v;
    } catch (const Error&) {
        throw;
    } catch (...) {
        fail(ErrorClass::Parse, "cannot parse integer '" + s + "' in " + what);
    }
}

// Flat key = value configuration; '#' starts a comment, later keys win.
class KeyValueConfig {
  public:
    KeyValueConfig() = default;

    static KeyValueConfig from_text(const std::string& text) {
        KeyValueConfig cfg;
        for (const auto& raw : split_lines(text)) {
            const auto hash = raw.find('#');
            const std::string line = trim(hash == std::string::npos
                                              ? raw
                                              : raw.substr(0, hash));
            if (line.empty()) continue;
            const auto eq = line.find('=');
            require(eq != std::string::npos, ErrorClass::Config,
                    "expected 'key = value', got: " + line);
            cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::string& path) {
        return from_text(read_file(path));
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_key(const std::string& key) const {
        const auto it = values_.find(key);
        require(it != values_.end(), ErrorClass::Config,
                "missing required config key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        return has(key) ? parse_double(values_.at(key), "config key " + key)
                        : fallback;
    }

    long get_int(const std::string& key, long fallback) const {
        return has(key) ? parse_int(values_.at(key), "config key " + key)
                        : fallback;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = values_.at(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail(ErrorClass::Config, "config key " + key + " is not a boolean: " + v);
    }

    void set(const std::string& key, const std::string& value) {
        values_[key] = value;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& item : split_csv_row(s)) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

// FNV-1a 64-bit content digest, hex encoded.
inline std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string digest_file(const std::string& path) {
    return fnv1a64_hex(read_file(path));
}

}  // namespace sshape
