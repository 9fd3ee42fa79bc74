// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal TOML subset used by the manifests, checkpoint metadata, and report
// files. Supported grammar:
//
//   [table]
//   key = "string"        key = 3.5        key = 42        key = true
//   dotted.key = value    # comment
//
// Keys are flattened to "table.key" / "a.b" form. Arrays, inline tables,
// multi-line strings, and dates are not supported; the file formats in this
// project never need them.

#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "msae/errors.hpp"

namespace msae::toml {

class Table {
public:
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end())
            throw config_error("manifest error: missing key '" + key + "'");
        return it->second;
    }

    std::string get_string_or(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const {
        const std::string& raw = get_string(key);
        try {
            std::size_t used = 0;
            const double v = std::stod(raw, &used);
            if (used != raw.size()) throw std::invalid_argument(raw);
            return v;
        } catch (const std::exception&) {
            throw config_error("manifest error: key '" + key + "' is not a number: " + raw);
        }
    }

    std::int64_t get_int(const std::string& key) const {
        const std::string& raw = get_string(key);
        try {
            std::size_t used = 0;
            const std::int64_t v = std::stoll(raw, &used);
            if (used != raw.size()) throw std::invalid_argument(raw);
            return v;
        } catch (const std::exception&) {
            throw config_error("manifest error: key '" + key + "' is not an integer: " + raw);
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string& raw = get_string(key);
        if (raw == "true") return true;
        if (raw == "false") return false;
        throw config_error("manifest error: key '" + key + "' is not a boolean: " + raw);
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline std::string unquote(const std::string& raw, int line_no) {
    if (raw.size() < 2 || raw.back() != '"')
        throw config_error("manifest error: unterminated string on line " + std::to_string(line_no));
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        char c = raw[i];
        if (c == '\\' && i + 2 < raw.size()) {
            const char n = raw[++i];
            switch (n) {
                case 'n': c = '\n'; break;
                case 't': c = '\t'; break;
                case '\\': c = '\\'; break;
                case '"': c = '"'; break;
                default:
                    throw config_error("manifest error: bad escape on line " + std::to_string(line_no));
            }
        }
        out.push_back(c);
    }
    return out;
}

} // namespace detail

inline Table parse(const std::string& text) {
    Table table;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(detail::strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error("manifest error: bad table header on line " + std::to_string(line_no));
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw config_error("manifest error: empty table name on line " + std::to_string(line_no));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("manifest error: expected 'key = value' on line " + std::to_string(line_no));
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw config_error("manifest error: empty key or value on line " + std::to_string(line_no));
        if (value.front() == '"') value = detail::unquote(value, line_no);
        if (!section.empty()) key = section + "." + key;
        table.set(key, value);
    }
    return table;
}

/// Deterministic emission, used for checkpoint metadata and reports. Doubles
/// print with %.17g so values round-trip exactly.
class Writer {
public:
    void add(const std::string& key, const std::string& value) {
        out_ += key + " = \"" + escape(value) + "\"\n";
    }
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }
    void add(const std::string& key, double value) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", value);
        out_ += key + " = " + buf + "\n";
    }
    void add(const std::string& key, std::int64_t value) {
        out_ += key + " = " + std::to_string(value) + "\n";
    }
    void add(const std::string& key, std::uint64_t value) {
        out_ += key + " = " + std::to_string(value) + "\n";
    }
    void add(const std::string& key, int value) { add(key, static_cast<std::int64_t>(value)); }
    void add(const std::string& key, bool value) {
        out_ += key + " = " + (value ? "true" : "false") + "\n";
    }
    void section(const std::string& name) { out_ += "[" + name + "]\n"; }

    const std::string& str() const { return out_; }

private:
    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '"' || c == '\\') out.push_back('\\');
            if (c == '\n') { out += "\\n"; continue; }
            out.push_back(c);
        }
        return out;
    }

    std::string out_;
};

} // namespace msae::toml
