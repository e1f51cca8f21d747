#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "bsio/errors.hpp"

namespace bsio {

// Flat configuration document: one `key = value` per line, `#` comments,
// dotted lowercase keys.  Values keep their parsed type (bool, integer,
// float, string), and emit() renders them so that parse(emit(doc)) == doc.
class ConfigDoc {
public:
    using Value = std::variant<bool, std::int64_t, double, std::string>;

    ConfigDoc() = default;

    static ConfigDoc parse(const std::string& text) {
        ConfigDoc doc;
        std::size_t line_no = 0;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string stripped = strip(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw validation_error(where(line_no) + "expected `key = value`");
            const std::string key = strip(stripped.substr(0, eq));
            check_key(key, line_no);
            doc.set(key, parse_value(strip(stripped.substr(eq + 1)), line_no), line_no);
        }
        return doc;
    }

    static ConfigDoc load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw validation_error("config: cannot open '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    std::string emit() const {
        std::string out;
        for (const auto& [key, value] : items_) {
            out += key;
            out += " = ";
            out += render(value);
            out += '\n';
        }
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw validation_error("config: cannot write '" + path + "'");
        out << emit();
    }

    bool has(const std::string& key) const { return index_.count(key) > 0; }

    void set(const std::string& key, Value value) {
        const auto it = index_.find(key);
        if (it != index_.end()) {
            items_[it->second].second = std::move(value);
        } else {
            index_.emplace(key, items_.size());
            items_.emplace_back(key, std::move(value));
        }
    }
    void set(const std::string& key, const char* value) { set(key, Value(std::string(value))); }
    void set(const std::string& key, const std::string& value) { set(key, Value(value)); }
    void set(const std::string& key, bool value) { set(key, Value(value)); }
    void set(const std::string& key, int value) { set(key, Value(std::int64_t{value})); }
    void set(const std::string& key, std::int64_t value) { set(key, Value(value)); }
    void set(const std::string& key, double value) { set(key, Value(value)); }

    bool get_bool(const std::string& key) const {
        const Value& v = require(key);
        if (const bool* b = std::get_if<bool>(&v)) return *b;
        throw type_error(key, "a boolean");
    }
    std::int64_t get_int(const std::string& key) const {
        const Value& v = require(key);
        if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
        throw type_error(key, "an integer");
    }
    double get_double(const std::string& key) const {
        const Value& v = require(key);
        if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
        if (const double* x = std::get_if<double>(&v)) return *x;
        throw type_error(key, "a number");
    }
    std::string get_string(const std::string& key) const {
        const Value& v = require(key);
        if (const auto* s = std::get_if<std::string>(&v)) return *s;
        throw type_error(key, "a string");
    }

    bool get_bool(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        return has(key) ? get_int(key) : fallback;
    }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    const std::vector<std::pair<std::string, Value>>& items() const { return items_; }

    friend bool operator==(const ConfigDoc& a, const ConfigDoc& b) { return a.items_ == b.items_; }

private:
    static std::string where(std::size_t line_no) {
        return "config: line " + std::to_string(line_no) + ": ";
    }

    static std::string strip(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static void check_key(const std::string& key, std::size_t line_no) {
        if (key.empty()) throw validation_error(where(line_no) + "empty key");
        for (char c : key) {
            const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
            if (!ok)
                throw validation_error(where(line_no) + "key '" + key +
                                       "' may only use lowercase letters, digits, '_', '.'");
        }
    }

    static Value parse_value(const std::string& raw, std::size_t line_no) {
        if (raw.empty()) throw validation_error(where(line_no) + "missing value");
        if (raw[0] == '"') return parse_quoted(raw, line_no);
        const std::string token = strip_comment(raw);
        if (token == "true") return true;
        if (token == "false") return false;
        const char* first = token.data();
        const char* last = token.data() + token.size();
        std::int64_t i = 0;
        if (auto [p, ec] = std::from_chars(first, last, i); ec == std::errc{} && p == last)
            return i;
        double x = 0;
        if (auto [p, ec] = std::from_chars(first, last, x); ec == std::errc{} && p == last)
            return x;
        if (is_bare_word(token)) return token;
        throw validation_error(where(line_no) + "cannot parse value '" + token + "'");
    }

    static std::string strip_comment(const std::string& raw) {
        const auto hash = raw.find('#');
        return hash == std::string::npos ? raw : strip(raw.substr(0, hash));
    }

    static bool is_bare_word(const std::string& s) {
        if (s.empty()) return false;
        if (!((s[0] >= 'a' && s[0] <= 'z') || (s[0] >= 'A' && s[0] <= 'Z') || s[0] == '_'))
            return false;
        for (char c : s) {
            const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                            (c >= '0' && c <= '9') || c == '_' || c == '-';
            if (!ok) return false;
        }
        return true;
    }

    static Value parse_quoted(const std::string& raw, std::size_t line_no) {
        std::string out;
        std::size_t i = 1;
        for (; i < raw.size(); ++i) {
            const char c = raw[i];
            if (c == '\\') {
                if (i + 1 >= raw.size())
                    throw validation_error(where(line_no) + "dangling escape in string");
                const char e = raw[++i];
                switch (e) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                default:
                    throw validation_error(where(line_no) + "unknown escape in string");
                }
            } else if (c == '"') {
                const std::string rest = strip(raw.substr(i + 1));
                if (!rest.empty() && rest[0] != '#')
                    throw validation_error(where(line_no) + "trailing text after string");
                return out;
            } else {
                out += c;
            }
        }
        throw validation_error(where(line_no) + "unterminated string");
    }

    static std::string render(const Value& v) {
        if (const bool* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
        if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
        if (const double* x = std::get_if<double>(&v)) return render_double(*x);
        std::string out = "\"";
        for (char c : std::get<std::string>(v)) {
            switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
            }
        }
        return out + "\"";
    }

    // Shortest decimal that reparses to the same double; a trailing ".0"
    // keeps whole values typed as floats across a round trip.
    static std::string render_double(double x) {
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof(buf), x);
        std::string s(buf, res.ptr);
        if (s.find_first_of(".eE") == std::string::npos &&
            s.find_first_of("0123456789") != std::string::npos &&
            s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
            s += ".0";
        return s;
    }

    const Value& require(const std::string& key) const {
        const auto it = index_.find(key);
        if (it == index_.end()) throw validation_error("config: missing key '" + key + "'");
        return items_[it->second].second;
    }

    validation_error type_error(const std::string& key, const char* expected) const {
        return validation_error("config: key '" + key + "' is not " + expected);
    }

    void set(const std::string& key, Value value, std::size_t line_no) {
        if (has(key)) throw validation_error(where(line_no) + "duplicate key '" + key + "'");
        set(key, std::move(value));
    }

    std::vector<std::pair<std::string, Value>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace bsio
