#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace satbh {

// Minimal TOML-subset reader for scenario files: [section] headers,
// `key = value` lines, scalar numbers/strings/booleans and flat arrays.
// Values keep their source text; typed access converts on demand.
class Config {
public:
    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str());
    }

    static Config from_string(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = strip_comment(line);
            s = trim(s);
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw std::runtime_error("config: bad section at line " + std::to_string(lineno));
                section = trim(s.substr(1, s.size() - 2));
                continue;
            }
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config: expected key=value at line " + std::to_string(lineno));
            std::string key = trim(s.substr(0, eq));
            std::string val = trim(s.substr(eq + 1));
            if (key.empty() || val.empty())
                throw std::runtime_error("config: empty key or value at line " + std::to_string(lineno));
            cfg.values_[section.empty() ? key : section + "." + key] = val;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_str(const std::string& key) const { return unquote(raw(key)); }
    std::string get_str(const std::string& key, const std::string& dflt) const {
        return has(key) ? get_str(key) : dflt;
    }

    double get_double(const std::string& key) const { return to_double(raw(key), key); }
    double get_double(const std::string& key, double dflt) const {
        return has(key) ? get_double(key) : dflt;
    }

    long get_int(const std::string& key) const {
        double v = get_double(key);
        long i = static_cast<long>(v);
        if (static_cast<double>(i) != v)
            throw std::runtime_error("config: " + key + " is not an integer");
        return i;
    }
    long get_int(const std::string& key, long dflt) const {
        return has(key) ? get_int(key) : dflt;
    }

    bool get_bool(const std::string& key, bool dflt) const {
        if (!has(key)) return dflt;
        std::string v = raw(key);
        if (v == "true") return true;
        if (v == "false") return false;
        throw std::runtime_error("config: " + key + " is not a boolean");
    }

    std::vector<double> get_vec(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split_array(raw(key), key)) out.push_back(to_double(item, key));
        return out;
    }
    std::vector<std::string> get_str_vec(const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& item : split_array(raw(key), key)) out.push_back(unquote(item));
        return out;
    }

private:
    std::map<std::string, std::string> values_;

    const std::string& raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: missing key " + key);
        return it->second;
    }

    static std::string strip_comment(const std::string& s) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) return s.substr(0, i);
        }
        return s;
    }

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static std::string unquote(const std::string& s) {
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
            return s.substr(1, s.size() - 2);
        return s;
    }

    static double to_double(const std::string& s, const std::string& key) {
        try {
            std::size_t pos = 0;
            double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config: " + key + " is not a number: " + s);
        }
    }

    static std::vector<std::string> split_array(const std::string& s, const std::string& key) {
        if (s.size() < 2 || s.front() != '[' || s.back() != ']')
            throw std::runtime_error("config: " + key + " is not an array: " + s);
        std::vector<std::string> out;
        std::string body = s.substr(1, s.size() - 2);
        std::string item;
        std::istringstream in(body);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace satbh
