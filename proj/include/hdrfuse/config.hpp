#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdrfuse {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Flat "key = value" text, '#' starts a comment. Order preserved.
inline std::vector<std::pair<std::string, std::string>> parse_flat_kv(std::istream& in,
                                                                      const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
        out.emplace_back(key, value);
    }
    return out;
}

inline std::vector<std::pair<std::string, std::string>> read_flat_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    return parse_flat_kv(f, path);
}

// Layered key/value store with flag > environment > file > default
// precedence. Environment overrides use the HDRFUSE_ prefix with the key
// upper-cased ('.' -> '_'). Unknown keys in a config file are rejected.
class ConfigResolver {
public:
    void declare(const std::string& key, const std::string& default_value) {
        defaults_[key] = default_value;
    }

    void load_file(const std::string& path) {
        for (const auto& [k, v] : read_flat_kv_file(path)) {
            if (!defaults_.count(k)) throw std::runtime_error(path + ": unknown config key '" + k + "'");
            file_[k] = v;
        }
    }

    void set_flag(const std::string& key, const std::string& value) {
        if (!defaults_.count(key)) throw std::runtime_error("unknown config key '" + key + "'");
        flags_[key] = value;
    }

    std::string get(const std::string& key) const {
        auto it = flags_.find(key);
        if (it != flags_.end()) return it->second;
        const std::string env_key = env_name(key);
        if (const char* env = std::getenv(env_key.c_str())) return env;
        it = file_.find(key);
        if (it != file_.end()) return it->second;
        it = defaults_.find(key);
        if (it == defaults_.end()) throw std::runtime_error("unknown config key '" + key + "'");
        return it->second;
    }

    long long get_int(const std::string& key) const { return std::stoll(get(key)); }
    double get_double(const std::string& key) const { return std::stod(get(key)); }
    bool get_bool(const std::string& key) const {
        const std::string v = get(key);
        if (v == "1" || v == "true" || v == "on") return true;
        if (v == "0" || v == "false" || v == "off") return false;
        throw std::runtime_error("config key '" + key + "' expects a boolean, got '" + v + "'");
    }

    // Fully resolved view, for echoing at startup.
    std::vector<std::pair<std::string, std::string>> resolved() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [k, unused] : defaults_) {
            (void)unused;
            out.emplace_back(k, get(k));
        }
        return out;
    }

    static std::string env_name(const std::string& key) {
        std::string s = "HDRFUSE_";
        for (char c : key) s.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        return s;
    }

private:
    std::map<std::string, std::string> defaults_;
    std::map<std::string, std::string> file_;
    std::map<std::string, std::string> flags_;
};

} // namespace hdrfuse
