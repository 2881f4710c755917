#include "mmcof/config.hpp"

#include <fstream>
#include <stdexcept>

namespace mmcof {

Config Config::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("Config: cannot open " + path);
    Config cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("Config: " + path + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("Config: " + path + ":" + std::to_string(line_no) +
                                     ": empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::runtime_error("Config: value of '" + key + "' is not a number: " + it->second);
    }
}

long Config::get(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::runtime_error("Config: value of '" + key + "' is not an integer: " +
                                 it->second);
    }
}

}  // namespace mmcof
