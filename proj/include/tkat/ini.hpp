#pragma once

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tkat {

// Minimal INI reader: [section] headers, key = value lines, # or ;
// comments, comma-separated lists.
class IniFile {
public:
    static IniFile parse_text(const std::string& text) {
        IniFile ini;
        std::istringstream in(text);
        std::string line, section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string s = strip(line);
            if (s.empty() || s[0] == '#' || s[0] == ';') continue;
            if (s.front() == '[' && s.back() == ']') {
                section = strip(s.substr(1, s.size() - 2));
                ini.sections_[section];  // keep empty sections visible
                continue;
            }
            const size_t eq = s.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument("ini: line " + std::to_string(line_no) +
                                            " is not 'key = value'");
            }
            ini.sections_[section][strip(s.substr(0, eq))] = strip(s.substr(eq + 1));
        }
        return ini;
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const {
        auto s = sections_.find(section);
        if (s == sections_.end()) return fallback;
        auto k = s->second.find(key);
        return k == s->second.end() ? fallback : k->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        if (!has(section, key)) return fallback;
        return std::stod(get(section, key, ""));
    }

    int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const {
        if (!has(section, key)) return fallback;
        return std::stoll(get(section, key, ""));
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const std::string v = get(section, key, "");
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::invalid_argument("ini: bad boolean '" + v + "' for " + section + "." + key);
    }

    std::vector<std::string> get_list(const std::string& section, const std::string& key) const {
        std::vector<std::string> out;
        std::string raw = get(section, key, "");
        std::istringstream in(raw);
        std::string item;
        while (std::getline(in, item, ',')) {
            item = strip(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

private:
    static std::string strip(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace tkat
