#pragma once

// Flat INI-style configuration: `[section]` headers, `key = value` lines,
// `#` or `;` comments. Key order is preserved; the hash is taken over a
// canonical (sorted) rendering so it does not depend on file layout.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "anonymixer/dataio.hpp"
#include "anonymixer/error.hpp"
#include "anonymixer/random.hpp"

namespace anonymixer {

class Config {
public:
    using Entries = std::vector<std::pair<std::string, std::string>>;

    static Config parse(std::istream& in, const std::string& origin = "<config>") {
        Config cfg;
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view s = detail::trim(line);
            if (s.empty() || s.front() == '#' || s.front() == ';') continue;
            if (s.front() == '[') {
                require(s.back() == ']', ErrorKind::parse,
                        origin + ":" + std::to_string(line_no) + ": malformed section header");
                section = std::string(detail::trim(s.substr(1, s.size() - 2)));
                cfg.section(section);
                continue;
            }
            const auto eq = s.find('=');
            require(eq != std::string_view::npos, ErrorKind::parse,
                    origin + ":" + std::to_string(line_no) + ": expected key = value");
            const auto key = std::string(detail::trim(s.substr(0, eq)));
            require(!key.empty(), ErrorKind::parse, origin + ":" + std::to_string(line_no) + ": empty key");
            cfg.set(section, key, std::string(detail::trim(s.substr(eq + 1))));
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        require(in.good(), ErrorKind::usage, "cannot open config file '" + path + "'");
        Config cfg = parse(in, path);
        cfg.base_dir_ = std::filesystem::path(path).parent_path().string();
        return cfg;
    }

    void set(const std::string& section_name, const std::string& key, const std::string& value) {
        auto& entries = section(section_name);
        for (auto& [k, v] : entries)
            if (k == key) {
                v = value;
                return;
            }
        entries.emplace_back(key, value);
    }

    std::optional<std::string> get(const std::string& section_name, const std::string& key) const {
        for (const auto& [name, entries] : sections_)
            if (name == section_name)
                for (const auto& [k, v] : entries)
                    if (k == key) return v;
        return std::nullopt;
    }

    bool has(const std::string& section_name, const std::string& key) const {
        return get(section_name, key).has_value();
    }

    const Entries* entries(const std::string& section_name) const {
        for (const auto& [name, entries] : sections_)
            if (name == section_name) return &entries;
        return nullptr;
    }

    std::string get_string(const std::string& sec, const std::string& key, const std::string& fallback) const {
        return get(sec, key).value_or(fallback);
    }

    double get_double(const std::string& sec, const std::string& key, double fallback) const {
        const auto v = get(sec, key);
        if (!v) return fallback;
        const auto parsed = detail::parse_real(*v);
        require(parsed.has_value(), ErrorKind::usage, "[" + sec + "] " + key + ": '" + *v + "' is not a number");
        return *parsed;
    }

    std::size_t get_size(const std::string& sec, const std::string& key, std::size_t fallback) const {
        const auto v = get(sec, key);
        if (!v) return fallback;
        const auto parsed = detail::parse_int(*v);
        require(parsed.has_value() && *parsed >= 0, ErrorKind::usage,
                "[" + sec + "] " + key + ": '" + *v + "' is not a non-negative integer");
        return static_cast<std::size_t>(*parsed);
    }

    std::vector<std::string> get_list(const std::string& sec, const std::string& key,
                                      const std::vector<std::string>& fallback) const {
        const auto v = get(sec, key);
        if (!v) return fallback;
        std::vector<std::string> out;
        for (auto item : detail::split_csv_line(*v))
            if (!item.empty()) out.emplace_back(item);
        return out;
    }

    std::vector<double> get_doubles(const std::string& sec, const std::string& key,
                                    const std::vector<double>& fallback) const {
        if (!has(sec, key)) return fallback;
        std::vector<double> out;
        for (const auto& item : get_list(sec, key, {})) {
            const auto parsed = detail::parse_real(item);
            require(parsed.has_value(), ErrorKind::usage, "[" + sec + "] " + key + ": '" + item + "' is not a number");
            out.push_back(*parsed);
        }
        return out;
    }

    std::vector<std::size_t> get_sizes(const std::string& sec, const std::string& key,
                                       const std::vector<std::size_t>& fallback) const {
        if (!has(sec, key)) return fallback;
        std::vector<std::size_t> out;
        for (const auto& item : get_list(sec, key, {})) {
            const auto parsed = detail::parse_int(item);
            require(parsed.has_value() && *parsed >= 0, ErrorKind::usage,
                    "[" + sec + "] " + key + ": '" + item + "' is not a non-negative integer");
            out.push_back(static_cast<std::size_t>(*parsed));
        }
        return out;
    }

    /// Resolves a path value relative to the config file's directory.
    std::string resolve_path(const std::string& value) const {
        std::filesystem::path p(value);
        if (p.is_absolute() || base_dir_.empty()) return p.string();
        return (std::filesystem::path(base_dir_) / p).string();
    }

    /// Column kinds from the [schema] section, in file order.
    Schema schema() const {
        Schema schema;
        if (const auto* e = entries("schema"))
            for (const auto& [name, kind] : *e) schema.push_back({name, parse_column_kind(kind)});
        require(!schema.empty(), ErrorKind::usage, "config has no [schema] section");
        validate_schema(schema);
        return schema;
    }

    /// Sections and keys sorted; one `key=value` per line.
    std::string canonical() const {
        std::map<std::string, std::map<std::string, std::string>> sorted;
        for (const auto& [name, entries] : sections_)
            for (const auto& [k, v] : entries) sorted[name][k] = v;
        std::ostringstream out;
        for (const auto& [name, entries] : sorted) {
            out << '[' << name << "]\n";
            for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
        }
        return out.str();
    }

    std::string hash() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
        return buf;
    }

    const std::string& base_dir() const noexcept { return base_dir_; }

private:
    Entries& section(const std::string& name) {
        for (auto& [n, entries] : sections_)
            if (n == name) return entries;
        sections_.emplace_back(name, Entries{});
        return sections_.back().second;
    }

    std::vector<std::pair<std::string, Entries>> sections_;
    std::string base_dir_;
};

}  // namespace anonymixer
