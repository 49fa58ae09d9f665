#include "mgsim/config.hpp"

#include "mgsim/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mgsim::config {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_raw_section(std::string_view name) { return name == "events"; }

std::pair<std::string_view, std::string_view> split_dotted(std::string_view dotted) {
    const auto dot = dotted.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 == dotted.size()) {
        throw ConfigError("expected a dotted key of the form section.key, got '" + std::string(dotted) + "'",
                          std::string(dotted));
    }
    return {dotted.substr(0, dot), dotted.substr(dot + 1)};
}

std::string where(std::string_view key, int line) {
    std::string s;
    if (line > 0) s += "line " + std::to_string(line) + ": ";
    if (!key.empty()) s += "'" + std::string(key) + "': ";
    return s;
}

}  // namespace

double parse_number(std::string_view text, std::string_view key, int line) {
    std::string_view t = trim(text);
    double scale = 1.0;
    if (t.size() >= 2) {
        const std::string tail = lower(t.substr(t.size() - 2));
        if (tail == "pi") {
            scale = std::numbers::pi;
            t = trim(t.substr(0, t.size() - 2));
            if (!t.empty() && t.back() == '*') t = trim(t.substr(0, t.size() - 1));
            if (t.empty()) return scale;
        }
    }
    double v = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (!t.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (t.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v)) {
        throw ConfigError(where(key, line) + "expected a number, got '" + std::string(text) + "'", std::string(key), line);
    }
    return v * scale;
}

bool parse_bool(std::string_view text, std::string_view key, int line) {
    const std::string v = lower(trim(text));
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ConfigError(where(key, line) + "expected a boolean, got '" + std::string(text) + "'", std::string(key), line);
}

Document Document::parse(std::istream& in) {
    Document doc;
    std::string section;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header", {}, line_no);
            const std::string_view name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name", {}, line_no);
            section = std::string(name);
            continue;
        }
        if (section.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": entry outside any [section]", {}, line_no);
        }
        if (is_raw_section(section)) {
            doc.raw_.push_back({section, RawLine{std::string(line), line_no}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'", {}, line_no);
        }
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key", {}, line_no);
        const std::string dotted = section + "." + std::string(key);
        if (doc.find(dotted)) {
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + dotted + "'", dotted, line_no);
        }
        doc.entries_.push_back({section, std::string(key), std::string(value), line_no});
    }
    return doc;
}

Document Document::parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse(in);
}

Document Document::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file '" + path.string() + "'");
    return parse(in);
}

void Document::set(std::string_view dotted_key, std::string value) {
    const auto [section, key] = split_dotted(dotted_key);
    if (is_raw_section(section)) throw ConfigError("cannot override entries of [events]", std::string(dotted_key));
    for (Entry& e : entries_) {
        if (e.section == section && e.key == key) {
            e.value = std::move(value);
            e.line = 0;
            return;
        }
    }
    entries_.push_back({std::string(section), std::string(key), std::move(value), 0});
}

void Document::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("override must look like section.key=value, got '" + std::string(assignment) + "'");
    }
    set(trim(assignment.substr(0, eq)), std::string(trim(assignment.substr(eq + 1))));
}

const Entry* Document::find(std::string_view dotted_key) const {
    const auto [section, key] = split_dotted(dotted_key);
    for (const Entry& e : entries_)
        if (e.section == section && e.key == key) return &e;
    return nullptr;
}

bool Document::has(std::string_view dotted_key) const { return find(dotted_key) != nullptr; }

std::string Document::text(std::string_view dotted_key, std::string_view fallback) const {
    const Entry* e = find(dotted_key);
    return e ? e->value : std::string(fallback);
}

std::string Document::text(std::string_view dotted_key) const {
    const Entry* e = find(dotted_key);
    if (!e) throw ConfigError("missing required key '" + std::string(dotted_key) + "'", std::string(dotted_key));
    return e->value;
}

double Document::number(std::string_view dotted_key, double fallback) const {
    const Entry* e = find(dotted_key);
    return e ? parse_number(e->value, dotted_key, e->line) : fallback;
}

double Document::number(std::string_view dotted_key) const {
    const Entry* e = find(dotted_key);
    if (!e) throw ConfigError("missing required key '" + std::string(dotted_key) + "'", std::string(dotted_key));
    return parse_number(e->value, dotted_key, e->line);
}

bool Document::flag(std::string_view dotted_key, bool fallback) const {
    const Entry* e = find(dotted_key);
    return e ? parse_bool(e->value, dotted_key, e->line) : fallback;
}

std::vector<RawLine> Document::lines(std::string_view section) const {
    std::vector<RawLine> out;
    for (const auto& [name, raw] : raw_)
        if (name == section) out.push_back(raw);
    return out;
}

void Document::require_known(std::string_view section, std::initializer_list<std::string_view> known) const {
    for (const Entry& e : entries_) {
        if (e.section != section) continue;
        if (std::find(known.begin(), known.end(), e.key) == known.end()) {
            const std::string dotted = e.section + "." + e.key;
            throw ConfigError(where(dotted, e.line) + "unknown key", dotted, e.line);
        }
    }
}

}  // namespace mgsim::config
