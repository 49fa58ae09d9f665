#pragma once

// INI-style scenario/parameter files.
//
//   # comment            ; also a comment
//   [section]
//   key = value          values may use a "pi" suffix: 20pi, 0.5pi, pi
//   [events]
//   1.0 setpoint unit=gfl P0=12e3     event sections keep raw lines
//
// Keys are addressed as "section.key". Overrides given as "section.key=value"
// replace or add entries after parsing.

#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mgsim::config {

struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;  ///< 0 for overrides
};

struct RawLine {
    std::string text;
    int line = 0;
};

/// Parses a number with an optional pi suffix ("62.83", "20pi", "pi").
/// Throws ConfigError naming `key` and `line` on malformed input.
double parse_number(std::string_view text, std::string_view key = {}, int line = 0);

/// "true/false/yes/no/on/off/1/0".
bool parse_bool(std::string_view text, std::string_view key = {}, int line = 0);

class Document {
public:
    /// Throws ConfigError with the offending line number.
    static Document parse(std::istream& in);
    static Document parse(std::string_view text);
    /// Throws ConfigError when the file cannot be read.
    static Document load(const std::filesystem::path& path);

    /// Replaces or appends "section.key".
    void set(std::string_view dotted_key, std::string value);
    /// Applies "section.key=value".
    void apply_override(std::string_view assignment);

    [[nodiscard]] bool has(std::string_view dotted_key) const;
    [[nodiscard]] const Entry* find(std::string_view dotted_key) const;

    [[nodiscard]] std::string text(std::string_view dotted_key, std::string_view fallback) const;
    [[nodiscard]] std::string text(std::string_view dotted_key) const;
    [[nodiscard]] double number(std::string_view dotted_key, double fallback) const;
    [[nodiscard]] double number(std::string_view dotted_key) const;
    [[nodiscard]] bool flag(std::string_view dotted_key, bool fallback) const;

    [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }
    /// Raw lines of a line-oriented section such as [events].
    [[nodiscard]] std::vector<RawLine> lines(std::string_view section) const;

    /// Throws ConfigError for a key of `section` that is not in `known`.
    void require_known(std::string_view section, std::initializer_list<std::string_view> known) const;

private:
    std::vector<Entry> entries_;
    std::vector<std::pair<std::string, RawLine>> raw_;
};

}  // namespace mgsim::config
