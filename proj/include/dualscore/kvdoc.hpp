#pragma once

#include "dualscore/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dualscore::kvdoc {

// Flat key-value documents with [section] headers:
//
//   # comment
//   [section]
//   key = value
//
// Sections may repeat. Keys before the first header land in a section with
// an empty name. Every entry remembers its source line for error messages.

struct Entry {
    std::string key;
    std::string value;
    int line = 0;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<Entry> entries;
};

struct Document {
    std::string source;  // file name or "<string>"
    std::vector<Section> sections;
};

[[nodiscard]] Document parse(const std::string& text, const std::string& source = "<string>");
[[nodiscard]] Document parse_file(const std::filesystem::path& path);

/// "<source>:<line>: <message>" as a ConfigError.
[[noreturn]] void fail(const Document& doc, int line, const std::string& message);

[[nodiscard]] double as_double(const Document& doc, const Entry& e);
[[nodiscard]] long as_long(const Document& doc, const Entry& e);
[[nodiscard]] bool as_bool(const Document& doc, const Entry& e);
[[nodiscard]] std::vector<double> as_doubles(const Document& doc, const Entry& e, std::size_t count);

}  // namespace dualscore::kvdoc
