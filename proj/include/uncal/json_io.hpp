#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace uncal {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Serializes with every double written as `%.17g`, object keys in sorted
/// order (nlohmann's default) and a fixed indent, so identical values give
/// identical bytes.
std::string dump_json(const json& value, int indent = 2);

/// Single-line variant for JSONL streams.
std::string dump_json_line(const json& value);

void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

struct LineError {
    std::size_t line = 0;
    std::string message;
};

/// Outcome of loading a JSONL file: parsed items plus a per-line error list.
template <typename T>
struct LoadResult {
    std::vector<T> items;
    std::vector<LineError> errors;
};

/// Reads every non-blank line of a JSONL file and hands the parsed object to
/// `convert`. Lines that fail to parse or convert are recorded as errors.
/// Throws IoError when the file cannot be read and CorruptInput when more than
/// half of the non-blank lines are invalid.
template <typename T>
LoadResult<T> load_jsonl(const std::filesystem::path& path, const std::function<T(const json&)>& convert);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines);

namespace detail {
std::vector<std::pair<std::size_t, std::string>> read_nonblank_lines(const std::filesystem::path& path);
void check_corruption(const std::filesystem::path& path, std::size_t total, std::size_t invalid);
}  // namespace detail

template <typename T>
LoadResult<T> load_jsonl(const std::filesystem::path& path, const std::function<T(const json&)>& convert) {
    LoadResult<T> result;
    const auto lines = detail::read_nonblank_lines(path);
    for (const auto& [lineno, text] : lines) {
        try {
            result.items.push_back(convert(json::parse(text)));
        } catch (const std::exception& e) {
            result.errors.push_back({lineno, e.what()});
        }
    }
    detail::check_corruption(path, lines.size(), result.errors.size());
    return result;
}

}  // namespace uncal
