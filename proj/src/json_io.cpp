#include "uncal/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "uncal/error.hpp"

namespace uncal {

namespace {

void write_double(std::string& out, double v) {
    if (!std::isfinite(v)) {
        // JSON has no encoding for these; callers map them to null or a sentinel
        // before serializing.
        out += "null";
        return;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
    // Keep floats visibly floats so a reader never narrows them to integers.
    std::string_view s(buf);
    if (s.find_first_of(".eEn") == std::string_view::npos) {
        out += ".0";
    }
}

void newline(std::string& out, int indent, int depth) {
    if (indent < 0) {
        return;
    }
    out += '\n';
    out.append(static_cast<std::size_t>(indent * depth), ' ');
}

void write_value(std::string& out, const json& v, int indent, int depth) {
    switch (v.type()) {
        case json::value_t::object: {
            if (v.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            for (auto it = v.begin(); it != v.end(); ++it) {
                if (!first) {
                    out += ',';
                }
                first = false;
                newline(out, indent, depth + 1);
                out += json(it.key()).dump();
                out += indent < 0 ? ":" : ": ";
                write_value(out, it.value(), indent, depth + 1);
            }
            newline(out, indent, depth);
            out += '}';
            return;
        }
        case json::value_t::array: {
            if (v.empty()) {
                out += "[]";
                return;
            }
            out += '[';
            bool first = true;
            for (const auto& item : v) {
                if (!first) {
                    out += ',';
                }
                first = false;
                newline(out, indent, depth + 1);
                write_value(out, item, indent, depth + 1);
            }
            newline(out, indent, depth);
            out += ']';
            return;
        }
        case json::value_t::number_float:
            write_double(out, v.get<double>());
            return;
        default:
            out += v.dump();
            return;
    }
}

}  // namespace

std::string dump_json(const json& value, int indent) {
    std::string out;
    write_value(out, value, indent, 0);
    out += '\n';
    return out;
}

std::string dump_json_line(const json& value) {
    std::string out;
    write_value(out, value, -1, 0);
    return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << contents)) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines) {
    std::string out;
    for (const auto& line : lines) {
        out += dump_json_line(line);
        out += '\n';
    }
    write_text_file(path, out);
}

namespace detail {

std::vector<std::pair<std::size_t, std::string>> read_nonblank_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            lines.emplace_back(lineno, line);
        }
    }
    if (in.bad()) {
        throw Error(ErrorKind::IoError, "read failure on " + path.string());
    }
    return lines;
}

void check_corruption(const std::filesystem::path& path, std::size_t total, std::size_t invalid) {
    if (total > 0 && 2 * invalid > total) {
        throw Error(ErrorKind::CorruptInput, path.string() + ": " + std::to_string(invalid) + " of " +
                                                 std::to_string(total) + " lines invalid");
    }
}

}  // namespace detail

}  // namespace uncal
