#include "uncal/matrix_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "uncal/error.hpp"

namespace uncal {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
        throw Error(ErrorKind::ShapeError, "matrix value count does not match rows*cols");
    }
}

void HiddenMatrix::validate() const {
    if (row_ids.size() != values.rows()) {
        throw Error(ErrorKind::ShapeError, "row id count differs from matrix rows");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : row_ids) {
        if (!seen.insert(id).second) {
            throw Error(ErrorKind::ShapeError, "duplicate row id '" + id + "'");
        }
    }
    for (double v : values.values()) {
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::ShapeError, "non-finite hidden-state value");
        }
    }
}

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    } else {
        return v;
    }
}

}  // namespace

Matrix read_matrix(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) {
        throw Error(ErrorKind::ParseError, "missing UNCAL-MAT header");
    }
    static const std::regex pattern(R"(^UNCAL-MAT v1 rows=(\d+) dims=(\d+) dtype=f32le$)");
    std::smatch m;
    if (!std::regex_match(header, m, pattern)) {
        throw Error(ErrorKind::ParseError, "bad UNCAL-MAT header: '" + header + "'");
    }
    const auto rows = static_cast<std::size_t>(std::stoull(m[1].str()));
    const auto dims = static_cast<std::size_t>(std::stoull(m[2].str()));
    std::vector<double> values(rows * dims);
    for (auto& v : values) {
        std::uint32_t raw = 0;
        if (!in.read(reinterpret_cast<char*>(&raw), sizeof raw)) {
            throw Error(ErrorKind::ParseError, "UNCAL-MAT payload shorter than header declares");
        }
        v = static_cast<double>(std::bit_cast<float>(to_little_endian(raw)));
    }
    return Matrix(rows, dims, std::move(values));
}

void write_matrix(std::ostream& out, const Matrix& m) {
    out << "UNCAL-MAT v1 rows=" << m.rows() << " dims=" << m.cols() << " dtype=f32le\n";
    for (double v : m.values()) {
        const auto raw = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        out.write(reinterpret_cast<const char*>(&raw), sizeof raw);
    }
}

Matrix read_matrix_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    return read_matrix(in);
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    write_matrix(out, m);
}

std::vector<std::string> read_row_ids(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    std::vector<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            ids.push_back(j.is_string() ? j.get<std::string>() : j.at("qid").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return ids;
}

void write_row_ids(const std::filesystem::path& path, const std::vector<std::string>& ids) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    for (const auto& id : ids) {
        out << nlohmann::json{{"qid", id}}.dump() << '\n';
    }
}

namespace {

std::filesystem::path layer_stem(const std::filesystem::path& dir, int layer) {
    return dir / ("layer_" + std::to_string(layer));
}

}  // namespace

HiddenMatrix read_hidden_layer(const std::filesystem::path& dir, int layer) {
    const auto stem = layer_stem(dir, layer);
    HiddenMatrix h;
    h.layer = layer;
    h.values = read_matrix_file(stem.string() + ".mat");
    h.row_ids = read_row_ids(stem.string() + ".ids.jsonl");
    h.validate();
    return h;
}

void write_hidden_layer(const std::filesystem::path& dir, const HiddenMatrix& hidden) {
    const auto stem = layer_stem(dir, hidden.layer);
    write_matrix_file(stem.string() + ".mat", hidden.values);
    write_row_ids(stem.string() + ".ids.jsonl", hidden.row_ids);
}

std::vector<int> available_layers(const std::filesystem::path& dir) {
    std::error_code ec;
    std::vector<int> layers;
    static const std::regex pattern(R"(^layer_(\d+)\.mat$)");
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        std::smatch m;
        const auto name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern)) {
            layers.push_back(std::stoi(m[1].str()));
        }
    }
    if (ec) {
        throw Error(ErrorKind::IoError, "cannot list " + dir.string());
    }
    std::sort(layers.begin(), layers.end());
    return layers;
}

}  // namespace uncal
