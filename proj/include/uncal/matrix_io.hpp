#pragma once

// `UNCAL-MAT v1` container: one ASCII header line
//
//     UNCAL-MAT v1 rows=<n> dims=<d> dtype=f32le\n
//
// followed by n*d row-major little-endian IEEE-754 binary32 values. Row ids
// live in a sidecar JSONL file, one `{"qid": "..."}` object per line.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "uncal/matrix.hpp"

namespace uncal {

Matrix read_matrix(std::istream& in);
void write_matrix(std::ostream& out, const Matrix& m);

Matrix read_matrix_file(const std::filesystem::path& path);
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);

std::vector<std::string> read_row_ids(const std::filesystem::path& path);
void write_row_ids(const std::filesystem::path& path, const std::vector<std::string>& ids);

/// Loads `<dir>/layer_<L>.mat` plus `<dir>/layer_<L>.ids.jsonl` and validates.
HiddenMatrix read_hidden_layer(const std::filesystem::path& dir, int layer);
void write_hidden_layer(const std::filesystem::path& dir, const HiddenMatrix& hidden);

/// Layer indices for which a `layer_<L>.mat` file exists, ascending.
std::vector<int> available_layers(const std::filesystem::path& dir);

}  // namespace uncal
