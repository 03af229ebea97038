#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mlgibbs/sparse.hpp"

namespace mlgibbs {

enum class MatrixFormat { automatic, matrix_market, dense_csv };

/// "mtx"/"matrix_market", "csv"/"dense_csv" or "auto"; ConfigError otherwise.
MatrixFormat parse_matrix_format(const std::string& text);

/// MatrixMarket coordinate (real, integer or pattern; general only) with
/// 1-based indices. Throws ParseError carrying the offending line number.
SparseMatrix read_matrix_market(std::istream& in);
/// Comma separated rows of numbers; zeros are dropped. Blank lines are
/// skipped and every row must have the same number of fields.
SparseMatrix read_dense_csv(std::istream& in);

/// `automatic` picks MatrixMarket for *.mtx files and dense CSV otherwise.
SparseMatrix load_matrix(const std::filesystem::path& path,
                         MatrixFormat format = MatrixFormat::automatic);

/// Writes a real general coordinate file with round-trip precision.
void write_matrix_market(std::ostream& out, const SparseMatrix& A);
void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& A);

/// One number per line; an optional first line that does not parse as a
/// number is taken as a header. For multi-column rows the last field is used.
Vector read_vector(std::istream& in);
Vector load_vector(const std::filesystem::path& path);
void write_vector(const std::filesystem::path& path, const Vector& v);

}  // namespace mlgibbs
