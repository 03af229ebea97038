#include "mlgibbs/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string_view>
#include <vector>

#include "mlgibbs/errors.hpp"

namespace mlgibbs {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void fail(const std::string& what, std::size_t line) {
  throw ParseError(what, line);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

MatrixFormat parse_matrix_format(const std::string& text) {
  const std::string t = lower(text);
  if (t == "auto" || t == "automatic") return MatrixFormat::automatic;
  if (t == "mtx" || t == "matrix_market" || t == "matrixmarket") return MatrixFormat::matrix_market;
  if (t == "csv" || t == "dense_csv") return MatrixFormat::dense_csv;
  throw ConfigError("unknown matrix format '" + text + "'");
}

SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail("empty input", 1);
  ++line_no;

  const auto banner = split_ws(line);
  if (banner.size() != 5 || lower(std::string(banner[0])) != "%%matrixmarket")
    fail("expected '%%MatrixMarket matrix coordinate <field> <symmetry>'", line_no);
  if (lower(std::string(banner[1])) != "matrix" || lower(std::string(banner[2])) != "coordinate")
    fail("only coordinate matrices are supported", line_no);
  const std::string field = lower(std::string(banner[3]));
  const bool pattern = field == "pattern";
  if (!pattern && field != "real" && field != "integer" && field != "double")
    fail("unsupported field '" + field + "'", line_no);
  if (lower(std::string(banner[4])) != "general")
    fail("only general (non-symmetric) storage is supported", line_no);

  Index rows = -1, cols = -1, nnz = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '%') continue;
    const auto f = split_ws(t);
    if (f.size() != 3 || !parse_number(f[0], rows) || !parse_number(f[1], cols) ||
        !parse_number(f[2], nnz) || rows < 0 || cols < 0 || nnz < 0)
      fail("malformed size line", line_no);
    break;
  }
  if (rows < 0) fail("missing size line", line_no + 1);

  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  while (static_cast<Index>(entries.size()) < nnz && std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '%') continue;
    const auto f = split_ws(t);
    Index r = 0, c = 0;
    double v = 1.0;
    if (f.size() != (pattern ? 2u : 3u) || !parse_number(f[0], r) || !parse_number(f[1], c) ||
        (!pattern && !parse_number(f[2], v)))
      fail("malformed entry", line_no);
    if (r < 1 || r > rows || c < 1 || c > cols) fail("index out of range", line_no);
    if (!std::isfinite(v)) fail("non-finite value", line_no);
    entries.push_back({r - 1, c - 1, v});
  }
  if (static_cast<Index>(entries.size()) < nnz)
    fail("expected " + std::to_string(nnz) + " entries, found " + std::to_string(entries.size()),
         line_no + 1);
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (!t.empty() && t.front() != '%') fail("more entries than declared", line_no);
  }
  return SparseMatrix::from_triplets(rows, cols, entries);
}

SparseMatrix read_dense_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  Index rows = 0;
  Index cols = -1;
  std::vector<Triplet> entries;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty()) continue;
    Index c = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = t.find(',', start);
      const auto field = t.substr(start, comma == std::string_view::npos ? t.npos : comma - start);
      double v = 0.0;
      if (!parse_number(field, v)) fail("malformed number '" + std::string(field) + "'", line_no);
      if (!std::isfinite(v)) fail("non-finite value", line_no);
      if (v != 0.0) entries.push_back({rows, c, v});
      ++c;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols < 0) cols = c;
    if (c != cols) {
      std::ostringstream msg;
      msg << "expected " << cols << " fields, found " << c;
      fail(msg.str(), line_no);
    }
    ++rows;
  }
  return SparseMatrix::from_triplets(rows, std::max<Index>(cols, 0), entries);
}

SparseMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  if (format == MatrixFormat::automatic)
    format = lower(path.extension().string()) == ".mtx" ? MatrixFormat::matrix_market
                                                        : MatrixFormat::dense_csv;
  auto in = open_input(path);
  return format == MatrixFormat::matrix_market ? read_matrix_market(in) : read_dense_csv(in);
}

void write_matrix_market(std::ostream& out, const SparseMatrix& A) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << A.rows() << ' ' << A.cols() << ' ' << A.nnz() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto offsets = A.row_offsets();
  const auto cols = A.col_indices();
  const auto values = A.values();
  for (Index r = 0; r < A.rows(); ++r)
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k)
      out << r + 1 << ' ' << cols[k] + 1 << ' ' << values[k] << '\n';
}

void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& A) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  write_matrix_market(out, A);
}

Vector read_vector(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto comma = t.rfind(',');
    const auto field = comma == std::string_view::npos ? t : t.substr(comma + 1);
    double v = 0.0;
    if (!parse_number(field, v)) {
      if (first) {
        first = false;
        continue;
      }
      fail("malformed number '" + std::string(field) + "'", line_no);
    }
    if (!std::isfinite(v)) fail("non-finite value", line_no);
    first = false;
    values.push_back(v);
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

Vector load_vector(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_vector(in);
}

void write_vector(const std::filesystem::path& path, const Vector& v) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < v.size(); ++i) out << v[i] << '\n';
}

}  // namespace mlgibbs
