#include "collapse_lab/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "collapse_lab/errors.hpp"

namespace collapse_lab {

namespace {

constexpr std::uint32_t kBinaryMagic = 0x53444C43;  // "CLDS" little-endian
constexpr double kSymmetryTol = 1e-12;
constexpr double kPsdTol = 1e-12;

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  // Row-major fill so the draw order does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  return out;
}

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return value;
  }
}

template <typename T>
void write_le(std::ostream& out, T value) {
  const T le = to_little_endian(value);
  out.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  T raw{};
  if (!in.read(reinterpret_cast<char*>(&raw), sizeof(T))) return false;
  value = to_little_endian(raw);
  return true;
}

bool has_csv_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".csv";
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Header must read x0..x{d0-1},y0..y{d2-1}.
std::pair<int, int> parse_header(std::string_view line) {
  const auto fields = split_fields(line);
  int d0 = 0;
  int d2 = 0;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const auto f = trim(fields[k]);
    const std::string expected_x = "x" + std::to_string(d0);
    const std::string expected_y = "y" + std::to_string(d2);
    if (d2 == 0 && f == expected_x) {
      ++d0;
    } else if (f == expected_y) {
      ++d2;
    } else {
      throw ParseError("unexpected header field '" + std::string(f) + "'", 1, k + 1);
    }
  }
  if (d0 == 0 || d2 == 0) throw ParseError("header needs at least one x and one y column", 1, 0);
  return {d0, d2};
}

void write_double(std::ostream& out, double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.write(buf.data(), res.ptr - buf.data());
}

}  // namespace

SyntheticSpec SyntheticSpec::standard(int d0, int d2, int n, std::uint64_t seed) {
  if (d0 < 1 || d2 < 1 || n < 1) throw InvalidSpec("synthetic dimensions and n must be >= 1");
  SyntheticSpec spec;
  spec.d0 = d0;
  spec.d2 = d2;
  spec.n = n;
  spec.seed = seed;

  Vector a(d0);
  for (int i = 0; i < d0; ++i) a(i) = d0 == 1 ? 14.0 : 14.0 - 12.0 * i / (d0 - 1);
  const Matrix q = random_orthogonal(d0, seed ^ 0x9E3779B97F4A7C15ULL);
  spec.A = q * a.asDiagonal() * q.transpose();
  spec.A = 0.5 * (spec.A + spec.A.transpose());

  const int big = std::max(d0, d2);
  const Matrix r = random_orthogonal(big, seed ^ 0xC2B2AE3D27D4EB4FULL);
  spec.M = r.topLeftCorner(d2, d0);
  return spec;
}

void validate(const SyntheticSpec& spec) {
  if (spec.d0 < 1 || spec.d2 < 1 || spec.n < 1) throw InvalidSpec("d0, d2 and n must be >= 1");
  if (spec.A.rows() != spec.d0 || spec.A.cols() != spec.d0)
    throw InvalidSpec("A must be d0 x d0");
  if (spec.M.rows() != spec.d2 || spec.M.cols() != spec.d0)
    throw InvalidSpec("M must be d2 x d0");
  if ((spec.A - spec.A.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol)
    throw InvalidSpec("A is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(spec.A, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw InvalidSpec("eigendecomposition of A failed");
  if (eig.eigenvalues().minCoeff() < -kPsdTol) throw InvalidSpec("A is not positive semidefinite");
}

Dataset generate(const SyntheticSpec& spec) {
  validate(spec);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(spec.A);
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix factor = eig.eigenvectors() * root.asDiagonal();  // A = factor factor^T

  std::mt19937_64 rng(spec.seed);
  const Matrix standard = gaussian_matrix(spec.n, spec.d0, rng);

  Dataset ds;
  ds.X = standard * factor.transpose();
  ds.Y = ds.X * spec.M.transpose();
  ds.centered = false;
  return ds;
}

CenteredDataset center(const Dataset& ds) {
  CenteredDataset out;
  out.mean_x = ds.X.colwise().mean().transpose();
  out.mean_y = ds.Y.colwise().mean().transpose();
  out.data.X = ds.X.rowwise() - out.mean_x.transpose();
  out.data.Y = ds.Y.rowwise() - out.mean_y.transpose();
  out.data.centered = true;
  return out;
}

void save(const Dataset& ds, const std::filesystem::path& path) {
  if (has_csv_extension(path))
    save_csv(ds, path);
  else
    save_binary(ds, path);
}

Dataset load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  return has_csv_extension(path) ? load_csv(path) : load_binary(path);
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.X.rows() != ds.Y.rows()) throw ShapeError("X and Y must have the same number of rows");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (Eigen::Index j = 0; j < ds.X.cols(); ++j) out << (j ? "," : "") << 'x' << j;
  for (Eigen::Index j = 0; j < ds.Y.cols(); ++j) out << ",y" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
      if (j) out << ',';
      write_double(out, ds.X(i, j));
    }
    for (Eigen::Index j = 0; j < ds.Y.cols(); ++j) {
      out << ',';
      write_double(out, ds.Y(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw ParseError("empty file", 1, 0);
  const auto [d0, d2] = parse_header(trim(line));
  const std::size_t width = static_cast<std::size_t>(d0 + d2);

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_fields(body);
    if (fields.size() != width)
      throw ParseError("expected " + std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no, std::min(fields.size(), width) + 1);
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto f = trim(fields[k]);
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
        throw ParseError("not a number: '" + std::string(f) + "'", line_no, k + 1);
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("no data rows", line_no, 0);

  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(rows), d0);
  ds.Y.resize(static_cast<Eigen::Index>(rows), d2);
  for (std::size_t i = 0; i < rows; ++i) {
    for (int j = 0; j < d0; ++j) ds.X(i, j) = values[i * width + j];
    for (int j = 0; j < d2; ++j) ds.Y(i, j) = values[i * width + d0 + j];
  }
  return ds;
}

void save_binary(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.X.rows() != ds.Y.rows()) throw ShapeError("X and Y must have the same number of rows");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_le<std::uint32_t>(out, kBinaryMagic);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.X.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.X.cols()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.Y.cols()));
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) write_le<double>(out, ds.X(i, j));
    for (Eigen::Index j = 0; j < ds.Y.cols(); ++j) write_le<double>(out, ds.Y(i, j));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::uint32_t magic = 0, n = 0, d0 = 0, d2 = 0;
  if (!read_le(in, magic)) throw ParseError("empty or truncated header", 0, 0);
  if (magic != kBinaryMagic) throw ParseError("bad magic number", 0, 0);
  if (!read_le(in, n) || !read_le(in, d0) || !read_le(in, d2))
    throw ParseError("truncated header", 0, 0);
  if (n == 0 || d0 == 0 || d2 == 0) throw ParseError("header has a zero dimension", 0, 0);

  Dataset ds;
  ds.X.resize(n, d0);
  ds.Y.resize(n, d2);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d0; ++j)
      if (!read_le(in, ds.X(i, j))) throw ParseError("truncated payload", i + 1, j + 1);
    for (std::uint32_t j = 0; j < d2; ++j)
      if (!read_le(in, ds.Y(i, j))) throw ParseError("truncated payload", i + 1, d0 + j + 1);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after payload", n, 0);
  return ds;
}

Matrix random_orthogonal(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix g = gaussian_matrix(dim, dim, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

}  // namespace collapse_lab
