#pragma once

// Versioned binary container for SkelFactorization. All integers and floats
// little-endian.
//
//   "RSRS"  u32 version  u64 N  u64 step_count
//   per step:  i32 box  i32 level
//              index  I_r, I_s, left_rows, right_cols
//              matrix T_rs, T_sr, G_left, G_right
//              lu     X_rr
//   index S    lu A_S
//
//   index  = u64 length, then u32 entries
//   matrix = u64 rows, u64 cols, then f64 entries column-major
//   lu     = matrix (packed factors), then index (row permutation)
//
// Diagnostics (timings, level summaries, p) are not stored.

#include "rsrs/binary.hpp"
#include "rsrs/factorization.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace rsrs {

inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

inline void put_index(std::ostream& os, const IndexVector& v) {
  binary::put_u64(os, v.size());
  for (Index i : v) {
    if (i < 0 || i > static_cast<Index>(std::numeric_limits<std::uint32_t>::max()))
      throw FormatError("index out of the u32 range");
    binary::put_u32(os, static_cast<std::uint32_t>(i));
  }
}

inline IndexVector get_index(std::istream& is, Index n) {
  const std::uint64_t len = binary::get_u64(is);
  if (len > static_cast<std::uint64_t>(n)) throw FormatError("index vector longer than N");
  IndexVector v(static_cast<std::size_t>(len));
  for (auto& i : v) {
    i = static_cast<Index>(binary::get_u32(is));
    if (i >= n) throw FormatError("index out of range");
  }
  return v;
}

inline void put_mat(std::ostream& os, const Matrix& m) {
  binary::put_u64(os, static_cast<std::uint64_t>(m.rows()));
  binary::put_u64(os, static_cast<std::uint64_t>(m.cols()));
  binary::put_matrix_data(os, m);
}

inline Matrix get_mat(std::istream& is, Index n) {
  const std::uint64_t r = binary::get_u64(is), c = binary::get_u64(is);
  if (r > static_cast<std::uint64_t>(n) || c > static_cast<std::uint64_t>(n))
    throw FormatError("matrix dimension exceeds N");
  return binary::get_matrix_data(is, static_cast<Index>(r), static_cast<Index>(c));
}

inline void put_lu(std::ostream& os, const LuFactors& f) {
  put_mat(os, f.lu);
  put_index(os, f.perm);
}

inline LuFactors get_lu(std::istream& is, Index n) {
  LuFactors f;
  f.lu = get_mat(is, n);
  f.perm = get_index(is, n);
  if (f.lu.rows() != f.lu.cols() || static_cast<Index>(f.perm.size()) != f.lu.rows())
    throw FormatError("inconsistent LU block");
  return f;
}

inline void check(bool ok, const char* what) {
  if (!ok) throw FormatError(std::string("inconsistent step: ") + what);
}

}  // namespace detail

inline void write_factorization(std::ostream& os, const SkelFactorization& f) {
  binary::put_magic(os, "RSRS");
  binary::put_u32(os, kContainerVersion);
  binary::put_u64(os, static_cast<std::uint64_t>(f.n));
  binary::put_u64(os, f.steps.size());
  for (const EliminationStep& s : f.steps) {
    binary::put_u32(os, static_cast<std::uint32_t>(static_cast<std::int32_t>(s.box)));
    binary::put_u32(os, static_cast<std::uint32_t>(static_cast<std::int32_t>(s.level)));
    detail::put_index(os, s.I_r);
    detail::put_index(os, s.I_s);
    detail::put_index(os, s.left_rows);
    detail::put_index(os, s.right_cols);
    detail::put_mat(os, s.T_rs);
    detail::put_mat(os, s.T_sr);
    detail::put_mat(os, s.G_left);
    detail::put_mat(os, s.G_right);
    detail::put_lu(os, s.Xrr);
  }
  detail::put_index(os, f.S);
  detail::put_lu(os, f.S_lu);
  if (!os) throw Error("write_factorization: stream write failed");
}

inline SkelFactorization read_factorization(std::istream& is) {
  binary::expect_magic(is, "RSRS");
  const std::uint32_t version = binary::get_u32(is);
  if (version != kContainerVersion) {
    std::ostringstream os;
    os << "unsupported container version " << version;
    throw FormatError(os.str());
  }
  SkelFactorization f;
  const std::uint64_t n = binary::get_u64(is);
  if (n > static_cast<std::uint64_t>(std::numeric_limits<std::uint32_t>::max()))
    throw FormatError("N too large");
  f.n = static_cast<Index>(n);
  const std::uint64_t q = binary::get_u64(is);
  if (q > n) throw FormatError("more steps than indices");
  f.steps.resize(static_cast<std::size_t>(q));
  for (EliminationStep& s : f.steps) {
    s.box = static_cast<std::int32_t>(binary::get_u32(is));
    s.level = static_cast<std::int32_t>(binary::get_u32(is));
    s.I_r = detail::get_index(is, f.n);
    s.I_s = detail::get_index(is, f.n);
    s.left_rows = detail::get_index(is, f.n);
    s.right_cols = detail::get_index(is, f.n);
    s.T_rs = detail::get_mat(is, f.n);
    s.T_sr = detail::get_mat(is, f.n);
    s.G_left = detail::get_mat(is, f.n);
    s.G_right = detail::get_mat(is, f.n);
    s.Xrr = detail::get_lu(is, f.n);
    const auto r = static_cast<Index>(s.I_r.size()), k = static_cast<Index>(s.I_s.size());
    detail::check(s.T_rs.rows() == r && s.T_rs.cols() == k, "T_rs shape");
    detail::check(s.T_sr.rows() == k && s.T_sr.cols() == r, "T_sr shape");
    detail::check(s.G_left.rows() == static_cast<Index>(s.left_rows.size()) &&
                      s.G_left.cols() == r,
                  "G_left shape");
    detail::check(s.G_right.rows() == r &&
                      s.G_right.cols() == static_cast<Index>(s.right_cols.size()),
                  "G_right shape");
    detail::check(s.Xrr.size() == r, "X_rr size");
  }
  f.S = detail::get_index(is, f.n);
  f.S_lu = detail::get_lu(is, f.n);
  detail::check(f.S_lu.size() == static_cast<Index>(f.S.size()), "final block size");
  return f;
}

inline void save_factorization(const std::string& path, const SkelFactorization& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_factorization(os, f);
}

inline SkelFactorization load_factorization(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_factorization(is);
}

}  // namespace rsrs
