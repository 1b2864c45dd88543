#include "netflow/linalg.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "netflow/error.hpp"

namespace netflow::linalg {

CsrMatrix CsrMatrix::from_triplets(std::size_t n, std::span<const Triplet> triplets) {
  CsrMatrix m;
  // Counting sort by row keeps the input order inside each row.
  std::vector<std::size_t> count(n + 1, 0);
  for (const Triplet& t : triplets) {
    if (t.row >= n || t.col >= n) throw ValidationError("triplet index out of range");
    ++count[t.row + 1];
  }
  for (std::size_t r = 0; r < n; ++r) count[r + 1] += count[r];
  std::vector<std::uint32_t> order(triplets.size());
  {
    std::vector<std::size_t> next(count.begin(), count.end() - 1);
    for (std::uint32_t k = 0; k < triplets.size(); ++k) order[next[triplets[k].row]++] = k;
  }

  m.row_ptr_.assign(n + 1, 0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> row;  // (col, triplet index)
  for (std::size_t r = 0; r < n; ++r) {
    row.clear();
    for (std::size_t k = count[r]; k < count[r + 1]; ++k)
      row.emplace_back(triplets[order[k]].col, order[k]);
    std::stable_sort(row.begin(), row.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < row.size();) {
      const std::uint32_t c = row[k].first;
      double v = 0.0;
      for (; k < row.size() && row[k].first == c; ++k) v += triplets[row[k].second].value;
      m.col_.push_back(c);
      m.val_.push_back(v);
    }
    m.row_ptr_[r + 1] = m.col_.size();
  }
  return m;
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  multiply(x, y, simd::active());
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y,
                         const simd::KernelTable& kernels) const {
  kernels.spmv(view(), x, y);
}

double CsrMatrix::coeff(std::size_t r, std::size_t c) const {
  const auto begin = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
  const auto end = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
  const auto it = std::lower_bound(begin, end, static_cast<std::uint32_t>(c));
  if (it == end || *it != c) return 0.0;
  return val_[static_cast<std::size_t>(it - col_.begin())];
}

std::vector<double> CsrMatrix::diagonal() const {
  std::vector<double> d(rows(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r) d[r] = coeff(r, r);
  return d;
}

std::vector<double> CsrMatrix::row_sums() const {
  std::vector<double> s(rows(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s[r] += val_[k];
  return s;
}

double norm2(std::span<const double> x) {
  return std::sqrt(simd::active().dot(x, x));
}

void remove_weighted_mean(std::span<double> x, std::span<const double> w) {
  if (x.empty()) return;
  double num = 0.0;
  double den = 0.0;
  if (w.empty()) {
    num = std::accumulate(x.begin(), x.end(), 0.0);
    den = static_cast<double>(x.size());
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += w[i] * x[i];
      den += w[i];
    }
  }
  const double mean = num / den;
  for (double& v : x) v -= mean;
}

namespace {

void project_constants(std::span<double> v, const simd::KernelTable& k) {
  const double mean = k.sum(v) / static_cast<double>(v.size());
  for (double& e : v) e -= mean;
}

double true_residual(const CsrMatrix& a, std::span<const double> b, std::span<const double> x,
                     std::vector<double>& scratch) {
  a.multiply(x, scratch);
  for (std::size_t i = 0; i < b.size(); ++i) scratch[i] = b[i] - scratch[i];
  return norm2(scratch);
}

}  // namespace

CgReport conjugate_gradient(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
                            const CgOptions& options) {
  const simd::KernelTable& k = simd::active();
  const std::size_t n = a.rows();
  const std::size_t max_it = options.max_iterations ? options.max_iterations : 20 * n + 200;

  std::vector<double> inv_diag = a.diagonal();
  for (double& d : inv_diag) d = d > 0.0 ? 1.0 / d : 1.0;

  std::vector<double> r(n), z(n), p(n), ap(n);
  if (options.deflate_constants) project_constants(x, k);
  a.multiply(x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  if (options.deflate_constants) project_constants(r, k);

  const double bnorm = norm2(b);
  const double target = options.rel_tol * (bnorm > 0.0 ? bnorm : 1.0);
  CgReport report;
  double rnorm = norm2(r);
  if (bnorm == 0.0 && rnorm == 0.0) {
    report.converged = true;
    return report;
  }

  k.hadamard(r, inv_diag, z);
  if (options.deflate_constants) project_constants(z, k);
  p = z;
  double rz = k.dot(r, z);
  std::size_t it = 0;
  for (; it < max_it && rnorm > target; ++it) {
    a.multiply(p, ap);
    const double pap = k.dot(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    k.axpy(alpha, p, x);
    k.axpy(-alpha, ap, r);
    // Periodic recomputation limits drift of the recursive residual.
    if ((it + 1) % 50 == 0) {
      a.multiply(x, ap);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    }
    if (options.deflate_constants) project_constants(r, k);
    rnorm = norm2(r);
    k.hadamard(r, inv_diag, z);
    if (options.deflate_constants) project_constants(z, k);
    const double rz_new = k.dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    k.xpby(z, beta, p);
  }
  if (options.deflate_constants) project_constants(x, k);
  report.iterations = it;
  report.residual = true_residual(a, b, x, ap);
  report.converged = report.residual <= 10.0 * target;
  return report;
}

namespace {

Eigen::MatrixXd to_dense(const CsrMatrix& a) {
  const std::size_t n = a.rows();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto rp = a.row_ptr();
  const auto col = a.col();
  const auto val = a.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col[k])) += val[k];
  return m;
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

std::vector<double> solve_constant_kernel_direct(const CsrMatrix& a, std::span<const double> b,
                                                 Gauge gauge) {
  const auto n = static_cast<Eigen::Index>(a.rows());
  std::vector<double> out(a.rows(), 0.0);
  if (n == 0) return out;
  Eigen::MatrixXd m = to_dense(a);
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), n);

  if (gauge == Gauge::RankOne) {
    const double scale = m.trace() / static_cast<double>(n * n);
    m.array() += scale > 0.0 ? scale : 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
      throw SingularSystem("rank-one corrected system is not positive definite");
    const Eigen::VectorXd x = llt.solve(rhs);
    if (!all_finite(x)) throw SingularSystem("non-finite solution of rank-one corrected system");
    Eigen::Map<Eigen::VectorXd>(out.data(), n) = x;
    return out;
  }

  if (n == 1) return out;
  const Eigen::MatrixXd reduced = m.bottomRightCorner(n - 1, n - 1);
  Eigen::LLT<Eigen::MatrixXd> llt(reduced);
  if (llt.info() != Eigen::Success)
    throw SingularSystem("pinned system is not positive definite");
  const Eigen::VectorXd x = llt.solve(rhs.tail(n - 1));
  if (!all_finite(x)) throw SingularSystem("non-finite solution of pinned system");
  Eigen::Map<Eigen::VectorXd>(out.data() + 1, n - 1) = x;
  return out;
}

std::vector<double> solve_constant_kernel_sparse(const CsrMatrix& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  std::vector<double> out(n, 0.0);
  if (n <= 1) return out;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(a.nonzeros());
  const auto rp = a.row_ptr();
  const auto col = a.col();
  const auto val = a.values();
  for (std::size_t r = 1; r < n; ++r)
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k)
      if (col[k] >= 1)
        t.emplace_back(static_cast<int>(r - 1), static_cast<int>(col[k] - 1), val[k]);
  const auto m = static_cast<Eigen::Index>(n - 1);
  Eigen::SparseMatrix<double> s(m, m);
  s.setFromTriplets(t.begin(), t.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(s);
  if (ldlt.info() != Eigen::Success) throw SingularSystem("sparse LDL^T factorization failed");
  if ((ldlt.vectorD().array() <= 0.0).any())
    throw SingularSystem("pinned sparse system is not positive definite");
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data() + 1, m);
  const Eigen::VectorXd x = ldlt.solve(rhs);
  if (!all_finite(x)) throw SingularSystem("non-finite sparse solution");
  Eigen::Map<Eigen::VectorXd>(out.data() + 1, m) = x;
  return out;
}

std::vector<double> solve_spd_direct(const CsrMatrix& a, std::span<const double> b) {
  const auto n = static_cast<Eigen::Index>(a.rows());
  std::vector<double> out(a.rows(), 0.0);
  if (n == 0) return out;
  Eigen::LLT<Eigen::MatrixXd> llt(to_dense(a));
  if (llt.info() != Eigen::Success) throw SingularSystem("system is not positive definite");
  const Eigen::VectorXd x = llt.solve(Eigen::Map<const Eigen::VectorXd>(b.data(), n));
  Eigen::Map<Eigen::VectorXd>(out.data(), n) = x;
  return out;
}

}  // namespace netflow::linalg
