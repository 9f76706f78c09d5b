// Generalized Hermitian eigensolver for the assembled pencil (K, M).
//
// Sparse path: shift-invert restarted block Krylov.  The operator
// T = (K - sigma M)^{-1} M is M-self-adjoint; a block Krylov basis is built
// with full M-reorthogonalization, Rayleigh-Ritz is applied per restart, and
// the Ritz block seeds the next restart.  sigma below the spectrum uses a
// simplicial Cholesky factorization; an interior sigma uses sparse LU.
// Problems whose folded pencil is real run the same scheme in real
// arithmetic.  Dense full solve below `dense_cutoff` is both the fallback
// and the oracle the sparse path is tested against.
//
// Residual contract: ||K u - lambda M u|| / ||M u|| <= tol * residual_scale
// with residual_scale = max(1, max |lambda_wanted|, 1e-6 |K|_1/|M|_1); the
// last term is the roundoff floor of the shifted factorization.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bloch/fem.hpp"

namespace bloch {

struct SolverOptions {
  double tol = 1e-8;
  int max_restarts = 300;
  int dense_cutoff = 2000;
  std::uint64_t seed = 12345;
  bool want_vectors = true;
  // override for the automatic shift of solve_smallest (finite => used)
  double sigma = std::numeric_limits<double>::quiet_NaN();
};

struct EigenResult {
  std::vector<double> values;      // nondecreasing
  Eigen::MatrixXcd vectors;        // dim x m, M-orthonormal
  std::vector<double> residuals;   // ||K u - lambda M u|| / ||M u||
  std::vector<bool> degenerate;    // gap to a neighbour < 1e-9 * scale
  double residual_scale = 1.0;
  int iterations = 0;
  double wall_seconds = 0.0;
  bool converged = true;
};

namespace detail {

template <class Scalar>
using DenseMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using SpMat = Eigen::SparseMatrix<Scalar>;

inline void random_fill(DenseMat<double>& X, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = dist(rng);
}
inline void random_fill(DenseMat<cplx>& X, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      X(i, j) = cplx(dist(rng), dist(rng));
}

// M-orthonormalize the columns of X against the first q_cols columns of Q and
// against each other (two passes of block Gram-Schmidt + Cholesky QR).
template <class Scalar>
void m_orthonormalize(DenseMat<Scalar>& X, const SpMat<Scalar>& M,
                      const DenseMat<Scalar>* Q, Eigen::Index q_cols,
                      std::mt19937_64& rng) {
  const Eigen::Index b = X.cols();
  for (int attempt = 0; attempt < 3; ++attempt) {
    for (int pass = 0; pass < 2; ++pass) {
      DenseMat<Scalar> MX = M * X;
      if (Q && q_cols > 0) {
        DenseMat<Scalar> C = Q->leftCols(q_cols).adjoint() * MX;
        X.noalias() -= Q->leftCols(q_cols) * C;
        MX.noalias() = M * X;
      }
      DenseMat<Scalar> G = X.adjoint() * MX;
      G = Scalar(0.5) * (G + G.adjoint()).eval();
      Eigen::LLT<DenseMat<Scalar>> llt(G);
      if (llt.info() != Eigen::Success) {
        const double jitter = 1e-12 * std::abs(G.trace()) / std::max<double>(1, b);
        G.diagonal().array() += Scalar(jitter);
        llt.compute(G);
      }
      if (llt.info() != Eigen::Success) {
        random_fill(X, rng);  // rank collapse: reseed the whole block
        break;
      }
      llt.matrixU().template solveInPlace<Eigen::OnTheRight>(X);
      if (pass == 1) return;
    }
  }
  throw std::runtime_error("eig: M-orthonormalization breakdown");
}

struct CoreOutcome {
  std::vector<double> values;
  Eigen::MatrixXcd vectors;
  std::vector<double> residuals;
  int iterations = 0;
  bool converged = false;
};

// Restarted block Krylov on T = solve(M x), Rayleigh-Ritz in the (K, M)
// pencil.  `interior` selects eigenvalues nearest sigma instead of smallest.
template <class Scalar>
CoreOutcome block_krylov(const SpMat<Scalar>& K, const SpMat<Scalar>& M,
                         const std::function<DenseMat<Scalar>(const DenseMat<Scalar>&)>& apply_inv,
                         double sigma, int m, bool interior,
                         const SolverOptions& opt, double residual_scale_floor) {
  const Eigen::Index n = K.rows();
  const Eigen::Index b = std::min<Eigen::Index>(std::max(2 * m, 8), n);
  const int depth = std::max<int>(2, std::min<int>(6, static_cast<int>((96 + b - 1) / b)));
  const Eigen::Index s_cap = std::min<Eigen::Index>(b * depth, n);

  std::mt19937_64 rng(opt.seed);
  DenseMat<Scalar> X(n, b);
  random_fill(X, rng);
  m_orthonormalize<Scalar>(X, M, nullptr, 0, rng);

  DenseMat<Scalar> V(n, s_cap), W(n, s_cap);
  CoreOutcome out;

  for (int restart = 1; restart <= opt.max_restarts; ++restart) {
    Eigen::Index cols = 0;
    while (cols < s_cap) {
      const Eigen::Index take = std::min<Eigen::Index>(b, s_cap - cols);
      V.middleCols(cols, take) = X.leftCols(take);
      W.middleCols(cols, take) = apply_inv((M * X.leftCols(take)).eval());
      cols += take;
      if (cols < s_cap) {
        X = W.middleCols(cols - take, take);
        m_orthonormalize<Scalar>(X, M, &V, cols, rng);
      }
    }

    DenseMat<Scalar> MW = M * W;
    DenseMat<Scalar> H = V.adjoint() * MW;
    H = Scalar(0.5) * (H + H.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<DenseMat<Scalar>> es(H);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("eig: projected eigensolve failed");

    // Ritz values of T; inverse map to pencil eigenvalues.
    const Eigen::VectorXd nu = es.eigenvalues().real();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(nu.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index c) {
      return interior ? std::abs(nu[a]) > std::abs(nu[c]) : nu[a] > nu[c];
    });

    const Eigen::Index keep = std::min<Eigen::Index>(b, nu.size());
    DenseMat<Scalar> Y(H.rows(), keep);
    std::vector<double> lam(keep);
    for (Eigen::Index i = 0; i < keep; ++i) {
      Y.col(i) = es.eigenvectors().col(order[i]);
      const double v = nu[order[i]];
      lam[i] = (v != 0.0) ? sigma + 1.0 / v : std::numeric_limits<double>::infinity();
    }
    X.noalias() = V.leftCols(cols) * Y;

    // residuals of the m wanted Ritz pairs
    const Eigen::Index mw = std::min<Eigen::Index>(m, keep);
    DenseMat<Scalar> KZ = K * X.leftCols(mw);
    DenseMat<Scalar> MZ = M * X.leftCols(mw);
    double lam_scale = 0.0;
    for (Eigen::Index i = 0; i < mw; ++i)
      if (std::isfinite(lam[i])) lam_scale = std::max(lam_scale, std::abs(lam[i]));
    const double scale = std::max({1.0, lam_scale, residual_scale_floor});

    std::vector<double> res(mw);
    bool all_ok = true;
    for (Eigen::Index i = 0; i < mw; ++i) {
      const double num = (KZ.col(i) - Scalar(lam[i]) * MZ.col(i)).norm();
      const double den = MZ.col(i).norm();
      res[i] = num / den;
      if (!(res[i] <= opt.tol * scale)) all_ok = false;
    }

    out.iterations = restart;
    if (all_ok || restart == opt.max_restarts) {
      out.converged = all_ok;
      out.values.assign(lam.begin(), lam.begin() + mw);
      out.residuals = res;
      out.vectors = X.leftCols(mw).template cast<cplx>();
      return out;
    }
    m_orthonormalize<Scalar>(X, M, nullptr, 0, rng);
  }
  return out;  // unreachable
}

template <class Scalar>
CoreOutcome sparse_solve(const SpMat<Scalar>& K, const SpMat<Scalar>& M, int m,
                         double sigma, bool interior, const SolverOptions& opt,
                         double norm_ratio) {
  using Dense = DenseMat<Scalar>;
  const double floor = 1e-6 * norm_ratio;
  if (!interior) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      SpMat<Scalar> A = K - Scalar(sigma) * M;
      Eigen::SimplicialLDLT<SpMat<Scalar>> fac(A);
      if (fac.info() != Eigen::Success) {
        sigma *= 2.0;  // one retry at a doubled shift
        continue;
      }
      auto apply = [&fac](const Dense& B) { return Dense(fac.solve(B)); };
      return block_krylov<Scalar>(K, M, apply, sigma, m, false, opt, floor);
    }
    throw std::runtime_error("eig: shifted factorization failed twice");
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    SpMat<Scalar> A = K - Scalar(sigma) * M;
    Eigen::SparseLU<SpMat<Scalar>> fac;
    fac.compute(A);
    if (fac.info() != Eigen::Success) {
      sigma += 1e-6 * (1.0 + std::abs(sigma));  // nudge off the singular point
      continue;
    }
    auto apply = [&fac](const Dense& B) { return Dense(fac.solve(B)); };
    return block_krylov<Scalar>(K, M, apply, sigma, m, true, opt, floor);
  }
  throw std::runtime_error("eig: interior factorization failed twice");
}

inline double one_norm_ratio(const SparseC& K, const SparseC& M) {
  double nk = 0.0, nm = 0.0;
  for (int c = 0; c < K.outerSize(); ++c)
    for (SparseC::InnerIterator it(K, c); it; ++it) nk += std::abs(it.value());
  for (int c = 0; c < M.outerSize(); ++c)
    for (SparseC::InnerIterator it(M, c); it; ++it) nm += std::abs(it.value());
  return nm > 0.0 ? nk / nm : 1.0;
}

inline CoreOutcome dense_solve(const BlochProblem& P, int m, bool interior,
                               double sigma) {
  CoreOutcome out;
  Eigen::VectorXd vals;
  Eigen::MatrixXcd vecs;
  if (P.real_valued) {
    Eigen::MatrixXd Kd = Eigen::MatrixXd(P.K.real());
    Eigen::MatrixXd Md = Eigen::MatrixXd(P.M.real());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
        Kd, Md, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (ges.info() != Eigen::Success) throw std::runtime_error("eig: dense solve failed");
    vals = ges.eigenvalues();
    vecs = ges.eigenvectors().cast<cplx>();
  } else {
    Eigen::MatrixXcd Kd = Eigen::MatrixXcd(P.K);
    Eigen::MatrixXcd Md = Eigen::MatrixXcd(P.M);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> ges(
        Kd, Md, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (ges.info() != Eigen::Success) throw std::runtime_error("eig: dense solve failed");
    vals = ges.eigenvalues();
    vecs = ges.eigenvectors();
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(vals.size()));
  std::iota(order.begin(), order.end(), 0);
  if (interior)
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index c) {
      return std::abs(vals[a] - sigma) < std::abs(vals[c] - sigma);
    });
  const Eigen::Index mw = std::min<Eigen::Index>(m, vals.size());
  out.values.resize(mw);
  out.vectors.resize(vecs.rows(), mw);
  out.residuals.resize(mw);
  for (Eigen::Index i = 0; i < mw; ++i) {
    out.values[i] = vals[order[i]];
    out.vectors.col(i) = vecs.col(order[i]);
    const Eigen::VectorXcd r =
        P.K * out.vectors.col(i) - cplx(out.values[i]) * (P.M * out.vectors.col(i));
    out.residuals[i] = r.norm() / (P.M * out.vectors.col(i)).norm();
  }
  out.iterations = 0;
  out.converged = true;
  return out;
}

inline EigenResult finalize(const BlochProblem& P, CoreOutcome&& core, int m,
                            const SolverOptions& opt, double norm_ratio,
                            std::chrono::steady_clock::time_point t0) {
  const Eigen::Index mw = std::min<Eigen::Index>(m, core.values.size());
  double lam_scale = 0.0;
  for (Eigen::Index i = 0; i < mw; ++i)
    lam_scale = std::max(lam_scale, std::abs(core.values[i]));
  const double scale = std::max({1.0, lam_scale, 1e-6 * norm_ratio});

  // ascending by value; near-ties ordered by residual
  std::vector<Eigen::Index> order(static_cast<std::size_t>(mw));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index c) {
    if (std::abs(core.values[a] - core.values[c]) > 1e-12 * scale)
      return core.values[a] < core.values[c];
    return core.residuals[a] < core.residuals[c];
  });

  EigenResult r;
  r.values.resize(mw);
  r.residuals.resize(mw);
  r.degenerate.assign(mw, false);
  if (opt.want_vectors) r.vectors.resize(core.vectors.rows(), mw);
  for (Eigen::Index i = 0; i < mw; ++i) {
    r.values[i] = core.values[order[i]];
    r.residuals[i] = core.residuals[order[i]];
    if (opt.want_vectors) r.vectors.col(i) = core.vectors.col(order[i]);
  }
  for (Eigen::Index i = 0; i + 1 < mw; ++i)
    if (std::abs(r.values[i + 1] - r.values[i]) < 1e-9 * scale)
      r.degenerate[i] = r.degenerate[i + 1] = true;
  r.residual_scale = scale;
  r.iterations = core.iterations;
  r.converged = core.converged;
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline CoreOutcome dispatch_sparse(const BlochProblem& P, int m, double sigma,
                                   bool interior, const SolverOptions& opt,
                                   double norm_ratio) {
  if (P.real_valued) {
    SpMat<double> Kr = P.K.real();
    SpMat<double> Mr = P.M.real();
    return sparse_solve<double>(Kr, Mr, m, sigma, interior, opt, norm_ratio);
  }
  return sparse_solve<cplx>(P.K, P.M, m, sigma, interior, opt, norm_ratio);
}

}  // namespace detail

// Full dense solve (oracle / fallback path).
inline EigenResult solve_dense(const BlochProblem& problem, int m,
                               SolverOptions opt = {}) {
  if (m < 1 || m > problem.dim()) throw std::invalid_argument("eig: bad m");
  const auto t0 = std::chrono::steady_clock::now();
  const double ratio = detail::one_norm_ratio(problem.K, problem.M);
  return detail::finalize(problem, detail::dense_solve(problem, m, false, 0.0), m,
                          opt, ratio, t0);
}

// The m smallest eigenpairs of K u = lambda M u.
inline EigenResult solve_smallest(const BlochProblem& problem, int m,
                                  SolverOptions opt = {}) {
  if (m < 1 || m > problem.dim()) throw std::invalid_argument("eig: bad m");
  const auto t0 = std::chrono::steady_clock::now();
  const double ratio = detail::one_norm_ratio(problem.K, problem.M);
  if (problem.dim() <= opt.dense_cutoff)
    return detail::finalize(problem, detail::dense_solve(problem, m, false, 0.0),
                            m, opt, ratio, t0);
  const double sigma = std::isfinite(opt.sigma) ? opt.sigma : -1e-3 * ratio;
  return detail::finalize(problem,
                          detail::dispatch_sparse(problem, m, sigma, false, opt, ratio),
                          m, opt, ratio, t0);
}

// The m eigenvalues nearest an interior target sigma.
inline EigenResult solve_nearest(const BlochProblem& problem, double sigma, int m,
                                 SolverOptions opt = {}) {
  if (m < 1 || m > problem.dim()) throw std::invalid_argument("eig: bad m");
  const auto t0 = std::chrono::steady_clock::now();
  const double ratio = detail::one_norm_ratio(problem.K, problem.M);
  if (problem.dim() <= opt.dense_cutoff)
    return detail::finalize(problem, detail::dense_solve(problem, m, true, sigma),
                            m, opt, ratio, t0);
  return detail::finalize(problem,
                          detail::dispatch_sparse(problem, m, sigma, true, opt, ratio),
                          m, opt, ratio, t0);
}

struct VerifyReport {
  double max_residual = 0.0;
  double max_orthonormality_error = 0.0;
  std::vector<std::string> violations;
  bool ok = true;
};

// Recomputes residuals and M-orthonormality from scratch.
inline VerifyReport verify_result(const BlochProblem& problem,
                                  const EigenResult& result,
                                  double tol = 1e-8) {
  VerifyReport rep;
  if (result.vectors.cols() == 0) {
    rep.violations.push_back("no eigenvectors stored");
    rep.ok = false;
    return rep;
  }
  const Eigen::Index m = result.vectors.cols();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXcd Mu = problem.M * result.vectors.col(i);
    const Eigen::VectorXcd r =
        problem.K * result.vectors.col(i) - cplx(result.values[i]) * Mu;
    const double res = r.norm() / Mu.norm();
    rep.max_residual = std::max(rep.max_residual, res);
    if (!(res <= tol * result.residual_scale))
      rep.violations.push_back("residual " + std::to_string(res) + " at index " +
                               std::to_string(i));
  }
  const Eigen::MatrixXcd G =
      result.vectors.adjoint() * (problem.M * result.vectors);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double err = std::abs(G(i, j) - (i == j ? 1.0 : 0.0));
      rep.max_orthonormality_error = std::max(rep.max_orthonormality_error, err);
      if (err > 1e-8)
        rep.violations.push_back("orthonormality error " + std::to_string(err) +
                                 " at (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
    }
  rep.ok = rep.violations.empty();
  return rep;
}

}  // namespace bloch
