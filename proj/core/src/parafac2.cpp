#include "matu/parafac2.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binio.hpp"
#include "matu/errors.hpp"
#include "matu/rng.hpp"

namespace matu {
namespace {

void validate_config(const RaggedTensor& t, const FitConfig& cfg) {
  if (t.slices.empty()) throw EmptyTensor("cannot fit an empty tensor");
  if (cfg.rank < 1 || cfg.rank > t.d) {
    throw InfeasibleRank("rank " + std::to_string(cfg.rank) +
                         " outside [1, d=" + std::to_string(t.d) + "]");
  }
  if (cfg.max_iters < 1 || cfg.restarts < 1 || cfg.rel_tol < 0) {
    throw DataError("InvalidConfig",
                    "max_iters and restarts must be >= 1, rel_tol >= 0");
  }
}

// Closest matrix with orthonormal columns (rows, when the matrix is wide):
// the polar factor U·Wᵀ of the thin SVD.
Eigen::MatrixXd polar_orthonormal(const Eigen::MatrixXd& m) {
  if (!m.allFinite())
    throw NumericalBreakdown("non-finite values entering SVD");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU |
                                               Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

// k extra orthonormal columns orthogonal to span(base), drawn deterministically.
Eigen::MatrixXd orthonormal_completion(const Eigen::MatrixXd& base, int k,
                                       SeededRng& rng) {
  const Eigen::Index rows = base.rows();
  Eigen::MatrixXd out(rows, k);
  int built = 0;
  int attempts = 0;
  while (built < k) {
    if (++attempts > 64 * k)
      throw NumericalBreakdown("orthonormal completion failed to converge");
    Eigen::VectorXd g = rng.normal_vector(rows);
    g -= base * (base.transpose() * g);
    if (built > 0) {
      auto c = out.leftCols(built);
      g -= c * (c.transpose() * g);
    }
    const double n = g.norm();
    if (n < 1e-8) continue;  // fell into the existing span; redraw
    out.col(built++) = g / n;
  }
  return out;
}

double loss_abs_of(const RaggedTensor& t, const Parafac2Factors& f) {
  double sq = 0.0;
  for (std::size_t i = 0; i < t.slices.size(); ++i)
    sq += (t.slices[i].rows - slice_reconstruction(f, i)).squaredNorm();
  return std::sqrt(sq);
}

struct StartOutcome {
  Parafac2Factors factors;
  double loss_abs = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

// One ALS run from the given starting factors. Per iteration: (a) Procrustes
// update of every Q_i, (b) one least-squares pass over H, V, S on the
// projected slices Y_i = Q_iᵀX_i, (c) stop when the relative change of the
// loss drops below rel_tol. Returns the best iterate seen, not the last one:
// on slices shorter than the rank the Procrustes step is only a heuristic,
// and keeping the argmin makes the returned loss never exceed the start's.
StartOutcome run_als(const RaggedTensor& t, const FitConfig& cfg,
                     Parafac2Factors f) {
  const int R = cfg.rank;
  const auto n = static_cast<Eigen::Index>(t.slices.size());

  StartOutcome out;
  out.history.push_back(loss_abs_of(t, f));
  Parafac2Factors best_f = f;
  double best_loss = out.history.back();

  // Below this the residual is double-precision noise on this tensor; the
  // relative-change test cannot fire reliably there, so stop outright.
  const double loss_floor = 1e-13 * frobenius_norm(t);

  std::vector<Eigen::MatrixXd> Y(t.slices.size());
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    // (a) Q_i = polar factor of X_i·V·diag(s_i)·Hᵀ — the orthonormal basis
    // minimizing the slice residual at fixed H, V, S.
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::MatrixXd m = t.slices[static_cast<std::size_t>(i)].rows *
                                f.V * f.S.row(i).asDiagonal() *
                                f.H.transpose();
      f.Q[static_cast<std::size_t>(i)] = polar_orthonormal(m);
      Y[static_cast<std::size_t>(i)] =
          f.Q[static_cast<std::size_t>(i)].transpose() *
          t.slices[static_cast<std::size_t>(i)].rows;
    }

    // (b) coupled least-squares updates on the R × d × n stack {Y_i}.
    // Gram matrices can be singular mid-stream; the complete orthogonal
    // decomposition still solves the (always consistent) normal equations
    // exactly, which keeps every update a true block minimizer.
    Eigen::MatrixXd gram_v = f.V.transpose() * f.V;
    Eigen::MatrixXd gram_s = f.S.transpose() * f.S;

    Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(R, R);
    for (Eigen::Index i = 0; i < n; ++i)
      m1 += Y[static_cast<std::size_t>(i)] * f.V * f.S.row(i).asDiagonal();
    Eigen::MatrixXd g1 = gram_v.cwiseProduct(gram_s);
    f.H = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(g1)
              .solve(m1.transpose())
              .transpose();

    Eigen::MatrixXd gram_h = f.H.transpose() * f.H;
    Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(t.d, R);
    for (Eigen::Index i = 0; i < n; ++i)
      m2 += Y[static_cast<std::size_t>(i)].transpose() * f.H *
            f.S.row(i).asDiagonal();
    Eigen::MatrixXd g2 = gram_h.cwiseProduct(gram_s);
    f.V = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(g2)
              .solve(m2.transpose())
              .transpose();

    gram_v = f.V.transpose() * f.V;
    Eigen::MatrixXd g3 = gram_h.cwiseProduct(gram_v);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod3(g3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd rhs =
          (f.H.transpose() * Y[static_cast<std::size_t>(i)] * f.V).diagonal();
      f.S.row(i) = cod3.solve(rhs).transpose();
    }

    if (!f.H.allFinite() || !f.V.allFinite() || !f.S.allFinite())
      throw NumericalBreakdown("factors became non-finite during ALS");

    const double cur = loss_abs_of(t, f);
    const double prev = out.history.back();
    out.history.push_back(cur);
    out.iterations = iter;
    if (cur < best_loss) {
      best_loss = cur;
      best_f = f;
    }
    const double rel =
        prev > 0 ? std::abs(prev - cur) / prev : (cur == 0 ? 0.0 : 1.0);
    if (rel < cfg.rel_tol || cur <= loss_floor) {
      out.converged = true;
      break;
    }
  }

  out.loss_abs = best_loss;
  out.factors = std::move(best_f);
  return out;
}

Parafac2Factors random_factors(const RaggedTensor& t, int rank,
                               std::uint64_t seed) {
  SeededRng rng(seed);
  Parafac2Factors f;
  f.H = rng.normal_matrix(rank, rank);
  f.V = rng.normal_matrix(t.d, rank);
  f.S = rng.normal_matrix(static_cast<Eigen::Index>(t.slices.size()), rank);
  f.Q.reserve(t.slices.size());
  for (const auto& s : t.slices)
    f.Q.push_back(polar_orthonormal(rng.normal_matrix(s.rows.rows(), rank)));
  return f;
}

void put_matrix(binio::EntryWriter& e, const Eigen::MatrixXd& m) {
  e.u32(static_cast<std::uint32_t>(m.rows()));
  e.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) e.f64(m(r, c));
}

Eigen::MatrixXd get_matrix(binio::EntryReader& e) {
  const std::uint32_t rows = e.u32();
  const std::uint32_t cols = e.u32();
  if (rows > (1u << 24) || cols > (1u << 24))
    throw CorruptCacheFile(e.offset(), "implausible matrix shape");
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = e.f64();
  return m;
}

constexpr char kFactorsMagic[8] = {'M', 'A', 'T', 'U', 'F', 'A', 'C', 'T'};
constexpr std::uint32_t kFactorsVersion = 1;

}  // namespace

Eigen::MatrixXd slice_reconstruction(const Parafac2Factors& f, std::size_t i) {
  return f.Q[i] * f.H * f.S.row(static_cast<Eigen::Index>(i)).asDiagonal() *
         f.V.transpose();
}

Parafac2Factors init_factors(const RaggedTensor& t, const FitConfig& cfg) {
  validate_config(t, cfg);
  const int R = cfg.rank;
  if (cfg.init == InitKind::random) return random_factors(t, R, cfg.seed);

  // SVD start: V spans the top right-singular directions of the stacked
  // slices; H = I and S = 1 so the first iteration sees an undistorted V.
  Eigen::Index total_rows = 0;
  for (const auto& s : t.slices) total_rows += s.rows.rows();
  Eigen::MatrixXd stacked(total_rows, t.d);
  Eigen::Index at = 0;
  for (const auto& s : t.slices) {
    stacked.middleRows(at, s.rows.rows()) = s.rows;
    at += s.rows.rows();
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalBreakdown("SVD of the stacked tensor failed");

  Parafac2Factors f;
  f.V.resize(t.d, R);
  const auto have = std::min<Eigen::Index>(svd.matrixV().cols(), R);
  f.V.leftCols(have) = svd.matrixV().leftCols(have);
  if (have < R) {
    SeededRng rng(derive_seed(cfg.seed, "svd-completion"));
    f.V.rightCols(R - have) =
        orthonormal_completion(f.V.leftCols(have), static_cast<int>(R - have),
                               rng);
  }
  f.H = Eigen::MatrixXd::Identity(R, R);
  f.S = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(t.slices.size()), R);
  f.Q.reserve(t.slices.size());
  for (const auto& s : t.slices) f.Q.push_back(polar_orthonormal(s.rows * f.V));
  return f;
}

Parafac2Factors pad_factors(const Parafac2Factors& f, int new_rank,
                            std::uint64_t seed) {
  const int r0 = f.rank();
  if (new_rank < r0)
    throw ShapeMismatch("cannot pad factors of rank " + std::to_string(r0) +
                        " down to " + std::to_string(new_rank));
  if (new_rank == r0) return f;
  const int extra = new_rank - r0;
  SeededRng rng(derive_seed(seed, "pad"));

  Parafac2Factors g;
  g.H = Eigen::MatrixXd::Zero(new_rank, new_rank);
  g.H.topLeftCorner(r0, r0) = f.H;
  g.H.bottomRightCorner(extra, extra).setIdentity();

  g.V.resize(f.V.rows(), new_rank);
  g.V.leftCols(r0) = f.V;
  for (int c = 0; c < extra; ++c) {
    Eigen::VectorXd u = rng.normal_vector(f.V.rows());
    g.V.col(r0 + c) = u / u.norm();
  }

  // New weight columns are zero, so every slice reconstruction is unchanged.
  g.S = Eigen::MatrixXd::Zero(f.S.rows(), new_rank);
  g.S.leftCols(r0) = f.S;

  g.Q.reserve(f.Q.size());
  for (const auto& q : f.Q) {
    Eigen::MatrixXd padded(q.rows(), new_rank);
    padded.leftCols(r0) = q;
    const auto room = q.rows() - r0;  // orthonormal columns still available
    const auto fill = std::min<Eigen::Index>(std::max<Eigen::Index>(room, 0),
                                             extra);
    if (fill > 0)
      padded.middleCols(r0, fill) =
          orthonormal_completion(q, static_cast<int>(fill), rng);
    if (fill < extra) padded.rightCols(extra - fill).setZero();
    g.Q.push_back(std::move(padded));
  }
  return g;
}

FitResult fit(const RaggedTensor& t, const FitConfig& cfg,
              const Parafac2Factors* warm_start) {
  validate_config(t, cfg);

  std::vector<Diagnostic> diagnostics;
  for (std::size_t i = 0; i < t.slices.size(); ++i) {
    const auto& s = t.slices[i];
    if (s.rows.rows() < cfg.rank) {
      diagnostics.push_back(
          {"ThinSlice", "slice " + std::to_string(i) + " (run " +
                            std::to_string(s.run_index) + ", agent " +
                            s.agent_id + ") has " +
                            std::to_string(s.rows.rows()) + " rows < rank " +
                            std::to_string(cfg.rank) +
                            "; its basis is a partial isometry"});
    }
  }

  const double norm_x = frobenius_norm(t);

  FitResult best;
  best.loss_abs = std::numeric_limits<double>::infinity();
  int n_starts = cfg.restarts + (warm_start ? 1 : 0);
  for (int k = 0; k < n_starts; ++k) {
    Parafac2Factors start;
    if (warm_start && k == n_starts - 1) {
      start = pad_factors(*warm_start, cfg.rank, derive_seed(cfg.seed, "warm"));
    } else if (k == 0) {
      start = init_factors(t, cfg);
    } else {
      start = random_factors(t, cfg.rank,
                             derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
    }
    StartOutcome outcome = run_als(t, cfg, std::move(start));
    best.restart_histories.push_back(outcome.history);
    if (outcome.loss_abs < best.loss_abs) {
      best.loss_abs = outcome.loss_abs;
      best.factors = std::move(outcome.factors);
      best.iterations = outcome.iterations;
      best.converged = outcome.converged;
      best.restart_chosen = k;
      best.loss_history = std::move(outcome.history);
    }
  }

  best.loss_rel = norm_x > 0 ? best.loss_abs / norm_x
                             : (best.loss_abs == 0 ? 0.0 : 1.0);
  best.diagnostics = std::move(diagnostics);
  return best;
}

std::pair<double, double> reconstruction_loss(const RaggedTensor& t,
                                              const Parafac2Factors& f) {
  if (f.Q.size() != t.slices.size())
    throw ShapeMismatch("factor set has " + std::to_string(f.Q.size()) +
                        " bases for " + std::to_string(t.slices.size()) +
                        " slices");
  const int R = f.rank();
  if (f.V.rows() != t.d || f.H.rows() != R || f.V.cols() != R ||
      f.S.cols() != R ||
      f.S.rows() != static_cast<Eigen::Index>(t.slices.size()))
    throw ShapeMismatch("factor shapes do not match the tensor");
  for (std::size_t i = 0; i < t.slices.size(); ++i) {
    if (f.Q[i].rows() != t.slices[i].rows.rows() || f.Q[i].cols() != R)
      throw ShapeMismatch("basis " + std::to_string(i) +
                          " does not match its slice");
  }
  const double abs = loss_abs_of(t, f);
  const double norm_x = frobenius_norm(t);
  const double rel = norm_x > 0 ? abs / norm_x : (abs == 0 ? 0.0 : 1.0);
  return {abs, rel};
}

void save_factors_file(const Parafac2Factors& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("IoError", "cannot write factors file " + path);
  binio::write_header(out, kFactorsMagic, kFactorsVersion, f.Q.size());
  {
    binio::EntryWriter e;
    put_matrix(e, f.H);
    put_matrix(e, f.V);
    put_matrix(e, f.S);
    e.finish(out);
  }
  for (const auto& q : f.Q) {
    binio::EntryWriter e;
    put_matrix(e, q);
    e.finish(out);
  }
  if (!out) throw DataError("IoError", "short write to factors file " + path);
}

Parafac2Factors load_factors_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCacheFile(0, "cannot open factors file " + path);
  const std::uint64_t n_slices =
      binio::read_header(in, kFactorsMagic, kFactorsVersion);
  Parafac2Factors f;
  {
    binio::EntryReader e(in);
    f.H = get_matrix(e);
    f.V = get_matrix(e);
    f.S = get_matrix(e);
    e.verify_crc();
  }
  f.Q.reserve(n_slices);
  for (std::uint64_t i = 0; i < n_slices; ++i) {
    binio::EntryReader e(in);
    f.Q.push_back(get_matrix(e));
    e.verify_crc();
  }
  return f;
}

}  // namespace matu
