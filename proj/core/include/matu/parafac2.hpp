#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "matu/tensor.hpp"
#include "matu/trajectory.hpp"

namespace matu {

enum class InitKind { svd, random };

struct FitConfig {
  int rank = 1;
  int max_iters = 500;
  double rel_tol = 1e-8;
  int restarts = 3;
  std::uint64_t seed = 0;
  InitKind init = InitKind::svd;
};

// Slice model: X_i ≈ Q_i · H · diag(S.row(i)) · Vᵀ with Q_i column-orthonormal
// whenever the slice has at least `rank` rows.
struct Parafac2Factors {
  std::vector<Eigen::MatrixXd> Q;  // per slice, T_i × R
  Eigen::MatrixXd H;               // R × R
  Eigen::MatrixXd V;               // d × R
  Eigen::MatrixXd S;               // n_slices × R, row i = s_i

  int rank() const { return static_cast<int>(H.cols()); }
};

struct FitResult {
  Parafac2Factors factors;
  double loss_abs = 0.0;  // ‖X − X̂‖_F
  double loss_rel = 0.0;  // loss_abs / ‖X‖_F, 0 when ‖X‖ = 0
  int iterations = 0;
  bool converged = false;
  int restart_chosen = 0;
  // loss_abs trajectory of the chosen restart, index 0 = loss at init
  std::vector<double> loss_history;
  // one trajectory per start, in the order the starts were run
  std::vector<std::vector<double>> restart_histories;
  std::vector<Diagnostic> diagnostics;
};

// Deterministic starting point. svd: V = top-R right singular vectors of the
// vertically stacked slices, H = I, S = ones, Q_i = orthonormalized X_i·V.
// random: seeded standard-normal factors with orthonormalized Q_i.
Parafac2Factors init_factors(const RaggedTensor& t, const FitConfig& cfg);

// Alternating least squares with best-of-restarts (restart 0 uses cfg.init,
// the rest are random with seeds derived from cfg.seed). When warm_start is
// given, its factors are padded to cfg.rank and run as one extra start, which
// makes best losses non-increasing in rank across chained calls.
FitResult fit(const RaggedTensor& t, const FitConfig& cfg,
              const Parafac2Factors* warm_start = nullptr);

// (loss_abs, loss_rel) of the given factors against the tensor.
std::pair<double, double> reconstruction_loss(const RaggedTensor& t,
                                              const Parafac2Factors& f);

// Model slice i as a dense matrix.
Eigen::MatrixXd slice_reconstruction(const Parafac2Factors& f, std::size_t i);

// Extends factors to a higher rank without changing any reconstruction:
// new S columns are zero, Q_i gains orthonormal completion columns where the
// slice height allows, V gains unit columns, H grows block-diagonally.
Parafac2Factors pad_factors(const Parafac2Factors& f, int new_rank,
                            std::uint64_t seed);

// Binary dump of one factor set (little-endian, CRC-framed entries).
void save_factors_file(const Parafac2Factors& f, const std::string& path);
Parafac2Factors load_factors_file(const std::string& path);

}  // namespace matu
