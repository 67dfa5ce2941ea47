#pragma once

#include <Eigen/Dense>
#include <istream>
#include <ostream>
#include <vector>

#include "matu/embedding.hpp"
#include "matu/trajectory.hpp"

namespace matu {

enum class AgreementSource { external_file, cosine_proxy };

// Symmetric pairwise-agreement matrix: entries in [0,1], unit diagonal.
struct AgreementMatrix {
  Eigen::MatrixXd W;
  AgreementSource source = AgreementSource::cosine_proxy;
};

// Clipped-cosine proxy over unit vectors: W[a][b] = max(0, cos(v_a, v_b)),
// diagonal forced to 1.
AgreementMatrix agreement_from_embeddings(
    const std::vector<EmbeddingVector>& vectors);

// Σ_k max(0, 1 − λ_k) over the eigenvalues of the symmetric normalized
// Laplacian L = I − D^{-1/2} W D^{-1/2}. Full agreement scores 1,
// no agreement at all scores m.
double eigv_agreement_score(const AgreementMatrix& agr);

// CSV with header line "# agreement m=<int>" followed by m rows of m floats.
// Asymmetric input is averaged with its transpose (with a warning), entries
// are clipped to [0,1], and the diagonal is forced to 1.
AgreementMatrix load_agreement_csv(std::istream& in,
                                   std::vector<Diagnostic>* warnings = nullptr);
void save_agreement_csv(std::ostream& out, const AgreementMatrix& agr);

}  // namespace matu
