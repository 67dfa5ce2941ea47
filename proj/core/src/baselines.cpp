#include "matu/baselines.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "matu/errors.hpp"
#include "matu/scorer.hpp"

namespace matu {

AgreementMatrix agreement_from_embeddings(
    const std::vector<EmbeddingVector>& vectors) {
  if (vectors.size() < 2)
    throw DataError("InsufficientResponses",
                    "agreement needs at least 2 vectors, got " +
                        std::to_string(vectors.size()));
  const auto m = static_cast<Eigen::Index>(vectors.size());
  const Eigen::Index d = vectors.front().values.size();
  for (const auto& v : vectors) {
    if (v.values.size() != d)
      throw DimensionMismatch("agreement vectors have mixed dimensions (" +
                              std::to_string(v.values.size()) + " vs " +
                              std::to_string(d) + ")");
  }
  AgreementMatrix agr;
  agr.source = AgreementSource::cosine_proxy;
  agr.W = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a + 1; b < m; ++b) {
      const double cos = vectors[static_cast<std::size_t>(a)].values.dot(
          vectors[static_cast<std::size_t>(b)].values);
      const double w = std::clamp(cos, 0.0, 1.0);
      agr.W(a, b) = w;
      agr.W(b, a) = w;
    }
  }
  return agr;
}

double eigv_agreement_score(const AgreementMatrix& agr) {
  const Eigen::Index m = agr.W.rows();
  if (m < 1 || agr.W.cols() != m)
    throw ShapeMismatch("agreement matrix must be square and non-empty");
  const Eigen::VectorXd degree = agr.W.rowwise().sum();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(degree(i) > 0))
      throw SingularDegree("row " + std::to_string(i) +
                           " of the agreement matrix has zero degree");
  }
  const Eigen::VectorXd dinv_sqrt = degree.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd lap =
      Eigen::MatrixXd::Identity(m, m) -
      dinv_sqrt.asDiagonal() * agr.W * dinv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap);
  if (eig.info() != Eigen::Success)
    throw NumericalBreakdown("Laplacian eigendecomposition failed");
  double score = 0.0;
  for (Eigen::Index k = 0; k < m; ++k)
    score += std::max(0.0, 1.0 - eig.eigenvalues()(k));
  return score;
}

AgreementMatrix load_agreement_csv(std::istream& in,
                                   std::vector<Diagnostic>* warnings) {
  std::string header;
  if (!std::getline(in, header))
    throw DataError("MalformedAgreementFile", "empty agreement file");
  int m = 0;
  if (std::sscanf(header.c_str(), "# agreement m=%d", &m) != 1 || m < 1)
    throw DataError("MalformedAgreementFile",
                    "expected header '# agreement m=<int>', got: " + header);

  AgreementMatrix agr;
  agr.source = AgreementSource::external_file;
  agr.W.resize(m, m);
  for (int r = 0; r < m; ++r) {
    std::string line;
    if (!std::getline(in, line))
      throw DataError("MalformedAgreementFile",
                      "expected " + std::to_string(m) + " rows, file ends at " +
                          std::to_string(r));
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < m; ++c) {
      if (!std::getline(ss, cell, ','))
        throw DataError("MalformedAgreementFile",
                        "row " + std::to_string(r) + " has fewer than " +
                            std::to_string(m) + " columns");
      try {
        agr.W(r, c) = std::stod(cell);
      } catch (const std::exception&) {
        throw DataError("MalformedAgreementFile",
                        "row " + std::to_string(r) + " column " +
                            std::to_string(c) + " is not a number: " + cell);
      }
    }
  }

  const double asym = (agr.W - agr.W.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) {
    if (warnings)
      warnings->push_back(
          {"AsymmetricAgreement",
           "matrix symmetrized by averaging with its transpose (max "
           "asymmetry " +
               format_double(asym) + ")"});
    agr.W = ((agr.W + agr.W.transpose()) / 2).eval();
  }
  bool clipped = false, diag_fixed = false;
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const double w = std::clamp(agr.W(r, c), 0.0, 1.0);
      if (w != agr.W(r, c)) clipped = true;
      agr.W(r, c) = w;
    }
    if (std::abs(agr.W(r, r) - 1.0) > 1e-9) diag_fixed = true;
    agr.W(r, r) = 1.0;
  }
  if (warnings && clipped)
    warnings->push_back({"AgreementClipped", "entries clipped into [0, 1]"});
  if (warnings && diag_fixed)
    warnings->push_back({"AgreementDiagonal", "diagonal forced to 1"});
  return agr;
}

void save_agreement_csv(std::ostream& out, const AgreementMatrix& agr) {
  const Eigen::Index m = agr.W.rows();
  out << "# agreement m=" << m << '\n';
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) {
      if (c) out << ',';
      out << format_double(agr.W(r, c));
    }
    out << '\n';
  }
}

}  // namespace matu
