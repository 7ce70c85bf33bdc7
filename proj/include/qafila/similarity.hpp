#ifndef QAFILA_SIMILARITY_HPP
#define QAFILA_SIMILARITY_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qafila {

class SimilarityError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for zero-norm inputs; similarity is undefined there, never 0.
class UndefinedSimilarity : public SimilarityError {
public:
    using SimilarityError::SimilarityError;
};

/// dot(u, v) / (|u| |v|) for any dense Eigen vector expressions of equal size.
template <class DerivedU, class DerivedV>
typename DerivedU::RealScalar cosine_similarity(const Eigen::MatrixBase<DerivedU>& u,
                                                const Eigen::MatrixBase<DerivedV>& v) {
    static_assert(std::is_same_v<typename DerivedU::Scalar, typename DerivedV::Scalar>,
                  "cosine_similarity: scalar types must match");
    if (u.size() != v.size())
        throw SimilarityError("dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    const auto nu = u.norm();
    const auto nv = v.norm();
    if (nu == 0 || nv == 0) throw UndefinedSimilarity("cosine similarity undefined for a zero vector");
    return u.dot(v) / (nu * nv);
}

}  // namespace qafila

#endif  // QAFILA_SIMILARITY_HPP
