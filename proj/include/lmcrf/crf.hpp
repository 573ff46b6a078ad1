/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/crf.hpp
 *
 * Copyright 2026 The lmcrf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#ifndef LMCRF_CRF_HPP
#define LMCRF_CRF_HPP

#include "lmcrf/cholesky.hpp"
#include "lmcrf/error.hpp"
#include "lmcrf/model.hpp"

#include "Eigen/Core"
#include "Eigen/LU"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace lmcrf {

/// Minimum eigenvalue every unary covariance must have.
inline constexpr double kCovarianceFloor = 1e-8;

/// Tolerance on |S_01 - S_10| for a unary covariance to count as symmetric.
inline constexpr double kSymmetryTolerance = 1e-12;

/// Smallest eigenvalue of a symmetric 2x2 matrix.
inline double min_eigenvalue(const Eigen::Matrix2d& m)
{
    const double half_trace = 0.5 * (m(0, 0) + m(1, 1));
    const double half_gap = 0.5 * (m(0, 0) - m(1, 1));
    const double off = 0.5 * (m(0, 1) + m(1, 0));
    return half_trace - std::hypot(half_gap, off);
}

/// Per-landmark Gaussian predictions: means in normalized crop coordinates and 2x2 covariances.
struct UnaryPrediction
{
    std::vector<Eigen::Vector2d> means;
    std::vector<Eigen::Matrix2d> covariances;

    std::size_t size() const { return means.size(); }

    /// Stacked means (x0, y0, x1, y1, ...).
    Eigen::VectorXd stacked_means() const
    {
        Eigen::VectorXd stacked(2 * static_cast<Eigen::Index>(means.size()));
        for (std::size_t i = 0; i < means.size(); ++i) {
            stacked.segment<2>(2 * static_cast<Eigen::Index>(i)) = means[i];
        }
        return stacked;
    }
};

/**
 * Checks the structural invariants: matching sizes, finite values, symmetric
 * covariances (InvalidArgument), and the eigenvalue floor (NumericalError).
 */
inline void validate(const UnaryPrediction& unaries)
{
    detail::require(unaries.means.size() == unaries.covariances.size(),
                    "UnaryPrediction: means and covariances differ in length");
    for (std::size_t i = 0; i < unaries.size(); ++i) {
        const auto& sigma = unaries.covariances[i];
        detail::require(unaries.means[i].allFinite() && sigma.allFinite(),
                        "UnaryPrediction: non-finite value at landmark " + std::to_string(i));
        detail::require(std::abs(sigma(0, 1) - sigma(1, 0)) <= kSymmetryTolerance,
                        "UnaryPrediction: covariance " + std::to_string(i) + " is not symmetric");
        if (min_eigenvalue(sigma) < kCovarianceFloor) {
            throw NumericalError("UnaryPrediction: covariance " + std::to_string(i) +
                                 " has an eigenvalue below the floor");
        }
    }
}

/**
 * Adds (floor + max(0, -lambda_min)) * I to every covariance whose smallest
 * eigenvalue is below the floor. Returns the indices that were changed so the
 * caller can report them.
 */
inline std::vector<std::size_t> apply_covariance_floor(UnaryPrediction& unaries, double floor = kCovarianceFloor)
{
    std::vector<std::size_t> changed;
    for (std::size_t i = 0; i < unaries.covariances.size(); ++i) {
        auto& sigma = unaries.covariances[i];
        const double lambda_min = min_eigenvalue(sigma);
        if (lambda_min < floor) {
            const Eigen::Matrix2d original = sigma;
            double shift = floor + std::max(0.0, -lambda_min);
            sigma = original + shift * Eigen::Matrix2d::Identity();
            // rounding can leave the shifted eigenvalue a few ulps short of the floor
            while (min_eigenvalue(sigma) < floor) {
                shift *= 1.0 + 1e-12;
                sigma = original + shift * Eigen::Matrix2d::Identity();
            }
            changed.push_back(i);
        }
    }
    return changed;
}

/**
 * Pairwise coupling matrices C_ij = L_ij L_ij^T for every unordered landmark
 * pair, stored through their lower-triangular factors. Pairs are kept in
 * lexicographic order (0,1), (0,2), ..., (N-2,N-1).
 *
 * Factors are canonicalized on write: the upper entry is zeroed and a column
 * with negative diagonal is negated, which leaves C_ij unchanged.
 */
class PairwiseSet
{
public:
    PairwiseSet() = default;

    static PairwiseSet zeros(std::size_t num_landmarks)
    {
        return PairwiseSet(num_landmarks, Eigen::Matrix2d::Zero());
    }

    /// Every pair gets the same factor.
    static PairwiseSet uniform(std::size_t num_landmarks, const Eigen::Matrix2d& factor)
    {
        return PairwiseSet(num_landmarks, factor);
    }

    /// Every pair gets C_ij = scale * I, i.e. L_ij = sqrt(scale) * I.
    static PairwiseSet isotropic(std::size_t num_landmarks, double scale)
    {
        detail::require(scale >= 0.0 && std::isfinite(scale), "PairwiseSet: scale must be non-negative");
        return PairwiseSet(num_landmarks, std::sqrt(scale) * Eigen::Matrix2d::Identity());
    }

    std::size_t num_landmarks() const { return num_landmarks_; }
    std::size_t num_pairs() const { return factors_.size(); }

    /// Position of pair {i, j} in storage order; symmetric in (i, j).
    std::size_t index(std::size_t i, std::size_t j) const
    {
        detail::require(i != j, "PairwiseSet: a pair needs two distinct landmarks");
        detail::require(i < num_landmarks_ && j < num_landmarks_, "PairwiseSet: landmark index out of range");
        if (i > j) {
            std::swap(i, j);
        }
        return i * num_landmarks_ - i * (i + 1) / 2 + (j - i - 1);
    }

    /// Inverse of index(): the (i, j) with i < j stored at position p.
    std::pair<std::size_t, std::size_t> pair_at(std::size_t p) const
    {
        detail::require(p < num_pairs(), "PairwiseSet: pair position out of range");
        std::size_t i = 0;
        std::size_t row_len = num_landmarks_ - 1;
        while (p >= row_len) {
            p -= row_len;
            ++i;
            --row_len;
        }
        return {i, i + 1 + p};
    }

    const Eigen::Matrix2d& factor(std::size_t i, std::size_t j) const { return factors_[index(i, j)]; }
    const Eigen::Matrix2d& factor_at(std::size_t p) const { return factors_.at(p); }

    void set_factor(std::size_t i, std::size_t j, const Eigen::Matrix2d& l) { set_factor_at(index(i, j), l); }

    void set_factor_at(std::size_t p, const Eigen::Matrix2d& l)
    {
        detail::require(p < num_pairs(), "PairwiseSet: pair position out of range");
        detail::require(l.allFinite(), "PairwiseSet: non-finite factor");
        factors_[p] = canonical(l);
    }

    Eigen::Matrix2d coupling(std::size_t i, std::size_t j) const { return coupling_at(index(i, j)); }

    Eigen::Matrix2d coupling_at(std::size_t p) const
    {
        const auto& l = factors_.at(p);
        return l * l.transpose();
    }

    bool all_zero() const
    {
        for (const auto& l : factors_) {
            if (!l.isZero(0.0)) {
                return false;
            }
        }
        return true;
    }

    bool operator==(const PairwiseSet& other) const
    {
        return num_landmarks_ == other.num_landmarks_ && factors_ == other.factors_;
    }

private:
    PairwiseSet(std::size_t num_landmarks, const Eigen::Matrix2d& factor)
        : num_landmarks_(num_landmarks), factors_(num_landmarks < 2 ? 0 : num_landmarks * (num_landmarks - 1) / 2)
    {
        detail::require(factor.allFinite(), "PairwiseSet: non-finite factor");
        const Eigen::Matrix2d l = canonical(factor);
        for (auto& f : factors_) {
            f = l;
        }
    }

    static Eigen::Matrix2d canonical(Eigen::Matrix2d l)
    {
        l(0, 1) = 0.0;
        for (int c = 0; c < 2; ++c) {
            if (l(c, c) < 0.0) {
                l.col(c) = -l.col(c);
            }
        }
        return l;
    }

    std::size_t num_landmarks_ = 0;
    std::vector<Eigen::Matrix2d> factors_;
};

/**
 * Dense N x N table of expected offsets mu_ij. Only antisymmetric tables
 * (mu_ji = -mu_ij) are meaningful; the diagonal is ignored.
 */
class OffsetTable
{
public:
    explicit OffsetTable(std::size_t num_landmarks)
        : n_(num_landmarks), offsets_(num_landmarks * num_landmarks, Eigen::Vector2d::Zero())
    {
    }

    std::size_t num_landmarks() const { return n_; }

    const Eigen::Vector2d& operator()(std::size_t i, std::size_t j) const { return offsets_.at(i * n_ + j); }
    Eigen::Vector2d& operator()(std::size_t i, std::size_t j) { return offsets_.at(i * n_ + j); }

    /// Writes mu_ij and its mirror -mu_ij.
    void set_antisymmetric(std::size_t i, std::size_t j, const Eigen::Vector2d& offset)
    {
        (*this)(i, j) = offset;
        (*this)(j, i) = -offset;
    }

    bool is_antisymmetric() const
    {
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i + 1; j < n_; ++j) {
                if ((*this)(j, i) != -(*this)(i, j)) {
                    return false;
                }
            }
        }
        return true;
    }

private:
    std::size_t n_;
    std::vector<Eigen::Vector2d> offsets_;
};

/// All expected offsets mu_ij(zeta) from the deformable model, exactly antisymmetric.
inline OffsetTable model_offsets(const ShapeModel3D& model, const DeformParams& zeta)
{
    validate(zeta, model.num_bases());
    const ShapeMatrix shape = shape_instance(model, zeta.q);
    const auto projection = projection_matrix(zeta);
    const std::size_t n = model.num_landmarks();
    OffsetTable table(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            table.set_antisymmetric(
                i, j,
                detail::project_difference(shape, projection, static_cast<Eigen::Index>(i),
                                           static_cast<Eigen::Index>(j)));
        }
    }
    return table;
}

/// Unary energy 1/2 (y - mu)^T Sigma^{-1} (y - mu).
inline double unary_energy(const Eigen::Vector2d& y, const Eigen::Vector2d& mu, const Eigen::Matrix2d& sigma)
{
    detail::require(y.allFinite() && mu.allFinite() && sigma.allFinite(), "unary_energy: non-finite input");
    if (min_eigenvalue(sigma) < kCovarianceFloor) {
        throw NumericalError("unary_energy: covariance is singular or below the eigenvalue floor");
    }
    const Eigen::Vector2d r = y - mu;
    return 0.5 * r.dot(sigma.inverse() * r);
}

/// Pairwise energy (y_i - y_j - mu_ij)^T C_ij (y_i - y_j - mu_ij), without a 1/2 factor.
inline double pairwise_energy(const Eigen::Vector2d& yi, const Eigen::Vector2d& yj, const Eigen::Vector2d& mu_ij,
                              const Eigen::Matrix2d& c_ij)
{
    detail::require(yi.allFinite() && yj.allFinite() && mu_ij.allFinite() && c_ij.allFinite(),
                    "pairwise_energy: non-finite input");
    const Eigen::Vector2d r = yi - yj - mu_ij;
    return r.dot(c_ij * r);
}

namespace detail {

inline void check_compatible(const UnaryPrediction& unaries, const PairwiseSet& pairs)
{
    require(unaries.size() == pairs.num_landmarks(),
            "unary prediction has " + std::to_string(unaries.size()) + " landmarks, pairwise set has " +
                std::to_string(pairs.num_landmarks()));
}

inline void check_compatible(const UnaryPrediction& unaries, const PairwiseSet& pairs, const ShapeModel3D& model)
{
    check_compatible(unaries, pairs);
    require(model.num_landmarks() == unaries.size(), "shape model has " + std::to_string(model.num_landmarks()) +
                                                         " landmarks, unary prediction has " +
                                                         std::to_string(unaries.size()));
}

inline Eigen::Index block(std::size_t i) { return 2 * static_cast<Eigen::Index>(i); }

} // namespace detail

/**
 * Precision of the conditional Gaussian: diagonal blocks Sigma_i^{-1} + sum_j C_ij,
 * off-diagonal blocks -C_ij.
 */
inline Eigen::MatrixXd assemble_precision(const UnaryPrediction& unaries, const PairwiseSet& pairs)
{
    validate(unaries);
    detail::check_compatible(unaries, pairs);
    const std::size_t n = unaries.size();
    Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(detail::block(n), detail::block(n));
    for (std::size_t i = 0; i < n; ++i) {
        precision.block<2, 2>(detail::block(i), detail::block(i)) = unaries.covariances[i].inverse();
    }
    for (std::size_t p = 0; p < pairs.num_pairs(); ++p) {
        const auto [i, j] = pairs.pair_at(p);
        const Eigen::Matrix2d c = pairs.coupling_at(p);
        precision.block<2, 2>(detail::block(i), detail::block(i)) += c;
        precision.block<2, 2>(detail::block(j), detail::block(j)) += c;
        precision.block<2, 2>(detail::block(i), detail::block(j)) = -c;
        precision.block<2, 2>(detail::block(j), detail::block(i)) = -c;
    }
    return precision;
}

/// Right-hand side b_i = Sigma_i^{-1} mu_i + sum_{j != i} C_ij mu_ij.
inline Eigen::VectorXd assemble_rhs(const UnaryPrediction& unaries, const PairwiseSet& pairs,
                                    const OffsetTable& offsets)
{
    validate(unaries);
    detail::check_compatible(unaries, pairs);
    detail::require(offsets.num_landmarks() == unaries.size(), "assemble_rhs: offset table has wrong size");
    detail::require(offsets.is_antisymmetric(), "assemble_rhs: offsets must satisfy mu_ji = -mu_ij");
    const std::size_t n = unaries.size();
    Eigen::VectorXd b(detail::block(n));
    for (std::size_t i = 0; i < n; ++i) {
        b.segment<2>(detail::block(i)) = unaries.covariances[i].inverse() * unaries.means[i];
    }
    for (std::size_t p = 0; p < pairs.num_pairs(); ++p) {
        const auto [i, j] = pairs.pair_at(p);
        const Eigen::Matrix2d c = pairs.coupling_at(p);
        b.segment<2>(detail::block(i)) += c * offsets(i, j);
        b.segment<2>(detail::block(j)) += c * offsets(j, i);
    }
    return b;
}

/**
 * The Gaussian p(y | zeta, x): mean E, Cholesky factor of the precision and
 * its log-determinant.
 */
struct ConditionalGaussian
{
    Eigen::VectorXd mean;
    CholeskyFactor precision_factor;
    double log_det_precision;

    Eigen::MatrixXd precision() const
    {
        const auto& l = precision_factor.lower();
        return l * l.transpose();
    }

    Eigen::MatrixXd covariance() const { return precision_factor.inverse(); }
};

inline ConditionalGaussian conditional_gaussian(const UnaryPrediction& unaries, const PairwiseSet& pairs,
                                                const OffsetTable& offsets)
{
    const Eigen::MatrixXd precision = assemble_precision(unaries, pairs);
    const Eigen::VectorXd b = assemble_rhs(unaries, pairs, offsets);
    CholeskyFactor factor(precision);
    // uncoupled landmarks: the solve reduces to Sigma_i Sigma_i^{-1} mu_i, return mu exactly
    Eigen::VectorXd mean = pairs.all_zero() ? unaries.stacked_means() : factor.solve(b);
    const double log_det = factor.log_determinant();
    return ConditionalGaussian{std::move(mean), std::move(factor), log_det};
}

/// Exact conditional Gaussian of the landmarks given the deformable parameters.
inline ConditionalGaussian conditional_gaussian(const UnaryPrediction& unaries, const PairwiseSet& pairs,
                                                const ShapeModel3D& model, const DeformParams& zeta)
{
    detail::check_compatible(unaries, pairs, model);
    return conditional_gaussian(unaries, pairs, model_offsets(model, zeta));
}

inline double total_energy(const Eigen::VectorXd& y, const UnaryPrediction& unaries, const PairwiseSet& pairs,
                           const OffsetTable& offsets)
{
    detail::check_compatible(unaries, pairs);
    detail::require(y.size() == detail::block(unaries.size()), "total_energy: y has wrong dimension");
    double energy = 0.0;
    for (std::size_t i = 0; i < unaries.size(); ++i) {
        energy += unary_energy(y.segment<2>(detail::block(i)), unaries.means[i], unaries.covariances[i]);
    }
    double pairwise = 0.0;
    for (std::size_t p = 0; p < pairs.num_pairs(); ++p) {
        const auto [i, j] = pairs.pair_at(p);
        pairwise += pairwise_energy(y.segment<2>(detail::block(i)), y.segment<2>(detail::block(j)), offsets(i, j),
                                    pairs.coupling_at(p));
    }
    return energy + 0.5 * pairwise;
}

/**
 * Gibbs energy of the conditional Gaussian at the stacked landmark vector y:
 * the unary energies plus half the pairwise energies. The half matches the
 * assembled precision (off-diagonal blocks -C_ij, not -2 C_ij), so the
 * conditional mean E minimizes this energy exactly for fixed zeta.
 */
inline double total_energy(const Eigen::VectorXd& y, const UnaryPrediction& unaries, const PairwiseSet& pairs,
                           const ShapeModel3D& model, const DeformParams& zeta)
{
    detail::check_compatible(unaries, pairs, model);
    return total_energy(y, unaries, pairs, model_offsets(model, zeta));
}

/**
 * Negative log-likelihood -1/2 ln|Lambda| + 1/2 (y - E)^T Lambda (y - E),
 * evaluated through the stored factor. The N ln(2 pi) constant is omitted.
 */
inline double nll(const Eigen::VectorXd& y_gt, const ConditionalGaussian& cg)
{
    detail::require(y_gt.size() == cg.mean.size(), "nll: ground truth has wrong dimension");
    const Eigen::VectorXd residual = y_gt - cg.mean;
    const Eigen::VectorXd whitened = cg.precision_factor.lower().transpose() * residual;
    return -0.5 * cg.log_det_precision + 0.5 * whitened.squaredNorm();
}

/// Gradients of nll with respect to every model input.
struct NllGradients
{
    std::vector<Eigen::Vector2d> d_means;           ///< per landmark
    std::vector<Eigen::Matrix2d> d_inv_covariances; ///< per landmark, symmetric
    std::vector<Eigen::Matrix2d> d_pair_factors;    ///< per pair (storage order), lower-triangular
    std::vector<Eigen::Vector2d> d_offsets;         ///< per pair (storage order), d/d mu_ij for i < j
};

/**
 * Analytic gradients of nll.
 *
 * With r = y - E, Lambda^{-1} from the factor, the loss gradients w.r.t. the
 * assembled quantities are dL/db = -r and dL/dLambda = 1/2 (y y^T - E E^T - Lambda^{-1}),
 * which are then pushed through the block assembly. Gradients w.r.t.
 * Sigma_i^{-1} are reported as symmetric matrices G with dL = tr(G dP) for
 * symmetric perturbations dP.
 */
inline NllGradients nll_gradients(const Eigen::VectorXd& y_gt, const UnaryPrediction& unaries,
                                  const PairwiseSet& pairs, const OffsetTable& offsets)
{
    const ConditionalGaussian cg = conditional_gaussian(unaries, pairs, offsets);
    detail::require(y_gt.size() == cg.mean.size(), "nll_gradients: ground truth has wrong dimension");
    const std::size_t n = unaries.size();
    const Eigen::VectorXd r = y_gt - cg.mean;
    const Eigen::VectorXd& e = cg.mean;
    // y y^T - E E^T written in terms of the residual to avoid cancellation
    const Eigen::MatrixXd grad_precision =
        0.5 * (r * r.transpose() + r * e.transpose() + e * r.transpose() - cg.covariance());
    const Eigen::VectorXd grad_rhs = -r;

    auto g_block = [&](std::size_t i, std::size_t j) -> Eigen::Matrix2d {
        return grad_precision.block<2, 2>(detail::block(i), detail::block(j));
    };
    auto b_block = [&](std::size_t i) -> Eigen::Vector2d { return grad_rhs.segment<2>(detail::block(i)); };

    NllGradients grads;
    grads.d_means.resize(n);
    grads.d_inv_covariances.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Matrix2d inv_sigma = unaries.covariances[i].inverse();
        grads.d_means[i] = inv_sigma.transpose() * b_block(i);
        const Eigen::Matrix2d raw = g_block(i, i) + b_block(i) * unaries.means[i].transpose();
        grads.d_inv_covariances[i] = 0.5 * (raw + raw.transpose());
    }

    grads.d_pair_factors.resize(pairs.num_pairs());
    grads.d_offsets.resize(pairs.num_pairs());
    for (std::size_t p = 0; p < pairs.num_pairs(); ++p) {
        const auto [i, j] = pairs.pair_at(p);
        const Eigen::Vector2d gb_diff = b_block(i) - b_block(j);
        const Eigen::Matrix2d grad_coupling = g_block(i, i) + g_block(j, j) - g_block(i, j) - g_block(j, i) +
                                              gb_diff * offsets(i, j).transpose();
        Eigen::Matrix2d grad_factor = (grad_coupling + grad_coupling.transpose()) * pairs.factor_at(p);
        grad_factor(0, 1) = 0.0;
        grads.d_pair_factors[p] = grad_factor;
        grads.d_offsets[p] = pairs.coupling_at(p).transpose() * gb_diff;
    }
    return grads;
}

inline NllGradients nll_gradients(const Eigen::VectorXd& y_gt, const UnaryPrediction& unaries,
                                  const PairwiseSet& pairs, const ShapeModel3D& model, const DeformParams& zeta)
{
    detail::check_compatible(unaries, pairs, model);
    return nll_gradients(y_gt, unaries, pairs, model_offsets(model, zeta));
}

} // namespace lmcrf

#endif // LMCRF_CRF_HPP
