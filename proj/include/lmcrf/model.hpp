/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/model.hpp
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

#ifndef LMCRF_MODEL_HPP
#define LMCRF_MODEL_HPP

#include "lmcrf/error.hpp"

#include "Eigen/Core"
#include "Eigen/QR"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lmcrf {

using ShapeMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;

namespace detail {

inline double rms_pairwise_distance(const ShapeMatrix& shape)
{
    const Eigen::Index n = shape.rows();
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            sum += (shape.row(i) - shape.row(j)).squaredNorm();
            ++count;
        }
    }
    return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

} // namespace detail

/**
 * A linear 3D deformable shape model: a mean shape plus K deformation bases,
 * each an N x 3 matrix of per-landmark displacements.
 *
 * The constructor normalizes its input: the mean shape is centered at the
 * origin and scaled so that the RMS distance over all landmark pairs is 1, and
 * every basis is scaled to unit Frobenius norm. Coefficients carry magnitude.
 */
class ShapeModel3D
{
public:
    ShapeModel3D(ShapeMatrix mean_shape, std::vector<ShapeMatrix> bases)
        : mean_(std::move(mean_shape)), bases_(std::move(bases))
    {
        detail::require(mean_.rows() >= 2, "ShapeModel3D: need at least 2 landmarks");
        detail::require(mean_.allFinite(), "ShapeModel3D: non-finite mean shape");
        mean_.rowwise() -= mean_.colwise().mean();
        const double rms = detail::rms_pairwise_distance(mean_);
        detail::require(rms > 0.0, "ShapeModel3D: degenerate mean shape (all landmarks coincide)");
        mean_ /= rms;
        for (auto& basis : bases_) {
            detail::require(basis.rows() == mean_.rows(), "ShapeModel3D: basis has wrong number of landmarks");
            detail::require(basis.allFinite(), "ShapeModel3D: non-finite basis");
            const double norm = basis.norm();
            detail::require(norm > 0.0, "ShapeModel3D: zero basis");
            basis /= norm;
        }
    }

    std::size_t num_landmarks() const { return static_cast<std::size_t>(mean_.rows()); }
    std::size_t num_bases() const { return bases_.size(); }
    const ShapeMatrix& mean_shape() const { return mean_; }
    const std::vector<ShapeMatrix>& bases() const { return bases_; }

private:
    ShapeMatrix mean_;
    std::vector<ShapeMatrix> bases_;
};

/**
 * Weak-perspective pose and shape parameters: anisotropic scale, pitch/yaw/roll
 * and the non-rigid coefficients over the model bases.
 */
struct DeformParams
{
    double sx = 1.0;
    double sy = 1.0;
    double pitch = 0.0; ///< gamma1, rotation about x
    double yaw = 0.0;   ///< gamma2, rotation about y
    double roll = 0.0;  ///< gamma3, rotation about z
    Eigen::VectorXd q;

    static DeformParams identity(std::size_t num_bases)
    {
        DeformParams zeta;
        zeta.q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_bases));
        return zeta;
    }

    bool operator==(const DeformParams& other) const
    {
        return sx == other.sx && sy == other.sy && pitch == other.pitch && yaw == other.yaw &&
               roll == other.roll && q.size() == other.q.size() && q == other.q;
    }
};

/// Maps an angle to (-pi, pi].
inline double wrap_angle(double angle)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double wrapped = std::remainder(angle, two_pi);
    if (wrapped <= -std::numbers::pi) {
        wrapped += two_pi;
    }
    return wrapped;
}

inline void validate(const DeformParams& zeta, std::size_t num_bases)
{
    detail::require(std::isfinite(zeta.sx) && zeta.sx > 0.0, "DeformParams: sx must be positive and finite");
    detail::require(std::isfinite(zeta.sy) && zeta.sy > 0.0, "DeformParams: sy must be positive and finite");
    detail::require(std::isfinite(zeta.pitch) && std::isfinite(zeta.yaw) && std::isfinite(zeta.roll),
                    "DeformParams: non-finite rotation angle");
    detail::require(static_cast<std::size_t>(zeta.q.size()) == num_bases,
                    "DeformParams: q has " + std::to_string(zeta.q.size()) + " entries, model has " +
                        std::to_string(num_bases) + " bases");
    detail::require(zeta.q.allFinite(), "DeformParams: non-finite shape coefficient");
}

/**
 * Rotation R = R_z(roll) * R_y(yaw) * R_x(pitch), right-handed axes.
 */
inline Eigen::Matrix3d rotation_from_euler(double pitch, double yaw, double roll)
{
    detail::require(std::isfinite(pitch) && std::isfinite(yaw) && std::isfinite(roll),
                    "rotation_from_euler: non-finite angle");
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cr = std::cos(roll), sr = std::sin(roll);
    Eigen::Matrix3d rx, ry, rz;
    rx << 1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp;
    ry << cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy;
    rz << cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0;
    return rz * ry * rx;
}

/// The first two rows of S * R with S = diag(sx, sy, 1).
inline Eigen::Matrix<double, 2, 3> projection_matrix(const DeformParams& zeta)
{
    const Eigen::Matrix3d rotation = rotation_from_euler(zeta.pitch, zeta.yaw, zeta.roll);
    Eigen::Matrix<double, 2, 3> projection;
    projection.row(0) = zeta.sx * rotation.row(0);
    projection.row(1) = zeta.sy * rotation.row(1);
    return projection;
}

/// Mean shape plus the weighted sum of bases, N x 3.
inline ShapeMatrix shape_instance(const ShapeModel3D& model, const Eigen::VectorXd& q)
{
    detail::require(static_cast<std::size_t>(q.size()) == model.num_bases(),
                    "shape_instance: coefficient count does not match the number of bases");
    ShapeMatrix shape = model.mean_shape();
    for (std::size_t k = 0; k < model.num_bases(); ++k) {
        shape += q(static_cast<Eigen::Index>(k)) * model.bases()[k];
    }
    return shape;
}

/// Weak-perspective projection of every landmark of the deformed shape (no translation).
inline Points2 project_shape(const ShapeModel3D& model, const DeformParams& zeta)
{
    validate(zeta, model.num_bases());
    const ShapeMatrix shape = shape_instance(model, zeta.q);
    return shape * projection_matrix(zeta).transpose();
}

namespace detail {

inline Eigen::Vector2d project_difference(const ShapeMatrix& shape, const Eigen::Matrix<double, 2, 3>& projection,
                                          Eigen::Index i, Eigen::Index j)
{
    const Eigen::Vector3d delta = (shape.row(i) - shape.row(j)).transpose();
    return projection * delta;
}

} // namespace detail

/**
 * Expected 2D offset y_i - y_j under the deformable model: the difference of
 * the two deformed 3D landmarks, rotated, scaled and truncated to 2D.
 */
inline Eigen::Vector2d expected_offset(const ShapeModel3D& model, const DeformParams& zeta, std::size_t i,
                                       std::size_t j)
{
    const std::size_t n = model.num_landmarks();
    detail::require(i < n && j < n, "expected_offset: landmark index out of range");
    detail::require(i != j, "expected_offset: i and j must differ");
    validate(zeta, model.num_bases());
    const ShapeMatrix shape = shape_instance(model, zeta.q);
    return detail::project_difference(shape, projection_matrix(zeta), static_cast<Eigen::Index>(i),
                                      static_cast<Eigen::Index>(j));
}

/**
 * Generates a random model with a deterministic PRNG: Gaussian mean shape and
 * Gaussian bases orthonormalized against each other (before the constructor's
 * normalization, which keeps them orthonormal).
 */
inline ShapeModel3D make_synthetic_model(std::size_t num_landmarks, std::size_t num_bases, std::uint64_t seed)
{
    detail::require(num_landmarks >= 2, "make_synthetic_model: need at least 2 landmarks");
    detail::require(num_bases <= 3 * num_landmarks, "make_synthetic_model: more bases than degrees of freedom");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto n = static_cast<Eigen::Index>(num_landmarks);

    ShapeMatrix mean(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        mean(i, 0) = normal(rng);
        mean(i, 1) = normal(rng);
        mean(i, 2) = 0.5 * normal(rng); // faces are flatter in depth
    }

    std::vector<ShapeMatrix> bases;
    if (num_bases > 0) {
        Eigen::MatrixXd raw(3 * n, static_cast<Eigen::Index>(num_bases));
        for (Eigen::Index c = 0; c < raw.cols(); ++c) {
            for (Eigen::Index r = 0; r < raw.rows(); ++r) {
                raw(r, c) = normal(rng);
            }
        }
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
        const Eigen::MatrixXd orthonormal =
            qr.householderQ() * Eigen::MatrixXd::Identity(raw.rows(), raw.cols());
        for (Eigen::Index c = 0; c < orthonormal.cols(); ++c) {
            ShapeMatrix basis(n, 3);
            for (Eigen::Index i = 0; i < n; ++i) {
                basis.row(i) = orthonormal.col(c).segment<3>(3 * i).transpose();
            }
            bases.push_back(std::move(basis));
        }
    }
    return ShapeModel3D(std::move(mean), std::move(bases));
}

} // namespace lmcrf

#endif // LMCRF_MODEL_HPP
