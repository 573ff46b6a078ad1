/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/fitting.hpp
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

#ifndef LMCRF_FITTING_HPP
#define LMCRF_FITTING_HPP

#include "lmcrf/crf.hpp"
#include "lmcrf/error.hpp"
#include "lmcrf/model.hpp"

#include "Eigen/Cholesky"
#include "Eigen/Core"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lmcrf {

struct FitOptions
{
    /// Weight of the lambda_q ||q||^2 prior on the shape coefficients; 0 disables it.
    double shape_regularization = 1e-3;
    int max_iters = 200;
    /// Stop when the relative objective decrease of an accepted step falls below this.
    double relative_tolerance = 1e-10;
    /// Stop when the parameter step norm falls below this.
    double step_tolerance = 1e-10;
    /// The fit is flagged converged only if the final gradient norm is below this.
    double grad_tolerance = 1e-6;
    /// Forward-difference step for the Jacobian, relative to max(1, |theta_k|).
    double jacobian_step = 1e-7;
    double initial_damping = 1e-3;
};

struct FitDiagnostics
{
    int iterations = 0;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    double gradient_norm = 0.0;
    bool converged = false;
};

struct FitResult
{
    DeformParams zeta;
    FitDiagnostics diagnostics;
};

namespace detail {

/// Bound on |ln s| for accepted steps; keeps exp() finite and non-zero.
inline constexpr double kMaxLogScale = 600.0;

/// Optimization variables (ln sx, ln sy, pitch, yaw, roll, q...). Log scales keep sx, sy > 0.
inline Eigen::VectorXd pack(const DeformParams& zeta)
{
    Eigen::VectorXd theta(5 + zeta.q.size());
    theta << std::log(zeta.sx), std::log(zeta.sy), zeta.pitch, zeta.yaw, zeta.roll, zeta.q;
    return theta;
}

inline DeformParams unpack(const Eigen::VectorXd& theta)
{
    DeformParams zeta;
    zeta.sx = std::exp(theta(0));
    zeta.sy = std::exp(theta(1));
    zeta.pitch = theta(2);
    zeta.yaw = theta(3);
    zeta.roll = theta(4);
    zeta.q = theta.tail(theta.size() - 5);
    return zeta;
}

/**
 * Whitened residuals rho_ij = L_ij^T (y_i - y_j - mu_ij(zeta)) over all pairs,
 * followed by sqrt(lambda_q) q. Their squared norm is the fitting objective.
 */
class ShapeResiduals
{
public:
    ShapeResiduals(const Eigen::VectorXd& y, const PairwiseSet& pairs, const ShapeModel3D& model,
                   double shape_regularization)
        : y_(y), pairs_(pairs), model_(model), reg_sqrt_(std::sqrt(shape_regularization))
    {
    }

    Eigen::Index size() const
    {
        return 2 * static_cast<Eigen::Index>(pairs_.num_pairs()) + static_cast<Eigen::Index>(model_.num_bases());
    }

    Eigen::VectorXd operator()(const Eigen::VectorXd& theta) const
    {
        const DeformParams zeta = unpack(theta);
        const ShapeMatrix shape = shape_instance(model_, zeta.q);
        const auto projection = projection_matrix(zeta);
        Eigen::VectorXd r(size());
        for (std::size_t p = 0; p < pairs_.num_pairs(); ++p) {
            const auto [i, j] = pairs_.pair_at(p);
            const Eigen::Vector2d mu =
                project_difference(shape, projection, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            const Eigen::Vector2d diff = y_.segment<2>(block(i)) - y_.segment<2>(block(j)) - mu;
            r.segment<2>(2 * static_cast<Eigen::Index>(p)) = pairs_.factor_at(p).transpose() * diff;
        }
        r.tail(zeta.q.size()) = reg_sqrt_ * zeta.q;
        return r;
    }

    Eigen::MatrixXd forward_jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& r0, double step) const
    {
        Eigen::MatrixXd jac(size(), theta.size());
        Eigen::VectorXd shifted = theta;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            const double h = step * std::max(1.0, std::abs(theta(k)));
            shifted(k) = theta(k) + h;
            jac.col(k) = ((*this)(shifted) - r0) / (shifted(k) - theta(k));
            shifted(k) = theta(k);
        }
        return jac;
    }

    /// Gradient of the objective by central differences of the residuals; used for reporting.
    Eigen::VectorXd central_gradient(const Eigen::VectorXd& theta) const
    {
        const Eigen::VectorXd r0 = (*this)(theta);
        Eigen::VectorXd grad(theta.size());
        Eigen::VectorXd shifted = theta;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            const double h = 1e-6 * std::max(1.0, std::abs(theta(k)));
            shifted(k) = theta(k) + h;
            const Eigen::VectorXd plus = (*this)(shifted);
            shifted(k) = theta(k) - h;
            const Eigen::VectorXd minus = (*this)(shifted);
            shifted(k) = theta(k);
            grad(k) = 2.0 * r0.dot(plus - minus) / (2.0 * h);
        }
        return grad;
    }

private:
    const Eigen::VectorXd& y_;
    const PairwiseSet& pairs_;
    const ShapeModel3D& model_;
    double reg_sqrt_;
};

inline double rms_pairwise_distance_2d(const Eigen::VectorXd& y)
{
    const Eigen::Index n = y.size() / 2;
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            sum += (y.segment<2>(2 * i) - y.segment<2>(2 * j)).squaredNorm();
            ++count;
        }
    }
    return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

} // namespace detail

/**
 * Cold-start parameters for landmarks y: zero angles and shape, with
 * sx = sy = (RMS pairwise distance of y) / (RMS pairwise distance of the
 * mean shape's x-y projection).
 */
inline DeformParams cold_start(const Eigen::VectorXd& y, const ShapeModel3D& model)
{
    detail::require(y.size() == 2 * static_cast<Eigen::Index>(model.num_landmarks()),
                    "cold_start: y has wrong dimension");
    DeformParams zeta = DeformParams::identity(model.num_bases());
    const Points2 projected = project_shape(model, zeta);
    Eigen::VectorXd stacked(projected.size());
    for (Eigen::Index i = 0; i < projected.rows(); ++i) {
        stacked.segment<2>(2 * i) = projected.row(i).transpose();
    }
    const double model_rms = detail::rms_pairwise_distance_2d(stacked);
    const double data_rms = detail::rms_pairwise_distance_2d(y);
    if (model_rms > 0.0 && data_rms > 0.0) {
        zeta.sx = zeta.sy = data_rms / model_rms;
    }
    return zeta;
}

/// Pairwise fitting objective sum_ij rho_ij^T rho_ij + lambda_q ||q||^2 at zeta.
inline double fit_objective(const Eigen::VectorXd& y, const PairwiseSet& pairs, const ShapeModel3D& model,
                            const DeformParams& zeta, double shape_regularization)
{
    validate(zeta, model.num_bases());
    return detail::ShapeResiduals(y, pairs, model, shape_regularization)(detail::pack(zeta)).squaredNorm();
}

/**
 * Fits the deformable parameters to fixed landmark positions by minimizing the
 * summed pairwise energy (plus the shape prior) with Levenberg-Marquardt on
 * whitened residuals. Steps that do not decrease the objective are never
 * accepted. Running out of iterations is reported through diagnostics, not
 * thrown.
 */
inline FitResult fit_deform_params(const Eigen::VectorXd& y, const PairwiseSet& pairs, const ShapeModel3D& model,
                                   const DeformParams& init, const FitOptions& opts = {})
{
    const std::size_t n = model.num_landmarks();
    detail::require(y.size() == 2 * static_cast<Eigen::Index>(n), "fit_deform_params: y has wrong dimension");
    detail::require(y.allFinite(), "fit_deform_params: non-finite landmarks");
    detail::require(pairs.num_landmarks() == n, "fit_deform_params: pairwise set does not match the model");
    detail::require(opts.shape_regularization >= 0.0, "fit_deform_params: negative shape regularization");
    validate(init, model.num_bases());
    if (n < 3) {
        throw UnderdeterminedProblem("fit_deform_params: need at least 3 landmarks to fit " +
                                     std::to_string(5 + model.num_bases()) + " parameters");
    }
    if (pairs.all_zero()) {
        throw UnderdeterminedProblem("fit_deform_params: every pairwise coupling is zero");
    }

    const detail::ShapeResiduals residuals(y, pairs, model, opts.shape_regularization);
    Eigen::VectorXd theta = detail::pack(init);
    Eigen::VectorXd r = residuals(theta);
    double objective = r.squaredNorm();

    FitResult result;
    result.diagnostics.initial_objective = objective;
    double damping = opts.initial_damping;
    int iter = 0;
    for (; iter < opts.max_iters && objective > 0.0; ++iter) {
        const Eigen::MatrixXd jac = residuals.forward_jacobian(theta, r, opts.jacobian_step);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;
        // already stationary well inside the reporting tolerance
        if (2.0 * jtr.norm() <= opts.grad_tolerance * 1e-3) {
            break;
        }
        const Eigen::VectorXd scaling = jtj.diagonal().cwiseMax(1e-12);

        bool accepted = false;
        bool stop = false;
        while (!accepted) {
            Eigen::MatrixXd lhs = jtj;
            lhs.diagonal() += damping * scaling;
            const Eigen::VectorXd step = lhs.ldlt().solve(-jtr);
            if (!step.allFinite() || step.norm() < opts.step_tolerance) {
                stop = true;
                break;
            }
            const Eigen::VectorXd candidate = theta + step;
            // a scale that under- or overflows exp() is rejected like an uphill step
            const bool admissible = std::abs(candidate(0)) < detail::kMaxLogScale &&
                                     std::abs(candidate(1)) < detail::kMaxLogScale;
            const Eigen::VectorXd r_candidate = admissible ? residuals(candidate) : r;
            const double candidate_objective = admissible ? r_candidate.squaredNorm() : objective;
            if (std::isfinite(candidate_objective) && candidate_objective < objective) {
                const double decrease = (objective - candidate_objective) / objective;
                theta = candidate;
                r = r_candidate;
                objective = candidate_objective;
                damping = std::max(damping / 3.0, 1e-12);
                accepted = true;
                stop = decrease < opts.relative_tolerance;
            } else {
                damping *= 4.0;
                if (damping > 1e16) {
                    stop = true;
                    break;
                }
            }
        }
        if (stop) {
            ++iter;
            break;
        }
    }

    result.zeta = detail::unpack(theta);
    result.zeta.pitch = wrap_angle(result.zeta.pitch);
    result.zeta.yaw = wrap_angle(result.zeta.yaw);
    result.zeta.roll = wrap_angle(result.zeta.roll);
    result.diagnostics.iterations = iter;
    result.diagnostics.final_objective = objective;
    result.diagnostics.gradient_norm = residuals.central_gradient(theta).norm();
    result.diagnostics.converged = result.diagnostics.gradient_norm <= opts.grad_tolerance;
    return result;
}

} // namespace lmcrf

#endif // LMCRF_FITTING_HPP
