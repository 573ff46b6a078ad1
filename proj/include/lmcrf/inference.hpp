/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/inference.hpp
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

#ifndef LMCRF_INFERENCE_HPP
#define LMCRF_INFERENCE_HPP

#include "lmcrf/crf.hpp"
#include "lmcrf/fitting.hpp"
#include "lmcrf/model.hpp"

#include "Eigen/Core"

#include <optional>
#include <vector>

namespace lmcrf {

struct InferOptions
{
    /// Stop when max_i |y_i^{t+1} - y_i^t| drops below this (normalized units).
    double tolerance = 1e-5;
    int max_iters = 50;
    FitOptions fit;
};

struct InferTrace
{
    /// Energy before the first step, then after every zeta-step and y-step.
    std::vector<double> half_step_energies;
    /// Energy after each full iteration (after its y-step).
    std::vector<double> iteration_energies;
    std::vector<FitDiagnostics> fits;
    int iterations = 0;
    bool converged = false;
};

struct InferResult
{
    Eigen::VectorXd landmarks;
    DeformParams zeta;
    InferTrace trace;
};

/**
 * Objective minimized by both alternating steps: total_energy plus half the
 * shape prior (the zeta-step minimizes pairwise + lambda_q ||q||^2).
 */
inline double joint_energy(const Eigen::VectorXd& y, const UnaryPrediction& unaries, const PairwiseSet& pairs,
                           const ShapeModel3D& model, const DeformParams& zeta, double shape_regularization)
{
    return total_energy(y, unaries, pairs, model, zeta) + 0.5 * shape_regularization * zeta.q.squaredNorm();
}

/**
 * Joint inference of landmarks and deformable parameters by alternating an
 * exact zeta fit at fixed y and the exact conditional mean at fixed zeta,
 * starting from the unary means. zeta is warm-started from the previous
 * iterate; the first fit starts from cold_start() unless `init` is given.
 */
inline InferResult infer(const UnaryPrediction& unaries, const PairwiseSet& pairs, const ShapeModel3D& model,
                         const InferOptions& opts = {}, const std::optional<DeformParams>& init = std::nullopt)
{
    validate(unaries);
    detail::check_compatible(unaries, pairs, model);
    detail::require(opts.max_iters >= 1, "infer: max_iters must be at least 1");

    InferResult result;
    Eigen::VectorXd y = unaries.stacked_means();
    DeformParams zeta = init ? *init : cold_start(y, model);
    validate(zeta, model.num_bases());
    const double reg = opts.fit.shape_regularization;
    const bool structured = !pairs.all_zero();

    auto& trace = result.trace;
    trace.half_step_energies.push_back(joint_energy(y, unaries, pairs, model, zeta, reg));
    for (int iter = 0; iter < opts.max_iters; ++iter) {
        if (structured) {
            FitResult fit = fit_deform_params(y, pairs, model, zeta, opts.fit);
            zeta = std::move(fit.zeta);
            trace.fits.push_back(fit.diagnostics);
            trace.half_step_energies.push_back(joint_energy(y, unaries, pairs, model, zeta, reg));
        }
        Eigen::VectorXd next = conditional_gaussian(unaries, pairs, model, zeta).mean;
        const double change = (next - y).cwiseAbs().maxCoeff();
        y = std::move(next);
        const double energy = joint_energy(y, unaries, pairs, model, zeta, reg);
        trace.half_step_energies.push_back(energy);
        trace.iteration_energies.push_back(energy);
        trace.iterations = iter + 1;
        // without couplings the conditional mean is the unary mean; one pass is exact
        if (change < opts.tolerance || !structured) {
            trace.converged = true;
            break;
        }
    }
    result.landmarks = std::move(y);
    result.zeta = std::move(zeta);
    return result;
}

} // namespace lmcrf

#endif // LMCRF_INFERENCE_HPP
