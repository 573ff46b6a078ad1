/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/training.hpp
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

#ifndef LMCRF_TRAINING_HPP
#define LMCRF_TRAINING_HPP

#include "lmcrf/crf.hpp"
#include "lmcrf/error.hpp"
#include "lmcrf/fitting.hpp"
#include "lmcrf/model.hpp"
#include "lmcrf/sample.hpp"

#include "Eigen/Core"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lmcrf {

struct TrainOptions
{
    /// Initial gradient step on the pair factors.
    double learning_rate = 1e-3;
    /// Step multiplier after an accepted step; 1 keeps the rate fixed (halving only).
    double step_growth = 2.0;
    int max_halvings = 40;
    /// Gradient steps on the pair factors per outer iteration.
    int factor_steps = 20;
    /// zeta-fit / conditional-mean alternations per sample per outer iteration; matches the inference budget.
    int zeta_iters = 50;
    double zeta_tolerance = 1e-5;
    int max_outer_iters = 100;
    /// Stop after `patience` consecutive outer iterations with relative NLL improvement below this.
    double outer_tolerance = 1e-6;
    int patience = 3;
    FitOptions fit;
};

struct TrainReport
{
    /// Training NLL after every accepted factor step.
    std::vector<double> epoch_nll;
    /// Outer iteration each epoch belongs to.
    std::vector<int> epoch_outer;
    /// Training NLL at the start of each outer iteration's factor stage (after the zeta refit).
    std::vector<double> stage_start_nll;
    /// Training NLL at the end of each outer iteration.
    std::vector<double> outer_nll;
    std::vector<double> learning_rates;
    int outer_iterations = 0;
    bool converged = false;
};

struct TrainResult
{
    PairwiseSet pairs;
    std::vector<DeformParams> zetas;
    TrainReport report;
};

/// The training objective became non-finite; carries the last finite parameters.
class TrainingFailure : public std::runtime_error
{
public:
    TrainingFailure(const std::string& what, PairwiseSet pairs, std::vector<DeformParams> zetas)
        : std::runtime_error(what), last_pairs(std::move(pairs)), last_zetas(std::move(zetas))
    {
    }

    PairwiseSet last_pairs;
    std::vector<DeformParams> last_zetas;
};

/// Sum of per-sample nll, each under its own deformable parameters.
inline double dataset_nll(const std::vector<TrainSample>& data, const ShapeModel3D& model, const PairwiseSet& pairs,
                          const std::vector<DeformParams>& zetas)
{
    detail::require(zetas.size() == data.size(), "dataset_nll: one zeta per sample required");
    double total = 0.0;
    for (std::size_t m = 0; m < data.size(); ++m) {
        total += nll(data[m].y_gt, conditional_gaussian(data[m].unaries, pairs, model, zetas[m]));
    }
    return total;
}

namespace detail {

inline void check_dataset(const std::vector<TrainSample>& data, const ShapeModel3D& model)
{
    require(!data.empty(), "train_crf: empty training set");
    for (const auto& sample : data) {
        require(sample.unaries.size() == model.num_landmarks() &&
                    sample.y_gt.size() == 2 * static_cast<Eigen::Index>(model.num_landmarks()),
                "train_crf: sample " + sample.id + " does not match the model's landmark count");
        validate(sample.unaries);
        require(sample.y_gt.allFinite(), "train_crf: sample " + sample.id + " has non-finite ground truth");
    }
}

/// Summed nll gradient with respect to the pair factors, reduced in sample order.
inline std::vector<Eigen::Matrix2d> factor_gradient(const std::vector<TrainSample>& data, const ShapeModel3D& model,
                                                    const PairwiseSet& pairs, const std::vector<DeformParams>& zetas)
{
    std::vector<Eigen::Matrix2d> total(pairs.num_pairs(), Eigen::Matrix2d::Zero());
    for (std::size_t m = 0; m < data.size(); ++m) {
        const NllGradients g = nll_gradients(data[m].y_gt, data[m].unaries, pairs, model, zetas[m]);
        for (std::size_t p = 0; p < total.size(); ++p) {
            total[p] += g.d_pair_factors[p];
        }
    }
    return total;
}

inline void check_psd(const PairwiseSet& pairs)
{
    for (std::size_t p = 0; p < pairs.num_pairs(); ++p) {
        const Eigen::Matrix2d c = pairs.coupling_at(p);
        if (min_eigenvalue(c) < -1e-12 * std::max(1.0, c.norm())) {
            throw std::logic_error("train_crf: coupling " + std::to_string(p) + " lost positive semi-definiteness");
        }
    }
}

} // namespace detail

/**
 * Refits every sample's zeta against the model's own prediction by
 * alternating zeta fits and conditional means. The prediction starts at
 * E(zeta) for the current zetas, or at the unary means when `cold` is set.
 */
inline void refit_zetas(const std::vector<TrainSample>& data, const ShapeModel3D& model, const PairwiseSet& pairs,
                        std::vector<DeformParams>& zetas, bool cold, const TrainOptions& opts)
{
    if (pairs.all_zero()) {
        return; // zeta has no influence without couplings
    }
    for (std::size_t m = 0; m < data.size(); ++m) {
        const auto& unaries = data[m].unaries;
        Eigen::VectorXd y_hat =
            cold ? unaries.stacked_means() : conditional_gaussian(unaries, pairs, model, zetas[m]).mean;
        for (int it = 0; it < opts.zeta_iters; ++it) {
            zetas[m] = fit_deform_params(y_hat, pairs, model, zetas[m], opts.fit).zeta;
            Eigen::VectorXd next = conditional_gaussian(unaries, pairs, model, zetas[m]).mean;
            const double change = (next - y_hat).cwiseAbs().maxCoeff();
            y_hat = std::move(next);
            if (change < opts.zeta_tolerance) {
                break;
            }
        }
    }
}

/**
 * Learns the pairwise couplings from precomputed unaries and ground truth.
 *
 * Each outer iteration refits the per-sample deformable parameters against
 * the model's own predictions, then takes full-batch gradient steps on the
 * pair factors L_ij against the summed nll. A step that does not lower the
 * nll is retried at half the rate; accepted steps grow the rate by
 * opts.step_growth. Couplings of exactly zero are a stationary point of the
 * factor parameterization and never move.
 */
inline TrainResult train_crf(const std::vector<TrainSample>& data, const ShapeModel3D& model,
                             const std::optional<PairwiseSet>& init_pairs, const TrainOptions& opts = {})
{
    detail::check_dataset(data, model);
    detail::require(opts.learning_rate > 0.0 && opts.step_growth >= 1.0, "train_crf: bad step parameters");
    const std::size_t n = model.num_landmarks();

    TrainResult result;
    result.pairs = init_pairs ? *init_pairs : PairwiseSet::isotropic(n, 0.01);
    detail::require(result.pairs.num_landmarks() == n, "train_crf: initial pairwise set does not match the model");
    result.zetas.reserve(data.size());
    for (const auto& sample : data) {
        result.zetas.push_back(cold_start(sample.unaries.stacked_means(), model));
    }

    auto& report = result.report;
    double rate = opts.learning_rate;
    int stalled = 0;
    for (int outer = 0; outer < opts.max_outer_iters; ++outer) {
        // zeta stage
        refit_zetas(data, model, result.pairs, result.zetas, outer == 0, opts);
        double current = dataset_nll(data, model, result.pairs, result.zetas);
        if (!std::isfinite(current)) {
            throw TrainingFailure("train_crf: non-finite nll after the zeta stage of outer iteration " +
                                      std::to_string(outer),
                                  result.pairs, result.zetas);
        }
        report.stage_start_nll.push_back(current);

        // factor stage
        for (int step = 0; step < opts.factor_steps; ++step) {
            const auto grad = detail::factor_gradient(data, model, result.pairs, result.zetas);
            bool accepted = false;
            const double rate_before = rate;
            for (int h = 0; h <= opts.max_halvings && !accepted; ++h) {
                PairwiseSet candidate = result.pairs;
                for (std::size_t p = 0; p < candidate.num_pairs(); ++p) {
                    candidate.set_factor_at(p, result.pairs.factor_at(p) - rate * grad[p]);
                }
                const double value = dataset_nll(data, model, candidate, result.zetas);
                if (std::isfinite(value) && value < current) {
                    result.pairs = std::move(candidate);
                    current = value;
                    accepted = true;
                    rate *= opts.step_growth;
                } else {
                    rate *= 0.5;
                }
            }
            if (!accepted) {
                rate = rate_before;
                break;
            }
            detail::check_psd(result.pairs);
            report.epoch_nll.push_back(current);
            report.epoch_outer.push_back(outer);
            report.learning_rates.push_back(rate);
        }

        report.outer_nll.push_back(current);
        report.outer_iterations = outer + 1;
        if (outer > 0) {
            const double previous = report.outer_nll[report.outer_nll.size() - 2];
            const double improvement = (previous - current) / std::max(std::abs(previous), 1e-300);
            stalled = improvement < opts.outer_tolerance ? stalled + 1 : 0;
            if (stalled >= opts.patience) {
                report.converged = true;
                break;
            }
        }
    }
    return result;
}

} // namespace lmcrf

#endif // LMCRF_TRAINING_HPP
