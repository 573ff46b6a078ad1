/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/eval.hpp
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

#ifndef LMCRF_EVAL_HPP
#define LMCRF_EVAL_HPP

#include "lmcrf/error.hpp"

#include "Eigen/Core"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace lmcrf {

/// Default failure threshold on the normalized mean error.
inline constexpr double kFailureThreshold = 0.07;
/// Default number of CED grid points on [0, kFailureThreshold].
inline constexpr std::size_t kCedGridSteps = 701;

/// Mean point-to-point error divided by sqrt(bbox_w * bbox_h).
inline double nme(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt, double bbox_w, double bbox_h)
{
    detail::require(pred.size() == gt.size() && pred.size() > 0 && pred.size() % 2 == 0,
                    "nme: prediction and ground truth must be equal-length stacked 2D points");
    detail::require(bbox_w > 0.0 && bbox_h > 0.0, "nme: bounding box dimensions must be positive");
    const Eigen::Index n = pred.size() / 2;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        sum += (pred.segment<2>(2 * i) - gt.segment<2>(2 * i)).norm();
    }
    return sum / static_cast<double>(n) / std::sqrt(bbox_w * bbox_h);
}

struct CedPoint
{
    double threshold;
    double fraction;
};

/// Fraction of samples with error <= t, for t on a uniform grid over [0, grid_max].
inline std::vector<CedPoint> ced(const std::vector<double>& nmes, double grid_max = kFailureThreshold,
                                 std::size_t grid_steps = kCedGridSteps)
{
    detail::require(!nmes.empty(), "ced: no errors given");
    detail::require(grid_steps >= 2, "ced: need at least 2 grid points");
    detail::require(grid_max > 0.0 && std::isfinite(grid_max), "ced: grid_max must be positive");
    std::vector<double> sorted = nmes;
    std::sort(sorted.begin(), sorted.end());
    std::vector<CedPoint> curve;
    curve.reserve(grid_steps);
    const double total = static_cast<double>(sorted.size());
    for (std::size_t k = 0; k < grid_steps; ++k) {
        const double t = grid_max * static_cast<double>(k) / static_cast<double>(grid_steps - 1);
        const auto below = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        curve.push_back({t, static_cast<double>(below) / total});
    }
    return curve;
}

/**
 * Trapezoidal area under the CED from 0 to `threshold`, divided by the
 * threshold so that a perfect predictor scores 1. A threshold between grid
 * points closes the area with a linearly interpolated segment.
 */
inline double auc(const std::vector<CedPoint>& curve, double threshold = kFailureThreshold)
{
    detail::require(curve.size() >= 2, "auc: curve needs at least 2 points");
    detail::require(threshold > 0.0 && threshold <= curve.back().threshold * (1.0 + 1e-12),
                    "auc: threshold outside the curve's grid");
    double area = 0.0;
    for (std::size_t k = 1; k < curve.size(); ++k) {
        const CedPoint& a = curve[k - 1];
        const CedPoint& b = curve[k];
        if (a.threshold >= threshold) {
            break;
        }
        if (b.threshold <= threshold) {
            area += 0.5 * (a.fraction + b.fraction) * (b.threshold - a.threshold);
        } else {
            const double w = (threshold - a.threshold) / (b.threshold - a.threshold);
            const double f = a.fraction + w * (b.fraction - a.fraction);
            area += 0.5 * (a.fraction + f) * (threshold - a.threshold);
        }
    }
    return area / threshold;
}

/// Fraction of samples whose error exceeds the threshold.
inline double failure_rate(const std::vector<double>& nmes, double threshold = kFailureThreshold)
{
    detail::require(!nmes.empty(), "failure_rate: no errors given");
    std::size_t failed = 0;
    for (const double e : nmes) {
        failed += e > threshold ? 1 : 0;
    }
    return static_cast<double>(failed) / static_cast<double>(nmes.size());
}

struct EvalReport
{
    std::vector<double> per_sample_nme;
    double mean_nme = 0.0;
    double auc = 0.0;
    double failure_rate = 0.0;
    std::vector<CedPoint> ced;
    double threshold = kFailureThreshold;
};

/// All metrics for one set of per-sample errors.
inline EvalReport evaluate(const std::vector<double>& nmes, double threshold = kFailureThreshold,
                           std::size_t grid_steps = kCedGridSteps)
{
    EvalReport report;
    report.per_sample_nme = nmes;
    report.threshold = threshold;
    report.ced = ced(nmes, threshold, grid_steps);
    report.auc = auc(report.ced, threshold);
    report.failure_rate = failure_rate(nmes, threshold);
    double sum = 0.0;
    for (const double e : nmes) {
        sum += e;
    }
    report.mean_nme = sum / static_cast<double>(nmes.size());
    return report;
}

} // namespace lmcrf

#endif // LMCRF_EVAL_HPP
