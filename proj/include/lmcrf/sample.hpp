/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/sample.hpp
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

#ifndef LMCRF_SAMPLE_HPP
#define LMCRF_SAMPLE_HPP

#include "lmcrf/crf.hpp"

#include "Eigen/Core"

#include <string>

namespace lmcrf {

/// Axis-aligned box in normalized crop coordinates.
struct BBox
{
    double x = 0.0;
    double y = 0.0;
    double width = 0.0;
    double height = 0.0;
};

/// Tight bounding box of stacked landmarks (x0, y0, x1, y1, ...).
inline BBox tight_bbox(const Eigen::VectorXd& landmarks)
{
    detail::require(landmarks.size() >= 2 && landmarks.size() % 2 == 0, "tight_bbox: bad landmark vector");
    const auto xs = Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<2>>(landmarks.data(), landmarks.size() / 2);
    const auto ys =
        Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<2>>(landmarks.data() + 1, landmarks.size() / 2);
    return BBox{xs.minCoeff(), ys.minCoeff(), xs.maxCoeff() - xs.minCoeff(), ys.maxCoeff() - ys.minCoeff()};
}

/// A precomputed unary prediction with its ground-truth landmarks.
struct TrainSample
{
    std::string id;
    UnaryPrediction unaries;
    Eigen::VectorXd y_gt;
};

} // namespace lmcrf

#endif // LMCRF_SAMPLE_HPP
