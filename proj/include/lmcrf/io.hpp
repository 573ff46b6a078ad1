/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/io.hpp
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

#ifndef LMCRF_IO_HPP
#define LMCRF_IO_HPP

#include "lmcrf/crf.hpp"
#include "lmcrf/error.hpp"
#include "lmcrf/eval.hpp"
#include "lmcrf/inference.hpp"
#include "lmcrf/model.hpp"
#include "lmcrf/sample.hpp"
#include "lmcrf/unary.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace lmcrf {

using json = nlohmann::json;

namespace io {

namespace detail {

template <typename Fn>
auto parse_or_throw(const std::string& what, Fn&& fn)
{
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(what + ": " + e.what());
    }
}

inline json point(const Eigen::Vector2d& p) { return json::array({p.x(), p.y()}); }

inline Eigen::Vector2d to_point(const json& j)
{
    if (!j.is_array() || j.size() != 2) {
        throw IoError("expected a 2-element array");
    }
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

} // namespace detail

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json(const std::string& path)
{
    const std::string text = read_text(path);
    return detail::parse_or_throw(path, [&] { return json::parse(text); });
}

/// Writes to a sibling temporary file and renames it over the target.
inline void write_text_atomic(const std::string& path, const std::string& text)
{
    const std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out << text;
        if (!out) {
            throw IoError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, target);
}

inline void write_json(const std::string& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

// ---- shape model: {"n", "k", "mean": [[x,y,z]...], "bases": [[[x,y,z]...]...]}

inline json to_json(const ShapeModel3D& model)
{
    auto rows = [](const ShapeMatrix& m) {
        json out = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            out.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
        }
        return out;
    };
    json bases = json::array();
    for (const auto& b : model.bases()) {
        bases.push_back(rows(b));
    }
    return json{{"n", model.num_landmarks()}, {"k", model.num_bases()}, {"mean", rows(model.mean_shape())},
                {"bases", bases}};
}

inline ShapeModel3D model_from_json(const json& j)
{
    return detail::parse_or_throw("shape model", [&] {
        const auto n = j.at("n").get<std::size_t>();
        const auto k = j.at("k").get<std::size_t>();
        auto matrix = [n](const json& rows) {
            if (!rows.is_array() || rows.size() != n) {
                throw IoError("shape model: expected " + std::to_string(n) + " rows");
            }
            ShapeMatrix m(static_cast<Eigen::Index>(n), 3);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& r = rows.at(i);
                if (!r.is_array() || r.size() != 3) {
                    throw IoError("shape model: expected [x, y, z] rows");
                }
                for (int c = 0; c < 3; ++c) {
                    m(static_cast<Eigen::Index>(i), c) = r.at(static_cast<std::size_t>(c)).get<double>();
                }
            }
            return m;
        };
        const json& bases_json = j.at("bases");
        if (!bases_json.is_array() || bases_json.size() != k) {
            throw IoError("shape model: expected " + std::to_string(k) + " bases");
        }
        std::vector<ShapeMatrix> bases;
        for (const auto& b : bases_json) {
            bases.push_back(matrix(b));
        }
        return ShapeModel3D(matrix(j.at("mean")), std::move(bases));
    });
}

inline ShapeModel3D read_model(const std::string& path) { return model_from_json(read_json(path)); }

// ---- unary: {"n", "landmarks": [{"mu": [x,y], "sigma": [[a,b],[b,c]]}...]}

inline json to_json(const UnaryPrediction& unaries)
{
    json landmarks = json::array();
    for (std::size_t i = 0; i < unaries.size(); ++i) {
        const auto& s = unaries.covariances[i];
        landmarks.push_back({{"mu", detail::point(unaries.means[i])},
                             {"sigma", json::array({json::array({s(0, 0), s(0, 1)}), json::array({s(1, 0), s(1, 1)})})}});
    }
    return json{{"n", unaries.size()}, {"landmarks", landmarks}};
}

/**
 * Parses a unary file and applies the covariance floor. Indices of floored
 * covariances are appended to `floored` when given.
 */
inline UnaryPrediction unary_from_json(const json& j, std::vector<std::size_t>* floored = nullptr)
{
    UnaryPrediction unaries = detail::parse_or_throw("unary", [&] {
        const auto n = j.at("n").get<std::size_t>();
        const json& landmarks = j.at("landmarks");
        if (!landmarks.is_array() || landmarks.size() != n) {
            throw IoError("unary: expected " + std::to_string(n) + " landmarks");
        }
        UnaryPrediction u;
        for (const auto& lm : landmarks) {
            u.means.push_back(detail::to_point(lm.at("mu")));
            const json& s = lm.at("sigma");
            if (!s.is_array() || s.size() != 2) {
                throw IoError("unary: sigma must be a 2x2 array");
            }
            const Eigen::Vector2d r0 = detail::to_point(s.at(0));
            const Eigen::Vector2d r1 = detail::to_point(s.at(1));
            Eigen::Matrix2d sigma;
            sigma << r0.x(), r0.y(), r1.x(), r1.y();
            u.covariances.push_back(sigma);
        }
        return u;
    });
    const auto changed = apply_covariance_floor(unaries);
    if (floored != nullptr) {
        floored->insert(floored->end(), changed.begin(), changed.end());
    }
    validate(unaries);
    return unaries;
}

inline UnaryPrediction read_unary(const std::string& path, std::vector<std::size_t>* floored = nullptr)
{
    return unary_from_json(read_json(path), floored);
}

// ---- pairwise: {"n", "pairs": [{"i", "j", "l": [[l11, 0], [l21, l22]]}...]}, every i < j exactly once

inline json to_json(const PairwiseSet& pairs)
{
    json list = json::array();
    for (std::size_t p = 0; p < pairs.num_pairs(); ++p) {
        const auto [i, j] = pairs.pair_at(p);
        const auto& l = pairs.factor_at(p);
        list.push_back({{"i", i},
                        {"j", j},
                        {"l", json::array({json::array({l(0, 0), 0.0}), json::array({l(1, 0), l(1, 1)})})}});
    }
    return json{{"n", pairs.num_landmarks()}, {"pairs", list}};
}

inline PairwiseSet pairwise_from_json(const json& j)
{
    return detail::parse_or_throw("pairwise", [&] {
        const auto n = j.at("n").get<std::size_t>();
        if (n < 2) {
            throw IoError("pairwise: need at least 2 landmarks");
        }
        PairwiseSet pairs = PairwiseSet::zeros(n);
        std::vector<bool> seen(pairs.num_pairs(), false);
        for (const auto& entry : j.at("pairs")) {
            const auto i = entry.at("i").get<std::size_t>();
            const auto jj = entry.at("j").get<std::size_t>();
            if (!(i < jj && jj < n)) {
                throw IoError("pairwise: pair (" + std::to_string(i) + ", " + std::to_string(jj) +
                              ") must satisfy i < j < n");
            }
            const json& l = entry.at("l");
            if (!l.is_array() || l.size() != 2) {
                throw IoError("pairwise: l must be a 2x2 array");
            }
            const Eigen::Vector2d r0 = detail::to_point(l.at(0));
            const Eigen::Vector2d r1 = detail::to_point(l.at(1));
            if (r0.y() != 0.0) {
                throw IoError("pairwise: factor for (" + std::to_string(i) + ", " + std::to_string(jj) +
                              ") is not lower-triangular");
            }
            Eigen::Matrix2d factor;
            factor << r0.x(), 0.0, r1.x(), r1.y();
            const std::size_t p = pairs.index(i, jj);
            if (seen[p]) {
                throw IoError("pairwise: duplicate pair (" + std::to_string(i) + ", " + std::to_string(jj) + ")");
            }
            seen[p] = true;
            pairs.set_factor_at(p, factor);
        }
        for (std::size_t p = 0; p < seen.size(); ++p) {
            if (!seen[p]) {
                const auto [i, jj] = pairs.pair_at(p);
                throw IoError("pairwise: missing pair (" + std::to_string(i) + ", " + std::to_string(jj) + ")");
            }
        }
        return pairs;
    });
}

inline PairwiseSet read_pairwise(const std::string& path) { return pairwise_from_json(read_json(path)); }

// ---- zeta: {"sx", "sy", "pitch", "yaw", "roll", "q": [...]}

inline json to_json(const DeformParams& zeta)
{
    return json{{"sx", zeta.sx},       {"sy", zeta.sy},   {"pitch", zeta.pitch},
                {"yaw", zeta.yaw},     {"roll", zeta.roll},
                {"q", std::vector<double>(zeta.q.data(), zeta.q.data() + zeta.q.size())}};
}

inline DeformParams zeta_from_json(const json& j)
{
    return detail::parse_or_throw("zeta", [&] {
        DeformParams zeta;
        zeta.sx = j.at("sx").get<double>();
        zeta.sy = j.at("sy").get<double>();
        zeta.pitch = j.at("pitch").get<double>();
        zeta.yaw = j.at("yaw").get<double>();
        zeta.roll = j.at("roll").get<double>();
        const auto q = j.at("q").get<std::vector<double>>();
        zeta.q = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
        return zeta;
    });
}

// ---- ground truth: {"n", "landmarks": [[x,y]...], "bbox": [x, y, w, h]}

inline json landmarks_json(const Eigen::VectorXd& y)
{
    json out = json::array();
    for (Eigen::Index i = 0; i + 1 < y.size(); i += 2) {
        out.push_back(json::array({y(i), y(i + 1)}));
    }
    return out;
}

inline Eigen::VectorXd landmarks_from_json(const json& j)
{
    if (!j.is_array()) {
        throw IoError("landmarks: expected an array of [x, y]");
    }
    Eigen::VectorXd y(2 * static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        y.segment<2>(2 * static_cast<Eigen::Index>(i)) = detail::to_point(j.at(i));
    }
    return y;
}

struct GroundTruth
{
    Eigen::VectorXd landmarks;
    BBox bbox;
};

inline json to_json(const GroundTruth& gt)
{
    return json{{"n", gt.landmarks.size() / 2},
                {"landmarks", landmarks_json(gt.landmarks)},
                {"bbox", json::array({gt.bbox.x, gt.bbox.y, gt.bbox.width, gt.bbox.height})}};
}

inline GroundTruth ground_truth_from_json(const json& j)
{
    return detail::parse_or_throw("ground truth", [&] {
        GroundTruth gt;
        gt.landmarks = landmarks_from_json(j.at("landmarks"));
        if (j.contains("bbox")) {
            const auto b = j.at("bbox").get<std::vector<double>>();
            if (b.size() != 4) {
                throw IoError("ground truth: bbox must be [x, y, w, h]");
            }
            gt.bbox = BBox{b[0], b[1], b[2], b[3]};
        } else {
            gt.bbox = tight_bbox(gt.landmarks);
        }
        return gt;
    });
}

// ---- prediction: {"landmarks", "zeta", "iters", "converged", "energy_trace"}

inline json prediction_json(const InferResult& result)
{
    return json{{"landmarks", landmarks_json(result.landmarks)},
                {"zeta", to_json(result.zeta)},
                {"iters", result.trace.iterations},
                {"converged", result.trace.converged},
                {"energy_trace", result.trace.iteration_energies}};
}

// ---- synthetic spec (recorded verbatim in dataset manifests)

inline json to_json(const SynthSpec& spec)
{
    auto range = [](const Range& r) { return json::array({r.lo, r.hi}); };
    return json{{"num_samples", spec.num_samples},
                {"noise_sigma", spec.noise_sigma},
                {"corrupt_fraction", spec.corrupt_fraction},
                {"corrupt_bias", spec.corrupt_bias},
                {"corrupt_cov_scale", spec.corrupt_cov_scale},
                {"seed", spec.seed},
                {"pitch_range", range(spec.pitch)},
                {"yaw_range", range(spec.yaw)},
                {"roll_range", range(spec.roll)},
                {"scale_range", range(spec.scale)},
                {"q_sigma", spec.q_sigma}};
}

// ---- evaluation report + CED CSV

inline json to_json(const EvalReport& report)
{
    json curve = json::array();
    for (const auto& pt : report.ced) {
        curve.push_back(json::array({pt.threshold, pt.fraction}));
    }
    return json{{"per_sample_nme", report.per_sample_nme},
                {"mean_nme", report.mean_nme},
                {"auc", report.auc},
                {"failure_rate", report.failure_rate},
                {"threshold", report.threshold},
                {"ced", curve}};
}

inline std::string ced_csv(const std::vector<CedPoint>& curve)
{
    std::ostringstream out;
    out << "threshold,fraction\n";
    out << std::setprecision(17);
    for (const auto& pt : curve) {
        out << pt.threshold << ',' << pt.fraction << '\n';
    }
    return out.str();
}

} // namespace io

} // namespace lmcrf

#endif // LMCRF_IO_HPP
