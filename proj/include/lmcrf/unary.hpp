/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/unary.hpp
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

#ifndef LMCRF_UNARY_HPP
#define LMCRF_UNARY_HPP

#include "lmcrf/crf.hpp"
#include "lmcrf/error.hpp"
#include "lmcrf/model.hpp"
#include "lmcrf/sample.hpp"

#include "Eigen/Core"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lmcrf {

/// A non-negative probability map for one landmark, row-major: value(x, y) = values[y * width + x].
struct Heatmap
{
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;

    double at(std::size_t x, std::size_t y) const { return values.at(y * width + x); }
};

struct Moments
{
    Eigen::Vector2d mean;
    Eigen::Matrix2d covariance;
};

/**
 * Mean and covariance of a heatmap treated as a distribution over pixel
 * centers ((k + 0.5) / W, (l + 0.5) / H), with floor * I added to the covariance.
 */
inline Moments moments_from_heatmap(const Heatmap& heatmap, double floor = kCovarianceFloor)
{
    detail::require(heatmap.width > 0 && heatmap.height > 0, "moments_from_heatmap: empty heatmap");
    detail::require(heatmap.values.size() == heatmap.width * heatmap.height,
                    "moments_from_heatmap: value count does not match width * height");
    detail::require(floor >= 0.0, "moments_from_heatmap: negative floor");
    double total = 0.0;
    for (const double v : heatmap.values) {
        detail::require(std::isfinite(v) && v >= 0.0, "moments_from_heatmap: values must be finite and non-negative");
        total += v;
    }
    detail::require(total > 0.0, "moments_from_heatmap: heatmap has no positive value");

    const double w = static_cast<double>(heatmap.width);
    const double h = static_cast<double>(heatmap.height);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (std::size_t l = 0; l < heatmap.height; ++l) {
        for (std::size_t k = 0; k < heatmap.width; ++k) {
            const double weight = heatmap.at(k, l) / total;
            mean += weight * Eigen::Vector2d((static_cast<double>(k) + 0.5) / w, (static_cast<double>(l) + 0.5) / h);
        }
    }
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (std::size_t l = 0; l < heatmap.height; ++l) {
        for (std::size_t k = 0; k < heatmap.width; ++k) {
            const double weight = heatmap.at(k, l) / total;
            const Eigen::Vector2d d =
                Eigen::Vector2d((static_cast<double>(k) + 0.5) / w, (static_cast<double>(l) + 0.5) / h) - mean;
            cov += weight * d * d.transpose();
        }
    }
    cov(1, 0) = cov(0, 1);
    cov += floor * Eigen::Matrix2d::Identity();
    return Moments{mean, cov};
}

/// Unary prediction from one heatmap per landmark.
inline UnaryPrediction unary_from_heatmaps(const std::vector<Heatmap>& heatmaps, double floor = kCovarianceFloor)
{
    UnaryPrediction unaries;
    for (const auto& heatmap : heatmaps) {
        const Moments m = moments_from_heatmap(heatmap, floor);
        unaries.means.push_back(m.mean);
        unaries.covariances.push_back(m.covariance);
    }
    return unaries;
}

// Heatmap stack file: "HMAP", u32 count, u32 width, u32 height, then count * width * height
// little-endian float32 values, row-major per map.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v)
{
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
    }
}

inline std::uint32_t get_u32(const unsigned char* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace detail

inline std::string encode_heatmaps(const std::vector<Heatmap>& heatmaps)
{
    detail::require(!heatmaps.empty(), "encode_heatmaps: nothing to write");
    const std::size_t w = heatmaps.front().width;
    const std::size_t h = heatmaps.front().height;
    std::string out = "HMAP";
    detail::put_u32(out, static_cast<std::uint32_t>(heatmaps.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(w));
    detail::put_u32(out, static_cast<std::uint32_t>(h));
    for (const auto& map : heatmaps) {
        detail::require(map.width == w && map.height == h && map.values.size() == w * h,
                        "encode_heatmaps: all maps must share the same size");
        for (const double v : map.values) {
            const auto f = static_cast<float>(v);
            std::uint32_t bits = 0;
            std::memcpy(&bits, &f, sizeof(bits));
            detail::put_u32(out, bits);
        }
    }
    return out;
}

inline std::vector<Heatmap> decode_heatmaps(const std::string& bytes)
{
    if (bytes.size() < 16 || bytes.compare(0, 4, "HMAP") != 0) {
        throw IoError("heatmap file: missing HMAP header");
    }
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t count = detail::get_u32(raw + 4);
    const std::uint32_t w = detail::get_u32(raw + 8);
    const std::uint32_t h = detail::get_u32(raw + 12);
    const std::uint64_t per_map = static_cast<std::uint64_t>(w) * h;
    if (bytes.size() != 16 + 4 * per_map * count) {
        throw IoError("heatmap file: expected " + std::to_string(16 + 4 * per_map * count) + " bytes, found " +
                      std::to_string(bytes.size()));
    }
    std::vector<Heatmap> maps(count);
    const unsigned char* p = raw + 16;
    for (auto& map : maps) {
        map.width = w;
        map.height = h;
        map.values.resize(per_map);
        for (auto& v : map.values) {
            const std::uint32_t bits = detail::get_u32(p);
            float f = 0.0f;
            std::memcpy(&f, &bits, sizeof(f));
            v = static_cast<double>(f);
            p += 4;
        }
    }
    return maps;
}

inline std::vector<Heatmap> read_heatmaps(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open heatmap file " + path);
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_heatmaps(bytes);
}

inline void write_heatmaps(const std::string& path, const std::vector<Heatmap>& heatmaps)
{
    const std::string bytes = encode_heatmaps(heatmaps);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Closed interval [lo, hi].
struct Range
{
    double lo = 0.0;
    double hi = 0.0;
};

/// Parameters of the synthetic unary generator.
struct SynthSpec
{
    std::size_t num_samples = 100;
    double noise_sigma = 0.01;
    double corrupt_fraction = 0.0;
    double corrupt_bias = 0.15;
    double corrupt_cov_scale = 100.0;
    std::uint64_t seed = 0;
    Range pitch{-0.3, 0.3};
    Range yaw{-0.6, 0.6};
    Range roll{-0.3, 0.3};
    Range scale{0.25, 0.35};
    double q_sigma = 0.1;
    int max_retries = 100;
};

inline void validate(const SynthSpec& spec)
{
    auto ordered = [](const Range& r) { return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi; };
    detail::require(ordered(spec.pitch) && ordered(spec.yaw) && ordered(spec.roll) && ordered(spec.scale),
                    "SynthSpec: ranges must be finite with lo <= hi");
    detail::require(spec.scale.lo > 0.0, "SynthSpec: scales must be positive");
    detail::require(spec.noise_sigma >= 0.0, "SynthSpec: negative noise_sigma");
    detail::require(spec.corrupt_fraction >= 0.0 && spec.corrupt_fraction <= 1.0,
                    "SynthSpec: corrupt_fraction must lie in [0, 1]");
    detail::require(spec.corrupt_bias >= 0.0, "SynthSpec: negative corrupt_bias");
    detail::require(spec.corrupt_cov_scale >= 1.0, "SynthSpec: corrupt_cov_scale must be >= 1");
    detail::require(spec.q_sigma >= 0.0, "SynthSpec: negative q_sigma");
    detail::require(spec.max_retries >= 1, "SynthSpec: max_retries must be positive");
}

struct SynthSample
{
    TrainSample sample;
    DeformParams zeta;
    BBox bbox;
    std::vector<std::size_t> corrupted;
};

/// Number of corrupted landmarks per sample: round(fraction * N).
inline std::size_t corrupt_count(const SynthSpec& spec, std::size_t num_landmarks)
{
    return static_cast<std::size_t>(std::lround(spec.corrupt_fraction * static_cast<double>(num_landmarks)));
}

inline std::string synth_sample_id(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%05zu", index);
    return buf;
}

/**
 * Generates one sample from its own PRNG stream seeded by (seed, index), so
 * samples can be produced in any order or in parallel.
 */
inline SynthSample synth_generate_one(const ShapeModel3D& model, const SynthSpec& spec, std::size_t index)
{
    const std::uint64_t seed = spec.seed;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto uniform = [&rng](const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };

    const std::size_t n = model.num_landmarks();
    SynthSample out;
    out.sample.id = synth_sample_id(index);
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
        DeformParams zeta = DeformParams::identity(model.num_bases());
        zeta.pitch = uniform(spec.pitch);
        zeta.yaw = uniform(spec.yaw);
        zeta.roll = uniform(spec.roll);
        zeta.sx = uniform(spec.scale);
        zeta.sy = uniform(spec.scale);
        for (Eigen::Index k = 0; k < zeta.q.size(); ++k) {
            zeta.q(k) = spec.q_sigma * normal(rng);
        }
        const Points2 projected = project_shape(model, zeta);
        Eigen::VectorXd y(2 * static_cast<Eigen::Index>(n));
        const Eigen::RowVector2d shift = Eigen::RowVector2d(0.5, 0.5) - projected.colwise().mean();
        for (Eigen::Index i = 0; i < projected.rows(); ++i) {
            y.segment<2>(2 * i) = (projected.row(i) + shift).transpose();
        }
        if ((y.array() >= 0.0).all() && (y.array() <= 1.0).all()) {
            out.zeta = std::move(zeta);
            out.sample.y_gt = std::move(y);
            placed = true;
        }
    }
    if (!placed) {
        throw InvalidArgument("synth_generate: sample " + std::to_string(index) + " left [0,1]^2 after " +
                              std::to_string(spec.max_retries) + " draws; shrink the scale range");
    }

    const double variance = std::max(spec.noise_sigma * spec.noise_sigma, kCovarianceFloor);
    auto& unaries = out.sample.unaries;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d noise(normal(rng), normal(rng));
        unaries.means.push_back(out.sample.y_gt.segment<2>(2 * static_cast<Eigen::Index>(i)) +
                                spec.noise_sigma * noise);
        unaries.covariances.push_back(variance * Eigen::Matrix2d::Identity());
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t num_corrupt = corrupt_count(spec, n);
    for (std::size_t c = 0; c < num_corrupt; ++c) {
        const std::size_t pick = c + std::uniform_int_distribution<std::size_t>(0, n - 1 - c)(rng);
        std::swap(order[c], order[pick]);
        const std::size_t i = order[c];
        const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
        unaries.means[i] += spec.corrupt_bias * Eigen::Vector2d(std::cos(angle), std::sin(angle));
        unaries.covariances[i] *= spec.corrupt_cov_scale;
        out.corrupted.push_back(i);
    }
    std::sort(out.corrupted.begin(), out.corrupted.end());
    out.bbox = tight_bbox(out.sample.y_gt);
    return out;
}

/// Synthetic samples: model projections placed at (0.5, 0.5) with noisy, partly corrupted unaries.
inline std::vector<SynthSample> synth_generate(const ShapeModel3D& model, const SynthSpec& spec)
{
    validate(spec);
    std::vector<SynthSample> samples;
    samples.reserve(spec.num_samples);
    for (std::size_t s = 0; s < spec.num_samples; ++s) {
        samples.push_back(synth_generate_one(model, spec, s));
    }
    return samples;
}

} // namespace lmcrf

#endif // LMCRF_UNARY_HPP
