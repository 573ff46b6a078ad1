/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: tests/inference_test.cpp
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
#include "test_util.hpp"

#include "lmcrf/eval.hpp"
#include "lmcrf/inference.hpp"
#include "lmcrf/unary.hpp"

#include <gtest/gtest.h>

using namespace lmcrf;

namespace {

const ShapeModel3D& model12()
{
    static const ShapeModel3D model = make_synthetic_model(12, 4, 11);
    return model;
}

double sample_nme(const Eigen::VectorXd& pred, const SynthSample& s)
{
    return nme(pred, s.sample.y_gt, s.bbox.width, s.bbox.height);
}

void expect_monotone(const InferTrace& trace)
{
    for (std::size_t k = 1; k < trace.half_step_energies.size(); ++k) {
        EXPECT_LE(trace.half_step_energies[k], trace.half_step_energies[k - 1] + 1e-9) << "half-step " << k;
    }
}

} // namespace

TEST(Infer, ZeroCouplingsReturnUnaryMeans)
{
    SynthSpec spec;
    spec.num_samples = 3;
    spec.corrupt_fraction = 0.25;
    for (const auto& s : synth_generate(model12(), spec)) {
        const InferResult r = infer(s.sample.unaries, PairwiseSet::zeros(12), model12());
        EXPECT_EQ(r.landmarks, s.sample.unaries.stacked_means());
        EXPECT_EQ(r.trace.iterations, 1);
        EXPECT_TRUE(r.trace.converged);
        EXPECT_TRUE(r.trace.fits.empty());
    }
}

TEST(Infer, CorruptedLandmarksArePulledBack)
{
    SynthSpec spec;
    spec.num_samples = 10;
    spec.corrupt_fraction = 0.2;
    spec.seed = 4;
    const PairwiseSet pairs = PairwiseSet::isotropic(12, 100.0);
    double unary_total = 0.0;
    double joint_total = 0.0;
    for (const auto& s : synth_generate(model12(), spec)) {
        const InferResult r = infer(s.sample.unaries, pairs, model12());
        const double joint = sample_nme(r.landmarks, s);
        const double unary = sample_nme(s.sample.unaries.stacked_means(), s);
        EXPECT_LT(joint, unary) << s.sample.id;
        joint_total += joint;
        unary_total += unary;
        expect_monotone(r.trace);
    }
    EXPECT_LT(joint_total, 0.5 * unary_total);
}

TEST(Infer, CleanSampleStaysOnTheUnaryMeans)
{
    SynthSpec spec;
    spec.num_samples = 5;
    spec.noise_sigma = 0.0;
    spec.q_sigma = 0.0;
    for (const auto& s : synth_generate(model12(), spec)) {
        const InferResult r = infer(s.sample.unaries, PairwiseSet::isotropic(12, 0.01), model12());
        EXPECT_LT((r.landmarks - s.sample.unaries.stacked_means()).cwiseAbs().maxCoeff(), 1e-6);
        expect_monotone(r.trace);
    }
}

TEST(Infer, EnergyIsMonotoneOnRandomInstances)
{
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal(0.0, 1.0);
    SynthSpec spec;
    spec.num_samples = 20;
    spec.corrupt_fraction = 0.3;
    spec.seed = 9;
    for (const auto& s : synth_generate(model12(), spec)) {
        PairwiseSet pairs = PairwiseSet::zeros(12);
        for (std::size_t p = 0; p < pairs.num_pairs(); ++p) {
            Eigen::Matrix2d l;
            l << 5.0 * std::abs(normal(rng)), 0.0, 5.0 * normal(rng), 5.0 * std::abs(normal(rng));
            pairs.set_factor_at(p, l);
        }
        const InferResult r = infer(s.sample.unaries, pairs, model12());
        ASSERT_EQ(r.trace.half_step_energies.size(), 1 + 2 * static_cast<std::size_t>(r.trace.iterations));
        expect_monotone(r.trace);
        EXPECT_EQ(r.trace.iteration_energies.back(), r.trace.half_step_energies.back());
    }
}

TEST(Infer, FixedPointIsReturnedUnchanged)
{
    SynthSpec spec;
    spec.num_samples = 1;
    spec.noise_sigma = 0.0;
    spec.q_sigma = 0.0;
    const SynthSample s = synth_generate(model12(), spec).front();
    const InferResult r = infer(s.sample.unaries, PairwiseSet::isotropic(12, 1.0), model12(), {}, s.zeta);
    EXPECT_EQ(r.trace.iterations, 1);
    EXPECT_LT((r.landmarks - s.sample.unaries.stacked_means()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.zeta.yaw, s.zeta.yaw, 1e-12);
    EXPECT_NEAR(r.zeta.pitch, s.zeta.pitch, 1e-12);
    EXPECT_NEAR(r.zeta.roll, s.zeta.roll, 1e-12);
    EXPECT_NEAR(r.zeta.sx, s.zeta.sx, 1e-12);
    EXPECT_NEAR(r.zeta.sy, s.zeta.sy, 1e-12);
}

TEST(Infer, Deterministic)
{
    SynthSpec spec;
    spec.num_samples = 1;
    spec.corrupt_fraction = 0.2;
    const SynthSample s = synth_generate(model12(), spec).front();
    const PairwiseSet pairs = PairwiseSet::isotropic(12, 10.0);
    const InferResult a = infer(s.sample.unaries, pairs, model12());
    const InferResult b = infer(s.sample.unaries, pairs, model12());
    EXPECT_EQ(a.landmarks, b.landmarks);
    EXPECT_EQ(a.zeta, b.zeta);
    EXPECT_EQ(a.trace.half_step_energies, b.trace.half_step_energies);
}

TEST(Infer, IterationBudget)
{
    SynthSpec spec;
    spec.num_samples = 1;
    spec.corrupt_fraction = 0.3;
    const SynthSample s = synth_generate(model12(), spec).front();
    InferOptions opts;
    opts.max_iters = 1;
    const InferResult r = infer(s.sample.unaries, PairwiseSet::isotropic(12, 10.0), model12(), opts);
    EXPECT_EQ(r.trace.iterations, 1);
    EXPECT_EQ(r.trace.iteration_energies.size(), 1u);
    opts.max_iters = 0;
    EXPECT_THROW(infer(s.sample.unaries, PairwiseSet::isotropic(12, 10.0), model12(), opts), InvalidArgument);
}

TEST(Infer, RejectsMismatchedModel)
{
    SynthSpec spec;
    spec.num_samples = 1;
    const SynthSample s = synth_generate(model12(), spec).front();
    const ShapeModel3D other = make_synthetic_model(10, 4, 1);
    EXPECT_THROW(infer(s.sample.unaries, PairwiseSet::isotropic(10, 1.0), other), InvalidArgument);
}
