/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: tests/training_test.cpp
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

#include "lmcrf/training.hpp"
#include "lmcrf/unary.hpp"

#include <gtest/gtest.h>

using namespace lmcrf;

namespace {

const ShapeModel3D& model8()
{
    static const ShapeModel3D model = make_synthetic_model(8, 2, 17);
    return model;
}

std::vector<TrainSample> dataset(std::size_t count, std::uint64_t seed, double corrupt)
{
    SynthSpec spec;
    spec.num_samples = count;
    spec.seed = seed;
    spec.corrupt_fraction = corrupt;
    std::vector<TrainSample> out;
    for (auto& s : synth_generate(model8(), spec)) {
        out.push_back(std::move(s.sample));
    }
    return out;
}

TrainOptions quick()
{
    TrainOptions opts;
    opts.max_outer_iters = 6;
    opts.factor_steps = 10;
    return opts;
}

} // namespace

TEST(DatasetNll, Examples)
{
    const auto data = dataset(2, 3, 0.0);
    const PairwiseSet pairs = PairwiseSet::isotropic(8, 0.5);
    std::vector<DeformParams> zetas;
    for (const auto& s : data) {
        zetas.push_back(cold_start(s.y_gt, model8()));
    }
    EXPECT_EQ(dataset_nll({}, model8(), pairs, {}), 0.0);
    const double first = nll(data[0].y_gt, conditional_gaussian(data[0].unaries, pairs, model8(), zetas[0]));
    const double second = nll(data[1].y_gt, conditional_gaussian(data[1].unaries, pairs, model8(), zetas[1]));
    EXPECT_EQ(dataset_nll({data[0]}, model8(), pairs, {zetas[0]}), first);
    EXPECT_EQ(dataset_nll(data, model8(), pairs, zetas), first + second);
    EXPECT_THROW(dataset_nll(data, model8(), pairs, {zetas[0]}), InvalidArgument);
}

TEST(TrainCrf, ConsistentSampleWithZeroCouplingsIsStationary)
{
    auto data = dataset(1, 5, 0.0);
    data[0].y_gt = data[0].unaries.stacked_means();
    const NllGradients g = nll_gradients(data[0].y_gt, data[0].unaries, PairwiseSet::zeros(8), model8(),
                                         cold_start(data[0].y_gt, model8()));
    for (const auto& d : g.d_means) {
        EXPECT_EQ(d, Eigen::Vector2d::Zero());
    }
    for (const auto& d : g.d_pair_factors) {
        EXPECT_EQ(d, Eigen::Matrix2d::Zero());
    }
    const TrainResult r = train_crf(data, model8(), PairwiseSet::zeros(8), quick());
    EXPECT_TRUE(r.pairs.all_zero());
}

TEST(TrainCrf, LowersTrainingNllMonotonically)
{
    const auto data = dataset(12, 1, 0.25);
    const TrainResult r = train_crf(data, model8(), std::nullopt, quick());
    const auto& rep = r.report;
    ASSERT_FALSE(rep.epoch_nll.empty());
    ASSERT_EQ(rep.epoch_nll.size(), rep.epoch_outer.size());
    // within each factor stage every accepted epoch lowers the nll
    std::size_t k = 0;
    for (std::size_t outer = 0; outer < rep.stage_start_nll.size(); ++outer) {
        double previous = rep.stage_start_nll[outer];
        for (; k < rep.epoch_nll.size() && rep.epoch_outer[k] == static_cast<int>(outer); ++k) {
            EXPECT_LT(rep.epoch_nll[k], previous);
            previous = rep.epoch_nll[k];
        }
        EXPECT_EQ(rep.outer_nll[outer], previous);
    }
    EXPECT_LT(rep.outer_nll.back(), rep.stage_start_nll.front());
    EXPECT_EQ(dataset_nll(data, model8(), r.pairs, r.zetas), rep.outer_nll.back());
}

TEST(TrainCrf, HeldOutNllImproves)
{
    const auto train = dataset(30, 1, 0.2);
    const auto held_out = dataset(10, 2, 0.2);
    const TrainResult r = train_crf(train, model8(), std::nullopt, quick());
    const PairwiseSet init = PairwiseSet::isotropic(8, 0.01);
    TrainOptions opts = quick();
    std::vector<DeformParams> z_init;
    std::vector<DeformParams> z_trained;
    for (const auto& s : held_out) {
        z_init.push_back(cold_start(s.unaries.stacked_means(), model8()));
    }
    z_trained = z_init;
    refit_zetas(held_out, model8(), init, z_init, true, opts);
    refit_zetas(held_out, model8(), r.pairs, z_trained, true, opts);
    EXPECT_LT(dataset_nll(held_out, model8(), r.pairs, z_trained), dataset_nll(held_out, model8(), init, z_init));
}

TEST(TrainCrf, CouplingsStayPositiveSemidefinite)
{
    const auto data = dataset(8, 7, 0.25);
    const TrainResult r = train_crf(data, model8(), std::nullopt, quick());
    for (std::size_t p = 0; p < r.pairs.num_pairs(); ++p) {
        EXPECT_GE(min_eigenvalue(r.pairs.coupling_at(p)), -1e-12);
    }
}

TEST(TrainCrf, Reproducible)
{
    const auto data = dataset(6, 8, 0.25);
    const TrainResult a = train_crf(data, model8(), std::nullopt, quick());
    const TrainResult b = train_crf(data, model8(), std::nullopt, quick());
    EXPECT_EQ(a.pairs, b.pairs);
    EXPECT_EQ(a.report.epoch_nll, b.report.epoch_nll);
    ASSERT_EQ(a.zetas.size(), b.zetas.size());
    for (std::size_t m = 0; m < a.zetas.size(); ++m) {
        EXPECT_EQ(a.zetas[m], b.zetas[m]);
    }
}

TEST(TrainCrf, RejectsBadData)
{
    EXPECT_THROW(train_crf({}, model8(), std::nullopt), InvalidArgument);
    auto data = dataset(2, 3, 0.0);
    data[1].y_gt = data[1].y_gt.head(10).eval();
    EXPECT_THROW(train_crf(data, model8(), std::nullopt), InvalidArgument);
    EXPECT_THROW(train_crf(dataset(2, 3, 0.0), model8(), PairwiseSet::zeros(5)), InvalidArgument);
}
