/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: tools/lmcrf_cli.cpp
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
// lmcrf command-line tool: synthetic data, inference, shape fitting, CRF
// training, heatmap moments and evaluation.

#include "lmcrf/io.hpp"
#include "lmcrf/lmcrf.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using lmcrf::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Reads nested JSON objects as CLI11 config sections: {"infer": {"max-iters": 3}}.
class JsonConfig : public CLI::Config
{
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override
    {
        throw CLI::FileError("writing JSON configs is not supported");
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override
    {
        json root;
        try {
            input >> root;
        } catch (const json::exception& e) {
            throw CLI::ParseError(std::string("config: ") + e.what(), CLI::ExitCodes::ConfigError);
        }
        if (!root.is_object()) {
            throw CLI::ParseError("config: top level must be a JSON object", CLI::ExitCodes::ConfigError);
        }
        std::vector<CLI::ConfigItem> items;
        collect(root, {}, items);
        return items;
    }

private:
    static std::string scalar(const json& v)
    {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        if (v.is_boolean()) {
            return v.get<bool>() ? "true" : "false";
        }
        return v.dump();
    }

    static void collect(const json& node, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out)
    {
        for (const auto& [key, value] : node.items()) {
            if (value.is_object()) {
                auto nested = parents;
                nested.push_back(key);
                collect(value, nested, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) {
                    item.inputs.push_back(scalar(v));
                }
            } else {
                item.inputs.push_back(scalar(value));
            }
            out.push_back(std::move(item));
        }
    }
};

/// Errors in the inputs a command was given; reported with the usage exit code.
struct UsageError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

/// Runs fn(i) for i in [0, count) on `jobs` threads. Each index is handled exactly once.
template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn)
{
    if (jobs == 0) {
        jobs = std::max(1u, std::thread::hardware_concurrency());
    }
    jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(count, 1)));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            fn(i);
        }
    };
    if (jobs <= 1) {
        worker();
        return;
    }
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < jobs; ++t) {
        threads.emplace_back(worker);
    }
    for (auto& t : threads) {
        t.join();
    }
}

/// Per-sample outcome: an error message, plus warnings to print in sample order.
struct SampleStatus
{
    std::optional<std::string> error;
    std::vector<std::string> warnings;
};

/// Prints warnings and failures in sample order; returns the number of failures.
std::size_t report(const std::vector<std::string>& ids, const std::vector<SampleStatus>& status)
{
    std::size_t failed = 0;
    for (std::size_t s = 0; s < ids.size(); ++s) {
        for (const auto& w : status[s].warnings) {
            std::cerr << "warning: " << ids[s] << ": " << w << '\n';
        }
        if (status[s].error) {
            std::cerr << "error: " << ids[s] << ": " << *status[s].error << '\n';
            ++failed;
        }
    }
    return failed;
}

template <typename Fn>
SampleStatus guarded(Fn&& fn)
{
    SampleStatus status;
    try {
        fn(status);
    } catch (const std::exception& e) {
        status.error = e.what();
    }
    return status;
}

// ---- dataset directories: manifest.json plus <id>.unary.json / <id>.gt.json / <id>.zeta.json

struct Dataset
{
    fs::path dir;
    std::vector<std::string> ids;
};

Dataset read_dataset(const std::string& dir)
{
    const fs::path root(dir);
    const json manifest = lmcrf::io::read_json((root / "manifest.json").string());
    Dataset data{root, {}};
    try {
        data.ids = manifest.at("samples").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw lmcrf::IoError(dir + "/manifest.json: " + e.what());
    }
    return data;
}

std::string sample_path(const fs::path& dir, const std::string& id, const std::string& kind)
{
    return (dir / (id + "." + kind + ".json")).string();
}

void make_output_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw lmcrf::IoError("cannot create output directory " + dir + ": " + ec.message());
    }
}

std::string floor_warning(const std::vector<std::size_t>& floored)
{
    std::ostringstream msg;
    msg << "covariance floor applied to landmark";
    msg << (floored.size() > 1 ? "s" : "");
    for (const auto i : floored) {
        msg << ' ' << i;
    }
    return msg.str();
}

std::vector<lmcrf::TrainSample> read_train_samples(const Dataset& data, std::vector<SampleStatus>& status)
{
    std::vector<lmcrf::TrainSample> samples(data.ids.size());
    status.assign(data.ids.size(), {});
    for (std::size_t s = 0; s < data.ids.size(); ++s) {
        status[s] = guarded([&](SampleStatus& st) {
            std::vector<std::size_t> floored;
            samples[s].id = data.ids[s];
            samples[s].unaries = lmcrf::io::read_unary(sample_path(data.dir, data.ids[s], "unary"), &floored);
            samples[s].y_gt =
                lmcrf::io::ground_truth_from_json(lmcrf::io::read_json(sample_path(data.dir, data.ids[s], "gt")))
                    .landmarks;
            if (!floored.empty()) {
                st.warnings.push_back(floor_warning(floored));
            }
        });
    }
    return samples;
}

// ---- commands

struct GenModelArgs
{
    std::size_t landmarks = 12;
    std::size_t bases = 4;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen_model(const GenModelArgs& a)
{
    const lmcrf::ShapeModel3D model = lmcrf::make_synthetic_model(a.landmarks, a.bases, a.seed);
    lmcrf::io::write_json(a.out, lmcrf::io::to_json(model));
    std::cout << "wrote model with " << a.landmarks << " landmarks and " << a.bases << " bases to " << a.out << '\n';
    return 0;
}

struct SynthArgs
{
    std::string model;
    std::string out;
    lmcrf::SynthSpec spec;
    std::vector<double> pitch{-0.3, 0.3}, yaw{-0.6, 0.6}, roll{-0.3, 0.3}, scale{0.25, 0.35};
    unsigned jobs = 1;
};

int cmd_synth(SynthArgs a)
{
    a.spec.pitch = {a.pitch[0], a.pitch[1]};
    a.spec.yaw = {a.yaw[0], a.yaw[1]};
    a.spec.roll = {a.roll[0], a.roll[1]};
    a.spec.scale = {a.scale[0], a.scale[1]};
    // everything is validated before the output directory is touched
    const lmcrf::ShapeModel3D model = lmcrf::io::read_model(a.model);
    lmcrf::validate(a.spec);
    make_output_dir(a.out);

    const fs::path dir(a.out);
    std::vector<std::string> ids(a.spec.num_samples);
    std::vector<SampleStatus> status(a.spec.num_samples);
    parallel_for(a.spec.num_samples, a.jobs, [&](std::size_t s) {
        ids[s] = lmcrf::synth_sample_id(s);
        status[s] = guarded([&](SampleStatus&) {
            const lmcrf::SynthSample sample = lmcrf::synth_generate_one(model, a.spec, s);
            lmcrf::io::write_json(sample_path(dir, ids[s], "unary"), lmcrf::io::to_json(sample.sample.unaries));
            lmcrf::io::write_json(sample_path(dir, ids[s], "gt"),
                                  lmcrf::io::to_json(lmcrf::io::GroundTruth{sample.sample.y_gt, sample.bbox}));
            json zeta = lmcrf::io::to_json(sample.zeta);
            zeta["corrupted"] = sample.corrupted;
            lmcrf::io::write_json(sample_path(dir, ids[s], "zeta"), zeta);
        });
    });
    if (report(ids, status) > 0) {
        return kExitFailure;
    }
    lmcrf::io::write_json((dir / "manifest.json").string(),
                          json{{"n", ids.size()},
                               {"landmarks", model.num_landmarks()},
                               {"samples", ids},
                               {"spec", lmcrf::io::to_json(a.spec)}});
    std::cout << "wrote " << ids.size() << " samples to " << a.out << '\n';
    return 0;
}

struct InferArgs
{
    std::string model;
    std::string crf;
    std::string data;
    std::string out;
    bool unary_only = false;
    lmcrf::InferOptions opts;
    unsigned jobs = 1;
};

int cmd_infer(const InferArgs& a)
{
    const lmcrf::ShapeModel3D model = lmcrf::io::read_model(a.model);
    if (!a.unary_only && a.crf.empty()) {
        throw UsageError("infer: --crf is required unless --unary-only is given");
    }
    const lmcrf::PairwiseSet pairs =
        a.unary_only ? lmcrf::PairwiseSet::zeros(model.num_landmarks()) : lmcrf::io::read_pairwise(a.crf);
    if (pairs.num_landmarks() != model.num_landmarks()) {
        throw UsageError("infer: pairwise file and model disagree on the landmark count");
    }
    const Dataset data = read_dataset(a.data);
    make_output_dir(a.out);

    std::vector<SampleStatus> status(data.ids.size());
    parallel_for(data.ids.size(), a.jobs, [&](std::size_t s) {
        status[s] = guarded([&](SampleStatus& st) {
            std::vector<std::size_t> floored;
            const auto unaries = lmcrf::io::read_unary(sample_path(data.dir, data.ids[s], "unary"), &floored);
            if (!floored.empty()) {
                st.warnings.push_back(floor_warning(floored));
            }
            const lmcrf::InferResult result = lmcrf::infer(unaries, pairs, model, a.opts);
            lmcrf::io::write_json(sample_path(a.out, data.ids[s], "pred"), lmcrf::io::prediction_json(result));
        });
    });
    const std::size_t failed = report(data.ids, status);
    std::cout << "inferred " << data.ids.size() - failed << " of " << data.ids.size() << " samples into " << a.out
              << '\n';
    return failed == 0 ? 0 : kExitFailure;
}

struct FitShapeArgs
{
    std::string model;
    std::string crf;
    std::string data;
    std::string out;
    std::string target = "unary";
    lmcrf::FitOptions opts;
    unsigned jobs = 1;
};

int cmd_fit_shape(const FitShapeArgs& a)
{
    const lmcrf::ShapeModel3D model = lmcrf::io::read_model(a.model);
    const lmcrf::PairwiseSet pairs =
        a.crf.empty() ? lmcrf::PairwiseSet::isotropic(model.num_landmarks(), 1.0) : lmcrf::io::read_pairwise(a.crf);
    if (pairs.num_landmarks() != model.num_landmarks()) {
        throw UsageError("fit-shape: pairwise file and model disagree on the landmark count");
    }
    const Dataset data = read_dataset(a.data);
    make_output_dir(a.out);

    std::vector<SampleStatus> status(data.ids.size());
    parallel_for(data.ids.size(), a.jobs, [&](std::size_t s) {
        status[s] = guarded([&](SampleStatus& st) {
            Eigen::VectorXd y;
            if (a.target == "gt") {
                y = lmcrf::io::ground_truth_from_json(lmcrf::io::read_json(sample_path(data.dir, data.ids[s], "gt")))
                        .landmarks;
            } else {
                std::vector<std::size_t> floored;
                y = lmcrf::io::read_unary(sample_path(data.dir, data.ids[s], "unary"), &floored).stacked_means();
                if (!floored.empty()) {
                    st.warnings.push_back(floor_warning(floored));
                }
            }
            const lmcrf::FitResult fit =
                lmcrf::fit_deform_params(y, pairs, model, lmcrf::cold_start(y, model), a.opts);
            // the fit only sees differences; place the fitted shape on the target's centroid
            const lmcrf::Points2 shape = lmcrf::project_shape(model, fit.zeta);
            const Eigen::Index n = shape.rows();
            const Eigen::Vector2d shift =
                y.reshaped(2, n).rowwise().mean() - shape.colwise().mean().transpose();
            Eigen::VectorXd landmarks(2 * n);
            for (Eigen::Index i = 0; i < n; ++i) {
                landmarks.segment<2>(2 * i) = shape.row(i).transpose() + shift;
            }
            const auto& d = fit.diagnostics;
            lmcrf::io::write_json(sample_path(a.out, data.ids[s], "pred"),
                                  json{{"landmarks", lmcrf::io::landmarks_json(landmarks)},
                                       {"zeta", lmcrf::io::to_json(fit.zeta)},
                                       {"iters", d.iterations},
                                       {"converged", d.converged},
                                       {"objective", d.final_objective},
                                       {"initial_objective", d.initial_objective},
                                       {"gradient_norm", d.gradient_norm}});
        });
    });
    const std::size_t failed = report(data.ids, status);
    std::cout << "fitted " << data.ids.size() - failed << " of " << data.ids.size() << " samples into " << a.out
              << '\n';
    return failed == 0 ? 0 : kExitFailure;
}

struct TrainArgs
{
    std::string model;
    std::string data;
    std::string out;
    std::string init;
    std::string report;
    lmcrf::TrainOptions opts;
};

int cmd_train_crf(const TrainArgs& a)
{
    const lmcrf::ShapeModel3D model = lmcrf::io::read_model(a.model);
    std::optional<lmcrf::PairwiseSet> init;
    if (!a.init.empty()) {
        init = lmcrf::io::read_pairwise(a.init);
    }
    const Dataset data = read_dataset(a.data);
    std::vector<SampleStatus> status;
    const auto samples = read_train_samples(data, status);
    if (report(data.ids, status) > 0) {
        return kExitFailure;
    }

    lmcrf::TrainResult result;
    try {
        result = lmcrf::train_crf(samples, model, init, a.opts);
    } catch (const lmcrf::TrainingFailure& e) {
        // keep the last finite parameters for inspection
        lmcrf::io::write_json(a.out + ".failed.json", lmcrf::io::to_json(e.last_pairs));
        throw;
    }
    lmcrf::io::write_json(a.out, lmcrf::io::to_json(result.pairs));
    const auto& rep = result.report;
    if (!a.report.empty()) {
        json zetas = json::object();
        for (std::size_t m = 0; m < samples.size(); ++m) {
            zetas[samples[m].id] = lmcrf::io::to_json(result.zetas[m]);
        }
        lmcrf::io::write_json(a.report, json{{"epoch_nll", rep.epoch_nll},
                                             {"epoch_outer", rep.epoch_outer},
                                             {"stage_start_nll", rep.stage_start_nll},
                                             {"outer_nll", rep.outer_nll},
                                             {"learning_rates", rep.learning_rates},
                                             {"outer_iterations", rep.outer_iterations},
                                             {"converged", rep.converged},
                                             {"zetas", zetas}});
    }
    char line[160];
    std::snprintf(line, sizeof(line), "trained on %zu samples: nll %.10g -> %.10g in %d outer iterations%s",
                  samples.size(), rep.stage_start_nll.front(), rep.outer_nll.back(), rep.outer_iterations,
                  rep.converged ? "" : " (not converged)");
    std::cout << line << '\n';
    return 0;
}

struct MomentsArgs
{
    std::string heatmaps;
    std::string out;
    double floor = lmcrf::kCovarianceFloor;
};

int cmd_moments(const MomentsArgs& a)
{
    const auto maps = lmcrf::read_heatmaps(a.heatmaps);
    if (maps.empty()) {
        throw UsageError("moments: " + a.heatmaps + " holds no heatmaps");
    }
    const lmcrf::UnaryPrediction unaries = lmcrf::unary_from_heatmaps(maps, a.floor);
    lmcrf::io::write_json(a.out, lmcrf::io::to_json(unaries));
    std::cout << "wrote " << unaries.size() << " landmarks to " << a.out << '\n';
    return 0;
}

struct EvalArgs
{
    std::string pred;
    std::string data;
    std::string out;
    std::string ced;
    double threshold = lmcrf::kFailureThreshold;
    std::size_t steps = lmcrf::kCedGridSteps;
};

int cmd_eval(const EvalArgs& a)
{
    const Dataset data = read_dataset(a.data);
    std::vector<double> nmes;
    std::vector<SampleStatus> status(data.ids.size());
    for (std::size_t s = 0; s < data.ids.size(); ++s) {
        status[s] = guarded([&](SampleStatus&) {
            const auto gt =
                lmcrf::io::ground_truth_from_json(lmcrf::io::read_json(sample_path(data.dir, data.ids[s], "gt")));
            const json pred = lmcrf::io::read_json(sample_path(a.pred, data.ids[s], "pred"));
            const Eigen::VectorXd landmarks = lmcrf::io::landmarks_from_json(pred.at("landmarks"));
            nmes.push_back(lmcrf::nme(landmarks, gt.landmarks, gt.bbox.width, gt.bbox.height));
        });
    }
    if (report(data.ids, status) > 0) {
        return kExitFailure;
    }
    const lmcrf::EvalReport r = lmcrf::evaluate(nmes, a.threshold, a.steps);
    json j = lmcrf::io::to_json(r);
    j["samples"] = data.ids;
    lmcrf::io::write_json(a.out, j);
    if (!a.ced.empty()) {
        lmcrf::io::write_text_atomic(a.ced, lmcrf::io::ced_csv(r.ced));
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%zu samples: mean nme %.6f, auc@%.3g %.6f, failure rate %.6f", nmes.size(),
                  r.mean_nme, r.threshold, r.auc, r.failure_rate);
    std::cout << line << '\n';
    return 0;
}

CLI::Option* add_jobs(CLI::App* cmd, unsigned& jobs)
{
    return cmd->add_option("--jobs,-j", jobs, "Worker threads (0 = all cores); output does not depend on it")
        ->capture_default_str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Gaussian CRF landmark inference with a 3D deformable shape model"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file of option values, nested by subcommand; command-line values win");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    GenModelArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-model", "Write a random normalized 3D shape model");
    gen_cmd->add_option("--landmarks,-n", gen.landmarks, "Number of landmarks");
    gen_cmd->add_option("--bases,-k", gen.bases, "Number of shape bases");
    gen_cmd->add_option("--seed", gen.seed, "Random seed")->required();
    gen_cmd->add_option("--out,-o", gen.out, "Output model JSON")->required();

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset of unaries and ground truth");
    synth_cmd->add_option("--model,-m", synth.model, "Shape model JSON")->required();
    synth_cmd->add_option("--out,-o", synth.out, "Output dataset directory")->required();
    synth_cmd->add_option("--seed", synth.spec.seed, "Random seed")->required();
    synth_cmd->add_option("--num", synth.spec.num_samples, "Number of samples");
    synth_cmd->add_option("--noise", synth.spec.noise_sigma, "Unary noise standard deviation");
    synth_cmd->add_option("--corrupt", synth.spec.corrupt_fraction, "Fraction of corrupted landmarks per sample");
    synth_cmd->add_option("--bias", synth.spec.corrupt_bias, "Offset applied to corrupted unary means");
    synth_cmd->add_option("--cov-scale", synth.spec.corrupt_cov_scale, "Covariance multiplier for corrupted unaries");
    synth_cmd->add_option("--pitch", synth.pitch, "Pitch range (rad)")->expected(2);
    synth_cmd->add_option("--yaw", synth.yaw, "Yaw range (rad)")->expected(2);
    synth_cmd->add_option("--roll", synth.roll, "Roll range (rad)")->expected(2);
    synth_cmd->add_option("--scale", synth.scale, "Scale range")->expected(2);
    synth_cmd->add_option("--q-sigma", synth.spec.q_sigma, "Standard deviation of shape coefficients");
    add_jobs(synth_cmd, synth.jobs);

    InferArgs infer;
    auto* infer_cmd = app.add_subcommand("infer", "Joint landmark inference for every sample of a dataset");
    infer_cmd->add_option("--model,-m", infer.model, "Shape model JSON")->required();
    infer_cmd->add_option("--crf,-c", infer.crf, "Pairwise parameters JSON");
    infer_cmd->add_option("--data,-d", infer.data, "Dataset directory")->required();
    infer_cmd->add_option("--out,-o", infer.out, "Prediction directory")->required();
    infer_cmd->add_flag("--unary-only", infer.unary_only, "Skip the CRF and return the unary means");
    infer_cmd->add_option("--max-iters", infer.opts.max_iters, "Alternation budget");
    infer_cmd->add_option("--tol", infer.opts.tolerance, "Stop when no landmark moves more than this");
    infer_cmd->add_option("--lambda-q", infer.opts.fit.shape_regularization, "Shape coefficient prior weight");
    add_jobs(infer_cmd, infer.jobs);

    FitShapeArgs fit;
    auto* fit_cmd = app.add_subcommand("fit-shape", "Fit the deformable model to fixed landmarks");
    fit_cmd->add_option("--model,-m", fit.model, "Shape model JSON")->required();
    fit_cmd->add_option("--crf,-c", fit.crf, "Pairwise parameters JSON (default: identity couplings)");
    fit_cmd->add_option("--data,-d", fit.data, "Dataset directory")->required();
    fit_cmd->add_option("--out,-o", fit.out, "Prediction directory")->required();
    fit_cmd->add_option("--target", fit.target, "Landmarks to fit")->check(CLI::IsMember({"unary", "gt"}));
    fit_cmd->add_option("--lambda-q", fit.opts.shape_regularization, "Shape coefficient prior weight");
    fit_cmd->add_option("--max-iters", fit.opts.max_iters, "Levenberg-Marquardt iteration budget");
    add_jobs(fit_cmd, fit.jobs);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train-crf", "Learn the pairwise couplings from a dataset");
    train_cmd->add_option("--model,-m", train.model, "Shape model JSON")->required();
    train_cmd->add_option("--data,-d", train.data, "Training dataset directory")->required();
    train_cmd->add_option("--out,-o", train.out, "Output pairwise JSON")->required();
    train_cmd->add_option("--init", train.init, "Initial pairwise JSON (default: 0.01 I couplings)");
    train_cmd->add_option("--report", train.report, "Training report JSON");
    train_cmd->add_option("--lr", train.opts.learning_rate, "Initial step on the pair factors");
    train_cmd->add_option("--growth", train.opts.step_growth, "Step multiplier after an accepted step");
    train_cmd->add_option("--max-outer", train.opts.max_outer_iters, "Outer iteration budget");
    train_cmd->add_option("--factor-steps", train.opts.factor_steps, "Factor steps per outer iteration");
    train_cmd->add_option("--zeta-iters", train.opts.zeta_iters, "Deformable refits per sample per outer iteration");
    train_cmd->add_option("--lambda-q", train.opts.fit.shape_regularization, "Shape coefficient prior weight");

    MomentsArgs moments;
    auto* moments_cmd = app.add_subcommand("moments", "Unary means and covariances from a heatmap stack");
    moments_cmd->add_option("--heatmaps", moments.heatmaps, "HMAP heatmap file")->required();
    moments_cmd->add_option("--out,-o", moments.out, "Output unary JSON")->required();
    moments_cmd->add_option("--floor", moments.floor, "Covariance floor added to every landmark");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "NME, AUC, failure rate and CED of a prediction directory");
    eval_cmd->add_option("--pred,-p", eval.pred, "Prediction directory")->required();
    eval_cmd->add_option("--data,-d", eval.data, "Dataset directory with ground truth")->required();
    eval_cmd->add_option("--out,-o", eval.out, "Report JSON")->required();
    eval_cmd->add_option("--ced", eval.ced, "CED curve CSV");
    eval_cmd->add_option("--threshold", eval.threshold, "Failure threshold and AUC cutoff");
    eval_cmd->add_option("--steps", eval.steps, "CED grid points");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen_cmd) {
            return cmd_gen_model(gen);
        }
        if (*synth_cmd) {
            return cmd_synth(synth);
        }
        if (*infer_cmd) {
            return cmd_infer(infer);
        }
        if (*fit_cmd) {
            return cmd_fit_shape(fit);
        }
        if (*train_cmd) {
            return cmd_train_crf(train);
        }
        if (*moments_cmd) {
            return cmd_moments(moments);
        }
        if (*eval_cmd) {
            return cmd_eval(eval);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const lmcrf::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const lmcrf::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
