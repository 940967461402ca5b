// Copyright 2026 The MHE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mhe/data.hpp"
#include "mhe/errors.hpp"
#include "mhe/head_planner.hpp"
#include "mhe/models.hpp"
#include "mhe/theory.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitPropertyFailure = 3;

std::vector<std::uint64_t> parse_u64_list(const std::string& csv, const char* what) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            out.push_back(std::stoull(tok));
        } catch (const std::exception&) {
            throw mhe::ValidationError(std::string("bad ") + what + " entry '" + tok + "'");
        }
    }
    if (out.empty()) throw mhe::ValidationError(std::string("empty ") + what + " list");
    return out;
}

std::string join_u64(const std::vector<std::uint64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

// Relative dataset paths fall back to $MHE_DATA_DIR when they do not resolve
// from the working directory. The one environment variable this tool reads.
std::string resolve_dataset(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::exists(path)) return path;
    if (const char* dir = std::getenv("MHE_DATA_DIR"); dir != nullptr && fs::path(path).is_relative()) {
        fs::path joined = fs::path(dir) / path;
        if (fs::exists(joined)) return joined.string();
    }
    return path;
}

struct MetricSink {
    std::string path;           // optional --emit-metrics target
    std::vector<std::string> lines;

    void add(const std::string& key, const std::string& value) {
        lines.push_back(key + "\t" + value);
        std::cout << key << "\t" << value << "\n";
    }
    void add(const std::string& key, double value) {
        std::ostringstream os;
        os << value;
        add(key, os.str());
    }
    void flush() const {
        if (path.empty()) return;
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw mhe::IoError("cannot write metrics to '" + path + "'");
        for (const auto& line : lines) out << line << "\n";
    }
};

// ---------------------------------------------------------------------------
// plan

struct PlanArgs {
    std::uint64_t classes = 0;
    std::size_t heads = 1;
    std::string strategy = "mhp";
    std::string lengths;
    std::uint64_t feature_dim = 1;
    bool with_bias = false;
};

int cmd_plan(const PlanArgs& args) {
    mhe::Strategy strategy = mhe::parse_strategy(args.strategy);
    mhe::HeadPlan plan = [&] {
        if (!args.lengths.empty()) {
            return mhe::HeadPlan(parse_u64_list(args.lengths, "length"));
        }
        if (strategy == mhe::Strategy::Mhs) return mhe::equal_partition(args.classes, args.heads);
        return mhe::plan_heads(args.classes, args.heads, strategy);
    }();

    if (strategy == mhe::Strategy::Mhs) {
        std::uint64_t total = std::accumulate(plan.lengths().begin(), plan.lengths().end(),
                                              std::uint64_t{0});
        if (total != args.classes) {
            throw mhe::ValidationError("sampling lengths sum to " + std::to_string(total) +
                                       ", expected " + std::to_string(args.classes));
        }
    } else if (plan.capacity() < args.classes) {
        throw mhe::ValidationError("plan capacity " + std::to_string(plan.capacity()) +
                                   " does not cover " + std::to_string(args.classes) + " classes");
    }

    std::cout << "strategy\t" << to_string(strategy) << "\n";
    std::cout << "lengths\t" << join_u64(plan.lengths()) << "\n";
    std::cout << "capacity\t" << plan.capacity() << "\n";
    if (plan.heads() >= 2) {
        std::cout << "confusion_degree\t" << mhe::confusion_degree(plan) << "\n";
        std::cout << "max_confusion_degree\t" << mhe::max_confusion_degree(plan) << "\n";
    } else {
        std::cout << "confusion_degree\tn/a\n";
        std::cout << "max_confusion_degree\tn/a\n";
    }
    std::cout << "parameters\t" << mhe::parameter_count(plan, args.feature_dim, args.with_bias)
              << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::string strategy = "vanilla";
    std::size_t heads = 1;
    std::string lengths;
    std::size_t epochs = 20;
    double lr = 0.1;
    std::uint64_t seed = 0;
    std::string out = "model.ckpt";
    std::string loss = "ce";
    std::size_t beam = 8;
    std::size_t select = 1;
    std::size_t batch = 16;
    std::size_t backbone_dim = 0;
    std::string metrics;
};

mhe::HeadPlan build_plan(mhe::Strategy strategy, std::uint64_t classes, std::size_t heads,
                         const std::string& lengths_csv) {
    if (!lengths_csv.empty()) {
        return mhe::HeadPlan(parse_u64_list(lengths_csv, "length"));
    }
    switch (strategy) {
        case mhe::Strategy::Vanilla:
            return mhe::HeadPlan({classes});
        case mhe::Strategy::Mhs:
            return mhe::equal_partition(classes, heads);
        default:
            return mhe::plan_heads(classes, heads, strategy);
    }
}

int cmd_train(const TrainArgs& args) {
    mhe::Strategy strategy = mhe::parse_strategy(args.strategy);
    mhe::SparseDataset data = mhe::load_xmlc(resolve_dataset(args.data));
    if (data.num_labels == 0) throw mhe::ValidationError("dataset has no label space");

    mhe::HeadPlan plan = build_plan(strategy, data.num_labels, args.heads, args.lengths);
    mhe::LossMode loss_mode =
        args.loss == "bce" ? mhe::LossMode::SigmoidBce : mhe::LossMode::CrossEntropy;
    if (args.loss != "ce" && args.loss != "bce") {
        throw mhe::ValidationError("unknown loss '" + args.loss + "' (expected ce|bce)");
    }

    mhe::Rng rng(args.seed);
    mhe::MultiHeadModel model =
        mhe::MultiHeadModel::create(strategy, data.num_labels, plan, data.num_features,
                                    args.backbone_dim, rng, args.beam);
    mhe::Rng shuffle_rng = rng.fork();
    mhe::Rng sample_rng = rng.fork();

    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
        if (!data.examples[i].labels.empty()) train_idx.push_back(i);
    }
    if (train_idx.empty()) throw mhe::ValidationError("dataset has no labeled examples");
    if (train_idx.size() < data.examples.size()) {
        std::cerr << "note: skipping " << (data.examples.size() - train_idx.size())
                  << " unlabeled examples\n";
    }

    std::vector<mhe::DenseVector> dense(data.examples.size());
    for (std::size_t i : train_idx) dense[i] = mhe::to_dense(data.examples[i], data.num_features);

    MetricSink metrics;
    metrics.path = args.metrics;

    for (std::size_t epoch = 1; epoch <= args.epochs; ++epoch) {
        // Seeded Fisher-Yates; every run with the same seed visits examples
        // in the same order.
        std::vector<std::size_t> order = train_idx;
        for (std::size_t n = order.size(); n > 1; --n) {
            std::swap(order[n - 1], order[shuffle_rng.below(n)]);
        }

        double loss_sum = 0.0;
        std::size_t steps = 0;
        if (strategy == mhe::Strategy::Mhs) {
            for (std::size_t at = 0; at < order.size(); at += args.batch) {
                std::size_t end = std::min(order.size(), at + args.batch);
                std::vector<mhe::DenseVector> xs;
                std::vector<std::uint64_t> ys;
                for (std::size_t i = at; i < end; ++i) {
                    xs.push_back(dense[order[i]]);
                    ys.push_back(data.examples[order[i]].labels.front());
                }
                loss_sum += mhe::mhs_train_step(model, xs, ys, args.lr, args.select, sample_rng);
                ++steps;
            }
        } else {
            for (std::size_t i : order) {
                const auto& ex = data.examples[i];
                switch (strategy) {
                    case mhe::Strategy::Vanilla:
                        loss_sum += mhe::vanilla_train_step(model, dense[i], ex.labels.front(),
                                                            args.lr);
                        break;
                    case mhe::Strategy::Mhp:
                        loss_sum += mhe::mhp_train_step(model, dense[i], ex.labels.front(),
                                                        args.lr, loss_mode);
                        break;
                    case mhe::Strategy::Mhc:
                        loss_sum += mhe::mhc_train_step(model, dense[i], ex.labels, args.lr,
                                                        args.beam);
                        break;
                    default:
                        break;
                }
                ++steps;
            }
        }

        std::size_t hits = 0;
        for (std::size_t i : train_idx) {
            std::uint64_t predicted = 0;
            switch (strategy) {
                case mhe::Strategy::Vanilla: predicted = mhe::vanilla_predict(model, dense[i]); break;
                case mhe::Strategy::Mhp: predicted = mhe::mhp_predict(model, dense[i]); break;
                case mhe::Strategy::Mhs: predicted = mhe::mhs_predict(model, dense[i]); break;
                case mhe::Strategy::Mhc:
                    predicted = mhe::mhc_predict(model, dense[i], 1).labels.at(0);
                    break;
            }
            const auto& labels = data.examples[i].labels;
            if (std::find(labels.begin(), labels.end(), predicted) != labels.end()) ++hits;
        }
        double acc = static_cast<double>(hits) / static_cast<double>(train_idx.size());
        std::cout << "epoch\t" << epoch << "\tloss\t" << (loss_sum / static_cast<double>(steps))
                  << "\ttrain_accuracy\t" << acc << "\n";
        if (epoch == args.epochs) metrics.lines.push_back("train_accuracy\t" + std::to_string(acc));
    }

    mhe::save_checkpoint(model, args.out);
    std::cout << "checkpoint\t" << args.out << "\n";
    metrics.flush();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// predict / eval

struct PredictArgs {
    std::string model;
    std::string data;
    std::size_t k = 1;
    std::string out;
};

int cmd_predict(const PredictArgs& args) {
    mhe::MultiHeadModel model = mhe::load_checkpoint(args.model);
    mhe::SparseDataset data = mhe::load_xmlc(resolve_dataset(args.data));
    if (data.num_features != model.input_dim()) {
        throw mhe::ValidationError("dataset has " + std::to_string(data.num_features) +
                                   " features, model expects " +
                                   std::to_string(model.input_dim()));
    }

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!args.out.empty()) {
        file.open(args.out, std::ios::trunc);
        if (!file) throw mhe::IoError("cannot write predictions to '" + args.out + "'");
        out = &file;
    }

    for (std::size_t i = 0; i < data.examples.size(); ++i) {
        mhe::DenseVector x = mhe::to_dense(data.examples[i], data.num_features);
        mhe::PredictionSet ranked;
        if (model.strategy() == mhe::Strategy::Mhc) {
            ranked = mhe::mhc_predict(model, x, args.k);
        } else {
            std::uint64_t label = 0;
            switch (model.strategy()) {
                case mhe::Strategy::Vanilla: label = mhe::vanilla_predict(model, x); break;
                case mhe::Strategy::Mhp: label = mhe::mhp_predict(model, x); break;
                case mhe::Strategy::Mhs: label = mhe::mhs_predict(model, x); break;
                default: break;
            }
            ranked.labels = {label};
            ranked.scores = {1.0};
        }
        (*out) << i << '\t' << join_u64(ranked.labels) << '\t';
        for (std::size_t j = 0; j < ranked.scores.size(); ++j) {
            if (j) (*out) << ',';
            (*out) << ranked.scores[j];
        }
        (*out) << '\n';
    }
    return kExitOk;
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string k_list = "1,3,5";
    std::string metrics;
};

int cmd_eval(const EvalArgs& args) {
    mhe::MultiHeadModel model = mhe::load_checkpoint(args.model);
    mhe::SparseDataset data = mhe::load_xmlc(resolve_dataset(args.data));
    if (data.num_features != model.input_dim()) {
        throw mhe::ValidationError("dataset has " + std::to_string(data.num_features) +
                                   " features, model expects " +
                                   std::to_string(model.input_dim()));
    }

    MetricSink metrics;
    metrics.path = args.metrics;

    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
        if (!data.examples[i].labels.empty()) labeled.push_back(i);
    }
    if (labeled.empty()) throw mhe::ValidationError("dataset has no labeled examples");

    if (model.strategy() == mhe::Strategy::Mhc) {
        std::vector<std::uint64_t> ks = parse_u64_list(args.k_list, "K");
        std::size_t max_k = *std::max_element(ks.begin(), ks.end());
        std::vector<double> sums(ks.size(), 0.0);
        for (std::size_t i : labeled) {
            mhe::DenseVector x = mhe::to_dense(data.examples[i], data.num_features);
            mhe::PredictionSet ranked = mhe::mhc_predict(model, x, max_k);
            for (std::size_t j = 0; j < ks.size(); ++j) {
                sums[j] += mhe::precision_at_k(ranked, data.examples[i].labels, ks[j]);
            }
        }
        for (std::size_t j = 0; j < ks.size(); ++j) {
            metrics.add("p_at_" + std::to_string(ks[j]),
                        sums[j] / static_cast<double>(labeled.size()));
        }
    } else {
        std::size_t hits = 0;
        for (std::size_t i : labeled) {
            mhe::DenseVector x = mhe::to_dense(data.examples[i], data.num_features);
            std::uint64_t label = 0;
            switch (model.strategy()) {
                case mhe::Strategy::Vanilla: label = mhe::vanilla_predict(model, x); break;
                case mhe::Strategy::Mhp: label = mhe::mhp_predict(model, x); break;
                case mhe::Strategy::Mhs: label = mhe::mhs_predict(model, x); break;
                default: break;
            }
            const auto& truth = data.examples[i].labels;
            if (std::find(truth.begin(), truth.end(), label) != truth.end()) ++hits;
        }
        metrics.add("accuracy", static_cast<double>(hits) / static_cast<double>(labeled.size()));
    }
    metrics.flush();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle-check

struct OracleArgs {
    std::size_t trials = 1000;
    std::size_t max_heads = 4;
    std::size_t max_length = 8;
    std::uint64_t seed = 0;
    bool inject_tie = false;
};

int cmd_oracle_check(const OracleArgs& args) {
    if (args.inject_tie) {
        std::vector<mhe::DenseVector> outputs = {{1.0, 1.0}, {2.0, 1.0}};
        try {
            mhe::oracle_argmax_equivalence(outputs);
        } catch (const mhe::TieError& e) {
            std::cout << "tie surfaced: " << e.what() << "\n";
            return kExitOk;
        }
        std::cerr << "expected a tie to be surfaced\n";
        return kExitPropertyFailure;
    }

    if (args.max_heads < 2 || args.max_length < 2) {
        throw mhe::ValidationError("need max-heads >= 2 and max-length >= 2");
    }
    double capacity = std::pow(static_cast<double>(args.max_length),
                               static_cast<double>(args.max_heads));
    if (capacity > 1e6) {
        throw mhe::ValidationError("max-length^max-heads exceeds the 1e6 oracle bound");
    }
    if (args.trials == 0) {
        std::cout << "warning: 0 trials requested, vacuous pass\n";
        return kExitOk;
    }

    mhe::Rng rng(args.seed);
    std::size_t failures = 0;
    for (std::size_t trial = 0; trial < args.trials; ++trial) {
        std::size_t heads = 2 + static_cast<std::size_t>(rng.below(args.max_heads - 1));
        std::vector<mhe::DenseVector> outputs(heads);
        for (auto& head : outputs) {
            std::size_t len = 2 + static_cast<std::size_t>(rng.below(args.max_length - 1));
            head.resize(len);
            for (double& v : head) v = rng.uniform(0.05, 1.0);
        }
        try {
            if (!mhe::oracle_argmax_equivalence(outputs).consistent) ++failures;
        } catch (const mhe::TieError&) {
            --trial;  // vanishingly rare with continuous draws; redo
        }
    }
    std::cout << "trials\t" << args.trials << "\n";
    std::cout << "passed\t" << (args.trials - failures) << "\n";
    std::cout << "failed\t" << failures << "\n";
    return failures == 0 ? kExitOk : kExitPropertyFailure;
}

// ---------------------------------------------------------------------------
// theory

struct RankArgs {
    std::string loss = "ce";
    std::size_t epochs = 30000;
    double lr = 0.0;
    std::uint64_t seed = 0;
    std::size_t samples = 100;
    std::size_t dim = 100;
    std::uint64_t classes = 100;
    std::size_t bottleneck = 1;
    std::size_t rank_stride = 500;
    double rank_tol = 1e-8;
    std::string out;
};

int cmd_theory_rank(const RankArgs& args) {
    mhe::TheoryLoss kind;
    if (args.loss == "ce") {
        kind = mhe::TheoryLoss::CrossEntropy;
    } else if (args.loss == "frobenius") {
        kind = mhe::TheoryLoss::Frobenius;
    } else {
        throw mhe::ValidationError("unknown loss '" + args.loss + "' (expected ce|frobenius)");
    }

    mhe::GaussianRankOptions options;
    options.epochs = args.epochs;
    options.learning_rate = args.lr;
    options.seed = args.seed;
    options.samples = args.samples;
    options.feature_dim = args.dim;
    options.classes = args.classes;
    options.bottleneck_dim = args.bottleneck;
    options.rank_stride = args.rank_stride;
    options.rank_tolerance = args.rank_tol;

    auto trajectory = mhe::run_gaussian_rank_experiment(kind, options);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!args.out.empty()) {
        file.open(args.out, std::ios::trunc);
        if (!file) throw mhe::IoError("cannot write trajectory to '" + args.out + "'");
        out = &file;
    }
    (*out) << "epoch\taccuracy\trank\n";
    for (const auto& stat : trajectory) {
        (*out) << stat.epoch << '\t' << stat.accuracy << '\t' << stat.softmax_rank << '\n';
    }
    std::cout << "final_accuracy\t" << trajectory.back().accuracy << "\n";
    std::cout << "final_rank\t" << trajectory.back().softmax_rank << "\n";
    return kExitOk;
}

struct BoundArgs {
    std::size_t trials = 100;
    double scale = 0.5;
    std::uint64_t classes = 20;
    std::size_t dim = 10;
    std::size_t samples = 50;
    std::uint64_t seed = 0;
};

int cmd_theory_bound(const BoundArgs& args) {
    if (args.scale <= 0.0) throw mhe::ValidationError("scale must be positive");
    mhe::Rng rng(args.seed);
    std::size_t held = 0;
    double worst_slack = 0.0;
    bool first = true;
    for (std::size_t trial = 0; trial < args.trials; ++trial) {
        mhe::DenseMatrix w(args.classes, args.dim);
        mhe::DenseMatrix delta(args.classes, args.dim);
        mhe::DenseMatrix features(args.dim, args.samples);
        for (double& v : w.values()) v = rng.normal();
        for (double& v : delta.values()) v = rng.uniform(-args.scale, args.scale);
        for (double& v : features.values()) v = rng.normal();

        mhe::BoundCheck check = mhe::softmax_perturbation_bound(w, delta, features);
        if (check.holds) ++held;
        double slack = check.bound - check.error;
        if (first || slack < worst_slack) worst_slack = slack;
        first = false;
    }
    std::cout << "holds\t" << held << "/" << args.trials << "\n";
    std::cout << "min_slack\t" << worst_slack << "\n";
    return held == args.trials ? kExitOk : kExitPropertyFailure;
}

struct SaddleArgs {
    std::size_t restarts = 10;
    std::size_t rank = 5;
    std::size_t samples = 20;
    std::size_t dim = 20;
    std::uint64_t classes = 12;
    double scale = 0.1;
    std::size_t trials = 5;
    std::uint64_t seed = 0;
    double lr = 0.004;
    std::size_t max_iterations = 400000;
};

int cmd_theory_saddle(const SaddleArgs& args) {
    mhe::DenseMatrix features, targets;
    mhe::gaussian_onehot_problem(args.samples, args.dim, args.classes, args.seed, features,
                                 targets);
    double optimum = mhe::frobenius_rank_optimum(features, targets, args.rank);
    std::cout << "rank_optimum\t" << optimum << "\n";

    std::vector<double> losses;
    mhe::BottleneckModel best;
    double best_loss = 0.0;
    for (std::size_t r = 0; r < args.restarts; ++r) {
        mhe::BottleneckModel model =
            mhe::bottleneck_model(args.dim, args.rank, args.classes, args.seed + 1 + r, false);
        mhe::FrobeniusTrainResult result = mhe::train_frobenius(
            model, features, targets, args.lr, args.max_iterations, 1e-8);
        losses.push_back(result.loss);
        std::cout << "restart\t" << r << "\tloss\t" << result.loss << "\tgrad\t"
                  << result.gradient_norm << "\titers\t" << result.iterations << "\n";
        if (r == 0 || result.loss < best_loss) {
            best = model;
            best_loss = result.loss;
        }
    }
    double lo = *std::min_element(losses.begin(), losses.end());
    double hi = *std::max_element(losses.begin(), losses.end());
    std::cout << "loss_spread\t" << (hi - lo) << "\n";
    std::cout << "optimum_gap\t" << std::abs(lo - optimum) << "\n";

    mhe::SaddleOptions probe_options;
    probe_options.perturbation_scale = args.scale;
    probe_options.trials = args.trials;
    probe_options.seed = args.seed + 1000;
    probe_options.lr = args.lr;
    probe_options.max_iterations = args.max_iterations;
    mhe::SaddleReport report = mhe::saddle_probe(best, features, targets, probe_options);
    std::cout << "probe_baseline\t" << report.baseline_loss << "\n";
    std::cout << "probe_best\t" << report.best_loss << "\n";
    std::cout << "probe_escape\t" << (report.escape_found ? "yes" : "no") << "\n";

    bool consistent = (hi - lo) < 1e-6 && std::abs(lo - optimum) < 1e-6;
    return consistent ? kExitOk : kExitPropertyFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-head label encoding: planning, training, evaluation and theory checks"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a key=value file (flags win)");

    PlanArgs plan_args;
    auto* plan = app.add_subcommand("plan", "Choose head lengths for a label space");
    plan->add_option("--classes", plan_args.classes, "Number of classes")->required();
    plan->add_option("--heads", plan_args.heads, "Number of heads");
    plan->add_option("--strategy", plan_args.strategy, "vanilla|mhp|mhc|mhs");
    plan->add_option("--lengths", plan_args.lengths, "Explicit comma-separated head lengths");
    plan->add_option("--feature-dim", plan_args.feature_dim, "Feature dimension for the parameter count");
    plan->add_flag("--bias", plan_args.with_bias, "Count bias parameters");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a classifier on an XMLC-format dataset");
    train->add_option("--data", train_args.data, "Dataset path")->required();
    train->add_option("--strategy", train_args.strategy, "vanilla|mhp|mhc|mhs");
    train->add_option("--heads", train_args.heads, "Number of heads");
    train->add_option("--lengths", train_args.lengths, "Explicit comma-separated head lengths");
    train->add_option("--epochs", train_args.epochs, "Training epochs");
    train->add_option("--lr", train_args.lr, "Learning rate");
    train->add_option("--seed", train_args.seed, "Random seed (runs are reproducible per seed)");
    train->add_option("--out", train_args.out, "Checkpoint output path");
    train->add_option("--loss", train_args.loss, "mhp loss: ce|bce");
    train->add_option("--beam", train_args.beam, "mhc beam width K");
    train->add_option("--select", train_args.select, "mhs heads trained per example");
    train->add_option("--batch", train_args.batch, "mhs batch size");
    train->add_option("--backbone-dim", train_args.backbone_dim,
                      "Linear backbone output dimension (0 = identity)");
    train->add_option("--emit-metrics", train_args.metrics, "Write final metrics to a file");

    PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict", "Write ranked predictions for a dataset");
    predict->add_option("--model", predict_args.model, "Checkpoint path")->required();
    predict->add_option("--data", predict_args.data, "Dataset path")->required();
    predict->add_option("--k", predict_args.k, "Ranked labels per example (cascade models)");
    predict->add_option("--out", predict_args.out, "Output path (default stdout)");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval->add_option("--model", eval_args.model, "Checkpoint path")->required();
    eval->add_option("--data", eval_args.data, "Dataset path")->required();
    eval->add_option("--k", eval_args.k_list, "Comma-separated K values for precision@K");
    eval->add_option("--emit-metrics", eval_args.metrics, "Write metrics to a file");

    OracleArgs oracle_args;
    auto* oracle = app.add_subcommand(
        "oracle-check", "Randomized argmax-equivalence check against the Kronecker oracle");
    oracle->add_option("--trials", oracle_args.trials, "Number of random trials");
    oracle->add_option("--max-heads", oracle_args.max_heads, "Largest head count (>= 2)");
    oracle->add_option("--max-length", oracle_args.max_length, "Largest head length (>= 2)");
    oracle->add_option("--seed", oracle_args.seed, "Random seed");
    oracle->add_flag("--inject-tie", oracle_args.inject_tie,
                     "Feed a tied head and report how it surfaces");

    auto* theory = app.add_subcommand("theory", "Numerical experiments behind the design");
    theory->require_subcommand(1);

    RankArgs rank_args;
    auto* rank = theory->add_subcommand(
        "gaussian-rank", "Bottleneck classifier on Gaussian data: accuracy and softmax rank");
    rank->add_option("--loss", rank_args.loss, "ce|frobenius");
    rank->add_option("--epochs", rank_args.epochs, "Training epochs");
    rank->add_option("--lr", rank_args.lr, "Learning rate (0 = per-loss default)");
    rank->add_option("--seed", rank_args.seed, "Random seed");
    rank->add_option("--samples", rank_args.samples, "Sample count");
    rank->add_option("--dim", rank_args.dim, "Feature dimension");
    rank->add_option("--classes", rank_args.classes, "Class count");
    rank->add_option("--bottleneck", rank_args.bottleneck, "Bottleneck dimension");
    rank->add_option("--rank-stride", rank_args.rank_stride, "Epochs between rank measurements");
    rank->add_option("--rank-tol", rank_args.rank_tol, "Relative tolerance for the rank");
    rank->add_option("--out", rank_args.out, "Trajectory output path (default stdout)");

    BoundArgs bound_args;
    auto* bound = theory->add_subcommand(
        "softmax-bound", "Monte-Carlo check of the softmax perturbation bound");
    bound->add_option("--trials", bound_args.trials, "Number of random trials");
    bound->add_option("--scale", bound_args.scale, "Perturbation entry scale");
    bound->add_option("--classes", bound_args.classes, "Class count");
    bound->add_option("--dim", bound_args.dim, "Feature dimension");
    bound->add_option("--samples", bound_args.samples, "Sample count");
    bound->add_option("--seed", bound_args.seed, "Random seed");

    SaddleArgs saddle_args;
    auto* saddle = theory->add_subcommand(
        "saddle", "Multi-restart consistency of rank-limited Frobenius training");
    saddle->add_option("--restarts", saddle_args.restarts, "Independent training restarts");
    saddle->add_option("--rank", saddle_args.rank, "Bottleneck rank");
    saddle->add_option("--samples", saddle_args.samples, "Sample count");
    saddle->add_option("--dim", saddle_args.dim, "Feature dimension");
    saddle->add_option("--classes", saddle_args.classes, "Class count");
    saddle->add_option("--scale", saddle_args.scale, "Perturbation scale for the probe");
    saddle->add_option("--trials", saddle_args.trials, "Perturbation trials");
    saddle->add_option("--seed", saddle_args.seed, "Random seed");
    saddle->add_option("--lr", saddle_args.lr, "Gradient-descent learning rate");
    saddle->add_option("--max-iterations", saddle_args.max_iterations, "Iteration budget");

    try {
        app.parse(argc, argv);
        if (plan->parsed()) return cmd_plan(plan_args);
        if (train->parsed()) return cmd_train(train_args);
        if (predict->parsed()) return cmd_predict(predict_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (oracle->parsed()) return cmd_oracle_check(oracle_args);
        if (theory->parsed()) {
            if (rank->parsed()) return cmd_theory_rank(rank_args);
            if (bound->parsed()) return cmd_theory_bound(bound_args);
            if (saddle->parsed()) return cmd_theory_saddle(saddle_args);
        }
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const mhe::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const mhe::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
