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

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mhe/data.hpp"
#include "mhe/errors.hpp"
#include "mhe/head_planner.hpp"
#include "mhe/models.hpp"
#include "test_support.hpp"

using namespace mhe;
namespace fs = std::filesystem;

namespace {

bool bitwise_equal(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

bool heads_bitwise_equal(const MultiHeadModel& a, const MultiHeadModel& b) {
    if (a.head_count() != b.head_count()) return false;
    for (std::size_t h = 0; h < a.head_count(); ++h) {
        if (a.head(h).weight.values() != b.head(h).weight.values()) return false;
        if (a.head(h).bias != b.head(h).bias) return false;
    }
    return true;
}

void zero_heads(MultiHeadModel& model) {
    for (std::size_t h = 0; h < model.head_count(); ++h) {
        model.head(h).weight.fill(0.0);
        std::fill(model.head(h).bias.begin(), model.head(h).bias.end(), 0.0);
    }
}

}  // namespace

TEST_CASE("forward_heads produces per-plan logits") {
    Rng rng(1);
    MultiHeadModel model =
        MultiHeadModel::create(Strategy::Mhp, 24, HeadPlan({4, 3, 2}), 5, 0, rng);
    zero_heads(model);
    DenseVector x{1.0, -2.0, 0.5, 0.0, 3.0};
    auto outs = forward_heads(model, x);
    REQUIRE(outs.size() == 3);
    CHECK(outs[0].size() == 4);
    CHECK(outs[1].size() == 3);
    CHECK(outs[2].size() == 2);
    for (const auto& o : outs) {
        for (double v : o) CHECK(v == 0.0);
    }

    // Deterministic: two calls agree bitwise.
    Rng rng2(5);
    MultiHeadModel other = MultiHeadModel::create(Strategy::Mhp, 24, HeadPlan({4, 3, 2}),
                                                  5, 0, rng2);
    auto first = forward_heads(other, x);
    auto second = forward_heads(other, x);
    for (std::size_t h = 0; h < first.size(); ++h) {
        for (std::size_t i = 0; i < first[h].size(); ++i) {
            CHECK(bitwise_equal(first[h][i], second[h][i]));
        }
    }
}

TEST_CASE("model construction validates the plan against the strategy") {
    Rng rng(2);
    CHECK_THROWS_AS(MultiHeadModel::create(Strategy::Vanilla, 10, HeadPlan({5, 2}), 3, 0, rng),
                    ValidationError);
    CHECK_THROWS_AS(MultiHeadModel::create(Strategy::Mhp, 25, HeadPlan({4, 3, 2}), 3, 0, rng),
                    ValidationError);
    CHECK_THROWS_AS(MultiHeadModel::create(Strategy::Mhs, 10, HeadPlan({4, 4, 4}), 3, 0, rng),
                    ValidationError);
    CHECK_NOTHROW(MultiHeadModel::create(Strategy::Mhs, 12, HeadPlan({4, 4, 4}), 3, 0, rng));
}

TEST_CASE("product strategy training") {
    SUBCASE("first step on zero heads costs one uniform guess per head") {
        Rng rng(3);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhp, 4, HeadPlan({2, 2}), 3, 0, rng);
        zero_heads(model);
        double loss = mhp_train_step(model, {1.0, 0.5, -0.5}, 3, 0.1);
        CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }

    SUBCASE("zero learning rate leaves parameters untouched") {
        Rng rng(4);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhp, 4, HeadPlan({2, 2}), 3, 2, rng);
        MultiHeadModel before = model;
        mhp_train_step(model, {1.0, 0.5, -0.5}, 2, 0.0);
        CHECK(heads_bitwise_equal(model, before));
        CHECK(model.backbone().values() == before.backbone().values());
    }

    SUBCASE("either loss mode reduces the loss on repetition") {
        for (LossMode mode : {LossMode::CrossEntropy, LossMode::SigmoidBce}) {
            Rng rng(5);
            MultiHeadModel model =
                MultiHeadModel::create(Strategy::Mhp, 6, HeadPlan({3, 2}), 4, 0, rng);
            DenseVector x{0.3, -1.2, 2.0, 0.7};
            double first = mhp_train_step(model, x, 5, 0.2, mode);
            double last = first;
            for (int i = 0; i < 20; ++i) last = mhp_train_step(model, x, 5, 0.2, mode);
            CHECK(last < first);
        }
    }

    SUBCASE("training rejects labels outside the class range") {
        Rng rng(6);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhp, 4, HeadPlan({2, 2}), 3, 0, rng);
        CHECK_THROWS_AS(mhp_train_step(model, {1.0, 0.5, -0.5}, 4, 0.1), ValidationError);
        CHECK_THROWS_AS(vanilla_train_step(model, {1.0, 0.5, -0.5}, 1, 0.1), ValidationError);
    }
}

TEST_CASE("product predictions combine per-head argmaxes") {
    Rng rng(7);
    MultiHeadModel model = MultiHeadModel::create(Strategy::Mhp, 8, HeadPlan({2, 2, 2}), 3, 0, rng);
    zero_heads(model);
    // Bias the heads so the argmax digits are (1, 0, 0) => global label 4.
    model.head(0).bias = {0.0, 1.0};
    model.head(1).bias = {1.0, 0.0};
    model.head(2).bias = {1.0, 0.0};
    CHECK(mhp_predict(model, {0.0, 0.0, 0.0}) == 4);
}

TEST_CASE("product prediction matches the materialized product on random models") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t heads = 2 + rng.below(3);
        std::vector<std::uint64_t> lengths;
        for (std::size_t h = 0; h < heads; ++h) lengths.push_back(2 + rng.below(5));
        HeadPlan plan(lengths);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhp, plan.capacity(), plan, 4, 0, rng);
        DenseVector x(4);
        for (double& v : x) v = rng.normal();

        auto outputs = forward_heads(model, x);
        for (auto& o : outputs) {
            double lo = *std::min_element(o.begin(), o.end());
            for (double& v : o) v += 0.5 - lo;  // positive shift keeps argmaxes put
        }
        auto oracle = oracle_argmax_equivalence(outputs);
        CHECK(oracle.consistent);
        CHECK(oracle.kron_argmax == mhp_predict(model, x));
    }
}

TEST_CASE("product strategy masters a separable toy problem") {
    SparseDataset toy = gen_separable_toy(4, 8, 10.0, 77);
    auto xs = test::densify(toy);
    Rng rng(9);
    MultiHeadModel model =
        MultiHeadModel::create(Strategy::Mhp, 4, HeadPlan({2, 2}), toy.num_features, 0, rng);
    Rng shuffle(10);
    for (int epoch = 0; epoch < 40; ++epoch) {
        std::vector<std::size_t> order(xs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t k = order.size(); k > 1; --k) {
            std::swap(order[k - 1], order[shuffle.below(k)]);
        }
        for (std::size_t i : order) {
            mhp_train_step(model, xs[i], toy.examples[i].labels[0], 0.05);
        }
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        hits += mhp_predict(model, xs[i]) == toy.examples[i].labels[0];
    }
    CHECK(hits == xs.size());
}

TEST_CASE("cascade prediction") {
    SUBCASE("full beam equals exhaustive scoring of every label") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(seed);
            std::vector<std::uint64_t> lens = seed % 2 ? std::vector<std::uint64_t>{4, 3, 2}
                                                       : std::vector<std::uint64_t>{3, 2};
            HeadPlan plan(lens);
            const std::uint64_t classes = plan.capacity();
            MultiHeadModel model = MultiHeadModel::create(Strategy::Mhc, classes, plan, 5, 0,
                                                          rng, classes);
            DenseVector x(5);
            for (double& v : x) v = rng.normal();

            PredictionSet got = mhc_predict(model, x, classes, ScoreTransform::Sigmoid);
            REQUIRE(got.labels.size() == classes);

            // Exhaustive route: score every label through the same cascade
            // arithmetic, then sort (stable on index).
            DenseVector f = model.features(x);
            const std::size_t last = plan.heads() - 1;
            DenseVector logits = affine(model.head(last).weight, f, model.head(last).bias);
            std::vector<std::pair<double, std::uint64_t>> all;
            for (std::uint64_t g = 0; g < classes; ++g) {
                LocalLabels l = decompose(g, plan);
                double raw;
                if (plan.heads() == 1) {
                    raw = logits[l[0]];
                } else {
                    std::uint64_t prefix = 0;
                    for (std::size_t s = 0; s < last; ++s) prefix = prefix * plan.length(s) + l[s];
                    double m = 0.0;
                    const DenseMatrix& table = model.embeddings().back();
                    for (std::size_t i = 0; i < f.size(); ++i) m += f[i] * table(prefix, i);
                    raw = logits[l[last]] * m;
                }
                double sig = raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw))
                                        : std::exp(raw) / (1.0 + std::exp(raw));
                all.push_back({sig, g});
            }
            std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (std::size_t i = 0; i < classes; ++i) {
                CHECK(got.labels[i] == all[i].second);
                CHECK(got.scores[i] == all[i].first);
            }
        }
    }

    SUBCASE("a single-candidate beam follows per-stage argmaxes when modulation is positive") {
        Rng rng(41);
        HeadPlan plan({3, 3});
        MultiHeadModel model = MultiHeadModel::create(Strategy::Mhc, 9, plan, 3, 0, rng, 1);
        for (auto& table : model.embeddings()) table.fill(0.5);
        DenseVector x{1.0, 2.0, 0.5};  // positive features => positive modulation

        PredictionSet greedy = mhc_predict(model, x, 1);
        auto outs = forward_heads(model, x);
        LocalLabels digits{argmax_first(outs[0]), argmax_first(outs[1])};
        CHECK(greedy.labels.at(0) == combine(digits, plan));
    }

    SUBCASE("all-equal logits tie stably by candidate index") {
        Rng rng(42);
        HeadPlan plan({2, 2});
        MultiHeadModel model = MultiHeadModel::create(Strategy::Mhc, 4, plan, 3, 0, rng, 2);
        zero_heads(model);
        for (auto& table : model.embeddings()) table.fill(0.0);
        PredictionSet out = mhc_predict(model, {1.0, 1.0, 1.0}, 2);
        REQUIRE(out.labels.size() == 2);
        CHECK(out.labels[0] == 0);
        CHECK(out.labels[1] == 1);
        CHECK(out.scores[0] == out.scores[1]);
    }

    SUBCASE("beam width cannot exceed the plan capacity") {
        Rng rng(43);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhc, 6, HeadPlan({3, 2}), 3, 0, rng, 2);
        CHECK_THROWS_AS(mhc_predict(model, {1.0, 1.0, 1.0}, 7), ValidationError);
        CHECK_THROWS_AS(mhc_predict(model, {1.0, 1.0, 1.0}, 0), ValidationError);
    }
}

TEST_CASE("cascade training") {
    SUBCASE("one head reduces to the vanilla cross-entropy step") {
        Rng r1(44), r2(44);
        MultiHeadModel cascade =
            MultiHeadModel::create(Strategy::Mhc, 5, HeadPlan({5}), 3, 0, r1, 2);
        MultiHeadModel vanilla =
            MultiHeadModel::create(Strategy::Vanilla, 5, HeadPlan({5}), 3, 0, r2);
        DenseVector x{0.4, -0.7, 1.1};
        double lc = mhc_train_step(cascade, x, {3}, 0.1, 2);
        double lv = vanilla_train_step(vanilla, x, 3, 0.1);
        CHECK(bitwise_equal(lc, lv));
        CHECK(heads_bitwise_equal(cascade, vanilla));
    }

    SUBCASE("zero learning rate leaves parameters untouched") {
        Rng rng(45);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhc, 8, HeadPlan({4, 2}), 4, 0, rng, 3);
        MultiHeadModel before = model;
        mhc_train_step(model, {1.0, 0.0, -1.0, 0.5}, {6}, 0.0, 3);
        CHECK(heads_bitwise_equal(model, before));
        for (std::size_t t = 0; t < model.embeddings().size(); ++t) {
            CHECK(model.embeddings()[t].values() == before.embeddings()[t].values());
        }
    }

    SUBCASE("teacher-forced training reaches perfect precision on a toy set") {
        SparseDataset toy = gen_separable_toy(8, 4, 10.0, 300);
        auto xs = test::densify(toy);
        Rng rng(0);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhc, 8, HeadPlan({4, 2}), toy.num_features, 0,
                                   rng, 4);
        Rng shuffle(5);
        int steps = 0;
        while (steps < 200) {
            std::vector<std::size_t> order(xs.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            for (std::size_t k = order.size(); k > 1; --k) {
                std::swap(order[k - 1], order[shuffle.below(k)]);
            }
            for (std::size_t i : order) {
                if (steps >= 200) break;
                mhc_train_step(model, xs[i], toy.examples[i].labels, 0.01, 4);
                ++steps;
            }
        }
        double p1 = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            p1 += precision_at_k(mhc_predict(model, xs[i], 1), toy.examples[i].labels, 1);
        }
        CHECK(p1 / static_cast<double>(xs.size()) == 1.0);
    }

    SUBCASE("multi-label sets drive the sigmoid path") {
        Rng rng(46);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhc, 12, HeadPlan({4, 3}), 4, 0, rng, 4);
        DenseVector x{0.2, -0.4, 0.9, 0.1};
        // Labels 9 and 10 share the stage-1 prefix, so a scalar-modulated
        // stage can carry both.
        double first = mhc_train_step(model, x, {9, 10}, 0.05, 4);
        double last = first;
        for (int i = 0; i < 500; ++i) last = mhc_train_step(model, x, {9, 10}, 0.05, 4);
        CHECK(last < first);
        PredictionSet top = mhc_predict(model, x, 2);
        std::vector<std::uint64_t> sorted = top.labels;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<std::uint64_t>{9, 10});
        CHECK_THROWS_AS(mhc_train_step(model, x, {}, 0.05, 4), ValidationError);
        CHECK_THROWS_AS(mhc_train_step(model, x, {12}, 0.05, 4), ValidationError);
    }
}

TEST_CASE("sampling strategy") {
    SUBCASE("full selection reproduces the vanilla step bit for bit") {
        SparseDataset toy = gen_separable_toy(12, 8, 10.0, 99);
        auto xs = test::densify(toy);
        Rng r1(5), r2(5), sampler(77);
        MultiHeadModel mhs = MultiHeadModel::create(Strategy::Mhs, 12, HeadPlan({4, 4, 4}),
                                                    toy.num_features, 0, r1);
        MultiHeadModel vanilla = MultiHeadModel::create(Strategy::Vanilla, 12, HeadPlan({12}),
                                                        toy.num_features, 0, r2);
        Rng picker(123);
        for (int step = 0; step < 10; ++step) {
            std::vector<DenseVector> bx;
            std::vector<GlobalLabel> by;
            for (int j = 0; j < 6; ++j) {
                std::size_t i = picker.below(xs.size());
                bx.push_back(xs[i]);
                by.push_back(toy.examples[i].labels[0]);
            }
            double ls = mhs_train_step(mhs, bx, by, 0.1, 3, sampler);
            double lv = vanilla_train_batch(vanilla, bx, by, 0.1);
            CHECK(bitwise_equal(ls, lv));
        }
        std::size_t row = 0;
        for (std::size_t h = 0; h < mhs.head_count(); ++h) {
            for (std::size_t r = 0; r < mhs.head(h).weight.rows(); ++r, ++row) {
                for (std::size_t c = 0; c < mhs.head(h).weight.cols(); ++c) {
                    CHECK(bitwise_equal(mhs.head(h).weight(r, c),
                                        vanilla.head(0).weight(row, c)));
                }
                CHECK(bitwise_equal(mhs.head(h).bias[r], vanilla.head(0).bias[row]));
            }
        }
    }

    SUBCASE("selecting one head leaves every other head untouched") {
        Rng rng(6), sampler(7);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhs, 12, HeadPlan({4, 4, 4}), 5, 0, rng);
        MultiHeadModel before = model;
        DenseVector x{1.0, 0.0, -1.0, 2.0, 0.3};
        mhs_train_step(model, {x}, {5}, 0.1, 1, sampler);  // label 5 lives in head 2
        CHECK(model.head(0).weight.values() == before.head(0).weight.values());
        CHECK(model.head(2).weight.values() == before.head(2).weight.values());
        CHECK(model.head(1).weight.values() != before.head(1).weight.values());
    }

    SUBCASE("negative heads come from batch co-labels") {
        Rng rng(8), sampler(9);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhs, 12, HeadPlan({4, 4, 4}), 5, 0, rng);
        MultiHeadModel before = model;
        DenseVector a{1.0, 0.0, 0.0, 0.0, 0.0};
        DenseVector b{0.0, 1.0, 0.0, 0.0, 0.0};
        // Labels 1 (head 0) and 9 (head 2): with select=2 each example trains
        // its own head plus the other example's head. Head 1 owns nothing here.
        mhs_train_step(model, {a, b}, {1, 9}, 0.1, 2, sampler);
        CHECK(model.head(1).weight.values() == before.head(1).weight.values());
        CHECK(model.head(0).weight.values() != before.head(0).weight.values());
        CHECK(model.head(2).weight.values() != before.head(2).weight.values());
    }

    SUBCASE("prediction is the vanilla argmax over the concatenation") {
        Rng rng(10);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhs, 12, HeadPlan({4, 4, 4}), 5, 0, rng);
        zero_heads(model);
        model.head(2).bias.back() = 1.0;  // last global label
        CHECK(mhs_predict(model, {0.0, 0.0, 0.0, 0.0, 0.0}) == 11);

        Rng r1(11), r2(11);
        MultiHeadModel mhs = MultiHeadModel::create(Strategy::Mhs, 12, HeadPlan({4, 4, 4}),
                                                    5, 0, r1);
        MultiHeadModel vanilla = MultiHeadModel::create(Strategy::Vanilla, 12, HeadPlan({12}),
                                                        5, 0, r2);
        Rng points(12);
        for (int i = 0; i < 20; ++i) {
            DenseVector x(5);
            for (double& v : x) v = points.normal();
            CHECK(mhs_predict(mhs, x) == vanilla_predict(vanilla, x));
        }
    }

    SUBCASE("select out of range is rejected") {
        Rng rng(13), sampler(14);
        MultiHeadModel model =
            MultiHeadModel::create(Strategy::Mhs, 12, HeadPlan({4, 4, 4}), 5, 0, rng);
        DenseVector x(5, 0.0);
        CHECK_THROWS_AS(mhs_train_step(model, {x}, {0}, 0.1, 4, sampler), ValidationError);
        CHECK_THROWS_AS(mhs_train_step(model, {x}, {0}, 0.1, 0, sampler), ValidationError);
        CHECK_THROWS_AS(mhs_train_step(model, {}, {}, 0.1, 1, sampler), ValidationError);
    }
}

TEST_CASE("vanilla baseline converges on a two-class toy") {
    SparseDataset toy = gen_separable_toy(2, 10, 10.0, 55);
    auto xs = test::densify(toy);
    Rng rng(15);
    MultiHeadModel model =
        MultiHeadModel::create(Strategy::Vanilla, 2, HeadPlan({2}), toy.num_features, 0, rng);
    for (int epoch = 0; epoch < 30; ++epoch) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            vanilla_train_step(model, xs[i], toy.examples[i].labels[0], 0.1);
        }
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        hits += vanilla_predict(model, xs[i]) == toy.examples[i].labels[0];
    }
    CHECK(hits == xs.size());

    // predict is argmax(Wx + b)
    DenseVector x = xs[0];
    DenseVector logits = affine(model.head(0).weight, x, model.head(0).bias);
    CHECK(vanilla_predict(model, x) == argmax_first(logits));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    auto serialize = [](const MultiHeadModel& m) {
        fs::path p = fs::temp_directory_path() /
                     ("mhe_ckpt_" + std::to_string(::getpid()) + ".bin");
        save_checkpoint(m, p.string());
        std::ifstream in(p, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        fs::remove(p);
        return bytes;
    };

    Rng rng(16);
    for (Strategy s : {Strategy::Vanilla, Strategy::Mhp, Strategy::Mhc, Strategy::Mhs}) {
        HeadPlan plan = s == Strategy::Vanilla ? HeadPlan({12})
                        : s == Strategy::Mhs   ? HeadPlan({4, 4, 4})
                                               : HeadPlan({4, 3});
        MultiHeadModel model = MultiHeadModel::create(s, 12, plan, 6, 3, rng, 4);

        fs::path p = fs::temp_directory_path() /
                     ("mhe_ckpt_rt_" + to_string(s) + std::to_string(::getpid()) + ".bin");
        save_checkpoint(model, p.string());
        MultiHeadModel loaded = load_checkpoint(p.string());
        fs::remove(p);

        CHECK(loaded.strategy() == model.strategy());
        CHECK(loaded.plan() == model.plan());
        CHECK(loaded.num_classes() == model.num_classes());
        CHECK(loaded.beam_width() == model.beam_width());
        CHECK(serialize(loaded) == serialize(model));
    }
}

TEST_CASE("checkpoint loading rejects damaged files") {
    Rng rng(17);
    MultiHeadModel model =
        MultiHeadModel::create(Strategy::Mhp, 6, HeadPlan({3, 2}), 4, 0, rng);
    fs::path p = fs::temp_directory_path() /
                 ("mhe_ckpt_bad_" + std::to_string(::getpid()) + ".bin");
    save_checkpoint(model, p.string());

    // Corrupt the magic.
    {
        std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(0);
        f.put('X');
    }
    CHECK_THROWS_AS(load_checkpoint(p.string()), IoError);

    // Truncate.
    save_checkpoint(model, p.string());
    {
        std::ifstream in(p, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(p.string()), IoError);

    fs::remove(p);
    CHECK_THROWS_AS(load_checkpoint(p.string()), IoError);
}

TEST_CASE("training consumes exactly the codec's decomposition") {
    // A product-strategy step must touch head h only at the digit the codec
    // assigns. With zeroed heads and identity features, the bias gradient of
    // the target digit is p - 1 and every other digit gets p, so the most
    // negative bias shift per head marks the trained digit.
    Rng rng(18);
    HeadPlan plan({4, 3, 2});
    MultiHeadModel model = MultiHeadModel::create(Strategy::Mhp, 24, plan, 3, 0, rng);
    Rng labels(19);
    for (int trial = 0; trial < 30; ++trial) {
        zero_heads(model);
        GlobalLabel y = labels.below(24);
        mhp_train_step(model, {1.0, -0.3, 0.8}, y, 0.5);
        LocalLabels expected = decompose(y, plan);
        for (std::size_t h = 0; h < plan.heads(); ++h) {
            std::size_t moved = 0;
            double best = model.head(h).bias[0];
            for (std::size_t i = 1; i < model.head(h).bias.size(); ++i) {
                if (model.head(h).bias[i] > best) {
                    best = model.head(h).bias[i];
                    moved = i;
                }
            }
            CHECK(moved == expected[h]);
        }
    }
}
