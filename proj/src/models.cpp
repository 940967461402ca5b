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

#include "mhe/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>

#include "mhe/errors.hpp"

namespace mhe {

namespace {

void fill_normal(DenseMatrix& m, Rng& rng, double scale) {
    for (double& v : m.values()) v = rng.normal() * scale;
}

// dF += W^T g, rows in ascending order. Keeping one accumulation order here
// makes strategies that should coincide (vanilla vs full-selection sampling)
// coincide bit for bit.
void accumulate_input_grad(const DenseMatrix& w, const DenseVector& g, DenseVector& df) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        const double* row = w.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) df[c] += gr * row[c];
    }
}

void scale_values(DenseMatrix& m, double s) {
    for (double& v : m.values()) v *= s;
}

void scale_values(DenseVector& v, double s) {
    for (double& x : v) x *= s;
}

// Per-batch gradient workspace; head slots are allocated on first touch so
// untouched heads are provably left alone.
struct GradientWorkspace {
    explicit GradientWorkspace(const MultiHeadModel& model)
        : head_weight(model.head_count()), head_bias(model.head_count()),
          touched(model.head_count(), false) {
        if (!model.identity_backbone()) {
            backbone = DenseMatrix(model.feature_dim(), model.input_dim(), 0.0);
        }
    }

    void touch(const MultiHeadModel& model, std::size_t h) {
        if (!touched[h]) {
            head_weight[h] = DenseMatrix(model.head(h).weight.rows(),
                                         model.head(h).weight.cols(), 0.0);
            head_bias[h].assign(model.head(h).bias.size(), 0.0);
            touched[h] = true;
        }
    }

    void scale(double s) {
        for (std::size_t h = 0; h < head_weight.size(); ++h) {
            if (!touched[h]) continue;
            scale_values(head_weight[h], s);
            scale_values(head_bias[h], s);
        }
        scale_values(backbone, s);
    }

    void apply(MultiHeadModel& model, double lr) {
        for (std::size_t h = 0; h < head_weight.size(); ++h) {
            if (!touched[h]) continue;
            sgd_step(model.head(h).weight, head_weight[h], lr);
            sgd_step(model.head(h).bias, head_bias[h], lr);
        }
        if (!model.identity_backbone()) {
            sgd_step(model.backbone(), backbone, lr);
        }
    }

    std::vector<DenseMatrix> head_weight;
    std::vector<DenseVector> head_bias;
    std::vector<bool> touched;
    DenseMatrix backbone;
};

void require_strategy(const MultiHeadModel& model, Strategy wanted, const char* op) {
    if (model.strategy() != wanted) {
        throw ValidationError(std::string(op) + " requires a " + to_string(wanted) +
                              " model, got " + to_string(model.strategy()));
    }
}

void require_label(const MultiHeadModel& model, GlobalLabel label) {
    if (label >= model.num_classes()) {
        throw ValidationError("label " + std::to_string(label) + " out of range for " +
                              std::to_string(model.num_classes()) + " classes");
    }
}

}  // namespace

MultiHeadModel::MultiHeadModel(Strategy strategy, std::uint64_t num_classes, HeadPlan plan)
    : strategy_(strategy), plan_(std::move(plan)), num_classes_(num_classes) {}

MultiHeadModel MultiHeadModel::create(Strategy strategy, std::uint64_t num_classes, HeadPlan plan,
                                      std::size_t input_dim, std::size_t backbone_dim, Rng& rng,
                                      std::size_t beam_width) {
    if (num_classes == 0) throw ValidationError("model needs at least one class");
    if (input_dim == 0) throw ValidationError("model needs a positive input dimension");

    switch (strategy) {
        case Strategy::Vanilla:
            if (plan.heads() != 1 || plan.length(0) != num_classes) {
                throw ValidationError("vanilla model requires the single-head plan [C]");
            }
            break;
        case Strategy::Mhp:
        case Strategy::Mhc:
            if (plan.capacity() < num_classes) {
                throw ValidationError("plan capacity " + std::to_string(plan.capacity()) +
                                      " does not cover " + std::to_string(num_classes) +
                                      " classes");
            }
            break;
        case Strategy::Mhs: {
            std::uint64_t total = 0;
            for (auto len : plan.lengths()) total += len;
            if (total != num_classes) {
                throw ValidationError("sampling plan lengths sum to " + std::to_string(total) +
                                      ", expected exactly " + std::to_string(num_classes));
            }
            break;
        }
    }
    if (beam_width == 0) throw ValidationError("beam width must be positive");

    MultiHeadModel model(strategy, num_classes, std::move(plan));
    model.input_dim_ = input_dim;
    model.identity_backbone_ = backbone_dim == 0;
    model.feature_dim_ = model.identity_backbone_ ? input_dim : backbone_dim;
    model.beam_width_ = beam_width;

    if (!model.identity_backbone_) {
        model.backbone_ = DenseMatrix(model.feature_dim_, input_dim);
        fill_normal(model.backbone_, rng, 1.0 / std::sqrt(static_cast<double>(input_dim)));
    }

    const double head_scale = 1.0 / std::sqrt(static_cast<double>(model.feature_dim_));
    model.heads_.resize(model.plan_.heads());
    // All weights are drawn before all biases so that models whose heads are
    // row-partitions of each other see the same stream in the same order.
    for (std::size_t h = 0; h < model.heads_.size(); ++h) {
        model.heads_[h].weight =
            DenseMatrix(model.plan_.length(h), model.feature_dim_);
        fill_normal(model.heads_[h].weight, rng, head_scale);
    }
    for (std::size_t h = 0; h < model.heads_.size(); ++h) {
        model.heads_[h].bias.assign(model.plan_.length(h), 0.0);
    }

    if (strategy == Strategy::Mhc) {
        for (std::size_t h = 2; h <= model.plan_.heads(); ++h) {
            DenseMatrix table(model.plan_.prefix_capacity(h - 1), model.feature_dim_);
            fill_normal(table, rng, head_scale);
            model.embeddings_.push_back(std::move(table));
        }
    }
    return model;
}

DenseVector MultiHeadModel::features(const DenseVector& x) const {
    if (x.size() != input_dim_) {
        throw ValidationError("input has length " + std::to_string(x.size()) + ", model expects " +
                              std::to_string(input_dim_));
    }
    if (identity_backbone_) return x;
    return affine(backbone_, x);
}

std::vector<DenseVector> forward_heads(const MultiHeadModel& model, const DenseVector& x) {
    DenseVector f = model.features(x);
    std::vector<DenseVector> outputs;
    outputs.reserve(model.head_count());
    for (std::size_t h = 0; h < model.head_count(); ++h) {
        outputs.push_back(affine(model.head(h).weight, f, model.head(h).bias));
    }
    return outputs;
}

// ---------------------------------------------------------------------------
// Product strategy

double mhp_train_step(MultiHeadModel& model, const DenseVector& x, GlobalLabel label,
                      double lr, LossMode mode) {
    require_strategy(model, Strategy::Mhp, "mhp_train_step");
    require_label(model, label);

    const DenseVector f = model.features(x);
    const LocalLabels locals = decompose(label, model.plan());

    GradientWorkspace grads(model);
    DenseVector df(model.feature_dim(), 0.0);
    double loss = 0.0;

    if (mode == LossMode::CrossEntropy) {
        for (std::size_t h = 0; h < model.head_count(); ++h) {
            DenseVector logits = affine(model.head(h).weight, f, model.head(h).bias);
            ScalarLoss sl = cross_entropy_loss(logits, locals[h]);
            loss += sl.value;
            grads.touch(model, h);
            add_outer(grads.head_weight[h], sl.grad, f);
            for (std::size_t i = 0; i < sl.grad.size(); ++i) grads.head_bias[h][i] += sl.grad[i];
            if (!model.identity_backbone()) {
                accumulate_input_grad(model.head(h).weight, sl.grad, df);
            }
        }
    } else {
        // Concatenated heads against concatenated one-hots, trained as one
        // wide binary problem.
        DenseVector concat, targets;
        for (std::size_t h = 0; h < model.head_count(); ++h) {
            DenseVector logits = affine(model.head(h).weight, f, model.head(h).bias);
            concat.insert(concat.end(), logits.begin(), logits.end());
            DenseVector hot = one_hot(locals[h], model.plan().length(h));
            targets.insert(targets.end(), hot.begin(), hot.end());
        }
        ScalarLoss sl = bce_with_sigmoid_loss(concat, targets);
        loss = sl.value;
        std::size_t at = 0;
        for (std::size_t h = 0; h < model.head_count(); ++h) {
            const std::size_t len = model.plan().length(h);
            DenseVector slice(sl.grad.begin() + at, sl.grad.begin() + at + len);
            at += len;
            grads.touch(model, h);
            add_outer(grads.head_weight[h], slice, f);
            for (std::size_t i = 0; i < len; ++i) grads.head_bias[h][i] += slice[i];
            if (!model.identity_backbone()) {
                accumulate_input_grad(model.head(h).weight, slice, df);
            }
        }
    }

    if (!model.identity_backbone()) {
        add_outer(grads.backbone, df, x);
    }
    grads.apply(model, lr);
    return loss;
}

GlobalLabel mhp_predict(const MultiHeadModel& model, const DenseVector& x) {
    require_strategy(model, Strategy::Mhp, "mhp_predict");
    const DenseVector f = model.features(x);
    LocalLabels locals(model.head_count());
    for (std::size_t h = 0; h < model.head_count(); ++h) {
        locals[h] = argmax_first(affine(model.head(h).weight, f, model.head(h).bias));
    }
    return combine(locals, model.plan());
}

// ---------------------------------------------------------------------------
// Cascade strategy

namespace {

struct BeamCandidate {
    std::uint64_t index;  // prefix at this stage; a full label at the last
    double score;
};

// Stable Top-K: score descending, index ascending among ties. Candidates
// arrive in ascending index order.
void keep_top_k(std::vector<BeamCandidate>& candidates, std::size_t k) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const BeamCandidate& a, const BeamCandidate& b) {
                         return a.score > b.score;
                     });
    if (candidates.size() > k) candidates.resize(k);
}

void apply_transform(std::vector<BeamCandidate>& candidates, ScoreTransform transform) {
    if (transform == ScoreTransform::Sigmoid) {
        for (auto& c : candidates) {
            double z = c.score;
            c.score = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        }
    } else {
        DenseVector raw(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) raw[i] = candidates[i].score;
        DenseVector soft = softmax(raw);
        for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].score = soft[i];
    }
}

double modulation_scalar(const DenseVector& f, const DenseMatrix& table, std::uint64_t row) {
    const double* e = table.row(row);
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) m += f[i] * e[i];
    return m;
}

double modulate(double logit, double m, CascadeModulation modulation) {
    return modulation == CascadeModulation::Scale ? logit * m : logit + m;
}

// Smallest completion of `prefix` given the product of remaining lengths;
// prefixes whose every completion lands in the unused slack above C are dead.
bool prefix_viable(std::uint64_t prefix, std::uint64_t remaining, std::uint64_t num_classes) {
    return prefix * remaining < num_classes;
}

}  // namespace

PredictionSet mhc_predict(const MultiHeadModel& model, const DenseVector& x, std::size_t k,
                          ScoreTransform transform, CascadeModulation modulation) {
    require_strategy(model, Strategy::Mhc, "mhc_predict");
    if (k == 0) throw ValidationError("mhc_predict: K must be positive");
    if (k > model.plan().capacity()) {
        throw ValidationError("mhc_predict: K " + std::to_string(k) + " exceeds capacity " +
                              std::to_string(model.plan().capacity()));
    }

    const DenseVector f = model.features(x);
    const auto& plan = model.plan();
    const std::size_t stages = plan.heads();

    std::vector<BeamCandidate> beam;
    {
        DenseVector logits = affine(model.head(0).weight, f, model.head(0).bias);
        std::uint64_t remaining = plan.capacity() / plan.length(0);
        for (std::size_t j = 0; j < logits.size(); ++j) {
            if (!prefix_viable(j, remaining, model.num_classes())) continue;
            beam.push_back({j, logits[j]});
        }
        apply_transform(beam, transform);
        keep_top_k(beam, k);
    }

    std::uint64_t remaining = plan.capacity() / plan.length(0);
    for (std::size_t h = 1; h < stages; ++h) {
        const std::uint64_t width = plan.length(h);
        remaining /= width;
        DenseVector logits = affine(model.head(h).weight, f, model.head(h).bias);
        const DenseMatrix& table = model.embeddings()[h - 1];

        std::stable_sort(beam.begin(), beam.end(),
                         [](const BeamCandidate& a, const BeamCandidate& b) {
                             return a.index < b.index;
                         });
        std::vector<BeamCandidate> children;
        children.reserve(beam.size() * width);
        for (const auto& parent : beam) {
            double m = modulation_scalar(f, table, parent.index);
            for (std::uint64_t j = 0; j < width; ++j) {
                std::uint64_t child = parent.index * width + j;
                if (!prefix_viable(child, remaining, model.num_classes())) continue;
                children.push_back({child, modulate(logits[j], m, modulation)});
            }
        }
        apply_transform(children, transform);
        keep_top_k(children, k);
        beam = std::move(children);
    }

    PredictionSet out;
    out.labels.reserve(beam.size());
    out.scores.reserve(beam.size());
    for (const auto& c : beam) {
        out.labels.push_back(c.index);
        out.scores.push_back(c.score);
    }
    return out;
}

double mhc_train_step(MultiHeadModel& model, const DenseVector& x,
                      const std::vector<GlobalLabel>& labels, double lr, std::size_t k,
                      CascadeModulation modulation) {
    require_strategy(model, Strategy::Mhc, "mhc_train_step");
    if (labels.empty()) throw ValidationError("mhc_train_step: need at least one label");
    if (k == 0) throw ValidationError("mhc_train_step: K must be positive");
    for (GlobalLabel y : labels) require_label(model, y);

    const DenseVector f = model.features(x);
    const auto& plan = model.plan();
    const std::size_t stages = plan.heads();
    const bool multi = labels.size() > 1;
    const ScoreTransform transform = multi ? ScoreTransform::Sigmoid : ScoreTransform::Softmax;

    std::vector<LocalLabels> locals(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) locals[i] = decompose(labels[i], plan);

    GradientWorkspace grads(model);
    DenseVector df(model.feature_dim(), 0.0);
    std::vector<std::unordered_map<std::uint64_t, DenseVector>> embedding_grads(
        model.embeddings().size());
    double loss = 0.0;

    // Stage 1 is supervised on the raw head output.
    DenseVector logits1 = affine(model.head(0).weight, f, model.head(0).bias);
    {
        DenseVector g;
        if (multi) {
            DenseVector targets(plan.length(0), 0.0);
            for (const auto& l : locals) targets[l[0]] = 1.0;
            ScalarLoss sl = bce_with_sigmoid_loss(logits1, targets);
            loss += sl.value;
            g = std::move(sl.grad);
        } else {
            ScalarLoss sl = cross_entropy_loss(logits1, locals[0][0]);
            loss += sl.value;
            g = std::move(sl.grad);
        }
        grads.touch(model, 0);
        add_outer(grads.head_weight[0], g, f);
        for (std::size_t i = 0; i < g.size(); ++i) grads.head_bias[0][i] += g[i];
        if (!model.identity_backbone()) accumulate_input_grad(model.head(0).weight, g, df);
    }

    // Teacher-forced beam: true candidates get a +1.0 boost after the score
    // transform, which pins them above any unboosted candidate.
    std::vector<BeamCandidate> beam;
    {
        std::uint64_t remaining = plan.capacity() / plan.length(0);
        for (std::size_t j = 0; j < logits1.size(); ++j) {
            if (!prefix_viable(j, remaining, model.num_classes())) continue;
            beam.push_back({j, logits1[j]});
        }
        apply_transform(beam, transform);
        for (auto& c : beam) {
            for (const auto& l : locals) {
                if (l[0] == c.index) {
                    c.score += 1.0;
                    break;
                }
            }
        }
        keep_top_k(beam, k);
    }

    std::uint64_t remaining = plan.capacity() / plan.length(0);
    for (std::size_t h = 1; h < stages; ++h) {
        const std::uint64_t width = plan.length(h);
        remaining /= width;
        DenseVector logits = affine(model.head(h).weight, f, model.head(h).bias);
        const DenseMatrix& table = model.embeddings()[h - 1];

        // The stage output is one modulated row per surviving parent. The
        // loss covers the whole beam, so children of wrong prefixes receive
        // negative pressure — that is what lets inference tell parents apart.
        std::stable_sort(beam.begin(), beam.end(),
                         [](const BeamCandidate& a, const BeamCandidate& b) {
                             return a.index < b.index;
                         });
        std::vector<double> parent_mod(beam.size());
        DenseVector flat_raw;
        std::vector<std::uint64_t> flat_child;
        flat_raw.reserve(beam.size() * width);
        for (std::size_t p = 0; p < beam.size(); ++p) {
            parent_mod[p] = modulation_scalar(f, table, beam[p].index);
            for (std::uint64_t j = 0; j < width; ++j) {
                std::uint64_t child = beam[p].index * width + j;
                if (!prefix_viable(child, remaining, model.num_classes())) continue;
                flat_raw.push_back(modulate(logits[j], parent_mod[p], modulation));
                flat_child.push_back(child);
            }
        }

        std::vector<std::uint64_t> true_prefixes;
        for (const auto& l : locals) {
            std::uint64_t prefix = 0;
            for (std::size_t s = 0; s <= h; ++s) prefix = prefix * plan.length(s) + l[s];
            true_prefixes.push_back(prefix);
        }

        DenseVector g;
        if (multi) {
            DenseVector targets(flat_raw.size(), 0.0);
            for (std::size_t c = 0; c < flat_child.size(); ++c) {
                if (std::find(true_prefixes.begin(), true_prefixes.end(), flat_child[c]) !=
                    true_prefixes.end()) {
                    targets[c] = 1.0;
                }
            }
            ScalarLoss sl = bce_with_sigmoid_loss(flat_raw, targets);
            loss += sl.value;
            g = std::move(sl.grad);
        } else {
            auto it = std::find(flat_child.begin(), flat_child.end(), true_prefixes.front());
            if (it == flat_child.end()) {
                throw ValidationError("mhc_train_step: teacher-forced truth fell out of the beam");
            }
            ScalarLoss sl = cross_entropy_loss(
                flat_raw, static_cast<std::uint64_t>(it - flat_child.begin()));
            loss += sl.value;
            g = std::move(sl.grad);
        }

        DenseVector stage_dlogits(width, 0.0);
        std::size_t at = 0;
        for (std::size_t p = 0; p < beam.size(); ++p) {
            double dm = 0.0;
            for (std::uint64_t j = 0; j < width; ++j) {
                std::uint64_t child = beam[p].index * width + j;
                if (!prefix_viable(child, remaining, model.num_classes())) continue;
                double gc = g[at++];
                if (modulation == CascadeModulation::Scale) {
                    stage_dlogits[j] += gc * parent_mod[p];
                    dm += gc * logits[j];
                } else {
                    stage_dlogits[j] += gc;
                    dm += gc;
                }
            }
            if (dm != 0.0) {
                auto [it, inserted] = embedding_grads[h - 1].try_emplace(
                    beam[p].index, DenseVector(f.size(), 0.0));
                for (std::size_t i = 0; i < f.size(); ++i) it->second[i] += dm * f[i];
                if (!model.identity_backbone()) {
                    const double* e = table.row(beam[p].index);
                    for (std::size_t i = 0; i < f.size(); ++i) df[i] += dm * e[i];
                }
            }
        }

        grads.touch(model, h);
        add_outer(grads.head_weight[h], stage_dlogits, f);
        for (std::size_t i = 0; i < stage_dlogits.size(); ++i) {
            grads.head_bias[h][i] += stage_dlogits[i];
        }
        if (!model.identity_backbone()) {
            accumulate_input_grad(model.head(h).weight, stage_dlogits, df);
        }

        if (h + 1 < stages) {
            std::vector<BeamCandidate> children;
            for (std::size_t c = 0; c < flat_child.size(); ++c) {
                children.push_back({flat_child[c], flat_raw[c]});
            }
            apply_transform(children, transform);
            for (auto& child : children) {
                if (std::find(true_prefixes.begin(), true_prefixes.end(), child.index) !=
                    true_prefixes.end()) {
                    child.score += 1.0;
                }
            }
            keep_top_k(children, k);
            beam = std::move(children);
        }
    }

    if (!model.identity_backbone()) add_outer(grads.backbone, df, x);
    grads.apply(model, lr);
    for (std::size_t t = 0; t < embedding_grads.size(); ++t) {
        for (const auto& [row, g] : embedding_grads[t]) {
            double* e = model.embeddings()[t].row(row);
            for (std::size_t i = 0; i < g.size(); ++i) e[i] -= lr * g[i];
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Sampling strategy

namespace {

std::vector<std::uint64_t> head_offsets(const HeadPlan& plan) {
    std::vector<std::uint64_t> offsets(plan.heads() + 1, 0);
    for (std::size_t h = 0; h < plan.heads(); ++h) {
        offsets[h + 1] = offsets[h] + plan.length(h);
    }
    return offsets;
}

std::size_t owning_head(const std::vector<std::uint64_t>& offsets, GlobalLabel label) {
    auto it = std::upper_bound(offsets.begin(), offsets.end(), label);
    return static_cast<std::size_t>(it - offsets.begin()) - 1;
}

}  // namespace

double mhs_train_step(MultiHeadModel& model, const std::vector<DenseVector>& xs,
                      const std::vector<GlobalLabel>& labels, double lr, std::size_t select,
                      Rng& rng) {
    require_strategy(model, Strategy::Mhs, "mhs_train_step");
    if (xs.empty() || xs.size() != labels.size()) {
        throw ValidationError("mhs_train_step: batch of " + std::to_string(xs.size()) +
                              " inputs vs " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t heads = model.head_count();
    if (select == 0 || select > heads) {
        throw ValidationError("mhs_train_step: select must be in [1, " + std::to_string(heads) +
                              "], got " + std::to_string(select));
    }
    for (GlobalLabel y : labels) require_label(model, y);

    const auto offsets = head_offsets(model.plan());
    std::vector<std::size_t> positive(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) positive[i] = owning_head(offsets, labels[i]);

    GradientWorkspace grads(model);
    double loss = 0.0;

    for (std::size_t i = 0; i < xs.size(); ++i) {
        const DenseVector f = model.features(xs[i]);

        std::vector<std::size_t> selected;
        if (select == heads) {
            selected.resize(heads);
            std::iota(selected.begin(), selected.end(), 0);
        } else {
            selected.push_back(positive[i]);
            // Negative heads come from the other labels in the batch; when
            // the batch cannot supply enough distinct heads, top up with
            // seeded uniform draws.
            std::vector<std::size_t> batch_heads;
            for (std::size_t j = 0; j < xs.size(); ++j) {
                if (j == i || positive[j] == positive[i]) continue;
                if (std::find(batch_heads.begin(), batch_heads.end(), positive[j]) ==
                    batch_heads.end()) {
                    batch_heads.push_back(positive[j]);
                }
            }
            std::sort(batch_heads.begin(), batch_heads.end());
            for (std::size_t n = batch_heads.size(); n > 1; --n) {
                std::swap(batch_heads[n - 1], batch_heads[rng.below(n)]);
            }
            for (std::size_t b = 0; b < batch_heads.size() && selected.size() < select; ++b) {
                selected.push_back(batch_heads[b]);
            }
            while (selected.size() < select) {
                std::size_t h = static_cast<std::size_t>(rng.below(heads));
                if (std::find(selected.begin(), selected.end(), h) == selected.end()) {
                    selected.push_back(h);
                }
            }
            std::sort(selected.begin(), selected.end());
        }

        DenseVector concat;
        std::size_t target = 0;
        for (std::size_t h : selected) {
            if (h == positive[i]) target = concat.size() + (labels[i] - offsets[h]);
            DenseVector logits = affine(model.head(h).weight, f, model.head(h).bias);
            concat.insert(concat.end(), logits.begin(), logits.end());
        }

        ScalarLoss sl = cross_entropy_loss(concat, target);
        loss += sl.value;

        DenseVector df(model.feature_dim(), 0.0);
        std::size_t at = 0;
        for (std::size_t h : selected) {
            const std::size_t len = model.plan().length(h);
            DenseVector slice(sl.grad.begin() + at, sl.grad.begin() + at + len);
            at += len;
            grads.touch(model, h);
            add_outer(grads.head_weight[h], slice, f);
            for (std::size_t r = 0; r < len; ++r) grads.head_bias[h][r] += slice[r];
            if (!model.identity_backbone()) {
                accumulate_input_grad(model.head(h).weight, slice, df);
            }
        }
        if (!model.identity_backbone()) add_outer(grads.backbone, df, xs[i]);
    }

    const double inv = 1.0 / static_cast<double>(xs.size());
    loss *= inv;
    grads.scale(inv);
    grads.apply(model, lr);
    return loss;
}

GlobalLabel mhs_predict(const MultiHeadModel& model, const DenseVector& x) {
    require_strategy(model, Strategy::Mhs, "mhs_predict");
    const DenseVector f = model.features(x);
    DenseVector concat;
    for (std::size_t h = 0; h < model.head_count(); ++h) {
        DenseVector logits = affine(model.head(h).weight, f, model.head(h).bias);
        concat.insert(concat.end(), logits.begin(), logits.end());
    }
    return argmax_first(concat);
}

// ---------------------------------------------------------------------------
// Vanilla baseline

double vanilla_train_step(MultiHeadModel& model, const DenseVector& x, GlobalLabel label,
                          double lr) {
    return vanilla_train_batch(model, {x}, {label}, lr);
}

double vanilla_train_batch(MultiHeadModel& model, const std::vector<DenseVector>& xs,
                           const std::vector<GlobalLabel>& labels, double lr) {
    require_strategy(model, Strategy::Vanilla, "vanilla_train_batch");
    if (xs.empty() || xs.size() != labels.size()) {
        throw ValidationError("vanilla_train_batch: batch of " + std::to_string(xs.size()) +
                              " inputs vs " + std::to_string(labels.size()) + " labels");
    }
    for (GlobalLabel y : labels) require_label(model, y);

    GradientWorkspace grads(model);
    double loss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const DenseVector f = model.features(xs[i]);
        DenseVector logits = affine(model.head(0).weight, f, model.head(0).bias);
        ScalarLoss sl = cross_entropy_loss(logits, labels[i]);
        loss += sl.value;

        grads.touch(model, 0);
        add_outer(grads.head_weight[0], sl.grad, f);
        for (std::size_t r = 0; r < sl.grad.size(); ++r) grads.head_bias[0][r] += sl.grad[r];
        if (!model.identity_backbone()) {
            DenseVector df(model.feature_dim(), 0.0);
            accumulate_input_grad(model.head(0).weight, sl.grad, df);
            add_outer(grads.backbone, df, xs[i]);
        }
    }

    const double inv = 1.0 / static_cast<double>(xs.size());
    loss *= inv;
    grads.scale(inv);
    grads.apply(model, lr);
    return loss;
}

GlobalLabel vanilla_predict(const MultiHeadModel& model, const DenseVector& x) {
    require_strategy(model, Strategy::Vanilla, "vanilla_predict");
    const DenseVector f = model.features(x);
    return argmax_first(affine(model.head(0).weight, f, model.head(0).bias));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'M', 'H', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
    const unsigned char* at;
    const unsigned char* end;
    std::string path;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - at) < n) {
            throw IoError("checkpoint '" + path + "' is truncated");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(at[i]) << (8 * i);
        at += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(at[i]) << (8 * i);
        at += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
};

void put_matrix(std::string& out, const DenseMatrix& m) {
    for (double v : m.values()) put_f64(out, v);
}

void put_vector(std::string& out, const DenseVector& v) {
    for (double x : v) put_f64(out, x);
}

void read_matrix(Reader& r, DenseMatrix& m) {
    for (double& v : m.values()) v = r.f64();
}

void read_vector(Reader& r, DenseVector& v) {
    for (double& x : v) x = r.f64();
}

}  // namespace

void save_checkpoint(const MultiHeadModel& model, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(model.strategy()));
    put_u32(out, model.identity_backbone() ? 1u : 0u);
    put_u32(out, static_cast<std::uint32_t>(model.head_count()));
    put_u32(out, static_cast<std::uint32_t>(model.beam_width()));
    put_u32(out, 0);  // reserved
    put_u64(out, model.num_classes());
    put_u64(out, model.input_dim());
    put_u64(out, model.feature_dim());
    for (std::uint64_t len : model.plan().lengths()) put_u64(out, len);

    if (!model.identity_backbone()) put_matrix(out, model.backbone());
    for (std::size_t h = 0; h < model.head_count(); ++h) {
        put_matrix(out, model.head(h).weight);
        put_vector(out, model.head(h).bias);
    }
    for (const auto& table : model.embeddings()) put_matrix(out, table);

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write checkpoint '" + path + "'");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("short write to checkpoint '" + path + "'");
}

MultiHeadModel load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()),
             reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size(), path};
    r.need(4);
    if (std::memcmp(r.at, kMagic, 4) != 0) {
        throw IoError("checkpoint '" + path + "' has a bad magic header");
    }
    r.at += 4;
    std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw IoError("checkpoint '" + path + "' has unsupported version " +
                      std::to_string(version));
    }
    std::uint32_t strategy_tag = r.u32();
    if (strategy_tag > 3) throw IoError("checkpoint '" + path + "' has a bad strategy tag");
    std::uint32_t flags = r.u32();
    std::uint32_t head_count = r.u32();
    std::uint32_t beam_width = r.u32();
    (void)r.u32();  // reserved
    std::uint64_t num_classes = r.u64();
    std::uint64_t input_dim = r.u64();
    std::uint64_t feature_dim = r.u64();
    std::vector<std::uint64_t> lengths(head_count);
    for (auto& len : lengths) len = r.u64();

    MultiHeadModel model(static_cast<Strategy>(strategy_tag), num_classes, HeadPlan(lengths));
    model.input_dim_ = input_dim;
    model.feature_dim_ = feature_dim;
    model.beam_width_ = beam_width == 0 ? 1 : beam_width;
    model.identity_backbone_ = (flags & 1u) != 0;

    if (!model.identity_backbone_) {
        model.backbone_ = DenseMatrix(feature_dim, input_dim);
        read_matrix(r, model.backbone_);
    }
    model.heads_.resize(head_count);
    for (std::size_t h = 0; h < head_count; ++h) {
        model.heads_[h].weight = DenseMatrix(lengths[h], feature_dim);
        read_matrix(r, model.heads_[h].weight);
        model.heads_[h].bias.assign(lengths[h], 0.0);
        read_vector(r, model.heads_[h].bias);
    }
    if (model.strategy_ == Strategy::Mhc) {
        for (std::size_t h = 2; h <= model.plan_.heads(); ++h) {
            DenseMatrix table(model.plan_.prefix_capacity(h - 1), feature_dim);
            read_matrix(r, table);
            model.embeddings_.push_back(std::move(table));
        }
    }
    if (r.at != r.end) {
        throw IoError("checkpoint '" + path + "' has trailing bytes");
    }
    return model;
}

}  // namespace mhe
