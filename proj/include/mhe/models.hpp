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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mhe/label_codec.hpp"
#include "mhe/linalg.hpp"
#include "mhe/prediction.hpp"
#include "mhe/strategy.hpp"

namespace mhe {

enum class LossMode {
    CrossEntropy,  // softmax CE per head
    SigmoidBce,    // BCE over the concatenated heads
};

// How a cascade stage folds the surviving prefix into the next head's
// logits. The default scales the stage logits by <features, embedding row>;
// the offset variant adds that projection instead.
enum class CascadeModulation {
    Scale,
    Offset,
};

enum class ScoreTransform {
    Sigmoid,  // elementwise; the multi-label reading
    Softmax,  // over the flattened stage candidates; the single-label reading
};

struct Head {
    DenseMatrix weight;  // lengths[h] x feature_dim
    DenseVector bias;    // lengths[h]
};

// One linear backbone (possibly identity) plus per-head linear classifiers
// sized by the plan. Cascade models additionally carry per-stage candidate
// embedding tables: stage h >= 2 has one row per representable prefix after
// stage h-1.
class MultiHeadModel {
public:
    static MultiHeadModel create(Strategy strategy, std::uint64_t num_classes, HeadPlan plan,
                                 std::size_t input_dim, std::size_t backbone_dim, Rng& rng,
                                 std::size_t beam_width = 1);

    Strategy strategy() const { return strategy_; }
    const HeadPlan& plan() const { return plan_; }
    std::uint64_t num_classes() const { return num_classes_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t beam_width() const { return beam_width_; }

    bool identity_backbone() const { return identity_backbone_; }
    DenseMatrix& backbone() { return backbone_; }
    const DenseMatrix& backbone() const { return backbone_; }

    std::size_t head_count() const { return heads_.size(); }
    Head& head(std::size_t h) { return heads_[h]; }
    const Head& head(std::size_t h) const { return heads_[h]; }

    // Cascade embedding table for stage h (2-based stage index maps to
    // embeddings()[h-2]). Empty for non-cascade strategies.
    std::vector<DenseMatrix>& embeddings() { return embeddings_; }
    const std::vector<DenseMatrix>& embeddings() const { return embeddings_; }

    // Applies the backbone; identity passes the input through untouched.
    DenseVector features(const DenseVector& x) const;

private:
    MultiHeadModel(Strategy strategy, std::uint64_t num_classes, HeadPlan plan);

    Strategy strategy_;
    HeadPlan plan_;
    std::uint64_t num_classes_;
    std::size_t input_dim_ = 0;
    std::size_t feature_dim_ = 0;
    std::size_t beam_width_ = 1;
    bool identity_backbone_ = true;
    DenseMatrix backbone_;  // feature_dim x input_dim when not identity
    std::vector<Head> heads_;
    std::vector<DenseMatrix> embeddings_;

    friend MultiHeadModel load_checkpoint(const std::string& path);
};

// Raw per-head logits for one input, lengths per plan.
std::vector<DenseVector> forward_heads(const MultiHeadModel& model, const DenseVector& x);

// --- product strategy -------------------------------------------------------

// Decomposes the label, trains every head against its own digit (CE per head,
// or BCE over the concatenated heads), applies one SGD step. Returns the loss.
double mhp_train_step(MultiHeadModel& model, const DenseVector& x, GlobalLabel label,
                      double lr, LossMode mode = LossMode::CrossEntropy);

// combine() of the per-head argmaxes; never materializes the product space.
GlobalLabel mhp_predict(const MultiHeadModel& model, const DenseVector& x);

// --- cascade strategy -------------------------------------------------------

// Coarse-to-fine Top-K beam over label prefixes. Stage 1 keeps the best K
// head-1 candidates; each later stage scores every extension of every kept
// prefix (head logits modulated by the prefix embedding), re-selects Top-K,
// and the survivors of the last stage are complete labels. Ties are stable
// by ascending candidate index. K must not exceed the label capacity.
PredictionSet mhc_predict(const MultiHeadModel& model, const DenseVector& x, std::size_t k,
                          ScoreTransform transform = ScoreTransform::Sigmoid,
                          CascadeModulation modulation = CascadeModulation::Scale);

// Teacher-forced cascade step: the true locals get a +1.0 score boost before
// every Top-K so they survive pruning, and each stage is supervised at the
// true prefix (CE for a single label, BCE over locals for several). Returns
// the summed stage loss.
double mhc_train_step(MultiHeadModel& model, const DenseVector& x,
                      const std::vector<GlobalLabel>& labels, double lr, std::size_t k,
                      CascadeModulation modulation = CascadeModulation::Scale);

// --- sampling strategy ------------------------------------------------------

// Heads partition the label range additively (plan lengths sum to the class
// count). Each example trains the head owning its label plus `select - 1`
// negative heads, preferring heads that own other labels in the same batch
// and falling back to seeded uniform draws. Loss is softmax CE over the
// concatenated selected heads; only selected heads are updated.
double mhs_train_step(MultiHeadModel& model, const std::vector<DenseVector>& xs,
                      const std::vector<GlobalLabel>& labels, double lr, std::size_t select,
                      Rng& rng);

// Argmax over the concatenation of all heads (sampling speeds up training
// only; inference is vanilla-style).
GlobalLabel mhs_predict(const MultiHeadModel& model, const DenseVector& x);

// --- vanilla baseline -------------------------------------------------------

double vanilla_train_step(MultiHeadModel& model, const DenseVector& x, GlobalLabel label,
                          double lr);
double vanilla_train_batch(MultiHeadModel& model, const std::vector<DenseVector>& xs,
                           const std::vector<GlobalLabel>& labels, double lr);
GlobalLabel vanilla_predict(const MultiHeadModel& model, const DenseVector& x);

// --- checkpoints -------------------------------------------------------------

// Flat versioned binary container; header then row-major 64-bit little-endian
// parameter blocks in declaration order. Round-trips bit-exactly.
void save_checkpoint(const MultiHeadModel& model, const std::string& path);
MultiHeadModel load_checkpoint(const std::string& path);

}  // namespace mhe
