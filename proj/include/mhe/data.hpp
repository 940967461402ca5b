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
#include <utility>
#include <vector>

#include "mhe/linalg.hpp"
#include "mhe/prediction.hpp"

namespace mhe {

struct SparseExample {
    // (feature index, value), strictly increasing indices.
    std::vector<std::pair<std::uint32_t, double>> features;
    // Sorted, distinct, < num_labels. May be empty: such examples are kept
    // (dropping them would silently change N) and counted separately.
    std::vector<std::uint64_t> labels;
};

struct SparseDataset {
    std::string name;
    std::size_t num_features = 0;
    std::uint64_t num_labels = 0;
    std::vector<SparseExample> examples;

    std::size_t unlabeled_count() const;
    bool multi_label() const;  // true when any example carries more than one label
};

// Reads the standard text format: a "num_examples num_features num_labels"
// header, then one line per example, "l1,l2,...  f1:v1 f2:v2 ...". Labels may
// be empty (line starts with the separating space), features may be absent.
// Accepts LF and CRLF. Parse and validation errors carry the line number.
SparseDataset load_xmlc(const std::string& path);

// Writes the canonical form: sorted indices, single spaces, LF endings,
// shortest round-trip float formatting. load(write(ds)) is byte-stable.
void write_xmlc(const SparseDataset& dataset, const std::string& path);

// N standard-normal feature rows of dimension `dim`; example i carries label
// i mod classes. Dense-backed (every feature index present).
SparseDataset gen_gaussian_classification(std::size_t n, std::size_t dim,
                                          std::uint64_t classes, std::uint64_t seed);

// Linearly separable toy set: class means sit at scaled coordinate corners
// with pairwise distance `margin`, points are mean + unit-scale noise.
// Separability is guaranteed by construction for margin >= 4.
SparseDataset gen_separable_toy(std::uint64_t classes, std::size_t per_class,
                                double margin, std::uint64_t seed);

// Deterministic split by example-index parity (even -> first, odd -> second).
std::pair<SparseDataset, SparseDataset> split_even_odd(const SparseDataset& dataset);

DenseVector to_dense(const SparseExample& example, std::size_t dim);

// |top-K predictions  intersect  truth| / K. Fewer than K predictions still
// divide by K.
double precision_at_k(const PredictionSet& predictions,
                      const std::vector<std::uint64_t>& truth, std::size_t k);

// Fraction of positions where the two lists agree. Lengths must match.
double accuracy(const std::vector<std::uint64_t>& predicted,
                const std::vector<std::uint64_t>& truth);

}  // namespace mhe
