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

#include "mhe/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "mhe/errors.hpp"

namespace mhe {

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
    throw ValidationError("line " + std::to_string(line) + ": " + what);
}

std::uint64_t parse_u64(std::string_view token, std::size_t line, const char* what) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        parse_fail(line, std::string("bad ") + what + " '" + std::string(token) + "'");
    }
    return value;
}

double parse_f64(std::string_view token, std::size_t line) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        parse_fail(line, "bad feature value '" + std::string(token) + "'");
    }
    return value;
}

void append_f64(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    out.append(buf, ptr);
}

}  // namespace

std::size_t SparseDataset::unlabeled_count() const {
    std::size_t n = 0;
    for (const auto& ex : examples) {
        if (ex.labels.empty()) ++n;
    }
    return n;
}

bool SparseDataset::multi_label() const {
    for (const auto& ex : examples) {
        if (ex.labels.size() > 1) return true;
    }
    return false;
}

SparseDataset load_xmlc(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file '" + path + "'");

    SparseDataset ds;
    ds.name = path;

    std::string line;
    std::size_t line_no = 0;

    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };

    if (!next_line()) throw ValidationError("line 1: missing header");
    std::uint64_t num_examples = 0;
    {
        std::istringstream hs(line);
        std::string a, b, c, extra;
        if (!(hs >> a >> b >> c) || (hs >> extra)) {
            parse_fail(line_no, "header must be 'num_examples num_features num_labels'");
        }
        num_examples = parse_u64(a, line_no, "example count");
        ds.num_features = parse_u64(b, line_no, "feature count");
        ds.num_labels = parse_u64(c, line_no, "label count");
    }

    ds.examples.reserve(num_examples);
    while (next_line()) {
        if (ds.examples.size() == num_examples && line.empty()) continue;  // trailing newline
        if (ds.examples.size() == num_examples) {
            parse_fail(line_no, "more examples than the header announced");
        }
        SparseExample ex;

        std::size_t space = line.find(' ');
        std::string_view label_part(line.data(), space == std::string::npos ? line.size() : space);
        std::size_t feat_pos = (space == std::string::npos) ? line.size() : space + 1;
        // A leading feature token means the label list is empty.
        if (label_part.find(':') != std::string_view::npos) {
            label_part = std::string_view();
            feat_pos = 0;
        }

        if (!label_part.empty()) {
            std::size_t start = 0;
            while (start <= label_part.size()) {
                std::size_t comma = label_part.find(',', start);
                std::string_view tok = label_part.substr(
                    start, comma == std::string_view::npos ? label_part.size() - start
                                                           : comma - start);
                if (!tok.empty()) {
                    std::uint64_t label = parse_u64(tok, line_no, "label");
                    if (label >= ds.num_labels) {
                        parse_fail(line_no, "label " + std::to_string(label) +
                                                " >= label count " + std::to_string(ds.num_labels));
                    }
                    ex.labels.push_back(label);
                }
                if (comma == std::string_view::npos) break;
                start = comma + 1;
            }
        }

        std::size_t pos = feat_pos;
        while (pos < line.size()) {
            while (pos < line.size() && line[pos] == ' ') ++pos;
            if (pos >= line.size()) break;
            std::size_t end = line.find(' ', pos);
            if (end == std::string::npos) end = line.size();
            std::string_view tok(line.data() + pos, end - pos);
            pos = end + 1;

            std::size_t colon = tok.find(':');
            if (colon == std::string_view::npos) {
                parse_fail(line_no, "feature token '" + std::string(tok) + "' lacks ':'");
            }
            std::uint64_t index = parse_u64(tok.substr(0, colon), line_no, "feature index");
            if (index >= ds.num_features) {
                parse_fail(line_no, "feature index " + std::to_string(index) +
                                        " >= feature count " + std::to_string(ds.num_features));
            }
            double value = parse_f64(tok.substr(colon + 1), line_no);
            ex.features.emplace_back(static_cast<std::uint32_t>(index), value);
        }

        std::sort(ex.features.begin(), ex.features.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t i = 1; i < ex.features.size(); ++i) {
            if (ex.features[i].first == ex.features[i - 1].first) {
                parse_fail(line_no, "duplicate feature index " +
                                        std::to_string(ex.features[i].first));
            }
        }
        std::sort(ex.labels.begin(), ex.labels.end());
        ex.labels.erase(std::unique(ex.labels.begin(), ex.labels.end()), ex.labels.end());

        ds.examples.push_back(std::move(ex));
    }

    if (ds.examples.size() != num_examples) {
        throw ValidationError("header announced " + std::to_string(num_examples) +
                              " examples but file has " + std::to_string(ds.examples.size()));
    }
    return ds;
}

void write_xmlc(const SparseDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write dataset file '" + path + "'");

    std::string buf;
    buf.reserve(1 << 16);
    buf += std::to_string(dataset.examples.size());
    buf += ' ';
    buf += std::to_string(dataset.num_features);
    buf += ' ';
    buf += std::to_string(dataset.num_labels);
    buf += '\n';

    for (const auto& ex : dataset.examples) {
        for (std::size_t i = 0; i < ex.labels.size(); ++i) {
            if (i) buf += ',';
            buf += std::to_string(ex.labels[i]);
        }
        for (const auto& [index, value] : ex.features) {
            buf += ' ';
            buf += std::to_string(index);
            buf += ':';
            append_f64(buf, value);
        }
        buf += '\n';
        if (buf.size() > (1 << 20)) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to '" + path + "'");
}

SparseDataset gen_gaussian_classification(std::size_t n, std::size_t dim,
                                          std::uint64_t classes, std::uint64_t seed) {
    if (n == 0 || dim == 0 || classes == 0) {
        throw ValidationError("gen_gaussian_classification: n, dim and classes must be positive");
    }
    Rng rng(seed);
    SparseDataset ds;
    ds.name = "gaussian";
    ds.num_features = dim;
    ds.num_labels = classes;
    ds.examples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& ex = ds.examples[i];
        ex.features.reserve(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            ex.features.emplace_back(static_cast<std::uint32_t>(d), rng.normal());
        }
        ex.labels.push_back(static_cast<std::uint64_t>(i) % classes);
    }
    return ds;
}

SparseDataset gen_separable_toy(std::uint64_t classes, std::size_t per_class,
                                double margin, std::uint64_t seed) {
    if (classes < 2) throw ValidationError("gen_separable_toy: need at least two classes");
    if (per_class == 0) throw ValidationError("gen_separable_toy: per_class must be positive");

    // Class c sits at (margin / sqrt(2)) * e_c, so all pairwise mean
    // distances equal `margin` exactly. Noise is unit-scale normal.
    const std::size_t dim = static_cast<std::size_t>(classes);
    const double scale = margin / std::sqrt(2.0);

    Rng rng(seed);
    SparseDataset ds;
    ds.name = "separable-toy";
    ds.num_features = dim;
    ds.num_labels = classes;
    ds.examples.reserve(classes * per_class);
    for (std::uint64_t c = 0; c < classes; ++c) {
        for (std::size_t p = 0; p < per_class; ++p) {
            SparseExample ex;
            ex.features.reserve(dim);
            for (std::size_t d = 0; d < dim; ++d) {
                double mean = (d == c) ? scale : 0.0;
                ex.features.emplace_back(static_cast<std::uint32_t>(d), mean + rng.normal());
            }
            ex.labels.push_back(c);
            ds.examples.push_back(std::move(ex));
        }
    }
    return ds;
}

std::pair<SparseDataset, SparseDataset> split_even_odd(const SparseDataset& dataset) {
    SparseDataset even, odd;
    even.name = dataset.name + "/even";
    odd.name = dataset.name + "/odd";
    even.num_features = odd.num_features = dataset.num_features;
    even.num_labels = odd.num_labels = dataset.num_labels;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        (i % 2 == 0 ? even : odd).examples.push_back(dataset.examples[i]);
    }
    return {std::move(even), std::move(odd)};
}

DenseVector to_dense(const SparseExample& example, std::size_t dim) {
    DenseVector x(dim, 0.0);
    for (const auto& [index, value] : example.features) {
        if (index >= dim) {
            throw ValidationError("feature index " + std::to_string(index) +
                                  " out of range for dimension " + std::to_string(dim));
        }
        x[index] = value;
    }
    return x;
}

double precision_at_k(const PredictionSet& predictions,
                      const std::vector<std::uint64_t>& truth, std::size_t k) {
    if (k == 0) throw ValidationError("precision_at_k: K must be positive");
    std::unordered_set<std::uint64_t> truth_set(truth.begin(), truth.end());
    std::size_t hits = 0;
    std::size_t limit = std::min(k, predictions.labels.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (truth_set.count(predictions.labels[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double accuracy(const std::vector<std::uint64_t>& predicted,
                const std::vector<std::uint64_t>& truth) {
    if (predicted.size() != truth.size()) {
        throw ValidationError("accuracy: " + std::to_string(predicted.size()) +
                              " predictions vs " + std::to_string(truth.size()) + " truths");
    }
    if (predicted.empty()) throw ValidationError("accuracy: empty lists");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == truth[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace mhe
