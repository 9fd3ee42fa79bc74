// SPDX-License-Identifier: Apache-2.0
#pragma once

// Zero-shot classification, retrieval (MRR), and paired-code alignment over
// sparse codes. These metrics measure how much cross-modal alignment
// survives sparsification: a fully modality-split model scores 0 cosine
// everywhere and degenerates to fixed-order predictions.
//
// All tie-breaks are lowest-index so reported numbers are reproducible
// bit for bit.

#include <cstdint>
#include <string>
#include <vector>

#include "msae/binio.hpp"
#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/sae.hpp"

namespace msae {

/// Cosine similarity of two nonnegative sparse codes; 0 if either is empty.
inline double sparse_cosine(const SparseCode& z, const SparseCode& w) {
    if (z.p != w.p)
        throw shape_error("sparse_cosine: code lengths differ (" + std::to_string(z.p) + " vs " +
                          std::to_string(w.p) + ")");
    if (z.entries.empty() || w.entries.empty()) return 0.0;
    double dot = 0.0;
    std::size_t i = 0, j = 0;
    while (i < z.entries.size() && j < w.entries.size()) {
        const auto zi = z.entries[i].index;
        const auto wj = w.entries[j].index;
        if (zi == wj) {
            dot += z.entries[i].value * w.entries[j].value;
            ++i;
            ++j;
        } else if (zi < wj) {
            ++i;
        } else {
            ++j;
        }
    }
    if (dot == 0.0) return 0.0;
    return dot / std::sqrt(z.squared_norm() * w.squared_norm());
}

struct ZeroShotTask {
    EmbeddingMatrix class_embeddings; // one prompt embedding per class
    EmbeddingMatrix test_embeddings;
    std::vector<std::uint32_t> labels; // class index per test sample
};

/// Predicts the class whose code has highest sparse cosine with the test
/// code (ties to the lowest class index); returns the fraction correct.
inline double zero_shot_classify(const SaeParams& params, const ZeroShotTask& task,
                                 Eigen::Index k, Side class_side, Side test_side) {
    const Eigen::Index n_classes = task.class_embeddings.n_samples();
    const Eigen::Index n_test = task.test_embeddings.n_samples();
    if (n_classes < 1 || n_test < 1) throw argument_error("zero_shot_classify: empty task");
    if (static_cast<Eigen::Index>(task.labels.size()) != n_test)
        throw argument_error("zero_shot_classify: " + std::to_string(task.labels.size()) +
                             " labels for " + std::to_string(n_test) + " test samples");
    for (const auto label : task.labels)
        if (label >= static_cast<std::uint32_t>(n_classes))
            throw argument_error("zero_shot_classify: label " + std::to_string(label) +
                                 " out of range for " + std::to_string(n_classes) + " classes");

    const auto class_codes = encode_all(params, task.class_embeddings, class_side, k);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < n_test; ++i) {
        const SparseCode code =
            encode(params, task.test_embeddings.data.row(i).transpose(), test_side, k);
        Eigen::Index best = 0;
        double best_score = sparse_cosine(code, class_codes[0]);
        for (Eigen::Index c = 1; c < n_classes; ++c) {
            const double score = sparse_cosine(code, class_codes[static_cast<std::size_t>(c)]);
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        if (static_cast<std::uint32_t>(best) == task.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n_test);
}

/// Mean reciprocal rank of the ground-truth corpus item per query. Equal
/// scores rank by corpus index, so a degenerate all-zero scorer reduces to a
/// fixed ordering rather than an error.
inline double retrieval_mrr(const SaeParams& params, const EmbeddingMatrix& queries,
                            const EmbeddingMatrix& corpus,
                            const std::vector<std::uint32_t>& ground_truth, Eigen::Index k,
                            Side query_side, Side corpus_side) {
    const Eigen::Index n_queries = queries.n_samples();
    const Eigen::Index n_corpus = corpus.n_samples();
    if (n_queries < 1 || n_corpus < 1) throw argument_error("retrieval_mrr: empty task");
    if (static_cast<Eigen::Index>(ground_truth.size()) != n_queries)
        throw argument_error("retrieval_mrr: " + std::to_string(ground_truth.size()) +
                             " ground-truth entries for " + std::to_string(n_queries) + " queries");
    for (const auto gt : ground_truth)
        if (gt >= static_cast<std::uint32_t>(n_corpus))
            throw argument_error("retrieval_mrr: ground-truth index " + std::to_string(gt) +
                                 " out of range for corpus of " + std::to_string(n_corpus));

    const auto corpus_codes = encode_all(params, corpus, corpus_side, k);
    double reciprocal_sum = 0.0;
    for (Eigen::Index q = 0; q < n_queries; ++q) {
        const SparseCode code = encode(params, queries.data.row(q).transpose(), query_side, k);
        const std::uint32_t gt = ground_truth[static_cast<std::size_t>(q)];
        const double gt_score = sparse_cosine(code, corpus_codes[gt]);
        Eigen::Index rank = 1;
        for (Eigen::Index c = 0; c < n_corpus; ++c) {
            if (static_cast<std::uint32_t>(c) == gt) continue;
            const double score = sparse_cosine(code, corpus_codes[static_cast<std::size_t>(c)]);
            if (score > gt_score || (score == gt_score && static_cast<std::uint32_t>(c) < gt))
                ++rank;
        }
        reciprocal_sum += 1.0 / static_cast<double>(rank);
    }
    return reciprocal_sum / static_cast<double>(n_queries);
}

struct AlignmentReport {
    double mean_cosine = 0.0;          // mean sparse cosine of paired codes
    double mean_support_overlap = 0.0; // mean |supp(z_x) ∩ supp(z_y)| / k
};

inline AlignmentReport alignment_report(const SaeParams& params, const PairedDataset& val,
                                        Eigen::Index k) {
    AlignmentReport report;
    if (val.n_pairs() == 0) return report;
    for (Eigen::Index i = 0; i < val.n_pairs(); ++i) {
        const SparseCode z_x = encode(params, val.side_a.data.row(i).transpose(), Side::a, k);
        const SparseCode z_y = encode(params, val.side_b.data.row(i).transpose(), Side::b, k);
        report.mean_cosine += sparse_cosine(z_x, z_y);
        std::size_t shared = 0, a = 0, b = 0;
        while (a < z_x.entries.size() && b < z_y.entries.size()) {
            if (z_x.entries[a].index == z_y.entries[b].index) {
                ++shared;
                ++a;
                ++b;
            } else if (z_x.entries[a].index < z_y.entries[b].index) {
                ++a;
            } else {
                ++b;
            }
        }
        report.mean_support_overlap += static_cast<double>(shared) / static_cast<double>(k);
    }
    report.mean_cosine /= static_cast<double>(val.n_pairs());
    report.mean_support_overlap /= static_cast<double>(val.n_pairs());
    return report;
}

// ---------------------------------------------------------------------------
// LBL1 label file: "LBL1" | u32 count | count * u32, little-endian.
// ---------------------------------------------------------------------------

inline std::vector<std::uint32_t> load_labels(const std::string& path) {
    auto in = binio::open_input(path);
    binio::expect_magic(in, "LBL1", path);
    const std::uint32_t count = binio::read_u32(in, "count");
    std::vector<std::uint32_t> labels(count);
    for (auto& v : labels) v = binio::read_u32(in, "labels");
    return labels;
}

inline void save_labels(const std::vector<std::uint32_t>& labels, const std::string& path) {
    auto out = binio::open_output(path);
    binio::write_magic(out, "LBL1");
    binio::write_u32(out, static_cast<std::uint32_t>(labels.size()));
    for (const auto v : labels) binio::write_u32(out, v);
}

} // namespace msae
