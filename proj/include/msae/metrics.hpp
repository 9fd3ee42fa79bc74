// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-modality dead-neuron census and the multimodal monosemanticity score.
//
// MMS of one neuron for a modality pair (m, n):
//   1. Collect its nonzero activations over a validation set, per modality:
//      a_m in R^M, a_n in R^N.
//   2. S in R^{M x N}: cosine similarities of those samples under a second,
//      independent encoder (ingested as a parallel embedding file pair).
//   3. Co-activation weights A_ij = |a_m[i] * a_n[j]|. For a same-modality
//      pair the two sample lists are identical and self-pairs (i == j) are
//      excluded.
//   4. Normalize A to sum to 1.
//   5. MMS = sum_ij A~_ij * S_ij; defined as 0 when A sums to 0 (in
//      particular whenever the neuron never co-activates across the pair).
//
// A neuron that never fires for one of the two modalities therefore scores
// exactly 0, which is what makes the score a joint measure of semanticity
// and multimodality.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/sae.hpp"

namespace msae {

struct DeadNeuronReport {
    Eigen::Index only_a = 0;
    Eigen::Index only_b = 0;
    Eigen::Index both = 0;
    Eigen::Index neither = 0;
    std::vector<std::pair<bool, bool>> per_neuron; // (active for A, active for B)

    Eigen::Index p() const { return only_a + only_b + both + neither; }
};

/// Neuron i is active for a modality iff some validation sample of that
/// modality produces code value > 0 at i. Evaluation-time encode: no mask.
inline DeadNeuronReport dead_neuron_census(const SaeParams& params, const PairedDataset& val,
                                           Eigen::Index k) {
    const Eigen::Index p = params.p();
    std::vector<std::pair<bool, bool>> active(static_cast<std::size_t>(p), {false, false});
    for (Eigen::Index i = 0; i < val.n_pairs(); ++i) {
        for (const auto& e : encode(params, val.side_a.data.row(i).transpose(), Side::a, k).entries)
            active[e.index].first = true;
        for (const auto& e : encode(params, val.side_b.data.row(i).transpose(), Side::b, k).entries)
            active[e.index].second = true;
    }
    DeadNeuronReport report;
    report.per_neuron = std::move(active);
    for (const auto& [a, b] : report.per_neuron) {
        if (a && b) ++report.both;
        else if (a) ++report.only_a;
        else if (b) ++report.only_b;
        else ++report.neither;
    }
    return report;
}

/// Steps 3-5 for a single neuron. `sim` must be M x N where M, N are the
/// activation counts. With `same_modality` the caller passes two identical,
/// index-aligned lists and the diagonal is excluded.
inline double mms(const std::vector<double>& activations_m, const std::vector<double>& activations_n,
                  const Matrix& sim, bool same_modality) {
    const auto M = static_cast<Eigen::Index>(activations_m.size());
    const auto N = static_cast<Eigen::Index>(activations_n.size());
    if (sim.rows() != M || sim.cols() != N)
        throw shape_error("mms: sim is " + std::to_string(sim.rows()) + "x" +
                          std::to_string(sim.cols()) + ", activations imply " + std::to_string(M) +
                          "x" + std::to_string(N));
    double weight_sum = 0.0;
    double weighted_sim = 0.0;
    for (Eigen::Index i = 0; i < M; ++i) {
        for (Eigen::Index j = 0; j < N; ++j) {
            if (same_modality && i == j) continue;
            const double a = std::abs(activations_m[static_cast<std::size_t>(i)] *
                                      activations_n[static_cast<std::size_t>(j)]);
            weight_sum += a;
            weighted_sim += a * sim(i, j);
        }
    }
    if (weight_sum == 0.0) return 0.0;
    return weighted_sim / weight_sum;
}

struct MmsReport {
    Vector scores;                                  // one MMS value per neuron
    std::pair<std::string, std::string> modality_pair;
    std::vector<std::size_t> coactivation_counts;   // nonzero co-activation weights per neuron
};

namespace detail {

struct ActivationIndex {
    std::vector<std::vector<std::uint32_t>> samples; // per neuron: activating sample rows
    std::vector<std::vector<double>> values;         // matching activation values
};

inline ActivationIndex index_activations(const std::vector<SparseCode>& codes, Eigen::Index p) {
    ActivationIndex idx;
    idx.samples.resize(static_cast<std::size_t>(p));
    idx.values.resize(static_cast<std::size_t>(p));
    for (std::size_t row = 0; row < codes.size(); ++row) {
        for (const auto& e : codes[row].entries) {
            idx.samples[e.index].push_back(static_cast<std::uint32_t>(row));
            idx.values[e.index].push_back(e.value);
        }
    }
    return idx;
}

inline MmsReport mms_report_from_index(const ActivationIndex& idx_m, const ActivationIndex& idx_n,
                                       const Matrix& scorer_m, const Matrix& scorer_n,
                                       bool same_modality,
                                       std::pair<std::string, std::string> pair) {
    const auto p = static_cast<Eigen::Index>(idx_m.samples.size());
    MmsReport report;
    report.modality_pair = std::move(pair);
    report.scores = Vector::Zero(p);
    report.coactivation_counts.assign(static_cast<std::size_t>(p), 0);
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto& rows_m = idx_m.samples[static_cast<std::size_t>(j)];
        const auto& rows_n = idx_n.samples[static_cast<std::size_t>(j)];
        if (rows_m.empty() || rows_n.empty()) continue;
        Matrix sim(rows_m.size(), rows_n.size());
        for (std::size_t i = 0; i < rows_m.size(); ++i)
            for (std::size_t l = 0; l < rows_n.size(); ++l)
                sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) =
                    scorer_m.row(rows_m[i]).dot(scorer_n.row(rows_n[l]));
        std::size_t pairs = rows_m.size() * rows_n.size();
        if (same_modality) pairs -= std::min(rows_m.size(), rows_n.size());
        report.coactivation_counts[static_cast<std::size_t>(j)] = pairs;
        report.scores(j) = mms(idx_m.values[static_cast<std::size_t>(j)],
                               idx_n.values[static_cast<std::size_t>(j)], sim, same_modality);
    }
    return report;
}

inline void check_scorer_alignment(const PairedDataset& val, const PairedDataset& scorer) {
    if (scorer.n_pairs() != val.n_pairs())
        throw data_error("scorer dataset has " + std::to_string(scorer.n_pairs()) +
                         " pairs, validation has " + std::to_string(val.n_pairs()) +
                         " (must be the same samples under a second encoder)");
    if (scorer.side_a.modality != val.side_a.modality ||
        scorer.side_b.modality != val.side_b.modality)
        throw data_error("scorer modalities (" + scorer.side_a.modality + ", " +
                         scorer.side_b.modality + ") do not match validation (" +
                         val.side_a.modality + ", " + val.side_b.modality + ")");
}

inline Side side_of_modality(const PairedDataset& ds, const std::string& modality) {
    if (modality == ds.side_a.modality) return Side::a;
    if (modality == ds.side_b.modality) return Side::b;
    throw argument_error("modality '" + modality + "' not present in dataset (sides are '" +
                         ds.side_a.modality + "', '" + ds.side_b.modality + "')");
}

} // namespace detail

/// Per-neuron MMS for a modality pair (m, n). `scorer` holds the same
/// validation samples embedded by a different encoder, row-aligned with
/// `val`; it supplies the similarity matrices only.
inline MmsReport mms_report(const SaeParams& params, const PairedDataset& val,
                            const PairedDataset& scorer, Eigen::Index k,
                            const std::pair<std::string, std::string>& pair) {
    detail::check_scorer_alignment(val, scorer);
    const Side side_m = detail::side_of_modality(val, pair.first);
    const Side side_n = detail::side_of_modality(val, pair.second);
    const bool same = side_m == side_n;

    const auto codes_m = encode_all(params, side_m == Side::a ? val.side_a : val.side_b, side_m, k);
    const auto idx_m = detail::index_activations(codes_m, params.p());
    detail::ActivationIndex idx_n_storage;
    const detail::ActivationIndex* idx_n = &idx_m;
    if (!same) {
        const auto codes_n =
            encode_all(params, side_n == Side::a ? val.side_a : val.side_b, side_n, k);
        idx_n_storage = detail::index_activations(codes_n, params.p());
        idx_n = &idx_n_storage;
    }
    const Matrix& scorer_m = side_m == Side::a ? scorer.side_a.data : scorer.side_b.data;
    const Matrix& scorer_n = side_n == Side::a ? scorer.side_a.data : scorer.side_b.data;
    return detail::mms_report_from_index(idx_m, *idx_n, scorer_m, scorer_n, same, pair);
}

/// "No SAE" baseline: raw embedding coordinates act as the neurons, with
/// |coordinate| as the activation value.
inline MmsReport mms_report_baseline(const PairedDataset& val, const PairedDataset& scorer,
                                     const std::pair<std::string, std::string>& pair) {
    detail::check_scorer_alignment(val, scorer);
    const Side side_m = detail::side_of_modality(val, pair.first);
    const Side side_n = detail::side_of_modality(val, pair.second);
    const bool same = side_m == side_n;

    auto raw_codes = [&](const EmbeddingMatrix& m) {
        std::vector<SparseCode> codes(static_cast<std::size_t>(m.n_samples()));
        for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
            auto& code = codes[static_cast<std::size_t>(i)];
            code.p = m.d();
            for (Eigen::Index c = 0; c < m.d(); ++c) {
                const double v = std::abs(m.data(i, c));
                if (v > 0.0) code.entries.push_back({static_cast<std::uint32_t>(c), v});
            }
        }
        return codes;
    };

    const auto idx_m =
        detail::index_activations(raw_codes(side_m == Side::a ? val.side_a : val.side_b), val.side_a.d());
    detail::ActivationIndex idx_n_storage;
    const detail::ActivationIndex* idx_n = &idx_m;
    if (!same) {
        idx_n_storage = detail::index_activations(
            raw_codes(side_n == Side::a ? val.side_a : val.side_b), val.side_a.d());
        idx_n = &idx_n_storage;
    }
    const Matrix& scorer_m = side_m == Side::a ? scorer.side_a.data : scorer.side_b.data;
    const Matrix& scorer_n = side_n == Side::a ? scorer.side_a.data : scorer.side_b.data;
    return detail::mms_report_from_index(idx_m, *idx_n, scorer_m, scorer_n, same, pair);
}

} // namespace msae
