// SPDX-License-Identifier: Apache-2.0
#pragma once

// Concept naming, linear-probe decomposition, and neuron steering.
//
// Naming assigns each dictionary atom the vocabulary term whose embedding
// has the largest inner product with the unit-normalized atom. Probe
// decomposition expresses a linear classifier in the concept basis:
// alpha = W_hat^T theta, where W_hat has unit columns. Steering adds a
// scalar to one latent coordinate before decoding.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/sae.hpp"

namespace msae {

struct VocabBank {
    std::vector<std::string> terms;
    EmbeddingMatrix term_embeddings; // one unit-norm row per term
};

/// Terms file: UTF-8, one term per line. The MEB file must have exactly one
/// row per term.
inline VocabBank load_vocab(const std::string& terms_path, const std::string& meb_path) {
    std::ifstream f(terms_path);
    if (!f) throw config_error("cannot open vocabulary terms file '" + terms_path + "'");
    VocabBank bank;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        bank.terms.push_back(line);
    }
    bank.term_embeddings = load_embeddings(meb_path, std::nullopt, "text");
    if (static_cast<Eigen::Index>(bank.terms.size()) != bank.term_embeddings.n_samples())
        throw data_error("vocabulary has " + std::to_string(bank.terms.size()) + " terms but '" +
                         meb_path + "' has " + std::to_string(bank.term_embeddings.n_samples()) +
                         " rows");
    return bank;
}

struct ConceptNaming {
    std::vector<std::uint32_t> term_index; // per dictionary column
    Vector similarity;                     // inner product with the winning term
};

/// Best-matching vocabulary term per dictionary column; ties go to the
/// lowest term index.
inline ConceptNaming name_concepts(const SaeParams& params, const VocabBank& vocab) {
    if (vocab.term_embeddings.d() != params.d())
        throw shape_error("vocabulary embedding d=" + std::to_string(vocab.term_embeddings.d()) +
                          " != model d=" + std::to_string(params.d()));
    if (vocab.terms.empty()) throw argument_error("empty vocabulary");
    const Eigen::Index p = params.p();
    ConceptNaming naming;
    naming.term_index.resize(static_cast<std::size_t>(p));
    naming.similarity.resize(p);
    for (Eigen::Index c = 0; c < p; ++c) {
        Vector atom = params.w_dec.col(c);
        const double norm = atom.norm();
        if (norm > 0.0) atom /= norm;
        const Vector scores = vocab.term_embeddings.data * atom;
        Eigen::Index best = 0;
        for (Eigen::Index t = 1; t < scores.size(); ++t)
            if (scores(t) > scores(best)) best = t;
        naming.term_index[static_cast<std::size_t>(c)] = static_cast<std::uint32_t>(best);
        naming.similarity(c) = scores(best);
    }
    return naming;
}

struct ProbeEntry {
    std::uint32_t neuron;
    double coefficient;
    std::string term; // empty when no vocabulary was supplied
};

/// Ranks dictionary atoms by their coefficient in the probe direction,
/// alpha_i = <w_i / ||w_i||, probe>, descending (ties to lowest neuron).
/// top_m is clipped to p.
inline std::vector<ProbeEntry> probe_decompose(const SaeParams& params, const Vector& probe,
                                               Eigen::Index top_m,
                                               const VocabBank* vocab = nullptr) {
    if (probe.size() != params.d())
        throw shape_error("probe has length " + std::to_string(probe.size()) + ", model d=" +
                          std::to_string(params.d()));
    if (!probe.allFinite()) throw data_error("probe contains non-finite values");
    if (top_m < 1) throw argument_error("top_m must be >= 1");
    const Eigen::Index p = params.p();

    Vector alpha(p);
    for (Eigen::Index c = 0; c < p; ++c) {
        Vector atom = params.w_dec.col(c);
        const double norm = atom.norm();
        if (norm > 0.0) atom /= norm;
        alpha(c) = atom.dot(probe);
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index lhs, Eigen::Index rhs) {
        if (alpha(lhs) != alpha(rhs)) return alpha(lhs) > alpha(rhs);
        return lhs < rhs;
    });

    const ConceptNaming naming = vocab ? name_concepts(params, *vocab) : ConceptNaming{};
    const Eigen::Index take = std::min(top_m, p);
    std::vector<ProbeEntry> ranked;
    ranked.reserve(static_cast<std::size_t>(take));
    for (Eigen::Index i = 0; i < take; ++i) {
        const Eigen::Index neuron = order[static_cast<std::size_t>(i)];
        ProbeEntry entry{static_cast<std::uint32_t>(neuron), alpha(neuron), ""};
        if (vocab) entry.term = vocab->terms[naming.term_index[static_cast<std::size_t>(neuron)]];
        ranked.push_back(std::move(entry));
    }
    return ranked;
}

/// The intervened code: `delta` added at `neuron` (inserted if absent),
/// clamped at 0. May exceed k nonzeros.
inline SparseCode steered_code(const SparseCode& z, std::uint32_t neuron, double delta,
                               Eigen::Index p) {
    if (neuron >= static_cast<std::uint32_t>(p))
        throw argument_error("steer: neuron " + std::to_string(neuron) + " out of range for p=" +
                             std::to_string(p));
    SparseCode steered = z;
    auto it = std::find_if(steered.entries.begin(), steered.entries.end(),
                           [&](const SparseCode::Entry& e) { return e.index == neuron; });
    if (it != steered.entries.end()) {
        it->value = std::max(0.0, it->value + delta);
        if (it->value == 0.0) steered.entries.erase(it);
    } else {
        const double value = std::max(0.0, delta);
        if (value > 0.0) {
            auto pos = std::lower_bound(steered.entries.begin(), steered.entries.end(), neuron,
                                        [](const SparseCode::Entry& e, std::uint32_t idx) {
                                            return e.index < idx;
                                        });
            steered.entries.insert(pos, {neuron, value});
        }
    }
    return steered;
}

/// Adds `delta` to one latent coordinate and decodes with the given side's
/// pre-coding bias.
inline Vector steer(const SaeParams& params, const SparseCode& z, std::uint32_t neuron,
                    double delta, Side side) {
    return decode(params, steered_code(z, neuron, delta, params.p()), side);
}

} // namespace msae
