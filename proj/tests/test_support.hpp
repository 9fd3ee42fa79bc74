// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared helpers for the test suite: scratch directories, random model
// instances, and a dense reference forward pass kept deliberately
// independent of the sparse implementation it checks.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msae/rng.hpp"
#include "msae/sae.hpp"

namespace test_support {

/// Fresh scratch directory under the system temp root.
inline std::string scratch_dir(const std::string& tag) {
    static std::uint64_t counter = 0;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("msae_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

inline msae::SaeParams random_params(Eigen::Index d, Eigen::Index p, msae::Rng& rng,
                                     double bias_scale = 0.1) {
    msae::SaeParams params;
    params.w_enc.resize(p, d);
    params.w_dec.resize(d, p);
    for (Eigen::Index r = 0; r < p; ++r)
        for (Eigen::Index c = 0; c < d; ++c) params.w_enc(r, c) = rng.next_gaussian();
    for (Eigen::Index c = 0; c < p; ++c) {
        for (Eigen::Index r = 0; r < d; ++r) params.w_dec(r, c) = rng.next_gaussian();
        params.w_dec.col(c).normalize();
    }
    params.b_enc.resize(p);
    params.b_pre_a.resize(d);
    params.b_pre_b.resize(d);
    for (Eigen::Index i = 0; i < p; ++i) params.b_enc(i) = bias_scale * rng.next_gaussian();
    for (Eigen::Index i = 0; i < d; ++i) params.b_pre_a(i) = bias_scale * rng.next_gaussian();
    for (Eigen::Index i = 0; i < d; ++i) params.b_pre_b(i) = bias_scale * rng.next_gaussian();
    return params;
}

inline msae::Vector random_unit(Eigen::Index d, msae::Rng& rng) {
    msae::Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.next_gaussian();
    v.normalize();
    return v;
}

/// Identity-dictionary model (p = d): encode is relu(x) + TopK, decode sums
/// unit basis atoms. Handy for exactly predictable codes.
inline msae::SaeParams identity_params(Eigen::Index d) {
    msae::SaeParams params;
    params.w_enc = msae::Matrix::Identity(d, d);
    params.w_dec = msae::Matrix::Identity(d, d);
    params.b_enc = msae::Vector::Zero(d);
    params.b_pre_a = msae::Vector::Zero(d);
    params.b_pre_b = msae::Vector::Zero(d);
    return params;
}

/// Dense reference forward pass (the oracle): materializes the full
/// pre-activation, ReLU, mask, and a selection-by-repeated-argmax TopK.
inline msae::Vector dense_forward_code(const msae::SaeParams& params, const msae::Vector& x,
                                       msae::Side side, Eigen::Index k, const msae::Mask* mask) {
    const msae::Vector u = params.w_enc * (x - params.b_pre(side)) + params.b_enc;
    msae::Vector r(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) r(i) = u(i) > 0.0 ? u(i) : 0.0;
    if (mask)
        for (Eigen::Index i = 0; i < r.size(); ++i)
            if (!mask->kept[static_cast<std::size_t>(i)]) r(i) = 0.0;
    // Repeated argmax with lowest-index ties, k rounds.
    msae::Vector out = msae::Vector::Zero(r.size());
    std::vector<bool> taken(static_cast<std::size_t>(r.size()), false);
    for (Eigen::Index round = 0; round < k; ++round) {
        Eigen::Index best = -1;
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            if (best < 0 || r(i) > r(best)) best = i;
        }
        taken[static_cast<std::size_t>(best)] = true;
        out(best) = r(best);
    }
    return out;
}

} // namespace test_support
