// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reconstruction + group-sparse objective for paired codes:
//
//   L = ||x - x_hat||^2 + ||y - y_hat||^2 + lambda * sum_i sqrt(z_i^2 + w_i^2)
//
// The L2,1 term couples the two codes of a pair coordinate-wise: a shared
// support is cheaper than two disjoint ones of the same mass, which is what
// pushes the dictionary toward multimodal atoms.

#include <cmath>
#include <limits>
#include <string>

#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/sae.hpp"

namespace msae {

/// L2,1 norm of the stacked pair: sum_i sqrt(z_i^2 + w_i^2).
inline double group_sparse_loss(const Vector& z, const Vector& w) {
    if (z.size() != w.size())
        throw shape_error("group_sparse_loss: lengths differ (" + std::to_string(z.size()) +
                          " vs " + std::to_string(w.size()) + ")");
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i)
        total += std::sqrt(z(i) * z(i) + w(i) * w(i));
    return total;
}

/// Same value computed over sparse codes by merging the two sorted supports.
inline double group_sparse_loss(const SparseCode& z, const SparseCode& w) {
    if (z.p != w.p)
        throw shape_error("group_sparse_loss: code lengths differ (" + std::to_string(z.p) +
                          " vs " + std::to_string(w.p) + ")");
    double total = 0.0;
    std::size_t i = 0, j = 0;
    while (i < z.entries.size() && j < w.entries.size()) {
        const auto& ze = z.entries[i];
        const auto& we = w.entries[j];
        if (ze.index == we.index) {
            total += std::sqrt(ze.value * ze.value + we.value * we.value);
            ++i;
            ++j;
        } else if (ze.index < we.index) {
            total += ze.value;
            ++i;
        } else {
            total += we.value;
            ++j;
        }
    }
    for (; i < z.entries.size(); ++i) total += z.entries[i].value;
    for (; j < w.entries.size(); ++j) total += w.entries[j].value;
    return total;
}

struct LossReport {
    double recon_a = 0.0; // mean ||x - x_hat||^2
    double recon_b = 0.0; // mean ||y - y_hat||^2
    double gs = 0.0;      // mean group-sparse penalty
    double total = 0.0;   // recon_a + recon_b + lambda * gs
    // Fraction of explained variance per modality. Defined against the batch
    // (or dataset) mean, so single-pair reports leave these NaN.
    double fve_a = std::numeric_limits<double>::quiet_NaN();
    double fve_b = std::numeric_limits<double>::quiet_NaN();
};

/// Forward losses of a single pair under a shared mask.
inline LossReport total_loss(const SaeParams& params, const Vector& x, const Vector& y,
                             Eigen::Index k, const Mask* mask, double lambda_gs) {
    const SparseCode z_x = encode(params, x, Side::a, k, mask);
    const SparseCode z_y = encode(params, y, Side::b, k, mask);
    LossReport report;
    report.recon_a = (decode(params, z_x, Side::a) - x).squaredNorm();
    report.recon_b = (decode(params, z_y, Side::b) - y).squaredNorm();
    report.gs = group_sparse_loss(z_x, z_y);
    report.total = report.recon_a + report.recon_b + lambda_gs * report.gs;
    return report;
}

/// Dataset-level FVE for both modalities: 1 - sum||v - v_hat||^2 / sum||v - mean||^2.
inline std::pair<double, double> dataset_fve(const SaeParams& params, const PairedDataset& ds,
                                             Eigen::Index k) {
    auto fve_side = [&](const EmbeddingMatrix& m, Side side) {
        const Vector mean = m.data.colwise().mean().transpose();
        double residual = 0.0, variance = 0.0;
        for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
            const Vector v = m.data.row(i).transpose();
            const SparseCode z = encode(params, v, side, k);
            residual += (decode(params, z, side) - v).squaredNorm();
            variance += (v - mean).squaredNorm();
        }
        if (variance <= 0.0)
            return residual <= 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
        return 1.0 - residual / variance;
    };
    return {fve_side(ds.side_a, Side::a), fve_side(ds.side_b, Side::b)};
}

} // namespace msae
