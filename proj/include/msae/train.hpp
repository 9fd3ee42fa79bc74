// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training engine: hand-derived gradients and the Adam loop for the three
// variants (plain TopK SAE, group-sparse, masked group-sparse).
//
// Backward rules:
//   * TopK is straight-through on its active set: gradients flow only
//     through coordinates that survived selection.
//   * Entries surviving TopK are strictly positive post-ReLU, so the ReLU
//     derivative on the active set is always 1; dropped and masked
//     coordinates get zero gradient.
//   * d/dz_i of sqrt(z_i^2 + w_i^2) is z_i / sqrt(z_i^2 + w_i^2), taken as 0
//     at the joint origin (the minimum-norm subgradient).
//
// Determinism: one master seed is split into independent streams
// (0 = parameter init, 1 = batch shuffling, 2 = masks), gradients accumulate
// over the batch in emitted index order, and every draw uses the generators
// in rng.hpp. Identical configs give bit-identical checkpoints.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "msae/batching.hpp"
#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/loss.hpp"
#include "msae/rng.hpp"
#include "msae/sae.hpp"

namespace msae {

enum class Variant { sae, gsae, mgsae };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::sae: return "sae";
        case Variant::gsae: return "gsae";
        default: return "mgsae";
    }
}

inline Variant parse_variant(const std::string& name) {
    if (name == "sae") return Variant::sae;
    if (name == "gsae") return Variant::gsae;
    if (name == "mgsae") return Variant::mgsae;
    throw config_error("unknown variant '" + name + "' (expected sae|gsae|mgsae)");
}

struct TrainConfig {
    Variant variant = Variant::sae;
    Eigen::Index k = 32;
    Eigen::Index expansion = 16; // p = expansion * d
    double lambda_gs = 0.05;
    double p_mask = 0.2;
    double lr = 1e-4;
    std::uint64_t steps = 25000;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t log_interval = 100;
    std::uint64_t ckpt_interval = 0; // 0 = final checkpoint only
    bool renormalize_decoder = true;

    /// Applies the variant's overrides: SAE trains pure reconstruction,
    /// GSAE adds the group term but never masks.
    TrainConfig resolved() const {
        TrainConfig c = *this;
        if (c.variant == Variant::sae) {
            c.lambda_gs = 0.0;
            c.p_mask = 0.0;
        } else if (c.variant == Variant::gsae) {
            c.p_mask = 0.0;
        }
        return c;
    }

    void validate() const {
        if (k < 1) throw config_error("k must be >= 1");
        if (expansion < 1) throw config_error("expansion must be >= 1");
        if (lambda_gs < 0.0) throw config_error("lambda must be >= 0");
        if (!(p_mask >= 0.0 && p_mask <= 1.0)) throw config_error("p_mask must lie in [0, 1]");
        if (!(lr > 0.0)) throw config_error("lr must be > 0");
        if (batch_size < 1) throw config_error("batch_size must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw config_error("adam betas must lie in [0, 1)");
        if (!(adam_eps > 0.0)) throw config_error("adam eps must be > 0");
        if (log_interval < 1) throw config_error("log_interval must be >= 1");
    }
};

struct SaeGrads {
    Matrix w_enc;
    Matrix w_dec;
    Vector b_enc;
    Vector b_pre_a;
    Vector b_pre_b;

    static SaeGrads zeros(Eigen::Index d, Eigen::Index p) {
        SaeGrads g;
        g.w_enc = Matrix::Zero(p, d);
        g.w_dec = Matrix::Zero(d, p);
        g.b_enc = Vector::Zero(p);
        g.b_pre_a = Vector::Zero(d);
        g.b_pre_b = Vector::Zero(d);
        return g;
    }

    void set_zero() {
        w_enc.setZero();
        w_dec.setZero();
        b_enc.setZero();
        b_pre_a.setZero();
        b_pre_b.setZero();
    }

    void scale(double factor) {
        w_enc *= factor;
        w_dec *= factor;
        b_enc *= factor;
        b_pre_a *= factor;
        b_pre_b *= factor;
    }
};

namespace detail {

// Accumulates dL/dparams of one pair into `grads` and returns the pair's
// losses. The loop touches only active code entries, so the cost per side is
// one encoder matvec plus O(k * d).
inline LossReport accumulate_pair(const SaeParams& params, const Vector& x, const Vector& y,
                                  Eigen::Index k, const Mask* mask, double lambda_gs,
                                  SaeGrads& grads) {
    const SparseCode z_x = encode(params, x, Side::a, k, mask);
    const SparseCode z_y = encode(params, y, Side::b, k, mask);

    LossReport report;
    report.gs = group_sparse_loss(z_x, z_y);

    auto side_pass = [&](const Vector& input, const SparseCode& code, const SparseCode& other,
                         Side side, Vector& b_pre_grad) {
        const Vector err = decode(params, code, side) - input; // x_hat - x
        const Vector centered = input - params.b_pre(side);
        for (const auto& e : code.entries) {
            double s = 2.0 * params.w_dec.col(e.index).dot(err);
            if (lambda_gs > 0.0) {
                const double w = other.value_at(e.index);
                s += lambda_gs * e.value / std::sqrt(e.value * e.value + w * w);
            }
            grads.w_enc.row(e.index) += s * centered.transpose();
            grads.b_enc(e.index) += s;
            b_pre_grad -= s * params.w_enc.row(e.index).transpose();
            grads.w_dec.col(e.index) += (2.0 * e.value) * err;
        }
        b_pre_grad += 2.0 * err;
        return err.squaredNorm();
    };

    report.recon_a = side_pass(x, z_x, z_y, Side::a, grads.b_pre_a);
    report.recon_b = side_pass(y, z_y, z_x, Side::b, grads.b_pre_b);
    report.total = report.recon_a + report.recon_b + lambda_gs * report.gs;
    return report;
}

inline void check_finite(const Matrix& m, const char* name) {
    if (!m.allFinite()) throw numeric_error(std::string("non-finite values in ") + name);
}

inline void check_finite(const Vector& v, const char* name) {
    if (!v.allFinite()) throw numeric_error(std::string("non-finite values in ") + name);
}

} // namespace detail

/// Gradient of total_loss for a single pair.
inline SaeGrads backward(const SaeParams& params, const Vector& x, const Vector& y,
                         Eigen::Index k, const Mask* mask, double lambda_gs) {
    SaeGrads grads = SaeGrads::zeros(params.d(), params.p());
    detail::accumulate_pair(params, x, y, k, mask, lambda_gs, grads);
    detail::check_finite(grads.w_enc, "grad w_enc");
    detail::check_finite(grads.b_enc, "grad b_enc");
    detail::check_finite(grads.w_dec, "grad w_dec");
    detail::check_finite(grads.b_pre_a, "grad b_pre_a");
    detail::check_finite(grads.b_pre_b, "grad b_pre_b");
    return grads;
}

struct AdamState {
    SaeGrads m;
    SaeGrads v;

    static AdamState zeros(Eigen::Index d, Eigen::Index p) {
        return AdamState{SaeGrads::zeros(d, p), SaeGrads::zeros(d, p)};
    }
};

/// Bias-corrected Adam update followed by decoder column renormalization.
/// `t` is the 1-based step index.
inline void adam_step(SaeParams& params, const SaeGrads& grads, AdamState& state, double lr,
                      double beta1, double beta2, double eps, std::uint64_t t,
                      bool renormalize_decoder = true) {
    if (t < 1) throw argument_error("adam_step: t must be >= 1");
    const double m_correction = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double v_correction = 1.0 - std::pow(beta2, static_cast<double>(t));

    auto update = [&](auto& param, auto& m, auto& v, const auto& g, const char* name) {
        m.array() = beta1 * m.array() + (1.0 - beta1) * g.array();
        v.array() = beta2 * v.array() + (1.0 - beta2) * g.array().square();
        param.array() -=
            lr * (m.array() / m_correction) /
            ((v.array() / v_correction).sqrt() + eps);
        detail::check_finite(param, name);
    };

    update(params.w_enc, state.m.w_enc, state.v.w_enc, grads.w_enc, "w_enc");
    update(params.b_enc, state.m.b_enc, state.v.b_enc, grads.b_enc, "b_enc");
    update(params.w_dec, state.m.w_dec, state.v.w_dec, grads.w_dec, "w_dec");
    update(params.b_pre_a, state.m.b_pre_a, state.v.b_pre_a, grads.b_pre_a, "b_pre_a");
    update(params.b_pre_b, state.m.b_pre_b, state.v.b_pre_b, grads.b_pre_b, "b_pre_b");

    if (renormalize_decoder) {
        for (Eigen::Index c = 0; c < params.w_dec.cols(); ++c) {
            const double norm = params.w_dec.col(c).norm();
            if (norm > 1e-12) params.w_dec.col(c) /= norm;
        }
    }
}

/// Decoder columns i.i.d. Gaussian then unit-normalized, encoder tied to its
/// transpose, pre-biases set to per-modality means of the leading rows.
inline SaeParams init_params(const PairedDataset& ds, Eigen::Index p, std::uint64_t seed) {
    const Eigen::Index d = ds.side_a.d();
    SaeParams params;
    Rng rng(derive_seed(seed, 0));
    params.w_dec.resize(d, p);
    for (Eigen::Index c = 0; c < p; ++c) {
        for (Eigen::Index r = 0; r < d; ++r) params.w_dec(r, c) = rng.next_gaussian();
        params.w_dec.col(c).normalize();
    }
    params.w_enc = params.w_dec.transpose();
    params.b_enc = Vector::Zero(p);
    const Eigen::Index head = std::min<Eigen::Index>(ds.n_pairs(), 4096);
    params.b_pre_a = ds.side_a.data.topRows(head).colwise().mean().transpose();
    params.b_pre_b = ds.side_b.data.topRows(head).colwise().mean().transpose();
    return params;
}

struct TraceEntry {
    std::uint64_t step;
    LossReport loss;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TraceEntry> trace; // one entry per completed step
    bool diverged = false;
    std::uint64_t divergence_step = 0;
};

using LogHook = std::function<void(std::uint64_t step, const LossReport&, double wall_ms)>;
using CheckpointHook = std::function<void(std::uint64_t step, const Checkpoint&)>;

inline TrainResult train(const PairedDataset& ds, const TrainConfig& raw_cfg,
                         const LogHook& on_log = nullptr,
                         const CheckpointHook& on_checkpoint = nullptr) {
    const TrainConfig cfg = raw_cfg.resolved();
    cfg.validate();
    const Eigen::Index d = ds.side_a.d();
    const Eigen::Index p = cfg.expansion * d;
    if (cfg.k > p)
        throw config_error("k=" + std::to_string(cfg.k) + " exceeds p=" + std::to_string(p));

    TrainResult result;
    result.checkpoint.k = cfg.k;
    result.checkpoint.meta.lambda_gs = cfg.lambda_gs;
    result.checkpoint.meta.p_mask = cfg.p_mask;
    result.checkpoint.meta.seed = cfg.seed;
    result.checkpoint.meta.variant = variant_name(cfg.variant);
    result.checkpoint.meta.modality_a = ds.side_a.modality;
    result.checkpoint.meta.modality_b = ds.side_b.modality;

    SaeParams params = init_params(ds, p, cfg.seed);
    BatchIterator batches(static_cast<std::size_t>(ds.n_pairs()), cfg.batch_size,
                          derive_seed(cfg.seed, 1));
    Rng mask_rng(derive_seed(cfg.seed, 2));
    AdamState adam = AdamState::zeros(d, p);
    SaeGrads grads = SaeGrads::zeros(d, p);
    SaeParams last_good = params;

    result.trace.reserve(static_cast<std::size_t>(cfg.steps));
    const auto t_start = std::chrono::steady_clock::now();

    for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
        const auto batch = batches.next();
        grads.set_zero();

        LossReport report;
        Vector sum_a = Vector::Zero(d), sum_b = Vector::Zero(d);
        double sq_a = 0.0, sq_b = 0.0;
        for (const std::size_t idx : batch) {
            const Vector x = ds.side_a.data.row(static_cast<Eigen::Index>(idx)).transpose();
            const Vector y = ds.side_b.data.row(static_cast<Eigen::Index>(idx)).transpose();
            Mask mask;
            const Mask* mask_ptr = nullptr;
            if (cfg.variant == Variant::mgsae) {
                mask = draw_mask(p, cfg.p_mask, mask_rng);
                mask_ptr = &mask;
            }
            const LossReport pair =
                detail::accumulate_pair(params, x, y, cfg.k, mask_ptr, cfg.lambda_gs, grads);
            report.recon_a += pair.recon_a;
            report.recon_b += pair.recon_b;
            report.gs += pair.gs;
            sum_a += x;
            sum_b += y;
            sq_a += x.squaredNorm();
            sq_b += y.squaredNorm();
        }
        const double inv_batch = 1.0 / static_cast<double>(batch.size());
        report.recon_a *= inv_batch;
        report.recon_b *= inv_batch;
        report.gs *= inv_batch;
        report.total = report.recon_a + report.recon_b + cfg.lambda_gs * report.gs;
        // Batch FVE: sum ||v - mean||^2 = sum ||v||^2 - B * ||mean||^2.
        const double var_a = sq_a - sum_a.squaredNorm() * inv_batch;
        const double var_b = sq_b - sum_b.squaredNorm() * inv_batch;
        report.fve_a = var_a > 0.0 ? 1.0 - report.recon_a / (var_a * inv_batch)
                                   : (report.recon_a <= 0.0
                                          ? 1.0
                                          : -std::numeric_limits<double>::infinity());
        report.fve_b = var_b > 0.0 ? 1.0 - report.recon_b / (var_b * inv_batch)
                                   : (report.recon_b <= 0.0
                                          ? 1.0
                                          : -std::numeric_limits<double>::infinity());

        bool step_ok = std::isfinite(report.total);
        if (step_ok) {
            grads.scale(inv_batch);
            try {
                adam_step(params, grads, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, step,
                          cfg.renormalize_decoder);
            } catch (const numeric_error&) {
                step_ok = false;
            }
        }
        if (!step_ok) {
            result.diverged = true;
            result.divergence_step = step;
            params = last_good;
            break;
        }
        last_good = params;
        result.trace.push_back({step, report});
        result.checkpoint.meta.steps = step;

        if (on_log && (step % cfg.log_interval == 0 || step == cfg.steps)) {
            const auto elapsed = std::chrono::steady_clock::now() - t_start;
            on_log(step, report,
                   std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(elapsed)
                       .count());
        }
        if (on_checkpoint && cfg.ckpt_interval > 0 && step % cfg.ckpt_interval == 0) {
            result.checkpoint.params = params;
            on_checkpoint(step, result.checkpoint);
        }
    }

    result.checkpoint.params = std::move(params);
    return result;
}

} // namespace msae
