// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic paired datasets with planted ground truth. Two regimes:
//
//   * shared-support: both sides of a pair draw nonnegative coefficients on
//     the same atom subset of one true dictionary, then add a fixed
//     per-modality offset and optional Gaussian noise before row
//     normalization. This is the recoverable regime used to exercise
//     training end to end. With planted classes the atoms are partitioned
//     into per-class pools and a sample's support stays inside its class
//     pool (always including the class's designated atom) — samples cluster
//     the way semantically grouped embeddings do, and the clustering is what
//     keeps the planted model recoverable by a TopK encoder at k = s.
//   * split: the dictionary's left half reconstructs side A exactly and the
//     right half side B (disjoint code supports by construction), with the
//     right half correlated to the left so that pair embeddings stay aligned
//     (<x, y> > c_target, resampled until verified). The output certifies
//     both hypotheses of the augmentation theorem.
//
// Coefficients are uniform on [0.5, 1.5], bounded away from 0 so supports
// are unambiguous. When p_true <= d the shared-regime dictionary is
// orthonormalized, which makes the planted model exactly recoverable.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msae/binio.hpp"
#include "msae/dict_theory.hpp"
#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/eval.hpp"
#include "msae/rng.hpp"
#include "msae/sae.hpp"
#include "msae/toml.hpp"

namespace msae {

enum class Regime { shared_support, split };

inline const char* regime_name(Regime r) {
    return r == Regime::shared_support ? "shared-support" : "split";
}

inline Regime parse_regime(const std::string& name) {
    if (name == "shared-support" || name == "shared") return Regime::shared_support;
    if (name == "split") return Regime::split;
    throw config_error("unknown regime '" + name + "' (expected shared-support|split)");
}

struct SynthSpec {
    Eigen::Index d = 32;
    Eigen::Index p_true = 64;
    Eigen::Index s = 8; // true support size per sample
    Eigen::Index n_pairs = 1000;
    double noise_sigma = 0.0;
    double modality_offset_scale = 0.0;
    double c_target = 0.3; // split regime: required pair alignment
    Regime regime = Regime::shared_support;
    Eigen::Index n_classes = 0; // optional planted zero-shot classes
    // Cross-modal intensity correlation: probability that a support
    // coordinate's side-B coefficient is copied from side A (paired samples
    // express the same concepts with correlated strength). 0 = independent
    // draws, 1 = identical coefficients.
    double coeff_corr = 0.0;
    std::uint64_t seed = 0;
    std::string modality_a = "image";
    std::string modality_b = "text";

    void validate() const {
        if (d < 1 || p_true < 1 || n_pairs < 1) throw argument_error("d, p_true, n_pairs must be >= 1");
        if (s < 1 || s > p_true) throw argument_error("s must lie in [1, p_true]");
        if (noise_sigma < 0.0) throw argument_error("noise_sigma must be >= 0");
        if (modality_offset_scale < 0.0) throw argument_error("modality_offset_scale must be >= 0");
        if (!(coeff_corr >= 0.0 && coeff_corr <= 1.0))
            throw argument_error("coeff_corr must lie in [0, 1]");
        if (regime == Regime::split) {
            if (p_true % 2 != 0) throw argument_error("split regime needs an even p_true");
            if (s > p_true / 2) throw argument_error("split regime needs s <= p_true / 2");
            if (!(c_target > 0.0)) throw argument_error("split regime needs c_target > 0");
            if (n_classes != 0) throw argument_error("classes are only planted in the shared regime");
        }
        if (n_classes > 0) {
            if (n_classes > p_true) throw argument_error("n_classes exceeds p_true");
            if (p_true % n_classes != 0)
                throw argument_error("n_classes must divide p_true (atoms split into class pools)");
            if (p_true / n_classes < s)
                throw argument_error("class pools of " + std::to_string(p_true / n_classes) +
                                     " atoms cannot hold supports of size " + std::to_string(s));
        }
    }
};

struct SynthTruth {
    Matrix dictionary; // d x p_true
    Vector offset_a;
    Vector offset_b;
    std::vector<std::vector<std::uint32_t>> supports_a; // per pair, sorted
    std::vector<std::vector<std::uint32_t>> supports_b;
    std::vector<std::vector<double>> coeffs_a; // aligned with supports
    std::vector<std::vector<double>> coeffs_b;
    std::vector<std::uint32_t> class_atom; // one reserved atom per class
    std::vector<std::uint32_t> labels;     // per pair, present when classes planted
    SynthSpec spec;
};

struct SynthData {
    PairedDataset ds;
    SynthTruth truth;
};

namespace detail {

inline Vector random_unit(Rng& rng, Eigen::Index d) {
    Vector v(d);
    for (;;) {
        for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.next_gaussian();
        const double norm = v.norm();
        if (norm > 1e-9) return v / norm;
    }
}

/// s distinct values drawn from `pool` by partial Fisher-Yates; returned sorted.
inline std::vector<std::uint32_t> draw_support(Rng& rng, std::vector<std::uint32_t> pool,
                                               Eigen::Index s) {
    std::vector<std::uint32_t> picked;
    picked.reserve(static_cast<std::size_t>(s));
    for (Eigen::Index i = 0; i < s; ++i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(pool.size()));
        picked.push_back(pool[j]);
        pool[j] = pool.back();
        pool.pop_back();
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

inline std::vector<double> draw_coefficients(Rng& rng, Eigen::Index s) {
    std::vector<double> c(static_cast<std::size_t>(s));
    for (auto& v : c) v = 0.5 + rng.next_double();
    return c;
}

// Side-B coefficients: fresh draws, each replaced by side A's value with
// probability coeff_corr. The marginal stays uniform on [0.5, 1.5] and the
// generator consumes a fixed number of draws either way.
inline std::vector<double> draw_paired_coefficients(Rng& rng, const std::vector<double>& side_a,
                                                    double coeff_corr) {
    std::vector<double> c(side_a.size());
    for (auto& v : c) v = 0.5 + rng.next_double();
    for (std::size_t i = 0; i < c.size(); ++i)
        if (rng.next_double() < coeff_corr) c[i] = side_a[i];
    return c;
}

inline Vector combine(const Matrix& dict, const std::vector<std::uint32_t>& support,
                      const std::vector<double>& coeffs) {
    Vector v = Vector::Zero(dict.rows());
    for (std::size_t i = 0; i < support.size(); ++i) v += coeffs[i] * dict.col(support[i]);
    return v;
}

} // namespace detail

inline SynthData generate(const SynthSpec& spec) {
    spec.validate();
    Rng dict_rng(derive_seed(spec.seed, 0));
    Rng offset_rng(derive_seed(spec.seed, 1));
    Rng pair_rng(derive_seed(spec.seed, 2));

    SynthTruth truth;
    truth.spec = spec;
    truth.dictionary.resize(spec.d, spec.p_true);

    if (spec.regime == Regime::shared_support) {
        for (Eigen::Index c = 0; c < spec.p_true; ++c)
            truth.dictionary.col(c) = detail::random_unit(dict_rng, spec.d);
        if (spec.p_true <= spec.d) {
            // Orthonormal planted atoms make the model exactly recoverable.
            Eigen::HouseholderQR<Matrix> qr(truth.dictionary);
            Matrix q = qr.householderQ() * Matrix::Identity(spec.d, spec.p_true);
            const Matrix r = qr.matrixQR().topRows(spec.p_true).triangularView<Eigen::Upper>();
            for (Eigen::Index c = 0; c < spec.p_true; ++c)
                if (r(c, c) < 0.0) q.col(c) = -q.col(c);
            truth.dictionary = q;
        }
    } else {
        // Left half random; right half correlated with its mirror atom so
        // paired embeddings can clear c_target.
        const Eigen::Index half = spec.p_true / 2;
        for (Eigen::Index c = 0; c < half; ++c)
            truth.dictionary.col(c) = detail::random_unit(dict_rng, spec.d);
        for (Eigen::Index c = 0; c < half; ++c) {
            const Vector perturbed =
                truth.dictionary.col(c) + 0.35 * detail::random_unit(dict_rng, spec.d);
            truth.dictionary.col(half + c) = perturbed / perturbed.norm();
        }
    }

    truth.offset_a = spec.modality_offset_scale > 0.0
                         ? Vector(spec.modality_offset_scale * detail::random_unit(offset_rng, spec.d))
                         : Vector(Vector::Zero(spec.d));
    truth.offset_b = spec.modality_offset_scale > 0.0
                         ? Vector(spec.modality_offset_scale * detail::random_unit(offset_rng, spec.d))
                         : Vector(Vector::Zero(spec.d));

    PairedDataset ds;
    ds.side_a.modality = spec.modality_a;
    ds.side_b.modality = spec.modality_b;
    ds.side_a.data.resize(spec.n_pairs, spec.d);
    ds.side_b.data.resize(spec.n_pairs, spec.d);

    truth.supports_a.resize(static_cast<std::size_t>(spec.n_pairs));
    truth.supports_b.resize(static_cast<std::size_t>(spec.n_pairs));
    truth.coeffs_a.resize(static_cast<std::size_t>(spec.n_pairs));
    truth.coeffs_b.resize(static_cast<std::size_t>(spec.n_pairs));
    if (spec.n_classes > 0) {
        // Class c owns the atom pool [c * pool, (c + 1) * pool); its first
        // atom is the designated class atom, present in every support.
        const Eigen::Index pool = spec.p_true / spec.n_classes;
        truth.class_atom.resize(static_cast<std::size_t>(spec.n_classes));
        for (Eigen::Index c = 0; c < spec.n_classes; ++c)
            truth.class_atom[static_cast<std::size_t>(c)] = static_cast<std::uint32_t>(c * pool);
        truth.labels.resize(static_cast<std::size_t>(spec.n_pairs));
    }

    for (Eigen::Index n = 0; n < spec.n_pairs; ++n) {
        const auto idx = static_cast<std::size_t>(n);
        if (spec.regime == Regime::shared_support) {
            std::vector<std::uint32_t> support;
            if (spec.n_classes > 0) {
                const auto label = static_cast<std::uint32_t>(pair_rng.next_below(
                    static_cast<std::uint64_t>(spec.n_classes)));
                truth.labels[idx] = label;
                const Eigen::Index pool_size = spec.p_true / spec.n_classes;
                const std::uint32_t pool_base = truth.class_atom[label];
                std::vector<std::uint32_t> pool;
                for (Eigen::Index a = 1; a < pool_size; ++a)
                    pool.push_back(pool_base + static_cast<std::uint32_t>(a));
                support = detail::draw_support(pair_rng, std::move(pool), spec.s - 1);
                support.insert(support.begin(), pool_base);
                std::sort(support.begin(), support.end());
            } else {
                std::vector<std::uint32_t> pool;
                for (Eigen::Index a = 0; a < spec.p_true; ++a)
                    pool.push_back(static_cast<std::uint32_t>(a));
                support = detail::draw_support(pair_rng, std::move(pool), spec.s);
            }
            truth.supports_a[idx] = support;
            truth.supports_b[idx] = support; // shared support by construction
            truth.coeffs_a[idx] = detail::draw_coefficients(pair_rng, spec.s);
            truth.coeffs_b[idx] =
                detail::draw_paired_coefficients(pair_rng, truth.coeffs_a[idx], spec.coeff_corr);

            auto emit = [&](const std::vector<double>& coeffs, const Vector& offset,
                            Matrix& target) {
                Vector v = detail::combine(truth.dictionary, support, coeffs) + offset;
                if (spec.noise_sigma > 0.0)
                    for (Eigen::Index i = 0; i < spec.d; ++i)
                        v(i) += spec.noise_sigma * pair_rng.next_gaussian();
                const double norm = v.norm();
                if (norm < 1e-12) throw numeric_error("degenerate zero-norm synthetic sample");
                target.row(n) = (v / norm).transpose();
            };
            emit(truth.coeffs_a[idx], truth.offset_a, ds.side_a.data);
            emit(truth.coeffs_b[idx], truth.offset_b, ds.side_b.data);
        } else {
            const Eigen::Index half = spec.p_true / 2;
            bool accepted = false;
            for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
                std::vector<std::uint32_t> pool;
                for (Eigen::Index a = 0; a < half; ++a)
                    pool.push_back(static_cast<std::uint32_t>(a));
                const auto left = detail::draw_support(pair_rng, std::move(pool), spec.s);
                std::vector<std::uint32_t> right;
                for (const auto a : left) right.push_back(a + static_cast<std::uint32_t>(half));
                auto ca = detail::draw_coefficients(pair_rng, spec.s);
                auto cb = detail::draw_paired_coefficients(pair_rng, ca, spec.coeff_corr);

                const Vector vx = detail::combine(truth.dictionary, left, ca);
                const Vector vy = detail::combine(truth.dictionary, right, cb);
                const double nx = vx.norm(), ny = vy.norm();
                if (nx < 1e-9 || ny < 1e-9) continue;
                const Vector x = vx / nx, y = vy / ny;
                if (x.dot(y) <= spec.c_target) continue;

                ds.side_a.data.row(n) = x.transpose();
                ds.side_b.data.row(n) = y.transpose();
                truth.supports_a[idx] = left;
                truth.supports_b[idx] = right;
                // Scaled coefficients: W z equals the unit embedding exactly.
                for (auto& v : ca) v /= nx;
                for (auto& v : cb) v /= ny;
                truth.coeffs_a[idx] = std::move(ca);
                truth.coeffs_b[idx] = std::move(cb);
                accepted = true;
            }
            if (!accepted)
                throw data_error("split generation: pair " + std::to_string(n) +
                                 " failed alignment > c_target=" + std::to_string(spec.c_target) +
                                 " after 1000 resamples");
        }
    }
    return SynthData{std::move(ds), std::move(truth)};
}

struct RecoveryScore {
    double mean_max_cosine = 0.0;   // per true atom, best |cos| over learned atoms
    double greedy_match_mean = 0.0; // one-to-one greedy matching variant
};

inline RecoveryScore atom_recovery_score(const Dictionary& learned, const SynthTruth& truth) {
    if (learned.d() != truth.dictionary.rows())
        throw shape_error("learned dictionary d=" + std::to_string(learned.d()) +
                          " != truth d=" + std::to_string(truth.dictionary.rows()));
    const Eigen::Index p_true = truth.dictionary.cols();
    const Eigen::Index p_learned = learned.p();
    Matrix abs_cos(p_true, p_learned);
    for (Eigen::Index t = 0; t < p_true; ++t) {
        for (Eigen::Index l = 0; l < p_learned; ++l) {
            const double denom = truth.dictionary.col(t).norm() * learned.atoms.col(l).norm();
            abs_cos(t, l) =
                denom > 0.0 ? std::abs(truth.dictionary.col(t).dot(learned.atoms.col(l))) / denom
                            : 0.0;
        }
    }
    RecoveryScore score;
    for (Eigen::Index t = 0; t < p_true; ++t) score.mean_max_cosine += abs_cos.row(t).maxCoeff();
    score.mean_max_cosine /= static_cast<double>(p_true);

    std::vector<bool> used_true(static_cast<std::size_t>(p_true), false);
    std::vector<bool> used_learned(static_cast<std::size_t>(p_learned), false);
    const Eigen::Index matches = std::min(p_true, p_learned);
    for (Eigen::Index m = 0; m < matches; ++m) {
        double best = -1.0;
        Eigen::Index bt = 0, bl = 0;
        for (Eigen::Index t = 0; t < p_true; ++t) {
            if (used_true[static_cast<std::size_t>(t)]) continue;
            for (Eigen::Index l = 0; l < p_learned; ++l) {
                if (used_learned[static_cast<std::size_t>(l)]) continue;
                if (abs_cos(t, l) > best) {
                    best = abs_cos(t, l);
                    bt = t;
                    bl = l;
                }
            }
        }
        used_true[static_cast<std::size_t>(bt)] = true;
        used_learned[static_cast<std::size_t>(bl)] = true;
        score.greedy_match_mean += best;
    }
    score.greedy_match_mean /= static_cast<double>(p_true);
    return score;
}

/// Exact decomposed pairs for split-regime output; inputs for the
/// augmentation routine.
inline std::vector<DecomposedPair> truth_pairs(const SynthTruth& truth, const PairedDataset& ds) {
    if (truth.spec.regime != Regime::split)
        throw argument_error("exact decomposed pairs exist only for the split regime");
    if (ds.n_pairs() != truth.spec.n_pairs)
        throw data_error("dataset/truth pair count mismatch");
    Dictionary dict{truth.dictionary};
    std::vector<DecomposedPair> pairs;
    pairs.reserve(static_cast<std::size_t>(ds.n_pairs()));
    for (Eigen::Index n = 0; n < ds.n_pairs(); ++n) {
        const auto idx = static_cast<std::size_t>(n);
        auto code = [&](const std::vector<std::uint32_t>& support,
                        const std::vector<double>& coeffs) {
            SparseCode z;
            z.p = truth.dictionary.cols();
            for (std::size_t i = 0; i < support.size(); ++i)
                z.entries.push_back({support[i], coeffs[i]});
            return z;
        };
        pairs.push_back(make_decomposed_pair(dict, ds.side_a.data.row(n).transpose(),
                                             ds.side_b.data.row(n).transpose(),
                                             code(truth.supports_a[idx], truth.coeffs_a[idx]),
                                             code(truth.supports_b[idx], truth.coeffs_b[idx])));
    }
    return pairs;
}

/// SAE that reproduces the planted model. Exact (FVE = 1) when the truth
/// dictionary is orthonormal (p_true <= d), offsets are zero, and k >= s.
inline std::pair<SaeParams, Eigen::Index> make_oracle_model(const SynthTruth& truth) {
    const Eigen::Index d = truth.dictionary.rows();
    const Eigen::Index p_true = truth.dictionary.cols();
    const Eigen::Index p = std::max(d, p_true);
    SaeParams params;
    params.w_dec = Matrix::Zero(d, p);
    params.w_dec.leftCols(p_true) = truth.dictionary;
    Rng pad_rng(derive_seed(truth.spec.seed, 7));
    for (Eigen::Index c = p_true; c < p; ++c)
        params.w_dec.col(c) = detail::random_unit(pad_rng, d);
    params.w_enc = Matrix::Zero(p, d);
    params.w_enc.topRows(p_true) = truth.dictionary.transpose();
    params.b_enc = Vector::Zero(p);
    params.b_pre_a = truth.offset_a;
    params.b_pre_b = truth.offset_b;
    return {std::move(params), truth.spec.s};
}

/// Zero-shot task planted by the shared-support generator: one prompt per
/// class (the pure class atom on side B), side-A rows [begin, begin+count)
/// as test samples.
inline ZeroShotTask make_planted_task(const SynthTruth& truth, const PairedDataset& ds,
                                      Eigen::Index begin, Eigen::Index count) {
    if (truth.class_atom.empty())
        throw argument_error("no classes were planted in this dataset");
    if (begin < 0 || count < 1 || begin + count > ds.n_pairs())
        throw argument_error("planted task slice out of range");
    ZeroShotTask task;
    task.class_embeddings.modality = ds.side_b.modality;
    task.class_embeddings.data.resize(static_cast<Eigen::Index>(truth.class_atom.size()),
                                      truth.dictionary.rows());
    for (std::size_t c = 0; c < truth.class_atom.size(); ++c) {
        Vector v = truth.dictionary.col(truth.class_atom[c]) + truth.offset_b;
        task.class_embeddings.data.row(static_cast<Eigen::Index>(c)) = (v / v.norm()).transpose();
    }
    task.test_embeddings.modality = ds.side_a.modality;
    task.test_embeddings.data = ds.side_a.data.middleRows(begin, count);
    task.labels.assign(truth.labels.begin() + begin, truth.labels.begin() + begin + count);
    return task;
}

/// Degenerate modality-split model: every side-A code lives in the left half
/// of the dictionary and every side-B code in the right half. The two atom
/// banks sit in opposite halfspaces of the first coordinate and the
/// pre-coding biases push each side's inputs deep into its own halfspace, so
/// the separation holds for every input, not just in expectation.
struct SplitModel {
    SaeParams params;
    PairedDataset val;
    Eigen::Index k = 0;
    Eigen::Index atoms_per_side = 0;
};

inline SplitModel make_split_model(Eigen::Index d, Eigen::Index atoms_per_side, Eigen::Index s,
                                   Eigen::Index n_pairs, std::uint64_t seed) {
    if (d < 2) throw argument_error("split model needs d >= 2");
    if (s < 1 || s > atoms_per_side) throw argument_error("split model needs 1 <= s <= atoms_per_side");
    const Eigen::Index p = 2 * atoms_per_side;
    Rng rng(derive_seed(seed, 0));

    SplitModel model;
    model.k = s;
    model.atoms_per_side = atoms_per_side;
    auto& params = model.params;
    params.w_dec.resize(d, p);
    Vector anchor = Vector::Zero(d);
    anchor(0) = 1.0;
    for (Eigen::Index c = 0; c < atoms_per_side; ++c) {
        const Vector a = anchor + 0.5 * detail::random_unit(rng, d);
        params.w_dec.col(c) = a / a.norm();
    }
    for (Eigen::Index c = 0; c < atoms_per_side; ++c) {
        const Vector b = -anchor + 0.5 * detail::random_unit(rng, d);
        params.w_dec.col(atoms_per_side + c) = b / b.norm();
    }
    params.w_enc = params.w_dec.transpose();
    params.b_enc = Vector::Zero(p);
    // <atom, e1> >= 1/3 for the left bank and <= -1/3 for the right, so a
    // +-40 e1 shift dominates any unit input and silences the foreign bank.
    params.b_pre_a = -40.0 * anchor;
    params.b_pre_b = 40.0 * anchor;

    model.val.side_a.modality = "image";
    model.val.side_b.modality = "text";
    model.val.side_a.data.resize(n_pairs, d);
    model.val.side_b.data.resize(n_pairs, d);
    Rng data_rng(derive_seed(seed, 1));
    auto sample_row = [&](Eigen::Index bank_offset) {
        std::vector<std::uint32_t> pool;
        for (Eigen::Index a = 0; a < atoms_per_side; ++a)
            pool.push_back(static_cast<std::uint32_t>(a));
        const auto support = detail::draw_support(data_rng, std::move(pool), s);
        const auto coeffs = detail::draw_coefficients(data_rng, s);
        Vector v = Vector::Zero(d);
        for (std::size_t i = 0; i < support.size(); ++i)
            v += coeffs[i] * params.w_dec.col(bank_offset + support[i]);
        return Vector(v / v.norm());
    };
    for (Eigen::Index n = 0; n < n_pairs; ++n) {
        model.val.side_a.data.row(n) = sample_row(0).transpose();
        model.val.side_b.data.row(n) = sample_row(atoms_per_side).transpose();
    }
    return model;
}

// ---------------------------------------------------------------------------
// MST1 truth container (little-endian):
//   "MST1" | u32 version = 1 | u32 d | u32 p_true | u32 n_pairs | u32 s
//   | u32 n_classes | u8 regime (0 shared, 1 split) | 3 pad
//   | f64 dictionary (column-major) | f64 offset_a | f64 offset_b
//   | per pair: u32 supports_a[s], f64 coeffs_a[s], u32 supports_b[s],
//     f64 coeffs_b[s]
//   | u32 class_atom[n_classes] | u32 labels[n_pairs] (only when classes)
//   | trailing TOML (seed, sigma, offsets, c_target, modalities)
// f64 payloads keep split-regime decompositions exact across a round trip.
// ---------------------------------------------------------------------------

inline void save_truth(const SynthTruth& truth, const std::string& path) {
    auto out = binio::open_output(path);
    binio::write_magic(out, "MST1");
    binio::write_u32(out, 1);
    binio::write_u32(out, static_cast<std::uint32_t>(truth.dictionary.rows()));
    binio::write_u32(out, static_cast<std::uint32_t>(truth.dictionary.cols()));
    binio::write_u32(out, static_cast<std::uint32_t>(truth.spec.n_pairs));
    binio::write_u32(out, static_cast<std::uint32_t>(truth.spec.s));
    binio::write_u32(out, static_cast<std::uint32_t>(truth.spec.n_classes));
    const unsigned char regime_and_pad[4] = {
        static_cast<unsigned char>(truth.spec.regime == Regime::split ? 1 : 0), 0, 0, 0};
    binio::write_bytes(out, regime_and_pad, 4);
    for (Eigen::Index c = 0; c < truth.dictionary.cols(); ++c)
        for (Eigen::Index r = 0; r < truth.dictionary.rows(); ++r)
            binio::write_f64(out, truth.dictionary(r, c));
    for (Eigen::Index i = 0; i < truth.offset_a.size(); ++i) binio::write_f64(out, truth.offset_a(i));
    for (Eigen::Index i = 0; i < truth.offset_b.size(); ++i) binio::write_f64(out, truth.offset_b(i));
    for (Eigen::Index n = 0; n < truth.spec.n_pairs; ++n) {
        const auto idx = static_cast<std::size_t>(n);
        for (const auto v : truth.supports_a[idx]) binio::write_u32(out, v);
        for (const auto v : truth.coeffs_a[idx]) binio::write_f64(out, v);
        for (const auto v : truth.supports_b[idx]) binio::write_u32(out, v);
        for (const auto v : truth.coeffs_b[idx]) binio::write_f64(out, v);
    }
    for (const auto v : truth.class_atom) binio::write_u32(out, v);
    if (!truth.class_atom.empty())
        for (const auto v : truth.labels) binio::write_u32(out, v);

    toml::Writer meta;
    meta.add("seed", truth.spec.seed);
    meta.add("noise_sigma", truth.spec.noise_sigma);
    meta.add("modality_offset_scale", truth.spec.modality_offset_scale);
    meta.add("c_target", truth.spec.c_target);
    meta.add("coeff_corr", truth.spec.coeff_corr);
    meta.add("modality_a", truth.spec.modality_a);
    meta.add("modality_b", truth.spec.modality_b);
    binio::write_bytes(out, meta.str().data(), meta.str().size());
}

inline SynthTruth load_truth(const std::string& path) {
    auto in = binio::open_input(path);
    binio::expect_magic(in, "MST1", path);
    const std::uint32_t version = binio::read_u32(in, "version");
    if (version != 1)
        throw format_error("unsupported MST version " + std::to_string(version) + " in '" + path + "'");
    SynthTruth truth;
    const auto d = static_cast<Eigen::Index>(binio::read_u32(in, "d"));
    const auto p_true = static_cast<Eigen::Index>(binio::read_u32(in, "p_true"));
    const auto n_pairs = static_cast<Eigen::Index>(binio::read_u32(in, "n_pairs"));
    const auto s = static_cast<Eigen::Index>(binio::read_u32(in, "s"));
    const auto n_classes = static_cast<Eigen::Index>(binio::read_u32(in, "n_classes"));
    unsigned char regime_and_pad[4];
    binio::read_bytes(in, regime_and_pad, 4, "regime");
    truth.spec.d = d;
    truth.spec.p_true = p_true;
    truth.spec.n_pairs = n_pairs;
    truth.spec.s = s;
    truth.spec.n_classes = n_classes;
    truth.spec.regime = regime_and_pad[0] == 1 ? Regime::split : Regime::shared_support;

    truth.dictionary.resize(d, p_true);
    for (Eigen::Index c = 0; c < p_true; ++c)
        for (Eigen::Index r = 0; r < d; ++r) truth.dictionary(r, c) = binio::read_f64(in, "dictionary");
    truth.offset_a.resize(d);
    truth.offset_b.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) truth.offset_a(i) = binio::read_f64(in, "offset_a");
    for (Eigen::Index i = 0; i < d; ++i) truth.offset_b(i) = binio::read_f64(in, "offset_b");
    truth.supports_a.resize(static_cast<std::size_t>(n_pairs));
    truth.supports_b.resize(static_cast<std::size_t>(n_pairs));
    truth.coeffs_a.resize(static_cast<std::size_t>(n_pairs));
    truth.coeffs_b.resize(static_cast<std::size_t>(n_pairs));
    for (Eigen::Index n = 0; n < n_pairs; ++n) {
        const auto idx = static_cast<std::size_t>(n);
        truth.supports_a[idx].resize(static_cast<std::size_t>(s));
        truth.coeffs_a[idx].resize(static_cast<std::size_t>(s));
        truth.supports_b[idx].resize(static_cast<std::size_t>(s));
        truth.coeffs_b[idx].resize(static_cast<std::size_t>(s));
        for (auto& v : truth.supports_a[idx]) v = binio::read_u32(in, "supports_a");
        for (auto& v : truth.coeffs_a[idx]) v = binio::read_f64(in, "coeffs_a");
        for (auto& v : truth.supports_b[idx]) v = binio::read_u32(in, "supports_b");
        for (auto& v : truth.coeffs_b[idx]) v = binio::read_f64(in, "coeffs_b");
    }
    truth.class_atom.resize(static_cast<std::size_t>(n_classes));
    for (auto& v : truth.class_atom) v = binio::read_u32(in, "class_atom");
    if (n_classes > 0) {
        truth.labels.resize(static_cast<std::size_t>(n_pairs));
        for (auto& v : truth.labels) v = binio::read_u32(in, "labels");
    }
    const std::string blob = binio::read_rest(in);
    if (!blob.empty()) {
        const toml::Table t = toml::parse(blob);
        if (t.contains("seed")) truth.spec.seed = static_cast<std::uint64_t>(t.get_int("seed"));
        if (t.contains("noise_sigma")) truth.spec.noise_sigma = t.get_double("noise_sigma");
        if (t.contains("modality_offset_scale"))
            truth.spec.modality_offset_scale = t.get_double("modality_offset_scale");
        if (t.contains("c_target")) truth.spec.c_target = t.get_double("c_target");
        if (t.contains("coeff_corr")) truth.spec.coeff_corr = t.get_double("coeff_corr");
        truth.spec.modality_a = t.get_string_or("modality_a", "image");
        truth.spec.modality_b = t.get_string_or("modality_b", "text");
    }
    return truth;
}

} // namespace msae
