// SPDX-License-Identifier: Apache-2.0
#pragma once

// TopK sparse autoencoder forward passes for paired multimodal inputs.
//
// One shared encoder/decoder serves both modalities; only the pre-coding
// bias differs per side:
//
//   u      = w_enc * (x - b_pre(side)) + b_enc
//   r      = relu(u), then r_i <- 0 where a mask drops coordinate i
//   z      = topk(r, k)            (stored sparsely, zeros dropped)
//   x_hat  = w_dec * z + b_pre(side)
//
// Masks are a training-time regularizer only: one mask is drawn per pair per
// step and shared verbatim between the two sides, so TopK must pick from the
// same surviving coordinates for both modalities. Evaluation never masks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msae/binio.hpp"
#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/rng.hpp"
#include "msae/toml.hpp"

namespace msae {

enum class Side { a, b };

inline const char* side_name(Side s) { return s == Side::a ? "a" : "b"; }

struct SaeParams {
    Matrix w_enc;   // p x d encoder
    Matrix w_dec;   // d x p decoder; columns are the dictionary atoms
    Vector b_enc;   // p
    Vector b_pre_a; // d, pre-coding bias for side A
    Vector b_pre_b; // d, pre-coding bias for side B

    Eigen::Index d() const { return w_dec.rows(); }
    Eigen::Index p() const { return w_dec.cols(); }

    const Vector& b_pre(Side side) const { return side == Side::a ? b_pre_a : b_pre_b; }
    Vector& b_pre(Side side) { return side == Side::a ? b_pre_a : b_pre_b; }
};

/// Nonnegative sparse activation vector: strictly positive values at
/// strictly increasing indices, at most k of them when produced by encode.
struct SparseCode {
    struct Entry {
        std::uint32_t index;
        double value;
    };
    std::vector<Entry> entries;
    Eigen::Index p = 0;

    double value_at(std::uint32_t index) const {
        for (const auto& e : entries)
            if (e.index == index) return e.value;
        return 0.0;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& e : entries) s += e.value * e.value;
        return s;
    }

    Vector to_dense() const {
        Vector v = Vector::Zero(p);
        for (const auto& e : entries) v(e.index) = e.value;
        return v;
    }
};

/// Random mask shared between the two sides of one pair.
struct Mask {
    std::vector<bool> kept; // length p; false = coordinate dropped
    double p_mask = 0.0;
};

/// Keeps the k largest entries of v and zeroes the rest. Ties break toward
/// the lowest index.
inline Vector topk(const Vector& v, Eigen::Index k) {
    const Eigen::Index p = v.size();
    if (k < 1 || k > p)
        throw argument_error("topk: k=" + std::to_string(k) + " outside [1, " +
                             std::to_string(p) + "]");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index lhs, Eigen::Index rhs) {
        if (v(lhs) != v(rhs)) return v(lhs) > v(rhs);
        return lhs < rhs;
    });
    Vector out = Vector::Zero(p);
    for (Eigen::Index i = 0; i < k; ++i) out(order[static_cast<std::size_t>(i)]) = v(order[static_cast<std::size_t>(i)]);
    return out;
}

/// Each coordinate is independently dropped with probability p_mask. One
/// draw serves both modalities of a pair.
inline Mask draw_mask(Eigen::Index p, double p_mask, Rng& rng) {
    if (!(p_mask >= 0.0 && p_mask <= 1.0))
        throw argument_error("p_mask must lie in [0, 1], got " + std::to_string(p_mask));
    Mask m;
    m.p_mask = p_mask;
    m.kept.resize(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i)
        m.kept[static_cast<std::size_t>(i)] = rng.next_double() >= p_mask;
    return m;
}

namespace detail {

// Selection identical to topk(relu(masked u), k) followed by dropping exact
// zeros, without materializing the dense result.
inline SparseCode sparse_topk_positive(const Vector& r, Eigen::Index k) {
    std::vector<Eigen::Index> candidates;
    candidates.reserve(static_cast<std::size_t>(r.size()));
    for (Eigen::Index i = 0; i < r.size(); ++i)
        if (r(i) > 0.0) candidates.push_back(i);
    if (static_cast<Eigen::Index>(candidates.size()) > k) {
        std::sort(candidates.begin(), candidates.end(), [&](Eigen::Index lhs, Eigen::Index rhs) {
            if (r(lhs) != r(rhs)) return r(lhs) > r(rhs);
            return lhs < rhs;
        });
        candidates.resize(static_cast<std::size_t>(k));
        std::sort(candidates.begin(), candidates.end());
    }
    SparseCode code;
    code.p = r.size();
    code.entries.reserve(candidates.size());
    for (Eigen::Index i : candidates)
        code.entries.push_back({static_cast<std::uint32_t>(i), r(i)});
    return code;
}

} // namespace detail

inline SparseCode encode(const SaeParams& params, const Vector& x, Side side,
                         Eigen::Index k, const Mask* mask = nullptr) {
    if (x.size() != params.d())
        throw shape_error("encode: input has length " + std::to_string(x.size()) +
                          ", model d=" + std::to_string(params.d()));
    if (k < 1 || k > params.p())
        throw argument_error("encode: k=" + std::to_string(k) + " outside [1, " +
                             std::to_string(params.p()) + "]");
    if (mask && static_cast<Eigen::Index>(mask->kept.size()) != params.p())
        throw shape_error("encode: mask length " + std::to_string(mask->kept.size()) +
                          " != p=" + std::to_string(params.p()));

    Vector u = params.w_enc * (x - params.b_pre(side)) + params.b_enc;
    Vector r = u.cwiseMax(0.0);
    if (mask)
        for (Eigen::Index i = 0; i < r.size(); ++i)
            if (!mask->kept[static_cast<std::size_t>(i)]) r(i) = 0.0;
    return detail::sparse_topk_positive(r, k);
}

inline Vector decode(const SaeParams& params, const SparseCode& z, Side side) {
    if (z.p != params.p())
        throw shape_error("decode: code p=" + std::to_string(z.p) + " != model p=" +
                          std::to_string(params.p()));
    Vector out = params.b_pre(side);
    for (const auto& e : z.entries) {
        if (e.index >= params.p())
            throw shape_error("decode: code index " + std::to_string(e.index) +
                              " out of range for p=" + std::to_string(params.p()));
        out += e.value * params.w_dec.col(e.index);
    }
    return out;
}

// ---------------------------------------------------------------------------
// MSC1 checkpoint format (little-endian):
//   "MSC1" | u32 version = 1 | u32 d | u32 p | u32 k
//   | f32: w_enc row-major | f32: b_enc | f32: w_dec column-major
//   | f32: b_pre_a | f32: b_pre_b | trailing UTF-8 TOML metadata
// ---------------------------------------------------------------------------

struct CheckpointMeta {
    double lambda_gs = 0.0;
    double p_mask = 0.0;
    std::uint64_t steps = 0;
    std::uint64_t seed = 0;
    std::string variant = "sae";
    std::string modality_a;
    std::string modality_b;

    /// Maps a declared modality label onto the side it was trained as.
    Side side_for(const std::string& modality) const {
        if (modality == modality_a) return Side::a;
        if (modality == modality_b) return Side::b;
        throw data_error("modality '" + modality + "' not in checkpoint (sides are '" +
                         modality_a + "', '" + modality_b + "')");
    }
};

struct Checkpoint {
    SaeParams params;
    Eigen::Index k = 0;
    CheckpointMeta meta;
};

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    auto out = binio::open_output(path);
    binio::write_magic(out, "MSC1");
    binio::write_u32(out, 1);
    binio::write_u32(out, static_cast<std::uint32_t>(ck.params.d()));
    binio::write_u32(out, static_cast<std::uint32_t>(ck.params.p()));
    binio::write_u32(out, static_cast<std::uint32_t>(ck.k));
    const auto& m = ck.params;
    for (Eigen::Index r = 0; r < m.w_enc.rows(); ++r)
        for (Eigen::Index c = 0; c < m.w_enc.cols(); ++c)
            binio::write_f32(out, static_cast<float>(m.w_enc(r, c)));
    for (Eigen::Index i = 0; i < m.b_enc.size(); ++i)
        binio::write_f32(out, static_cast<float>(m.b_enc(i)));
    for (Eigen::Index c = 0; c < m.w_dec.cols(); ++c)
        for (Eigen::Index r = 0; r < m.w_dec.rows(); ++r)
            binio::write_f32(out, static_cast<float>(m.w_dec(r, c)));
    for (Eigen::Index i = 0; i < m.b_pre_a.size(); ++i)
        binio::write_f32(out, static_cast<float>(m.b_pre_a(i)));
    for (Eigen::Index i = 0; i < m.b_pre_b.size(); ++i)
        binio::write_f32(out, static_cast<float>(m.b_pre_b(i)));

    toml::Writer meta;
    meta.add("lambda", ck.meta.lambda_gs);
    meta.add("p_mask", ck.meta.p_mask);
    meta.add("steps", ck.meta.steps);
    meta.add("seed", ck.meta.seed);
    meta.add("variant", ck.meta.variant);
    meta.add("modality_a", ck.meta.modality_a);
    meta.add("modality_b", ck.meta.modality_b);
    binio::write_bytes(out, meta.str().data(), meta.str().size());
}

inline Checkpoint load_checkpoint(const std::string& path) {
    auto in = binio::open_input(path);
    binio::expect_magic(in, "MSC1", path);
    const std::uint32_t version = binio::read_u32(in, "version");
    if (version != 1)
        throw format_error("unsupported MSC version " + std::to_string(version) +
                           " in '" + path + "'");
    const auto d = static_cast<Eigen::Index>(binio::read_u32(in, "d"));
    const auto p = static_cast<Eigen::Index>(binio::read_u32(in, "p"));
    const auto k = static_cast<Eigen::Index>(binio::read_u32(in, "k"));
    if (d < 1 || p < d || k < 1 || k > p)
        throw format_error("inconsistent checkpoint header in '" + path + "' (d=" +
                           std::to_string(d) + ", p=" + std::to_string(p) + ", k=" +
                           std::to_string(k) + ")");

    Checkpoint ck;
    ck.k = k;
    auto& m = ck.params;
    m.w_enc.resize(p, d);
    m.b_enc.resize(p);
    m.w_dec.resize(d, p);
    m.b_pre_a.resize(d);
    m.b_pre_b.resize(d);
    for (Eigen::Index r = 0; r < p; ++r)
        for (Eigen::Index c = 0; c < d; ++c)
            m.w_enc(r, c) = static_cast<double>(binio::read_f32(in, "w_enc"));
    for (Eigen::Index i = 0; i < p; ++i)
        m.b_enc(i) = static_cast<double>(binio::read_f32(in, "b_enc"));
    for (Eigen::Index c = 0; c < p; ++c)
        for (Eigen::Index r = 0; r < d; ++r)
            m.w_dec(r, c) = static_cast<double>(binio::read_f32(in, "w_dec"));
    for (Eigen::Index i = 0; i < d; ++i)
        m.b_pre_a(i) = static_cast<double>(binio::read_f32(in, "b_pre_a"));
    for (Eigen::Index i = 0; i < d; ++i)
        m.b_pre_b(i) = static_cast<double>(binio::read_f32(in, "b_pre_b"));

    const std::string blob = binio::read_rest(in);
    if (!blob.empty()) {
        const toml::Table t = toml::parse(blob);
        if (t.contains("lambda")) ck.meta.lambda_gs = t.get_double("lambda");
        if (t.contains("p_mask")) ck.meta.p_mask = t.get_double("p_mask");
        if (t.contains("steps")) ck.meta.steps = static_cast<std::uint64_t>(t.get_int("steps"));
        if (t.contains("seed")) ck.meta.seed = static_cast<std::uint64_t>(t.get_int("seed"));
        ck.meta.variant = t.get_string_or("variant", "sae");
        ck.meta.modality_a = t.get_string_or("modality_a", "");
        ck.meta.modality_b = t.get_string_or("modality_b", "");
    }
    return ck;
}

/// Evaluation-time codes for every row of an embedding matrix (never masked).
inline std::vector<SparseCode> encode_all(const SaeParams& params, const EmbeddingMatrix& m,
                                          Side side, Eigen::Index k) {
    std::vector<SparseCode> codes;
    codes.reserve(static_cast<std::size_t>(m.n_samples()));
    for (Eigen::Index i = 0; i < m.n_samples(); ++i)
        codes.push_back(encode(params, m.data.row(i).transpose(), side, k));
    return codes;
}

} // namespace msae
