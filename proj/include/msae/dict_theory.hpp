// SPDX-License-Identifier: Apache-2.0
#pragma once

// Executable form of the split-dictionary augmentation.
//
// A dictionary is modality-split over a set of paired decompositions when
// every cross-modal pair has disjoint code supports. Given such a dictionary
// whose pairs are aligned in embedding space (<x, y> > c > 0), one extra atom
// per pair suffices to make the paired code inner products strictly positive
// while preserving reconstruction:
//
// For each pair, some (i, j) in supp(z_x) x supp(z_y) must satisfy
// w_i . w_j >= c / (||z_x||_1 ||z_y||_1), otherwise <x, y> <= c. Take the
// argmax (i, j), Gram-Schmidt w_j against w_i,
//
//   w_new = (w_j - (w_i . w_j) w_i) / ||w_j - (w_i . w_j) w_i||,
//
// and rewrite y's use of w_j onto {w_i, w_new}:
//
//   z_y[j] * w_j = z_y[j] (w_i . w_j) * w_i + z_y[j] ||w_j - (w_i.w_j) w_i|| * w_new.
//
// Both new coefficients are nonnegative, y's code grows by at most one entry,
// x's code is untouched (zero-padded), and the rewritten pair now shares
// coordinate i, giving <z_x, z_y> >= z_x[i] z_y[j] c / (||z_x||_1 ||z_y||_1) > 0.
// Collinear (w_i, w_j) need no new atom: the coefficient transfers directly.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/sae.hpp"

namespace msae {

struct Dictionary {
    Matrix atoms; // d x p, unit-norm columns

    Eigen::Index d() const { return atoms.rows(); }
    Eigen::Index p() const { return atoms.cols(); }

    void validate(double tol = 1e-8) const {
        for (Eigen::Index c = 0; c < atoms.cols(); ++c) {
            const double norm = atoms.col(c).norm();
            if (std::abs(norm - 1.0) > tol)
                throw data_error("dictionary column " + std::to_string(c) + " has norm " +
                                 std::to_string(norm) + " (must be unit)");
        }
    }
};

/// One cross-modal pair with its sparse decompositions in a dictionary.
struct DecomposedPair {
    Vector x;
    Vector y;
    SparseCode z_x;
    SparseCode z_y;
    double residual_x = 0.0; // ||x - W z_x||
    double residual_y = 0.0; // ||y - W z_y||
    double xy_inner = 0.0;   // <x, y>
};

/// W z for a code over a bare dictionary (no bias).
inline Vector decode_with(const Dictionary& dict, const SparseCode& z) {
    if (z.p != dict.p())
        throw shape_error("code p=" + std::to_string(z.p) + " != dictionary p=" +
                          std::to_string(dict.p()));
    Vector out = Vector::Zero(dict.d());
    for (const auto& e : z.entries) {
        if (e.index >= dict.p())
            throw shape_error("code index " + std::to_string(e.index) +
                              " out of range for dictionary p=" + std::to_string(dict.p()));
        out += e.value * dict.atoms.col(e.index);
    }
    return out;
}

/// Builds a DecomposedPair from raw parts, computing residuals and <x, y>.
inline DecomposedPair make_decomposed_pair(const Dictionary& dict, Vector x, Vector y,
                                           SparseCode z_x, SparseCode z_y) {
    DecomposedPair pair;
    pair.residual_x = (x - decode_with(dict, z_x)).norm();
    pair.residual_y = (y - decode_with(dict, z_y)).norm();
    pair.xy_inner = x.dot(y);
    pair.x = std::move(x);
    pair.y = std::move(y);
    pair.z_x = std::move(z_x);
    pair.z_y = std::move(z_y);
    return pair;
}

struct SplitCheck {
    bool is_split = true;
    std::ptrdiff_t first_violation = -1; // pair index, -1 when split
    std::uint32_t shared_atom = 0;       // meaningful only when violated
};

/// True iff every pair's code supports are disjoint.
inline SplitCheck is_modality_split(const std::vector<DecomposedPair>& pairs) {
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const auto& zx = pairs[n].z_x.entries;
        const auto& zy = pairs[n].z_y.entries;
        std::size_t i = 0, j = 0;
        while (i < zx.size() && j < zy.size()) {
            if (zx[i].index == zy[j].index)
                return {false, static_cast<std::ptrdiff_t>(n), zx[i].index};
            if (zx[i].index < zy[j].index) ++i;
            else ++j;
        }
    }
    return {};
}

struct AugmentResult {
    Dictionary dict;
    std::vector<DecomposedPair> pairs;
    Eigen::Index atoms_added = 0;
};

namespace detail {

inline double l1_norm(const SparseCode& z) {
    double s = 0.0;
    for (const auto& e : z.entries) s += e.value;
    return s;
}

} // namespace detail

/// Appends at most one atom per pair so that every paired code inner product
/// becomes strictly positive. Preconditions (checked): unit-norm atoms,
/// <x,y> > c > 0 for every pair, disjoint supports, residuals <= residual_tol,
/// in-range indices.
inline AugmentResult augment_split_dictionary(const Dictionary& dict,
                                              const std::vector<DecomposedPair>& pairs,
                                              double c, double residual_tol = 1e-6) {
    if (!(c > 0.0)) throw argument_error("alignment bound c must be > 0, got " + std::to_string(c));
    dict.validate();
    const auto split = is_modality_split(pairs);
    if (!split.is_split)
        throw argument_error("precondition violated: pair " +
                             std::to_string(split.first_violation) + " already shares atom " +
                             std::to_string(split.shared_atom));
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const auto& pair = pairs[n];
        if (!(pair.xy_inner > c))
            throw argument_error("precondition violated: pair " + std::to_string(n) +
                                 " has <x,y> = " + std::to_string(pair.xy_inner) +
                                 " <= c = " + std::to_string(c));
        if (pair.residual_x > residual_tol || pair.residual_y > residual_tol)
            throw argument_error("precondition violated: pair " + std::to_string(n) +
                                 " residuals (" + std::to_string(pair.residual_x) + ", " +
                                 std::to_string(pair.residual_y) + ") exceed tolerance " +
                                 std::to_string(residual_tol));
        if (pair.z_x.entries.empty() || pair.z_y.entries.empty())
            throw argument_error("precondition violated: pair " + std::to_string(n) +
                                 " has an empty code");
        if (pair.z_x.p != dict.p() || pair.z_y.p != dict.p())
            throw shape_error("pair " + std::to_string(n) + " codes sized for p=" +
                              std::to_string(pair.z_x.p) + ", dictionary has p=" +
                              std::to_string(dict.p()));
    }

    AugmentResult result;
    result.pairs = pairs;
    const Eigen::Index p_in = dict.p();
    // Atoms are gathered column-wise; grown once at the end.
    std::vector<Vector> new_atoms;

    for (std::size_t n = 0; n < result.pairs.size(); ++n) {
        auto& pair = result.pairs[n];

        // Argmax of w_i . w_j over supp(z_x) x supp(z_y); the proof's
        // counting argument guarantees the max clears the alignment bound.
        double best_dot = -2.0;
        std::uint32_t best_i = 0, best_j = 0;
        for (const auto& ex : pair.z_x.entries) {
            for (const auto& ey : pair.z_y.entries) {
                const double t = dict.atoms.col(ex.index).dot(dict.atoms.col(ey.index));
                if (t > best_dot) {
                    best_dot = t;
                    best_i = ex.index;
                    best_j = ey.index;
                }
            }
        }
        // Guaranteed bound c / (||z_x||_1 ||z_y||_1), relaxed by the residual
        // cross terms when the decompositions are only approximate.
        const double l1x = detail::l1_norm(pair.z_x);
        const double l1y = detail::l1_norm(pair.z_y);
        const double eps_x = pair.residual_x, eps_y = pair.residual_y;
        const double bound = c / (l1x * l1y);
        const double slack = (eps_x + eps_y + 3.0 * eps_x * eps_y) / (l1x * l1y) + 1e-12;
        if (best_dot < bound - slack)
            throw internal_error("pair " + std::to_string(n) + ": max atom alignment " +
                                 std::to_string(best_dot) + " below guaranteed bound " +
                                 std::to_string(bound) + "; preconditions must not hold");

        const Vector w_i = dict.atoms.col(best_i);
        const Vector w_j = dict.atoms.col(best_j);
        const Vector rejection = w_j - best_dot * w_i;
        const double rejection_norm = rejection.norm();
        const double y_coeff = pair.z_y.value_at(best_j);

        // Remove j from y's code, then add the rewritten components.
        std::vector<SparseCode::Entry> rewritten;
        rewritten.reserve(pair.z_y.entries.size() + 1);
        for (const auto& e : pair.z_y.entries)
            if (e.index != best_j) rewritten.push_back(e);
        auto add_entry = [&rewritten](std::uint32_t index, double value) {
            if (value <= 0.0) return;
            auto pos = rewritten.begin();
            while (pos != rewritten.end() && pos->index < index) ++pos;
            if (pos != rewritten.end() && pos->index == index) pos->value += value;
            else rewritten.insert(pos, {index, value});
        };
        add_entry(best_i, y_coeff * best_dot);
        if (rejection_norm >= 1e-12) {
            const auto new_index = static_cast<std::uint32_t>(p_in + static_cast<Eigen::Index>(new_atoms.size()));
            new_atoms.push_back(rejection / rejection_norm);
            add_entry(new_index, y_coeff * rejection_norm);
        }
        // else: w_j collinear with w_i (best_dot ~ 1); the transfer onto w_i
        // above already carries the full coefficient.
        pair.z_y.entries = std::move(rewritten);
    }

    result.atoms_added = static_cast<Eigen::Index>(new_atoms.size());
    result.dict.atoms.resize(dict.d(), p_in + result.atoms_added);
    result.dict.atoms.leftCols(p_in) = dict.atoms;
    for (std::size_t a = 0; a < new_atoms.size(); ++a)
        result.dict.atoms.col(p_in + static_cast<Eigen::Index>(a)) = new_atoms[a];

    // Zero-pad every code to the grown dictionary and refresh residuals.
    for (auto& pair : result.pairs) {
        pair.z_x.p = result.dict.p();
        pair.z_y.p = result.dict.p();
        pair.residual_x = (pair.x - decode_with(result.dict, pair.z_x)).norm();
        pair.residual_y = (pair.y - decode_with(result.dict, pair.z_y)).norm();
    }
    return result;
}

} // namespace msae
