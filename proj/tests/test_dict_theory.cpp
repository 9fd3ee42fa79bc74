// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "msae/dict_theory.hpp"
#include "msae/synth.hpp"
#include "test_support.hpp"

using namespace msae;

namespace {

SparseCode code_of(std::initializer_list<std::pair<std::uint32_t, double>> entries,
                   Eigen::Index p) {
    SparseCode z;
    z.p = p;
    for (const auto& [i, v] : entries) z.entries.push_back({i, v});
    return z;
}

double code_inner(const SparseCode& a, const SparseCode& b) {
    double s = 0.0;
    for (const auto& e : a.entries) s += e.value * b.value_at(e.index);
    return s;
}

} // namespace

TEST_CASE("is_modality_split") {
    Dictionary dict{Matrix::Identity(4, 4)};
    Vector e0 = Vector::Unit(4, 0), e1 = Vector::Unit(4, 1);

    std::vector<DecomposedPair> disjoint;
    disjoint.push_back(make_decomposed_pair(dict, e0, e1, code_of({{0, 1.0}}, 4),
                                            code_of({{1, 1.0}}, 4)));
    const SplitCheck ok = is_modality_split(disjoint);
    CHECK(ok.is_split);
    CHECK(ok.first_violation == -1);

    std::vector<DecomposedPair> shared = disjoint;
    shared.push_back(make_decomposed_pair(dict, e0, e0, code_of({{3, 1.0}}, 4),
                                          code_of({{3, 1.0}}, 4)));
    const SplitCheck bad = is_modality_split(shared);
    CHECK_FALSE(bad.is_split);
    CHECK(bad.first_violation == 1);
    CHECK(bad.shared_atom == 3);
}

TEST_CASE("augmentation follows the worked two-dimensional construction") {
    // W = [e1, y] with y = (0.6, 0.8); x = e1 uses atom 0, y uses atom 1.
    Dictionary dict;
    dict.atoms.resize(2, 2);
    dict.atoms << 1.0, 0.6, 0.0, 0.8;
    Vector x(2), y(2);
    x << 1.0, 0.0;
    y << 0.6, 0.8;
    std::vector<DecomposedPair> pairs{make_decomposed_pair(
        dict, x, y, code_of({{0, 1.0}}, 2), code_of({{1, 1.0}}, 2))};
    REQUIRE(pairs[0].residual_x <= 1e-12);
    REQUIRE(pairs[0].residual_y <= 1e-12);
    REQUIRE(pairs[0].xy_inner == Catch::Approx(0.6));

    const AugmentResult result = augment_split_dictionary(dict, pairs, 0.5);

    REQUIRE(result.atoms_added == 1);
    REQUIRE(result.dict.p() == 3);
    // Gram-Schmidt of y against e1 yields exactly e2.
    CHECK(result.dict.atoms(0, 2) == Catch::Approx(0.0).margin(1e-12));
    CHECK(result.dict.atoms(1, 2) == Catch::Approx(1.0).epsilon(1e-12));

    const auto& pair = result.pairs[0];
    REQUIRE(pair.z_y.entries.size() == 2);
    CHECK(pair.z_y.value_at(0) == Catch::Approx(0.6).epsilon(1e-12));
    CHECK(pair.z_y.value_at(2) == Catch::Approx(0.8).epsilon(1e-12));
    CHECK(pair.z_x.value_at(0) == Catch::Approx(1.0));
    CHECK(code_inner(pair.z_x, pair.z_y) == Catch::Approx(0.6).epsilon(1e-12));
    CHECK(pair.residual_x <= 1e-12);
    CHECK(pair.residual_y <= 1e-12);
}

TEST_CASE("collinear atoms merge instead of appending") {
    // Both atoms equal e1: the pair decomposes onto duplicated atoms.
    Dictionary dict;
    dict.atoms.resize(2, 2);
    dict.atoms << 1.0, 1.0, 0.0, 0.0;
    Vector x(2), y(2);
    x << 1.0, 0.0;
    y << 1.0, 0.0;
    std::vector<DecomposedPair> pairs{make_decomposed_pair(
        dict, x, y, code_of({{0, 1.0}}, 2), code_of({{1, 1.0}}, 2))};

    const AugmentResult result = augment_split_dictionary(dict, pairs, 0.5);
    CHECK(result.atoms_added == 0);
    const auto& pair = result.pairs[0];
    REQUIRE(pair.z_y.entries.size() == 1);
    CHECK(pair.z_y.value_at(0) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(pair.residual_y <= 1e-12);
    CHECK(code_inner(pair.z_x, pair.z_y) > 0.0);
}

TEST_CASE("augmentation guarantees hold on random split instances") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        SynthSpec spec;
        spec.regime = Regime::split;
        spec.d = 16;
        spec.p_true = 16;
        spec.s = 3; // K
        spec.n_pairs = 5;
        spec.c_target = 0.3;
        spec.seed = 1000 + seed;
        const SynthData data = generate(spec);
        const auto pairs = truth_pairs(data.truth, data.ds);
        REQUIRE(is_modality_split(pairs).is_split);

        Dictionary dict{data.truth.dictionary};
        const AugmentResult result = augment_split_dictionary(dict, pairs, spec.c_target);

        REQUIRE(result.atoms_added <= spec.n_pairs);
        REQUIRE(result.dict.p() <= spec.p_true + spec.n_pairs);
        result.dict.validate(1e-8);

        for (std::size_t n = 0; n < result.pairs.size(); ++n) {
            const auto& before = pairs[n];
            const auto& after = result.pairs[n];
            // Strictly positive paired-code inner product with the proof's bound.
            double l1x = 0.0, l1y = 0.0;
            for (const auto& e : before.z_x.entries) l1x += e.value;
            for (const auto& e : before.z_y.entries) l1y += e.value;
            const double inner = code_inner(after.z_x, after.z_y);
            REQUIRE(inner > 0.0);
            // Reconstruction stays exact and sparsity grows by at most one.
            REQUIRE(after.residual_x <= before.residual_x + 1e-9);
            REQUIRE(after.residual_y <= before.residual_y + 1e-9);
            REQUIRE(after.z_y.entries.size() <= static_cast<std::size_t>(spec.s) + 1);
            REQUIRE(after.z_x.entries.size() == before.z_x.entries.size());
            for (std::size_t e = 0; e < after.z_x.entries.size(); ++e) {
                REQUIRE(after.z_x.entries[e].index == before.z_x.entries[e].index);
                REQUIRE(after.z_x.entries[e].value == before.z_x.entries[e].value);
            }
            for (const auto& e : after.z_y.entries) REQUIRE(e.value > 0.0);
        }
    }
}

TEST_CASE("augmentation rejects violated preconditions") {
    Dictionary dict{Matrix::Identity(3, 3)};
    Vector e0 = Vector::Unit(3, 0), e1 = Vector::Unit(3, 1);

    SECTION("non-positive c") {
        CHECK_THROWS_AS(augment_split_dictionary(dict, {}, 0.0), argument_error);
    }
    SECTION("shared support") {
        std::vector<DecomposedPair> pairs{make_decomposed_pair(
            dict, e0, e0, code_of({{0, 1.0}}, 3), code_of({{0, 1.0}}, 3))};
        CHECK_THROWS_AS(augment_split_dictionary(dict, pairs, 0.5), argument_error);
    }
    SECTION("insufficient alignment") {
        std::vector<DecomposedPair> pairs{make_decomposed_pair(
            dict, e0, e1, code_of({{0, 1.0}}, 3), code_of({{1, 1.0}}, 3))};
        // <e0, e1> = 0 <= c
        CHECK_THROWS_AS(augment_split_dictionary(dict, pairs, 0.5), argument_error);
    }
    SECTION("sloppy decomposition") {
        Vector off(3);
        off << 0.9, 0.3, 0.0; // not reconstructed by code {(0,1)}
        std::vector<DecomposedPair> pairs{make_decomposed_pair(
            dict, off, e1, code_of({{0, 1.0}}, 3), code_of({{1, 1.0}}, 3))};
        pairs[0].xy_inner = 0.9; // force past the alignment check
        CHECK_THROWS_AS(augment_split_dictionary(dict, pairs, 0.5), argument_error);
    }
    SECTION("non-unit dictionary column") {
        Dictionary bad{2.0 * Matrix::Identity(3, 3)};
        CHECK_THROWS_AS(augment_split_dictionary(bad, {}, 0.5), data_error);
    }
}
