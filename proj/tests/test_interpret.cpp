// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "msae/interpret.hpp"
#include "test_support.hpp"

using namespace msae;

namespace {

VocabBank make_vocab(const Matrix& rows, std::vector<std::string> terms) {
    VocabBank bank;
    bank.terms = std::move(terms);
    bank.term_embeddings.modality = "text";
    bank.term_embeddings.data = rows;
    return bank;
}

} // namespace

TEST_CASE("name_concepts picks the most similar term") {
    Matrix vocab_rows(2, 2);
    vocab_rows << 1, 0, 0, 1;
    const VocabBank vocab = make_vocab(vocab_rows, {"cat", "dog"});

    SaeParams params = test_support::identity_params(2);
    params.w_dec.col(0) << 0.9, 0.1;
    params.w_dec.col(0).normalize();

    const ConceptNaming naming = name_concepts(params, vocab);
    CHECK(vocab.terms[naming.term_index[0]] == "cat");

    SECTION("a column equal to a vocab row scores similarity 1") {
        params.w_dec.col(1) << 0, 1;
        const ConceptNaming n2 = name_concepts(params, vocab);
        CHECK(vocab.terms[n2.term_index[1]] == "dog");
        CHECK(n2.similarity(1) == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("dimension mismatch") {
        Matrix bad_rows(2, 3);
        bad_rows << 1, 0, 0, 0, 1, 0;
        CHECK_THROWS_AS(name_concepts(params, make_vocab(bad_rows, {"a", "b"})), shape_error);
    }
}

TEST_CASE("name_concepts matches the exhaustive argmax oracle") {
    Rng rng(101);
    const Eigen::Index d = 8, p = 100, v_count = 1000;
    SaeParams params = test_support::random_params(d, p, rng);
    Matrix vocab_rows(v_count, d);
    for (Eigen::Index r = 0; r < v_count; ++r)
        vocab_rows.row(r) = test_support::random_unit(d, rng).transpose();
    std::vector<std::string> terms;
    for (Eigen::Index t = 0; t < v_count; ++t) terms.push_back("term" + std::to_string(t));
    const VocabBank vocab = make_vocab(vocab_rows, std::move(terms));

    const ConceptNaming naming = name_concepts(params, vocab);
    for (Eigen::Index c = 0; c < p; ++c) {
        const Vector atom = params.w_dec.col(c).normalized();
        Eigen::Index best = 0;
        double best_score = vocab_rows.row(0).dot(atom);
        for (Eigen::Index t = 1; t < v_count; ++t) {
            const double score = vocab_rows.row(t).dot(atom);
            if (score > best_score) {
                best_score = score;
                best = t;
            }
        }
        REQUIRE(naming.term_index[static_cast<std::size_t>(c)] == static_cast<std::uint32_t>(best));
    }

    SECTION("invariant to positive rescaling of columns") {
        SaeParams scaled = params;
        scaled.w_dec *= 17.0;
        const ConceptNaming n2 = name_concepts(scaled, vocab);
        CHECK(n2.term_index == naming.term_index);
    }
}

TEST_CASE("probe_decompose ranks coefficients") {
    SECTION("identity dictionary reproduces probe coordinates") {
        const SaeParams params = test_support::identity_params(2);
        Vector probe(2);
        probe << 0.3, -0.2;
        const auto ranked = probe_decompose(params, probe, 2);
        REQUIRE(ranked.size() == 2);
        CHECK(ranked[0].neuron == 0);
        CHECK(ranked[0].coefficient == Catch::Approx(0.3));
        CHECK(ranked[1].neuron == 1);
        CHECK(ranked[1].coefficient == Catch::Approx(-0.2));
    }
    SECTION("probe orthogonal to every atom gives zero coefficients") {
        SaeParams params = test_support::identity_params(3);
        params.w_dec.col(2) << 1, 0, 0; // atoms span only e0, e1
        params.w_dec.col(1) << 1, 0, 0;
        params.w_dec.col(0) << 0, 1, 0;
        Vector probe(3);
        probe << 0, 0, 2.5;
        for (const auto& e : probe_decompose(params, probe, 3))
            CHECK(e.coefficient == 0.0);
    }
    SECTION("matches dense oracle and clips top_m") {
        Rng rng(7);
        const Eigen::Index d = 6, p = 12;
        const SaeParams params = test_support::random_params(d, p, rng);
        const Vector probe = 3.0 * test_support::random_unit(d, rng);
        const auto ranked = probe_decompose(params, probe, 99); // clipped to p
        REQUIRE(ranked.size() == static_cast<std::size_t>(p));
        Vector alpha(p);
        for (Eigen::Index c = 0; c < p; ++c)
            alpha(c) = params.w_dec.col(c).normalized().dot(probe);
        for (std::size_t i = 0; i < ranked.size(); ++i)
            REQUIRE(ranked[i].coefficient ==
                    Catch::Approx(alpha(ranked[i].neuron)).epsilon(1e-6).margin(1e-12));
        for (std::size_t i = 1; i < ranked.size(); ++i)
            REQUIRE(ranked[i - 1].coefficient >= ranked[i].coefficient);

        // Ranking is invariant to positive rescaling of the probe.
        const auto rescaled = probe_decompose(params, Vector(0.25 * probe), 99);
        for (std::size_t i = 0; i < ranked.size(); ++i)
            REQUIRE(rescaled[i].neuron == ranked[i].neuron);
    }
    SECTION("vocabulary names are attached when supplied") {
        const SaeParams params = test_support::identity_params(2);
        Matrix vocab_rows(2, 2);
        vocab_rows << 1, 0, 0, 1;
        const VocabBank vocab = make_vocab(vocab_rows, {"left", "up"});
        Vector probe(2);
        probe << 1.0, 0.5;
        const auto ranked = probe_decompose(params, probe, 1, &vocab);
        REQUIRE(ranked.size() == 1);
        CHECK(ranked[0].term == "left");
    }
    SECTION("non-finite probe is rejected") {
        const SaeParams params = test_support::identity_params(2);
        Vector probe(2);
        probe << 1.0, std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(probe_decompose(params, probe, 1), data_error);
    }
}

TEST_CASE("steer") {
    Rng rng(33);
    SaeParams params = test_support::random_params(3, 6, rng);
    params.b_pre_a.setZero();
    for (Eigen::Index c = 0; c < 6; ++c) params.w_dec.col(c).normalize();

    SECTION("delta 0 is the identity intervention") {
        const Vector x = test_support::random_unit(3, rng);
        const SparseCode z = encode(params, x, Side::a, 2);
        CHECK(steer(params, z, 4, 0.0, Side::a) == decode(params, z, Side::a));
    }
    SECTION("steering the empty code emits one atom") {
        SparseCode empty;
        empty.p = 6;
        const Vector out = steer(params, empty, 3, 1.0, Side::a);
        CHECK(out.isApprox(params.w_dec.col(3), 1e-15));
    }
    SECTION("negative delta clamps at zero and removes the neuron") {
        SparseCode z;
        z.p = 6;
        z.entries.push_back({2, 0.4});
        const SparseCode steered = steered_code(z, 2, -1.0, 6);
        CHECK(steered.entries.empty());
        CHECK(steer(params, z, 2, -1.0, Side::a) == params.b_pre_a);
    }
    SECTION("steering is linear in the effective delta") {
        const Vector x = test_support::random_unit(3, rng);
        const SparseCode z = encode(params, x, Side::a, 3);
        const Vector base = decode(params, z, Side::a);
        const double delta = 0.75;
        const Vector steered = steer(params, z, 5, delta, Side::a);
        CHECK((steered - base).isApprox(delta * params.w_dec.col(5), 1e-12));
    }
    SECTION("neuron out of range") {
        SparseCode z;
        z.p = 6;
        CHECK_THROWS_AS(steer(params, z, 6, 1.0, Side::a), argument_error);
    }
}
