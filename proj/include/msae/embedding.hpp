// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ingestion of paired multimodal embedding datasets.
//
// MEB file layout (all integers little-endian):
//
//   "MEB1" | u32 version = 1 | u32 n_samples | u32 d | u8 dtype (0 = f32)
//   | 3 pad bytes | payload: n_samples * d f32, row-major
//
// Rows are L2-normalized at load time; the file itself may hold raw,
// unnormalized vectors. Bytes after the payload are ignored, which lets
// dictionary exports carry a trailing TOML blob while staying valid MEB.
//
// A pairing manifest is a TOML file:
//
//   [side_a]
//   path = "images.meb"
//   modality = "image"
//   [side_b]
//   path = "captions.meb"
//   modality = "text"
//
// Relative paths resolve against the manifest's directory.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "msae/binio.hpp"
#include "msae/errors.hpp"
#include "msae/toml.hpp"

namespace msae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EmbeddingMatrix {
    Matrix data;          // n_samples x d, one sample per row
    std::string modality; // e.g. "image", "text", "audio"

    Eigen::Index n_samples() const { return data.rows(); }
    Eigen::Index d() const { return data.cols(); }
};

struct PairedDataset {
    EmbeddingMatrix side_a;
    EmbeddingMatrix side_b;

    Eigen::Index n_pairs() const { return side_a.n_samples(); }
};

namespace detail {

// Rows already unit to within 1e-7 are left untouched so that a
// save -> load -> save cycle reproduces the payload byte for byte.
inline void normalize_rows_checked(Matrix& m, const std::string& path) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!std::isfinite(m(r, c)))
                throw data_error("non-finite value in '" + path + "' at row " +
                                 std::to_string(r));
        }
        const double norm = m.row(r).norm();
        if (norm == 0.0)
            throw data_error("zero-norm row " + std::to_string(r) + " in '" + path + "'");
        if (std::abs(norm - 1.0) > 1e-7) m.row(r) /= norm;
    }
}

} // namespace detail

/// Loads an MEB file and returns its rows L2-normalized.
inline EmbeddingMatrix load_embeddings(const std::string& path,
                                       std::optional<Eigen::Index> expect_d = std::nullopt,
                                       std::string modality = "") {
    auto in = binio::open_input(path);
    binio::expect_magic(in, "MEB1", path);
    const std::uint32_t version = binio::read_u32(in, "version");
    if (version != 1)
        throw format_error("unsupported MEB version " + std::to_string(version) +
                           " in '" + path + "'");
    const std::uint32_t n = binio::read_u32(in, "n_samples");
    const std::uint32_t d = binio::read_u32(in, "d");
    unsigned char dtype_and_pad[4];
    binio::read_bytes(in, dtype_and_pad, 4, "dtype");
    if (dtype_and_pad[0] != 0)
        throw format_error("unsupported MEB dtype " + std::to_string(dtype_and_pad[0]) +
                           " in '" + path + "'");
    if (n == 0 || d == 0)
        throw format_error("empty MEB file '" + path + "' (n_samples and d must be >= 1)");
    if (expect_d && static_cast<Eigen::Index>(d) != *expect_d)
        throw shape_error("'" + path + "' has d=" + std::to_string(d) + ", expected d=" +
                          std::to_string(*expect_d));

    EmbeddingMatrix out;
    out.modality = std::move(modality);
    out.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::uint32_t r = 0; r < n; ++r)
        for (std::uint32_t c = 0; c < d; ++c)
            out.data(r, c) = static_cast<double>(binio::read_f32(in, "payload"));
    detail::normalize_rows_checked(out.data, path);
    return out;
}

/// Writes rows as f32. `trailing_toml`, when nonempty, is appended after the
/// payload (used for dictionary exports; loaders ignore it).
inline void save_embeddings(const EmbeddingMatrix& m, const std::string& path,
                            const std::string& trailing_toml = "") {
    auto out = binio::open_output(path);
    binio::write_magic(out, "MEB1");
    binio::write_u32(out, 1);
    binio::write_u32(out, static_cast<std::uint32_t>(m.n_samples()));
    binio::write_u32(out, static_cast<std::uint32_t>(m.d()));
    const unsigned char dtype_and_pad[4] = {0, 0, 0, 0};
    binio::write_bytes(out, dtype_and_pad, 4);
    for (Eigen::Index r = 0; r < m.n_samples(); ++r)
        for (Eigen::Index c = 0; c < m.d(); ++c)
            binio::write_f32(out, static_cast<float>(m.data(r, c)));
    if (!trailing_toml.empty()) binio::write_bytes(out, trailing_toml.data(), trailing_toml.size());
}

/// Builds a PairedDataset from two already-loaded sides, enforcing the
/// pairing invariants.
inline PairedDataset make_paired(EmbeddingMatrix side_a, EmbeddingMatrix side_b) {
    if (side_a.n_samples() != side_b.n_samples())
        throw data_error("pairing error: side_a has " + std::to_string(side_a.n_samples()) +
                         " rows, side_b has " + std::to_string(side_b.n_samples()));
    if (side_a.d() != side_b.d())
        throw shape_error("pairing error: side_a d=" + std::to_string(side_a.d()) +
                          " differs from side_b d=" + std::to_string(side_b.d()));
    if (side_a.modality == side_b.modality)
        throw config_error("manifest error: both sides declare modality '" +
                           side_a.modality + "'");
    return PairedDataset{std::move(side_a), std::move(side_b)};
}

inline PairedDataset load_paired(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f)
        throw config_error("cannot open manifest '" + manifest_path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const toml::Table manifest = toml::parse(text);

    const auto base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    EmbeddingMatrix a = load_embeddings(resolve(manifest.get_string("side_a.path")),
                                        std::nullopt, manifest.get_string("side_a.modality"));
    EmbeddingMatrix b = load_embeddings(resolve(manifest.get_string("side_b.path")),
                                        std::nullopt, manifest.get_string("side_b.modality"));
    return make_paired(std::move(a), std::move(b));
}

/// Contiguous slice [begin, begin+count) of a dataset; pairing is preserved.
inline PairedDataset subset(const PairedDataset& ds, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 1 || begin + count > ds.n_pairs())
        throw argument_error("subset range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of bounds for " +
                             std::to_string(ds.n_pairs()) + " pairs");
    PairedDataset out;
    out.side_a.modality = ds.side_a.modality;
    out.side_b.modality = ds.side_b.modality;
    out.side_a.data = ds.side_a.data.middleRows(begin, count);
    out.side_b.data = ds.side_b.data.middleRows(begin, count);
    return out;
}

} // namespace msae
