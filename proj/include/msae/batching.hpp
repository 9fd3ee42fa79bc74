// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic shuffled batching. Each epoch is a fresh Fisher-Yates
// permutation of all pair indices, emitted in consecutive chunks of
// batch_size (the last chunk may be short). Identical (seed, batch_size)
// always reproduce the identical sequence of index sets.

#include <cstdint>
#include <numeric>
#include <vector>

#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/rng.hpp"

namespace msae {

class BatchIterator {
public:
    BatchIterator(std::size_t n_pairs, std::size_t batch_size, std::uint64_t seed,
                  bool shuffle = true)
        : n_pairs_(n_pairs), batch_size_(batch_size), shuffle_(shuffle), rng_(seed) {
        if (batch_size_ == 0) throw argument_error("batch_size must be >= 1");
        if (n_pairs_ == 0) throw argument_error("cannot batch an empty dataset");
        order_.resize(n_pairs_);
        start_epoch();
    }

    /// Index set of the next batch; rolls into a reshuffled epoch at the end.
    std::vector<std::size_t> next() {
        if (cursor_ >= n_pairs_) start_epoch();
        const std::size_t take = std::min(batch_size_, n_pairs_ - cursor_);
        std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                       order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
        cursor_ += take;
        return batch;
    }

    std::size_t batches_per_epoch() const {
        return (n_pairs_ + batch_size_ - 1) / batch_size_;
    }

private:
    void start_epoch() {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (shuffle_) rng_.shuffle(order_);
        cursor_ = 0;
    }

    std::size_t n_pairs_;
    std::size_t batch_size_;
    bool shuffle_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

inline BatchIterator make_batches(const PairedDataset& ds, std::size_t batch_size,
                                  std::uint64_t seed) {
    return BatchIterator(static_cast<std::size_t>(ds.n_pairs()), batch_size, seed);
}

} // namespace msae
