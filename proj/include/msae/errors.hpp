// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace msae {

/// Base class for every error this library throws.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad CLI flags, malformed or missing manifests, inconsistent TrainConfig.
/// CLI maps these to exit code 1.
class config_error : public error {
public:
    using error::error;
};

/// Bad function arguments (k out of range, empty task, probability outside
/// [0,1], ...). CLI maps these to exit code 1.
class argument_error : public error {
public:
    using error::error;
};

/// Binary file violations: bad magic, unsupported version/dtype, truncation.
/// CLI maps these to exit code 2.
class format_error : public error {
public:
    using error::error;
};

/// Dimension mismatches between tensors, codes, or files. Exit code 2.
class shape_error : public error {
public:
    using error::error;
};

/// Invalid data content: non-finite values, zero-norm rows, pair-count
/// mismatches. Exit code 2.
class data_error : public error {
public:
    using error::error;
};

/// Non-finite losses, gradients, or parameter updates. Exit code 3.
class numeric_error : public error {
public:
    using error::error;
};

/// A guaranteed internal invariant failed; indicates violated preconditions
/// or a bug, never bad user input.
class internal_error : public error {
public:
    using error::error;
};

} // namespace msae
