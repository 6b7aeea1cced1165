// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace langarith {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad caller-supplied value (λ out of range, keep fraction, grid spec, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated checkpoint container.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures (open, read, write).
class IoError : public Error {
public:
    using Error::Error;
};

/// Tensor maps or deltas that cannot be combined (names, shapes, fingerprints).
class CompatError : public Error {
public:
    using Error::Error;
};

/// FP16 conversion of a finite value beyond the FP16 range.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// External evaluator could not produce a usable score.
class EvaluatorError : public Error {
public:
    using Error::Error;
};

} // namespace langarith
