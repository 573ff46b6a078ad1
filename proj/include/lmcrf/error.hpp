/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/error.hpp
 *
 * Copyright 2026 The lmcrf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#ifndef LMCRF_ERROR_HPP
#define LMCRF_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lmcrf {

/// Bad shapes, out-of-range indices, non-finite inputs.
class InvalidArgument : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/**
 * Numerical failure, e.g. a covariance below the eigenvalue floor or a
 * Cholesky breakdown. For factorization failures, pivot() is the index of the
 * failing diagonal element; otherwise it is npos.
 */
class NumericalError : public std::runtime_error
{
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    explicit NumericalError(const std::string& what, std::size_t pivot = npos)
        : std::runtime_error(what), pivot_(pivot)
    {
    }

    std::size_t pivot() const noexcept { return pivot_; }

private:
    std::size_t pivot_;
};

/// Shape fitting was asked to solve a problem with fewer equations than unknowns.
class UnderdeterminedProblem : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by I/O helpers for unreadable or malformed files.
class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw InvalidArgument(message);
    }
}

} // namespace detail

} // namespace lmcrf

#endif // LMCRF_ERROR_HPP
