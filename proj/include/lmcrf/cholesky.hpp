/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/cholesky.hpp
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

#ifndef LMCRF_CHOLESKY_HPP
#define LMCRF_CHOLESKY_HPP

#include "lmcrf/error.hpp"

#include "Eigen/Core"

#include <cmath>
#include <string>

namespace lmcrf {

/**
 * Dense lower Cholesky factor L of a symmetric positive definite matrix A = L L^T.
 *
 * Only the lower triangle of A is read. Breakdown (a non-positive or non-finite
 * pivot) throws NumericalError carrying the pivot index.
 */
class CholeskyFactor
{
public:
    explicit CholeskyFactor(const Eigen::MatrixXd& a) : lower_(Eigen::MatrixXd::Zero(a.rows(), a.cols()))
    {
        detail::require(a.rows() == a.cols(), "CholeskyFactor: matrix is not square");
        const Eigen::Index n = a.rows();
        for (Eigen::Index j = 0; j < n; ++j) {
            double pivot = a(j, j);
            for (Eigen::Index k = 0; k < j; ++k) {
                pivot -= lower_(j, k) * lower_(j, k);
            }
            if (!(pivot > 0.0) || !std::isfinite(pivot)) {
                throw NumericalError("Cholesky breakdown at pivot " + std::to_string(j) +
                                         " (value " + std::to_string(pivot) + "); matrix is not positive definite",
                                     static_cast<std::size_t>(j));
            }
            const double diag = std::sqrt(pivot);
            lower_(j, j) = diag;
            for (Eigen::Index i = j + 1; i < n; ++i) {
                double sum = a(i, j);
                for (Eigen::Index k = 0; k < j; ++k) {
                    sum -= lower_(i, k) * lower_(j, k);
                }
                lower_(i, j) = sum / diag;
            }
        }
    }

    const Eigen::MatrixXd& lower() const { return lower_; }
    Eigen::Index size() const { return lower_.rows(); }

    /// ln det A = 2 * sum ln L_kk.
    double log_determinant() const { return 2.0 * lower_.diagonal().array().log().sum(); }

    /// Solves L x = b.
    Eigen::VectorXd forward_substitute(const Eigen::VectorXd& b) const
    {
        check_rhs(b.size());
        const Eigen::Index n = size();
        Eigen::VectorXd x(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double sum = b(i);
            for (Eigen::Index k = 0; k < i; ++k) {
                sum -= lower_(i, k) * x(k);
            }
            x(i) = sum / lower_(i, i);
        }
        return x;
    }

    /// Solves L^T x = b.
    Eigen::VectorXd back_substitute(const Eigen::VectorXd& b) const
    {
        check_rhs(b.size());
        const Eigen::Index n = size();
        Eigen::VectorXd x(n);
        for (Eigen::Index i = n - 1; i >= 0; --i) {
            double sum = b(i);
            for (Eigen::Index k = i + 1; k < n; ++k) {
                sum -= lower_(k, i) * x(k);
            }
            x(i) = sum / lower_(i, i);
        }
        return x;
    }

    /// Solves A x = b.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return back_substitute(forward_substitute(b)); }

    /// A^{-1}, column by column.
    Eigen::MatrixXd inverse() const
    {
        const Eigen::Index n = size();
        Eigen::MatrixXd inv(n, n);
        for (Eigen::Index c = 0; c < n; ++c) {
            inv.col(c) = solve(Eigen::VectorXd::Unit(n, c));
        }
        // symmetrize away the rounding asymmetry
        return 0.5 * (inv + inv.transpose());
    }

private:
    void check_rhs(Eigen::Index rows) const
    {
        detail::require(rows == size(), "CholeskyFactor: right-hand side has wrong dimension");
    }

    Eigen::MatrixXd lower_;
};

} // namespace lmcrf

#endif // LMCRF_CHOLESKY_HPP
