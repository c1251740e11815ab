// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <complex>

namespace mimodl {

template <class Real> using Cplx = std::complex<Real>;
template <class Real>
using MatC = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
template <class Real>
using VecC = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;
template <class Real>
using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <class Real>
using VecR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

}  // namespace mimodl
