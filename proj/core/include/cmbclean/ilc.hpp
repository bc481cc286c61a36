#pragma once

#include <array>
#include <optional>

#include "cmbclean/healpix.hpp"

namespace cmbclean::ilc {

using healpix::MaskMap;
using healpix::SkyMap;

struct ILCWeights {
    std::vector<double> w;  // one per channel, sums to 1
};

// Minimum-variance unit-sum weights: w = C^-1 e / (e^T C^-1 e) with C the
// empirical channel covariance over (optionally masked) pixels after
// per-channel mean removal. A small ridge is added if C is ill-conditioned.
ILCWeights ilc_weights(const SkyMap& x, const MaskMap* mask = nullptr);

// output(p) = sum_i w_i x_i(p)
SkyMap ilc_clean(const SkyMap& x, const ILCWeights& weights);

}  // namespace cmbclean::ilc
