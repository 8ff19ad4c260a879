#pragma once

#include "stnce/kernels.hpp"

namespace stnce {

inline constexpr int kMaxTimeRetries = 100;

/// One tuple per clean datum: t ~ U[0,1] (t in {0,1} for the reference-swap
/// kernel), x = interpolate(x0, z, t), t' from the kernel's time rule, x' from
/// the kernel. Rows violating the forward-reverse time floor or gap get a
/// fresh t.
PairBatch sample_pairs_default(const GmmTarget& target, const PerturbationKernel& kernel, int n, Rng& rng,
                               const ScoreFn& score = {});

/// Two tuples per clean datum sharing the interpolation noise: (t0 -> t1) and
/// (t1 -> t0). Forward-reverse kernels order t0 < t1, draw x0 by noising x1
/// and emit (x1, t1, x0, t0) and (x0, t0, x0', t1). Returns 2n rows.
PairBatch sample_pairs_reuse(const GmmTarget& target, const PerturbationKernel& kernel, int n, Rng& rng,
                             const ScoreFn& score = {});

PairBatch sample_pairs(Scheme scheme, const GmmTarget& target, const PerturbationKernel& kernel, int n, Rng& rng,
                       const ScoreFn& score = {});

}  // namespace stnce
