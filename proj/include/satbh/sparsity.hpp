#pragma once

#include <cmath>

#include "satbh/scenario.hpp"

namespace satbh {

// Reweighted-l1 surrogate machinery for the beam-activity l0 count.
struct ReweightState {
    RMat psi;           // N x T positive weights
    double epsilon;     // smoothing scalar, continuation-halved per outer pass
    int iteration = 0;

    static ReweightState ones(int n_beams, int n_slots, double eps = 1e-6) {
        return {RMat::Ones(n_beams, n_slots), eps, 0};
    }
};

// psi = (P^2 + eps)^(-1/2), elementwise.
inline RMat update_weights(const RMat& P, double epsilon) {
    if (epsilon <= 0) throw ContractViolation("update_weights: epsilon must be > 0");
    if ((P.array() < 0).any()) throw ContractViolation("update_weights: negative power");
    return (P.array().square() + epsilon).rsqrt().matrix();
}

inline RVec update_weights(const RVec& P, double epsilon) {
    if (epsilon <= 0) throw ContractViolation("update_weights: epsilon must be > 0");
    if ((P.array() < 0).any()) throw ContractViolation("update_weights: negative power");
    return (P.array().square() + epsilon).rsqrt().matrix();
}

// Relaxed beam count sum_n psi_n P_n; each term lies in [0, 1) at the
// reweighting fixed point.
inline double weighted_activity(const RVec& P, const RVec& psi) {
    if (P.size() != psi.size()) throw ContractViolation("weighted_activity: size mismatch");
    return P.dot(psi);
}

}  // namespace satbh
