#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "satbh/model.hpp"
#include "satbh/sparsity.hpp"
#include "satbh/wmmse.hpp"

namespace satbh {

// One slot of the solution-return phase: fixed discrete targets g, minimize
// (1 + rho_hw psi_n) P_n subject to SINR targets, per-beam caps and the
// psi-weighted activity cap.
struct PspInstance {
    CMat H;                // N x M
    RVec g;                // linear SINR targets, 0 = not served
    RVec pmax;             // per-beam caps
    int kt = 1;            // illumination budget
    double rho_hw = 0.0;
    RVec psi;              // initial reweighting weights (ones per Alg. init)
    RVec sigma2;
    double activity_threshold = 1e-6;

    std::vector<int> served() const {
        std::vector<int> s;
        for (int m = 0; m < g.size(); ++m)
            if (g(m) > 0) s.push_back(m);
        return s;
    }
};

struct PspOptions {
    int fp_max_iters = 3000;
    double fp_tol = 1e-11;
    int price_max_iters = 120;
    double cap_rel_tol = 1e-8;
    int reweight_max_iters = 30;
    double obj_tol = 1e-5;
    double eps0 = 1e-6;
    double eps_min = 1e-12;
};

namespace detail_psp {

// Uplink-downlink duality fixed point for min sum_n beta_n P_n subject to
// SINR_m >= g_m over the served users. Channels pre-normalized to unit noise.
// Diverging uplink powers certify infeasibility.
inline CMat weighted_power_min(const CMat& H, const std::vector<int>& served,
                               const RVec& g, const RVec& sigma2, const RVec& beta,
                               const PspOptions& opt) {
    const int n_beams = static_cast<int>(H.rows());
    const int n_users = static_cast<int>(H.cols());
    CMat W = CMat::Zero(n_beams, n_users);
    if (served.empty()) return W;

    std::vector<CVec> hn;  // noise-normalized channels of served users
    for (int m : served) hn.push_back(H.col(m) / std::sqrt(sigma2(m)));
    const int ms = static_cast<int>(served.size());

    CMat Sigma = CMat::Zero(n_beams, n_beams);
    Sigma.diagonal() = beta.cast<std::complex<double>>();
    RVec nu = RVec::Zero(ms);
    double change = 1.0;
    for (int it = 0; it < opt.fp_max_iters && change > opt.fp_tol; ++it) {
        change = 0.0;
        for (int i = 0; i < ms; ++i) {
            CMat Sigma_minus = Sigma - nu(i) * (hn[i] * hn[i].adjoint());
            double val = std::real(hn[i].dot(Sigma_minus.ldlt().solve(hn[i])));
            if (val <= 0) throw InfeasibleError("psp: SINR targets unattainable");
            double nu_new = g(served[i]) / val;
            change = std::max(change, std::abs(nu_new - nu(i)) / std::max(1.0, nu_new));
            Sigma = Sigma_minus + nu_new * (hn[i] * hn[i].adjoint());
            nu(i) = nu_new;
        }
        if (nu.sum() > 1e14)
            throw InfeasibleError("psp: SINR targets unattainable (dual powers diverge)");
    }

    std::vector<CVec> v(ms);
    auto solver = Sigma.ldlt();
    for (int i = 0; i < ms; ++i) {
        v[i] = solver.solve(hn[i]);
        v[i].normalize();
    }

    // Downlink powers meeting every target with equality.
    RMat A = RMat::Zero(ms, ms);
    for (int i = 0; i < ms; ++i)
        for (int j = 0; j < ms; ++j) {
            double gain = std::norm(hn[i].dot(v[j]));
            A(i, j) = (i == j) ? gain / g(served[i]) : -gain;
        }
    RVec q = A.partialPivLu().solve(RVec::Ones(ms));
    for (int i = 0; i < ms; ++i)
        if (!(q(i) > 0) || !std::isfinite(q(i)))
            throw InfeasibleError("psp: SINR targets unattainable (negative powers)");
    for (int i = 0; i < ms; ++i) W.col(served[i]) = std::sqrt(q(i)) * v[i];
    return W;
}

}  // namespace detail_psp

struct InnerPowerMinResult {
    CMat W;
    bool activity_cap_met = true;  // relaxed psi-weighted cap
};

// SINR-constrained weighted power minimization with caps handled by
// multiplicative price adjustment folded into the beta weights. When
// `enforce_activity` is set the psi-weighted cap is priced as well; an
// unattainable activity cap is reported rather than fatal (the outer
// reweighting and final integer selection resolve it).
inline InnerPowerMinResult inner_power_min_priced(const PspInstance& inst, const RVec& psi,
                                                  bool enforce_activity,
                                                  const PspOptions& opt = {}) {
    const auto served = inst.served();
    if (served.empty()) return {CMat::Zero(inst.H.rows(), inst.H.cols()), true};
    for (int m : served)
        if (inst.g(m) <= 0) throw ContractViolation("psp: nonpositive target for served user");

    const int n_beams = static_cast<int>(inst.H.rows());
    RVec base = RVec::Ones(n_beams) + inst.rho_hw * psi;
    RVec price = RVec::Zero(n_beams);
    double price_act = 0.0;

    CMat best_W;
    double best_obj = std::numeric_limits<double>::infinity();
    bool found = false, act_ok_best = false;

    for (int it = 0; it < opt.price_max_iters; ++it) {
        RVec beta = base + price + price_act * psi;
        CMat W = detail_psp::weighted_power_min(inst.H, served, inst.g, inst.sigma2, beta, opt);
        RVec P = beam_powers(W);
        bool caps_ok = true;
        for (int n = 0; n < n_beams; ++n)
            caps_ok = caps_ok && P(n) <= inst.pmax(n) * (1.0 + opt.cap_rel_tol);
        double act = P.dot(psi);
        bool act_ok = !enforce_activity || act <= inst.kt * (1.0 + opt.cap_rel_tol);

        double obj = base.dot(P);
        if (caps_ok) {
            if (!found || (act_ok && !act_ok_best) || (act_ok == act_ok_best && obj < best_obj)) {
                best_W = W;
                best_obj = obj;
                found = true;
                act_ok_best = act_ok;
            }
        }
        bool adjusted = false;
        for (int n = 0; n < n_beams; ++n) {
            if (P(n) > inst.pmax(n) * (1.0 + opt.cap_rel_tol)) {
                price(n) = std::max(price(n) * 1.6, 0.05 * base(n));
                adjusted = true;
            } else if (price(n) > 0 && P(n) < 0.9 * inst.pmax(n)) {
                price(n) *= 0.7;
                if (price(n) < 1e-9 * base(n)) price(n) = 0.0;
                adjusted = true;
            }
        }
        if (enforce_activity) {
            if (act > inst.kt * (1.0 + opt.cap_rel_tol)) {
                price_act = std::max(price_act * 1.6, 0.05);
                adjusted = true;
            } else if (price_act > 0 && act < 0.9 * inst.kt) {
                price_act *= 0.7;
                if (price_act < 1e-9) price_act = 0.0;
                adjusted = true;
            }
        }
        if (!adjusted) break;
        if (price.size() > 0 && price.maxCoeff() > 1e9)
            throw InfeasibleError("psp: per-beam power caps unattainable");
        if (price_act > 1e9) {
            // activity cap unreachable at these weights; report best capped-power W
            if (found) return {best_W, false};
            throw InfeasibleError("psp: activity cap unattainable");
        }
    }
    if (!found) throw InfeasibleError("psp: caps unattainable for the given targets");
    return {best_W, act_ok_best || !enforce_activity};
}

// Public single solve with the instance's own weights.
inline CMat inner_power_min(const PspInstance& inst, const PspOptions& opt = {}) {
    return inner_power_min_priced(inst, inst.psi, true, opt).W;
}

struct PspResult {
    CMat W;
    std::vector<bool> active;
    double objective = 0.0;  // transmit + hardware power for this slot
};

namespace detail_psp {

// Plain power minimization restricted to a beam subset (activity resolved).
inline CMat restricted_power_min(const PspInstance& inst, const std::vector<int>& keep,
                                 const PspOptions& opt) {
    PspInstance sub = inst;
    sub.H = CMat(keep.size(), inst.H.cols());
    sub.pmax = RVec(keep.size());
    sub.psi = RVec::Ones(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        sub.H.row(i) = inst.H.row(keep[i]);
        sub.pmax(i) = inst.pmax(keep[i]);
    }
    sub.rho_hw = 0.0;
    auto r = inner_power_min_priced(sub, RVec::Zero(keep.size()), false, opt);
    CMat W = CMat::Zero(inst.H.rows(), inst.H.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) W.row(keep[i]) = r.W.row(i);
    return W;
}

// Rounding in a rescale can leave a beam power one ulp above its cap; nudge
// the offending rows until the inequality holds exactly in floating point.
inline void clamp_caps_exact(CMat& W, const RVec& pmax) {
    for (int n = 0; n < W.rows(); ++n)
        while (W.row(n).squaredNorm() > pmax(n)) W.row(n) *= (1.0 - 1e-15);
}

}  // namespace detail_psp

// Alg.-style reweighted loop: weighted solves alternate with psi updates until
// the activity pattern stabilizes, then the integer beam count is enforced by
// hard selection (rank by converged power, ties by channel strength) and a
// final plain power-min on the surviving beams.
inline PspResult solve_psp(const PspInstance& inst, const PspOptions& opt = {}) {
    const int n_beams = static_cast<int>(inst.H.rows());
    PspResult res;
    res.active.assign(n_beams, false);
    const auto served = inst.served();
    if (served.empty()) {
        res.W = CMat::Zero(n_beams, inst.H.cols());
        return res;
    }

    RVec psi = inst.psi.size() == n_beams ? inst.psi : RVec::Ones(n_beams);
    double eps = opt.eps0;
    CMat W;
    std::vector<bool> pattern(n_beams, false), prev_pattern(n_beams, true);
    double prev_obj = std::numeric_limits<double>::infinity();
    for (int k = 0; k < opt.reweight_max_iters; ++k) {
        W = inner_power_min_priced(inst, psi, true, opt).W;
        RVec P = beam_powers(W);
        double obj = P.sum();
        for (int n = 0; n < n_beams; ++n) pattern[n] = P(n) > inst.activity_threshold;
        psi = update_weights(P, eps);
        eps = std::max(eps / 2.0, opt.eps_min);
        if (pattern == prev_pattern && std::abs(obj - prev_obj) < opt.obj_tol * std::max(1.0, obj))
            break;
        prev_pattern = pattern;
        prev_obj = obj;
    }

    RVec P = beam_powers(W);
    int count = 0;
    for (int n = 0; n < n_beams; ++n)
        if (P(n) > inst.activity_threshold) ++count;

    // channel-strength tie-break, also the fallback ranking
    RVec strength = inst.H.cwiseAbs2().rowwise().sum();
    std::vector<int> order(n_beams);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (P(a) != P(b)) return P(a) > P(b);
        return strength(a) > strength(b);
    });

    // finish one restricted candidate: plain power-min on the subset, tighten,
    // rescale under the caps, and price the surviving activity
    auto evaluate = [&](const std::vector<int>& keep_set, CMat& W_out, double& obj_out,
                        std::vector<bool>& act_out) -> bool {
        CMat Wc;
        try {
            Wc = detail_psp::restricted_power_min(inst, keep_set, opt);
        } catch (const InfeasibleError&) {
            return false;
        }
        Wc = tighten(Wc, inst.g, inst.H, inst.sigma2);
        for (int n = 0; n < n_beams; ++n) {
            double p = beam_power(Wc, n);
            if (p > inst.pmax(n)) Wc *= std::sqrt(inst.pmax(n) / p);
        }
        detail_psp::clamp_caps_exact(Wc, inst.pmax);
        RVec Pc = beam_powers(Wc);
        int cnt = 0;
        std::vector<bool> act(n_beams, false);
        for (int n = 0; n < n_beams; ++n) {
            act[n] = Pc(n) > inst.activity_threshold;
            if (act[n]) ++cnt;
        }
        if (cnt > inst.kt) return false;
        W_out = std::move(Wc);
        obj_out = Pc.sum() + inst.rho_hw * cnt;
        act_out = std::move(act);
        return true;
    };

    // the converged pattern gives the beam ranking; search the count downwards
    // as well, since hardware power can make a sparser subset cheaper overall
    const int k_hi =
        std::max(1, std::min({count, static_cast<int>(inst.kt), n_beams}));
    bool found = false;
    double best_obj = std::numeric_limits<double>::infinity();
    CMat best_W;
    std::vector<bool> best_act;
    for (int k = 1; k <= k_hi; ++k) {
        std::vector<int> keep(order.begin(), order.begin() + k);
        std::sort(keep.begin(), keep.end());
        CMat Wc;
        double obj = 0.0;
        std::vector<bool> act;
        if (evaluate(keep, Wc, obj, act) && (!found || obj < best_obj)) {
            found = true;
            best_obj = obj;
            best_W = std::move(Wc);
            best_act = std::move(act);
        }
    }
    if (!found) {
        // fall back on a pure channel-strength ranking at the full budget
        std::vector<int> alt(order.begin(), order.end());
        std::stable_sort(alt.begin(), alt.end(),
                         [&](int a, int b) { return strength(a) > strength(b); });
        alt.resize(std::min<int>(static_cast<int>(inst.kt), n_beams));
        std::sort(alt.begin(), alt.end());
        CMat Wc;
        double obj = 0.0;
        std::vector<bool> act;
        if (evaluate(alt, Wc, obj, act)) {
            found = true;
            best_obj = obj;
            best_W = std::move(Wc);
            best_act = std::move(act);
        }
    }
    if (!found && count <= inst.kt) {
        // the reweighted solution itself already satisfies the budget
        W = tighten(W, inst.g, inst.H, inst.sigma2);
        for (int n = 0; n < n_beams; ++n) {
            double p = beam_power(W, n);
            if (p > inst.pmax(n)) W *= std::sqrt(inst.pmax(n) / p);
        }
        detail_psp::clamp_caps_exact(W, inst.pmax);
        RVec Pc = beam_powers(W);
        int cnt = 0;
        best_act.assign(n_beams, false);
        for (int n = 0; n < n_beams; ++n) {
            best_act[n] = Pc(n) > inst.activity_threshold;
            if (best_act[n]) ++cnt;
        }
        if (cnt <= inst.kt) {
            found = true;
            best_W = std::move(W);
            best_obj = Pc.sum() + inst.rho_hw * cnt;
        }
    }
    if (!found) throw InfeasibleError("psp: no feasible beam subset within the activity cap");

    res.W = std::move(best_W);
    res.active = std::move(best_act);
    res.objective = best_obj;
    return res;
}

}  // namespace satbh
