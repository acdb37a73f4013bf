#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "satbh/model.hpp"
#include "satbh/modcod.hpp"
#include "satbh/scenario.hpp"

namespace satbh {

// Per-slot auxiliaries of the weighted-MSE reformulation: MMSE receive
// coefficients delta, MSE weights omega, and rate clamp variables alpha.
struct SlotAuxiliaries {
    CVec delta;   // per user, 0 when not served
    RVec omega;   // > 0
    RVec alpha;   // >= -R_L
};

// Everything a per-slot convex solve needs besides the precoder itself.
struct QcqpInputs {
    CMat H;                   // N x M channel
    RVec beta;                // per-beam power prices, 1 + rho_hw * psi
    RVec mu;                  // per-user dual prices >= 0
    RVec psi;                 // reweighting weights for the activity cap
    RVec pmax;                // per-beam power caps
    double kt = 0.0;          // weighted-activity cap
    RVec sigma2;              // per-user noise
    double xi_fit = 1.0;
    double r_max = 0.0;       // R_L
    std::vector<int> served;  // users with deadline >= this slot
};

struct QcqpOptions {
    int max_iters = 5000;
    double kkt_tol = 1e-6;
    int dykstra_max_iters = 200;
};

// Theta_m = (1/xi)|h_m^H w_m|^2 + sum_{j!=m} |h_m^H w_j|^2 + sigma^2.
inline double effective_cov(const CMat& H_t, const CMat& W_t, double sigma2,
                            double xi_fit, int m) {
    if (H_t.rows() != W_t.rows() || H_t.cols() != W_t.cols())
        throw ContractViolation("effective_cov: shape mismatch");
    const CVec h = H_t.col(m);
    double theta = sigma2;
    for (int j = 0; j < W_t.cols(); ++j) {
        double p = std::norm(h.dot(W_t.col(j)));
        theta += (j == m) ? p / xi_fit : p;
    }
    return theta;
}

// MMSE receive coefficient delta* = (1/sqrt(xi)) Theta^{-1} w_m^H h_m.
inline std::complex<double> delta_star(const CMat& H_t, const CMat& W_t, double sigma2,
                                       double xi_fit, int m) {
    double theta = effective_cov(H_t, W_t, sigma2, xi_fit, m);
    if (theta <= 0) throw ContractViolation("delta_star: degenerate Theta");
    return (1.0 / std::sqrt(xi_fit)) * std::conj(H_t.col(m).dot(W_t.col(m))) / theta;
}

// omega* = 1/e(delta*) = 1 + Gamma/xi.
inline double omega_star(double gamma, double xi_fit) {
    if (gamma < 0) throw ContractViolation("omega_star: negative SINR");
    return 1.0 + gamma / xi_fit;
}

// Quadratic-in-w MSE expression e_m(W, delta).
inline double mse_e(const CMat& W_t, std::complex<double> delta, const CMat& H_t,
                    double sigma2, double xi_fit, int m) {
    const CVec h = H_t.col(m);
    const double ad2 = std::norm(delta);
    double e = sigma2 * ad2 + 1.0;
    for (int j = 0; j < W_t.cols(); ++j) {
        double q = std::norm(h.dot(W_t.col(j)));
        e += ad2 * ((j == m) ? q / xi_fit : q);
    }
    e -= (2.0 / std::sqrt(xi_fit)) *
         std::real(std::conj(delta) * W_t.col(m).dot(h));
    return e;
}

// --- feasible-set projections -------------------------------------------

inline void project_beam_caps(CMat& W, const RVec& pmax) {
    for (int n = 0; n < W.rows(); ++n) {
        double p = W.row(n).squaredNorm();
        if (p > pmax(n)) W.row(n) *= std::sqrt(pmax(n) / p);
    }
}

// Projection onto { sum_n psi_n ||row_n||^2 <= kt }, optionally in a per-row
// metric sum_n d_n ||row_n||^2: rows scale as d_n/(d_n + lambda psi_n) with
// lambda from a scalar root find (d = ones recovers the Euclidean case).
inline void project_weighted_ball(CMat& W, const RVec& psi, double kt,
                                  const RVec& d = RVec()) {
    RVec r = W.rowwise().squaredNorm();
    double total = r.dot(psi);
    if (total <= kt) return;
    const bool metric = d.size() == W.rows();
    auto shrink = [&](int n, double lam) {
        double dn = metric ? d(n) : 1.0;
        return dn / (dn + lam * psi(n));
    };
    auto value = [&](double lam) {
        double s = 0.0;
        for (int n = 0; n < r.size(); ++n) {
            double f = shrink(n, lam);
            s += psi(n) * r(n) * f * f;
        }
        return s;
    };
    double lo = 0.0, hi = 1.0;
    while (value(hi) > kt) hi *= 2.0;
    for (int it = 0; it < 200 && (hi - lo) > 1e-15 * (1.0 + hi); ++it) {
        double mid = 0.5 * (lo + hi);
        (value(mid) > kt ? lo : hi) = mid;
    }
    double lam = 0.5 * (lo + hi);
    for (int n = 0; n < W.rows(); ++n) W.row(n) *= shrink(n, lam);
}

// Dykstra's alternating projections onto the intersection of the per-beam
// power balls and the psi-weighted total-power ball, optionally in a per-row
// metric (the beam-cap projection is radial per row, hence metric-invariant).
inline CMat project_feasible(const CMat& W0, const QcqpInputs& in,
                             int max_iters = 200, const RVec& d = RVec()) {
    CMat x = W0;
    CMat p = CMat::Zero(W0.rows(), W0.cols());
    CMat q = CMat::Zero(W0.rows(), W0.cols());
    for (int it = 0; it < max_iters; ++it) {
        CMat y = x + p;
        CMat y_proj = y;
        project_beam_caps(y_proj, in.pmax);
        p = y - y_proj;
        CMat z = y_proj + q;
        CMat z_proj = z;
        project_weighted_ball(z_proj, in.psi, in.kt, d);
        q = z - z_proj;
        double change = (z_proj - x).norm();
        x = z_proj;
        if (change <= 1e-13 * (1.0 + x.norm())) break;
    }
    return x;
}

// --- the convex per-slot subproblem -------------------------------------

namespace detail {

// alpha eliminated analytically: alpha_m = max(-R_L, k_m(W)).
inline double clamp_k(double omega, double e, double r_max) {
    return std::max(-r_max, (omega * e - std::log(omega) - 1.0) / std::log(2.0));
}

struct QcqpEval {
    double f;
    CMat grad;
};

inline QcqpEval eval_qcqp(const CMat& W, const QcqpInputs& in, const SlotAuxiliaries& aux) {
    QcqpEval out;
    out.grad = CMat::Zero(W.rows(), W.cols());
    out.f = 0.0;
    for (int n = 0; n < W.rows(); ++n) {
        out.f += in.beta(n) * W.row(n).squaredNorm();
        out.grad.row(n) = 2.0 * in.beta(n) * W.row(n);
    }
    const double ln2 = std::log(2.0);
    for (int m : in.served) {
        double e = mse_e(W, aux.delta(m), in.H, in.sigma2(m), in.xi_fit, m);
        double k = (aux.omega(m) * e - std::log(aux.omega(m)) - 1.0) / ln2;
        if (k <= -in.r_max) {
            out.f += in.mu(m) * -in.r_max;
            continue;  // clamp active: zero marginal pressure
        }
        out.f += in.mu(m) * k;
        const double scale = in.mu(m) * aux.omega(m) / ln2;
        const CVec h = in.H.col(m);
        const double ad2 = std::norm(aux.delta(m));
        for (int j : in.served) {
            std::complex<double> c = h.dot(W.col(j));
            double s = (j == m) ? 1.0 / in.xi_fit : 1.0;
            out.grad.col(j) += scale * 2.0 * ad2 * s * c * h;
        }
        out.grad.col(m) -= scale * (2.0 / std::sqrt(in.xi_fit)) * std::conj(aux.delta(m)) * h;
    }
    return out;
}

}  // namespace detail

struct QcqpResult {
    CMat W;
    RVec alpha;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
};

// Accelerated projected gradient on the convex objective
// sum_n beta_n P_n + sum_m mu_m alpha_m(W), alpha eliminated analytically.
// A FISTA phase (momentum, majorization line search, function-value restart)
// handles the ill-conditioned smooth descent via a per-row Jacobi
// preconditioner built from the Hessian diagonal (beta spans many orders of
// magnitude once the reweighting drives inactive beams up); the line search
// keeps plain Armijo descent, which also copes with the rate-clamp kink, where
// a windowed progress check provides the exit.
inline QcqpResult solve_qcqp_slot(const QcqpInputs& in, const SlotAuxiliaries& aux,
                                  const CMat& W0, const QcqpOptions& opt = {}) {
    for (int m : in.served)
        if (in.mu(m) < 0) throw ContractViolation("qcqp: mu must be >= 0");

    // row metric: 2 beta_n plus the rate terms' diagonal curvature
    RVec D = 2.0 * in.beta;
    const double ln2 = std::log(2.0);
    for (int m : in.served) {
        double coeff = (2.0 / ln2) * in.mu(m) * aux.omega(m) * std::norm(aux.delta(m));
        if (coeff <= 0) continue;
        for (int n = 0; n < D.size(); ++n) D(n) += coeff * std::norm(in.H(n, m));
    }
    D = D.cwiseMax(1e-30);

    CMat W = project_feasible(W0, in, opt.dykstra_max_iters, D);
    auto ev = detail::eval_qcqp(W, in, aux);
    double step = 1.0;
    double residual = 0.0;
    int it = 0;
    int stall = 0;           // consecutive plateau iterations at the clamp kink
    double f_mark = ev.f;    // windowed-progress safeguard
    int mark_it = 0;
    for (; it < opt.max_iters; ++it) {
        step = std::min(step * 2.0, 1e9);
        CMat W_new;
        double f_new = 0.0;
        bool accepted = false;
        while (step > 1e-18) {
            CMat cand = W;
            for (int n = 0; n < cand.rows(); ++n)
                cand.row(n) -= (step / D(n)) * ev.grad.row(n);
            W_new = project_feasible(cand, in, opt.dykstra_max_iters, D);
            CMat d = W_new - W;
            double move2 = 0.0;  // metric norm of the move
            for (int n = 0; n < d.rows(); ++n) move2 += D(n) * d.row(n).squaredNorm();
            auto ev_new = detail::eval_qcqp(W_new, in, aux);
            f_new = ev_new.f;
            if (f_new <= ev.f - 1e-4 / step * move2 + 1e-15 * std::abs(ev.f)) {
                residual = std::sqrt(move2) / step;
                stall = (ev.f - f_new <= 1e-13 * std::max(1.0, std::abs(ev.f))) ? stall + 1 : 0;
                W = std::move(W_new);
                ev = std::move(ev_new);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no further progress representable
        if (residual <= opt.kkt_tol * std::max(1.0, W.norm())) break;
        // the rate clamp makes the objective piecewise smooth; at its kink the
        // residual plateaus while the objective is done moving
        if (stall >= 10) break;
        if (it - mark_it >= 50) {
            if (f_mark - ev.f <= 1e-9 * std::max(1.0, std::abs(ev.f))) break;
            f_mark = ev.f;
            mark_it = it;
        }
    }
    // the iteration cap can cut an ill-conditioned crawl short; the monotone
    // line search guarantees the final iterate is the best seen, and the
    // caller can read the residual that was reached
    CMat best = std::move(W);
    double best_f = ev.f;

    QcqpResult res;
    res.W = std::move(best);
    res.alpha = RVec::Constant(in.H.cols(), -in.r_max);
    for (int m : in.served) {
        double e = mse_e(res.W, aux.delta(m), in.H, in.sigma2(m), in.xi_fit, m);
        res.alpha(m) = detail::clamp_k(aux.omega(m), e, in.r_max);
    }
    res.objective = best_f;
    res.kkt_residual = residual;
    res.iterations = it;
    return res;
}

// Per-slot Lagrangian objective of the dual decomposition:
// sum_n beta_n P_n - sum_m mu_m f_SN(Gamma_m).
inline double slot_lagrangian(const CMat& W, const QcqpInputs& in) {
    double obj = 0.0;
    for (int n = 0; n < W.rows(); ++n) obj += in.beta(n) * W.row(n).squaredNorm();
    ShannonFit fit{in.xi_fit, 0.0, in.r_max};
    for (int m : in.served) {
        double gamma = compute_sinr(in.H, W, in.sigma2(m), m);
        obj -= in.mu(m) * f_sn(gamma, fit);
    }
    return obj;
}

struct BlockDescentResult {
    CMat W;
    SlotAuxiliaries aux;
    double objective = 0.0;
    int rounds = 0;
};

// Alternating minimization over (delta, omega) closed forms and the QCQP in
// (W, alpha); the Lagrangian objective is monotone non-increasing.
inline BlockDescentResult slot_block_descent(const QcqpInputs& in, const CMat& W0,
                                             double tol_rel = 1e-6, int max_rounds = 60,
                                             const QcqpOptions& qcqp_opt = {}) {
    BlockDescentResult res;
    res.W = project_feasible(W0, in, qcqp_opt.dykstra_max_iters);
    const int n_users = static_cast<int>(in.H.cols());
    res.aux.delta = CVec::Zero(n_users);
    res.aux.omega = RVec::Ones(n_users);
    res.aux.alpha = RVec::Constant(n_users, -in.r_max);
    double obj = slot_lagrangian(res.W, in);
    for (int round = 0; round < max_rounds; ++round) {
        for (int m : in.served) {
            double gamma = compute_sinr(in.H, res.W, in.sigma2(m), m);
            res.aux.delta(m) = delta_star(in.H, res.W, in.sigma2(m), in.xi_fit, m);
            res.aux.omega(m) = omega_star(gamma, in.xi_fit);
        }
        auto q = solve_qcqp_slot(in, res.aux, res.W, qcqp_opt);
        res.W = q.W;
        res.aux.alpha = q.alpha;
        double obj_new = slot_lagrangian(res.W, in);
        res.rounds = round + 1;
        if (obj - obj_new < tol_rel * std::max(1.0, std::abs(obj))) {
            obj = obj_new;
            break;
        }
        obj = obj_new;
    }
    res.objective = obj;
    return res;
}

// Theorem-1 rescale: shrink each served precoder toward its target until all
// SINR constraints are tight; total power never increases.
inline CMat tighten(const CMat& W0, const RVec& g, const CMat& H, const RVec& sigma2,
                    double rel_tol = 1e-6, int max_sweeps = 200) {
    CMat W = W0;
    for (int m = 0; m < g.size(); ++m) {
        if (g(m) <= 0) continue;
        double gamma = compute_sinr(H, W, sigma2(m), m);
        if (gamma < g(m) * (1.0 - 1e-7))
            throw ContractViolation("tighten: SINR below target on entry");
    }
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (int m = 0; m < g.size(); ++m) {
            if (g(m) <= 0) continue;
            double gamma = compute_sinr(H, W, sigma2(m), m);
            W.col(m) *= std::sqrt(g(m) / gamma);
        }
        double worst = 0.0;
        for (int m = 0; m < g.size(); ++m) {
            if (g(m) <= 0) continue;
            double gamma = compute_sinr(H, W, sigma2(m), m);
            worst = std::max(worst, std::abs(gamma - g(m)) / std::max(g(m), 1.0));
        }
        if (worst <= rel_tol) break;
    }
    return W;
}

}  // namespace satbh
