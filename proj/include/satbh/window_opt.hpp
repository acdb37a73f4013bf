#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "satbh/model.hpp"
#include "satbh/modcod.hpp"
#include "satbh/per_slot.hpp"
#include "satbh/sparsity.hpp"
#include "satbh/wmmse.hpp"

namespace satbh {

// Dual prices and their diminishing-step schedule.
struct DualState {
    RVec mu;        // >= 0 per user
    double r0 = 0.5;
    int ell = 0;    // inner iteration counter

    static DualState init(int n_users, double mu0 = 1.0, double r0_ = 0.5) {
        DualState s;
        s.mu = RVec::Constant(n_users, mu0);
        s.r0 = r0_;
        return s;
    }
    double step() const { return r0 / std::sqrt(static_cast<double>(ell + 1)); }
};

// mu <- max(0, mu + r_ell * gap), gaps in normalized rate units.
inline DualState update_mu(const DualState& state, const RVec& gaps) {
    if (gaps.size() != state.mu.size())
        throw ContractViolation("update_mu: gap dimension mismatch");
    DualState next = state;
    double r = state.step();
    for (int m = 0; m < gaps.size(); ++m) next.mu(m) = std::max(0.0, state.mu(m) + r * gaps(m));
    next.ell = state.ell + 1;
    return next;
}

struct TraceRow {
    int iter = 0;
    int user = 0;
    double demand_gap = 0.0;
    double objective = 0.0;
    int active_beams = 0;
};

struct WindowSolution {
    PrecodingPlan plan;
    RateAssignment g;
    double power = 0.0;  // transmit + hardware over the window
    std::vector<std::vector<bool>> active;  // [t][n]
    std::vector<TraceRow> trace;
};

struct WindowOptions {
    double r0 = 0.5;
    double mu0 = 1.0;
    double mu_max = 1e6;
    int max_inner = 200;
    int max_outer = 12;
    double inner_obj_tol = 1e-5;
    int inner_stall = 40;  // stop an inner sweep once the best iterate is stale
    double gap_tol = 1e-3;
    double outer_obj_tol = 1e-4;
    double eps0 = 1e-6;
    double eps_min = 1e-12;
    int max_repair_steps = 400;
    QcqpOptions qcqp;
    PspOptions psp;
};

// Demand gap of user m in units of Qbar/(dT*BW): the quantity the subgradient
// update consumes.
inline double demand_gap(const std::vector<CMat>& H, const std::vector<CMat>& W,
                         const Scenario& sc, const ShannonFit& fit, int m) {
    double need = sc.demand_bits[m] / (sc.slot_duration_s * sc.bandwidth_hz);
    double got = 0.0;
    for (int t = 0; t < sc.deadline[m] && t < sc.n_slots; ++t)
        got += f_sn(compute_sinr(H[t], W[t], sc.noise_power_w[m], m), fit);
    return need - got;
}

// Lagrangian of the relaxed window problem at fixed W: the mu-linear form whose
// partial derivatives are exactly the demand gaps.
inline double window_lagrangian(const std::vector<CMat>& H, const std::vector<CMat>& W,
                                const RVec& mu, const Scenario& sc, const ShannonFit& fit) {
    double obj = 0.0;
    for (int t = 0; t < sc.n_slots; ++t) obj += W[t].squaredNorm();
    for (int m = 0; m < sc.n_users; ++m) obj += mu(m) * demand_gap(H, W, sc, fit, m);
    return obj;
}

namespace detail_window {

// Matched-filter start: columns along h_m, globally scaled for 50% cap margin.
inline CMat matched_filter_start(const CMat& H, const std::vector<int>& served, const RVec& pmax) {
    CMat W = CMat::Zero(H.rows(), H.cols());
    for (int m : served) {
        double n = H.col(m).norm();
        if (n > 0) W.col(m) = H.col(m) / n;
    }
    double worst = std::numeric_limits<double>::infinity();
    for (int n = 0; n < H.rows(); ++n) {
        double p = W.row(n).squaredNorm();
        if (p > 0) worst = std::min(worst, pmax(n) / p);
    }
    if (std::isfinite(worst)) W *= std::sqrt(0.5 * worst);
    return W;
}

inline double delivered_with(const RateAssignment& ra, const Scenario& sc,
                             const ModcodTable& table, int m) {
    return delivered_bits(ra, sc.slot_duration_s, sc.bandwidth_hz, table, m, sc.deadline[m]);
}

inline PspInstance slot_instance(const Scenario& sc, const std::vector<CMat>& H,
                                 const RateAssignment& g, int t) {
    PspInstance inst;
    inst.H = H[t];
    inst.g = RVec::Zero(sc.n_users);
    for (int m = 0; m < sc.n_users; ++m)
        if (t < sc.deadline[m]) inst.g(m) = g.g(m, t);
    inst.pmax = RVec::Map(sc.max_beam_power_w.data(), sc.n_beams);
    inst.kt = sc.slot_budget[t];
    inst.rho_hw = sc.hw_power_w;
    inst.psi = RVec::Ones(sc.n_beams);
    inst.sigma2 = RVec::Map(sc.noise_power_w.data(), sc.n_users);
    inst.activity_threshold = sc.activity_threshold_w;
    return inst;
}

// Rough transmit-power price of one unit of SINR target for user m in slot t:
// sigma^2 over the best direct-beam gain.  Used to rank rounding adjustments.
inline double sinr_price(const std::vector<CMat>& H, const Scenario& sc, int m, int t) {
    double best = 0.0;
    for (int n = 0; n < sc.n_beams; ++n) best = std::max(best, std::norm(H[t](n, m)));
    return best > 0 ? sc.noise_power_w[m] / best : std::numeric_limits<double>::infinity();
}

}  // namespace detail_window

// Greedy adjustment of a rounded rate assignment until every per-slot problem
// is feasible and every demand is met; throws when the step budget runs out.
inline RateAssignment repair_rounding(const RateAssignment& g0, const Scenario& sc,
                                      const std::vector<CMat>& H, const ModcodTable& table,
                                      const WindowOptions& opt = {}) {
    RateAssignment g = g0;
    const int L = table.size();

    auto slot_active = [&](int t, bool& feasible) -> int {
        auto inst = detail_window::slot_instance(sc, H, g, t);
        try {
            auto res = solve_psp(inst, opt.psp);
            feasible = true;
            int count = 0;
            for (bool b : res.active)
                if (b) ++count;
            return count;
        } catch (const InfeasibleError&) {
            feasible = false;
            return sc.slot_budget[t];
        }
    };

    for (int step = 0; step < opt.max_repair_steps; ++step) {
        // 1) resolve per-slot infeasibility by lowering the most demanding entry
        std::vector<int> active(sc.n_slots, 0);
        std::vector<bool> ok(sc.n_slots, true);
        int bad_t = -1;
        for (int t = 0; t < sc.n_slots; ++t) {
            bool f = true;
            active[t] = slot_active(t, f);
            ok[t] = f;
            if (!f && bad_t < 0) bad_t = t;
        }
        if (bad_t >= 0) {
            int m_star = -1;
            double g_max = 0.0;
            for (int m = 0; m < sc.n_users; ++m) {
                if (bad_t >= sc.deadline[m]) continue;
                if (g.g(m, bad_t) > g_max) {
                    g_max = g.g(m, bad_t);
                    m_star = m;
                }
            }
            if (m_star < 0)
                throw InfeasibleError("repair: slot " + std::to_string(bad_t) +
                                      " infeasible with all-zero targets");
            int l = table.round_to_omega_index(g.g(m_star, bad_t));
            g.g(m_star, bad_t) = table.omega(l - 1);
            continue;
        }

        // 2) raise rates for under-served users, preferring slots with headroom
        int short_m = -1;
        for (int m = 0; m < sc.n_users; ++m) {
            if (detail_window::delivered_with(g, sc, table, m) <
                sc.demand_bits[m] * (1.0 - 1e-12)) {
                short_m = m;
                break;
            }
        }
        if (short_m < 0) return g;  // feasible everywhere, all demands met

        // candidate raises ranked by estimated power cost of the extra SINR,
        // then by slot headroom (free beam budget), then slot index
        std::vector<int> cand;
        for (int t = 0; t < sc.deadline[short_m] && t < sc.n_slots; ++t)
            if (table.round_to_omega_index(g.g(short_m, t)) < L) cand.push_back(t);
        auto raise_cost = [&](int t) {
            int l = table.round_to_omega_index(g.g(short_m, t));
            return (table.omega(l + 1) - table.omega(l)) *
                   detail_window::sinr_price(H, sc, short_m, t);
        };
        std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
            double ca = raise_cost(a), cb = raise_cost(b);
            if (ca != cb) return ca < cb;
            int ha = sc.slot_budget[a] - active[a], hb = sc.slot_budget[b] - active[b];
            if (ha != hb) return ha > hb;
            return g.g(short_m, a) < g.g(short_m, b);
        });
        bool raised = false;
        for (int t : cand) {
            int l = table.round_to_omega_index(g.g(short_m, t));
            double prev = g.g(short_m, t);
            g.g(short_m, t) = table.omega(l + 1);
            bool f = true;
            slot_active(t, f);
            if (f) {
                raised = true;
                break;
            }
            g.g(short_m, t) = prev;
        }
        if (!raised)
            throw InfeasibleError("repair: cannot raise rate for user " +
                                  std::to_string(short_m));
    }
    throw InfeasibleError("repair: step budget exhausted");
}

// Remove delivery overshoot left by upward-biased rounding (and repair raises):
// step single slots down the SINR grid while every demand stays met, taking the
// cheapest-channel-weighted largest power saving first.  Lowering targets only
// relaxes the per-slot problems, so feasibility is preserved without re-solving.
inline RateAssignment trim_overdelivery(const RateAssignment& g0, const Scenario& sc,
                                        const std::vector<CMat>& H,
                                        const ModcodTable& table) {
    RateAssignment g = g0;
    for (int m = 0; m < sc.n_users; ++m) {
        for (;;) {
            int best_t = -1, best_l = 0;
            double best_save = 0.0;
            for (int t = 0; t < sc.deadline[m] && t < sc.n_slots; ++t) {
                int l = table.index_of(g.g(m, t));
                if (l < 1) continue;
                double prev = g.g(m, t);
                g.g(m, t) = table.omega(l - 1);
                bool ok = detail_window::delivered_with(g, sc, table, m) >=
                          sc.demand_bits[m] * (1.0 - 1e-12);
                double save = (prev - g.g(m, t)) * detail_window::sinr_price(H, sc, m, t);
                g.g(m, t) = prev;
                if (ok && save > best_save) {
                    best_save = save;
                    best_t = t;
                    best_l = l;
                }
            }
            if (best_t < 0) break;
            g.g(m, best_t) = table.omega(best_l - 1);
        }
    }
    return g;
}

// Discrete water-filling refinement: move one grid step of one user's rate
// from an expensive slot to a cheaper one (or drop it outright when delivery
// allows) whenever the exactly re-solved slot problems get cheaper in total.
// Candidates are ranked by the sinr_price model and only the most promising
// few are verified with exact per-slot re-solves before a move is taken.
inline RateAssignment exchange_refine(const RateAssignment& g0, const Scenario& sc,
                                      const std::vector<CMat>& H, const ModcodTable& table,
                                      const WindowOptions& opt = {}) {
    RateAssignment g = g0;
    const int L = table.size();
    std::vector<double> obj(sc.n_slots, 0.0);
    auto resolve = [&](int t, double& out) -> bool {
        try {
            out = solve_psp(detail_window::slot_instance(sc, H, g, t), opt.psp).objective;
            return true;
        } catch (const InfeasibleError&) {
            return false;
        }
    };
    for (int t = 0; t < sc.n_slots; ++t)
        if (!resolve(t, obj[t])) return g0;  // refine only from a feasible start

    auto delivery_ok = [&](int m) {
        return detail_window::delivered_with(g, sc, table, m) >=
               sc.demand_bits[m] * (1.0 - 1e-12);
    };

    struct Move {
        int m, t_dn, t_up;  // t_up < 0 means a pure lowering
        double est;
    };
    const int kMaxMoves = 200, kMaxProbes = 12;
    for (int mv = 0; mv < kMaxMoves; ++mv) {
        std::vector<Move> cand;
        for (int m = 0; m < sc.n_users; ++m) {
            const int dl = std::min(sc.deadline[m], sc.n_slots);
            for (int t1 = 0; t1 < dl; ++t1) {
                int l1 = table.index_of(g.g(m, t1));
                if (l1 < 1) continue;
                double dn_save = (table.omega(l1) - table.omega(l1 - 1)) *
                                 detail_window::sinr_price(H, sc, m, t1);
                double prev1 = g.g(m, t1);
                g.g(m, t1) = table.omega(l1 - 1);
                if (delivery_ok(m)) cand.push_back({m, t1, -1, dn_save});
                for (int t2 = 0; t2 < dl; ++t2) {
                    if (t2 == t1) continue;
                    int l2 = table.index_of(g.g(m, t2));
                    if (l2 >= L) continue;
                    double up_cost = (table.omega(l2 + 1) - table.omega(l2)) *
                                     detail_window::sinr_price(H, sc, m, t2);
                    if (dn_save - up_cost <= 0) continue;
                    double prev2 = g.g(m, t2);
                    g.g(m, t2) = table.omega(l2 + 1);
                    if (delivery_ok(m)) cand.push_back({m, t1, t2, dn_save - up_cost});
                    g.g(m, t2) = prev2;
                }
                g.g(m, t1) = prev1;
            }
        }
        std::stable_sort(cand.begin(), cand.end(),
                         [](const Move& a, const Move& b) { return a.est > b.est; });

        bool applied = false;
        int probes = 0;
        for (const Move& c : cand) {
            if (++probes > kMaxProbes) break;
            int l1 = table.index_of(g.g(c.m, c.t_dn));
            double prev1 = g.g(c.m, c.t_dn);
            g.g(c.m, c.t_dn) = table.omega(l1 - 1);
            double prev2 = 0.0;
            if (c.t_up >= 0) {
                prev2 = g.g(c.m, c.t_up);
                g.g(c.m, c.t_up) = table.omega(table.index_of(prev2) + 1);
            }
            double o1 = 0.0, o2 = 0.0;
            bool ok = resolve(c.t_dn, o1) && (c.t_up < 0 || resolve(c.t_up, o2));
            double before = obj[c.t_dn] + (c.t_up >= 0 ? obj[c.t_up] : 0.0);
            double after = o1 + (c.t_up >= 0 ? o2 : 0.0);
            if (ok && after < before - 1e-9) {
                obj[c.t_dn] = o1;
                if (c.t_up >= 0) obj[c.t_up] = o2;
                applied = true;
                break;
            }
            g.g(c.m, c.t_dn) = prev1;
            if (c.t_up >= 0) g.g(c.m, c.t_up) = prev2;
        }
        if (!applied) break;
    }
    return g;
}

// Section-C return phase: round the relaxed SINRs onto the MODCOD grid,
// re-optimize each slot, and repair where rounding broke something.
inline WindowSolution return_solution(const std::vector<CMat>& W_relaxed, const Scenario& sc,
                                      const std::vector<CMat>& H, const ModcodTable& table,
                                      const WindowOptions& opt = {}) {
    RateAssignment g = RateAssignment::zero(sc);
    for (int m = 0; m < sc.n_users; ++m)
        for (int t = 0; t < sc.deadline[m] && t < sc.n_slots; ++t)
            g.g(m, t) = table.round_to_omega(
                std::min(compute_sinr(H[t], W_relaxed[t], sc.noise_power_w[m], m),
                         table.gamma_max()));

    // rounding can under-serve or over-pack; repair handles both
    bool needs_repair = false;
    for (int m = 0; m < sc.n_users && !needs_repair; ++m)
        if (detail_window::delivered_with(g, sc, table, m) < sc.demand_bits[m] * (1.0 - 1e-12))
            needs_repair = true;
    if (!needs_repair) {
        for (int t = 0; t < sc.n_slots && !needs_repair; ++t) {
            try {
                solve_psp(detail_window::slot_instance(sc, H, g, t), opt.psp);
            } catch (const InfeasibleError&) {
                needs_repair = true;
            }
        }
    }
    if (needs_repair) g = repair_rounding(g, sc, H, table, opt);
    g = trim_overdelivery(g, sc, H, table);
    g = exchange_refine(g, sc, H, table, opt);

    WindowSolution sol;
    sol.g = g;
    sol.plan.w.resize(sc.n_slots);
    sol.active.assign(sc.n_slots, std::vector<bool>(sc.n_beams, false));
    sol.power = 0.0;
    for (int t = 0; t < sc.n_slots; ++t) {
        auto res = solve_psp(detail_window::slot_instance(sc, H, g, t), opt.psp);
        sol.plan.w[t] = res.W;
        sol.active[t] = res.active;
        sol.power += res.objective;
    }

    auto rep = check_feasibility(sol.plan, sol.g, sc, H, table);
    if (!rep.feasible) {
        std::ostringstream msg;
        msg << "return_solution: plan fails feasibility re-check:";
        for (const auto& s : rep.constraints)
            if (!s.ok) msg << " " << s.name;
        throw InfeasibleError(msg.str());
    }
    return sol;
}

// The window-level algorithm: reweighting outside, dual subgradient inside,
// block-descent slot solves in the middle, discrete return phase at the end.
inline WindowSolution run_window(const Scenario& sc, const std::vector<CMat>& H,
                                 const ModcodTable& table, const ShannonFit& fit,
                                 const WindowOptions& opt = {}) {
    if (static_cast<int>(H.size()) != sc.n_slots)
        throw ContractViolation("run_window: channel/slot count mismatch");

    const int T = sc.n_slots, N = sc.n_beams, M = sc.n_users;
    std::vector<std::vector<int>> served(T);
    for (int t = 0; t < T; ++t) served[t] = sc.served_users(t);

    bool all_zero = true;
    for (double q : sc.demand_bits) all_zero = all_zero && q <= 0.0;
    if (all_zero) {
        WindowSolution sol;
        sol.plan = PrecodingPlan::zero(sc);
        sol.g = RateAssignment::zero(sc);
        sol.active.assign(T, std::vector<bool>(N, false));
        return sol;
    }

    RVec pmax = RVec::Map(sc.max_beam_power_w.data(), N);
    std::vector<CMat> W(T);
    for (int t = 0; t < T; ++t) W[t] = detail_window::matched_filter_start(H[t], served[t], pmax);

    RMat psi = RMat::Ones(N, T);
    double eps = opt.eps0;
    DualState dual = DualState::init(M, opt.mu0, opt.r0);
    std::vector<TraceRow> trace;
    int iter = 0;

    double prev_outer_obj = std::numeric_limits<double>::infinity();
    std::vector<std::vector<bool>> pattern(T, std::vector<bool>(N, false));
    auto prev_pattern = pattern;
    int pattern_stable = 0;

    for (int k = 0; k < opt.max_outer; ++k) {
        // the weighted activity cap only means "beam count" once psi reflects
        // actual powers; the first sweep runs without it
        const bool cap_on = k > 0;
        double prev_inner_obj = std::numeric_limits<double>::infinity();

        // the dual subgradient iterates need not converge in the primal
        // (serving a user can flip on and off as its price crosses a
        // threshold), so keep the round's best cap-respecting iterate:
        // smallest total unmet demand first, payload power as tie-break
        std::vector<CMat> W_best = W;
        double best_score = std::numeric_limits<double>::infinity();
        double best_obj = std::numeric_limits<double>::infinity();
        bool have_best = false;
        int best_age = 0;  // inner iterations since the best iterate improved
        dual.ell = 0;      // reweighting moved the cost landscape: restart the
                           // diminishing step schedule so prices can re-adapt

        for (int ell = 0; ell < opt.max_inner; ++ell) {
            double obj = 0.0;
            double payload = 0.0;
            int active_total = 0;
            for (int t = 0; t < T; ++t) {
                QcqpInputs in;
                in.H = H[t];
                in.psi = psi.col(t);
                in.beta = RVec::Ones(N) + sc.hw_power_w * in.psi;
                in.mu = dual.mu;
                in.pmax = pmax;
                in.kt = cap_on ? static_cast<double>(sc.slot_budget[t])
                               : std::numeric_limits<double>::infinity();
                in.sigma2 = RVec::Map(sc.noise_power_w.data(), M);
                in.xi_fit = fit.xi_fit;
                in.r_max = fit.r_max;
                in.served = served[t];
                // a zeroed user column is a fixed point of the block descent
                // (delta* = 0 kills its gradient), so reseed priced users
                // before warm-starting; the direction is the matched filter
                // scaled down per beam by beta, which concentrates the seed on
                // beams that are already cheap so the weighted activity-cap
                // projection does not crush it straight back to zero
                for (int m : served[t]) {
                    if (dual.mu(m) <= 0 || W[t].col(m).norm() > 1e-8) continue;
                    CVec v = in.H.col(m);
                    for (int n = 0; n < N; ++n) v(n) /= in.beta(n);
                    double gain = std::abs(in.H.col(m).dot(v));
                    if (gain <= 0) continue;
                    // amplitude giving that user an SNR near one
                    v *= std::sqrt(sc.noise_power_w[m]) / gain;
                    if (std::isfinite(in.kt)) {
                        double wp = 0.0;  // weighted power drawn from the cap
                        for (int n = 0; n < N; ++n) wp += in.psi(n) * std::norm(v(n));
                        if (wp > 0.25 * in.kt) v *= std::sqrt(0.25 * in.kt / wp);
                    }
                    W[t].col(m) = v;
                }
                auto res = slot_block_descent(in, W[t], 1e-6, 60, opt.qcqp);
                W[t] = res.W;
                RVec P = beam_powers(W[t]);
                obj += in.beta.dot(P);
                payload += P.sum();
                for (int n = 0; n < N; ++n)
                    if (P(n) > sc.activity_threshold_w) ++active_total;
            }
            payload += sc.hw_power_w * active_total;

            RVec gaps(M), gaps_norm(M);
            for (int m = 0; m < M; ++m) {
                gaps(m) = demand_gap(H, W, sc, fit, m);
                double need = sc.demand_bits[m] / (sc.slot_duration_s * sc.bandwidth_hz);
                gaps_norm(m) = gaps(m) / std::max(1.0, need);
            }
            ++iter;
            for (int m = 0; m < M; ++m)
                trace.push_back({iter, m, gaps_norm(m), obj, active_total});

            dual = update_mu(dual, gaps);
            if (dual.mu.maxCoeff() > opt.mu_max) {
                std::ostringstream msg;
                msg << "run_window: demands unattainable; binding users:";
                for (int m = 0; m < M; ++m)
                    if (dual.mu(m) > opt.mu_max) msg << " " << m;
                throw InfeasibleError(msg.str());
            }

            bool gaps_ok = true;
            for (int m = 0; m < M; ++m) gaps_ok = gaps_ok && gaps_norm(m) < opt.gap_tol;
            bool obj_ok = std::abs(obj - prev_inner_obj) <
                          opt.inner_obj_tol * std::max(1.0, std::abs(obj));
            prev_inner_obj = obj;

            if (cap_on) {
                double score = 0.0;  // total normalized unmet demand
                for (int m = 0; m < M; ++m) score += std::max(gaps_norm(m), 0.0);
                bool better = score < best_score - 1e-12 ||
                              (score < best_score + 1e-12 && payload < best_obj);
                if (better) {
                    W_best = W;
                    best_score = score;
                    best_obj = payload;
                    have_best = true;
                    best_age = 0;
                } else {
                    ++best_age;
                }
            }

            if (gaps_ok && obj_ok) break;
            // primal flips can cycle without improving anything; once the best
            // iterate stops moving the remaining price updates are wasted
            if (cap_on && best_age >= opt.inner_stall) break;
        }

        // outer update: continue from the round's best iterate, reweight,
        // check pattern/objective stability
        if (have_best) W = std::move(W_best);
        double outer_obj = 0.0;
        for (int t = 0; t < T; ++t) {
            RVec P = beam_powers(W[t]);
            for (int n = 0; n < N; ++n) {
                pattern[t][n] = P(n) > sc.activity_threshold_w;
                outer_obj += P(n) + (pattern[t][n] ? sc.hw_power_w : 0.0);
            }
            psi.col(t) = update_weights(RVec(P), eps);
        }
        eps = std::max(eps / 2.0, opt.eps_min);

        pattern_stable = (pattern == prev_pattern) ? pattern_stable + 1 : 0;
        bool obj_ok = std::abs(outer_obj - prev_outer_obj) <
                      opt.outer_obj_tol * std::max(1.0, std::abs(outer_obj));
        prev_pattern = pattern;
        prev_outer_obj = outer_obj;
        if (k > 0 && pattern_stable >= 2 && obj_ok) break;
    }

    auto sol = return_solution(W, sc, H, table, opt);
    sol.trace = std::move(trace);
    return sol;
}

}  // namespace satbh
