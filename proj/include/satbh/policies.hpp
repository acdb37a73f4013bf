#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "satbh/mlp.hpp"
#include "satbh/modcod.hpp"
#include "satbh/window_opt.hpp"

namespace satbh {

struct PolicyOptions {
    int half_width = 2;      // L0: candidate index spread around the previous action
    int n_candidates = 32;   // I
    double beta_scale = 10.0;  // penalty weights beta_i = beta_scale * rho_hw
    TrainOptions train;
    int train_realizations = 50;
    WindowOptions window;  // repair / psp settings shared with the window path
};

// Equal-rate planner: each user gets the smallest MODCOD covering its demand
// spread uniformly over its transmission period.
inline RateAssignment heuristic_assign(const Scenario& sc, const ModcodTable& table) {
    RateAssignment ra = RateAssignment::zero(sc);
    for (int m = 0; m < sc.n_users; ++m) {
        if (sc.demand_bits[m] <= 0.0) continue;
        double required =
            sc.demand_bits[m] / (sc.slot_duration_s * sc.bandwidth_hz * sc.deadline[m]);
        int l_star = -1;
        for (int l = 1; l <= table.size(); ++l) {
            if (table.rate_of_index(l) >= required * (1.0 - 1e-12)) {
                l_star = l;
                break;
            }
        }
        if (l_star < 0)
            throw InfeasibleError("heuristic: user " + std::to_string(m) +
                                  " needs rate above the MODCOD ceiling");
        for (int t = 0; t < sc.deadline[m] && t < sc.n_slots; ++t)
            ra.g(m, t) = table.omega(l_star);
    }
    return ra;
}

// Per-user top-3 channel magnitudes and demand pace, then the candidate action:
// fixed length 5M.
inline RVec build_features(const CMat& H_t, const RVec& remaining_bits, int t,
                           const Scenario& sc, const RVec& candidate) {
    const int M = sc.n_users;
    if (H_t.cols() != M || remaining_bits.size() != M || candidate.size() != M)
        throw ContractViolation("build_features: dimension mismatch");
    RVec x(5 * M);
    for (int m = 0; m < M; ++m) {
        std::vector<double> mags(H_t.rows());
        for (int n = 0; n < H_t.rows(); ++n) mags[n] = std::abs(H_t(n, m));
        std::sort(mags.begin(), mags.end(), std::greater<double>());
        for (int k = 0; k < 3; ++k)
            x(4 * m + k) = k < static_cast<int>(mags.size()) ? mags[k] : 0.0;
        int slots_left = sc.deadline[m] - t;
        double pace = 0.0;
        if (slots_left > 0)
            pace = std::max(0.0, remaining_bits(m)) /
                   (sc.slot_duration_s * sc.bandwidth_hz * slots_left);
        x(4 * m + 3) = pace;  // S_m in bit/s/Hz
    }
    for (int m = 0; m < M; ++m) x(4 * M + m) = candidate(m);
    return x;
}

// I random actions around the previous one: per user, uniform over MODCOD
// indices within +-L0 of the previous index.
inline std::vector<RVec> sample_candidates(const RVec& g_prev, const ModcodTable& table,
                                           int half_width, int count, std::mt19937_64& rng) {
    if (count < 1) throw ContractViolation("sample_candidates: count must be >= 1");
    const int L = table.size();
    std::vector<int> prev_idx(g_prev.size());
    for (int m = 0; m < g_prev.size(); ++m) prev_idx[m] = table.index_of(g_prev(m));
    std::vector<RVec> out;
    for (int i = 0; i < count; ++i) {
        RVec c(g_prev.size());
        for (int m = 0; m < g_prev.size(); ++m) {
            int lo = std::max(0, prev_idx[m] - half_width);
            int hi = std::min(L, prev_idx[m] + half_width);
            std::uniform_int_distribution<int> ud(lo, hi);
            c(m) = table.omega(ud(rng));
        }
        out.push_back(c);
    }
    return out;
}

// Label for one candidate action: realized slot objective plus hinge
// penalties for missed SINR, over-illumination, and falling behind demand.
inline double penalty_metric(const CMat& W_t, const RVec& g_t, const CMat& H_t,
                             const Scenario& sc, int kt, const RVec& pace,
                             const ModcodTable& table, double beta_scale = 10.0) {
    const int M = sc.n_users;
    RVec P = beam_powers(W_t);
    int count = 0;
    for (int n = 0; n < P.size(); ++n)
        if (P(n) > sc.activity_threshold_w) ++count;
    double obj = P.sum() + sc.hw_power_w * count;

    double y1 = 0.0, y3 = 0.0;
    for (int m = 0; m < M; ++m) {
        if (g_t(m) > 0)
            y1 += g_t(m) - compute_sinr(H_t, W_t, sc.noise_power_w[m], m);
        y3 += table.f_dvb(g_t(m)) - pace(m);
    }
    y1 = std::max(0.0, y1 / M);
    y3 = std::max(0.0, y3 / M);
    double y2 = std::max(0.0, static_cast<double>(count - kt));
    double beta = beta_scale * sc.hw_power_w;
    return obj + beta * (y1 + y2 + y3);
}

namespace detail_policy {

// Score a candidate by actually solving its slot problem; infeasible
// candidates get a deterministic large metric so they rank last.
inline double rollout_metric(const Scenario& sc, const CMat& H_t, int t, const RVec& cand,
                             const RVec& remaining, const ModcodTable& table,
                             const PolicyOptions& opt, CMat* W_out = nullptr) {
    PspInstance inst;
    inst.H = H_t;
    inst.g = RVec::Zero(sc.n_users);
    for (int m = 0; m < sc.n_users; ++m)
        if (t < sc.deadline[m]) inst.g(m) = cand(m);
    inst.pmax = RVec::Map(sc.max_beam_power_w.data(), sc.n_beams);
    inst.kt = sc.slot_budget[t];
    inst.rho_hw = sc.hw_power_w;
    inst.psi = RVec::Ones(sc.n_beams);
    inst.sigma2 = RVec::Map(sc.noise_power_w.data(), sc.n_users);
    inst.activity_threshold = sc.activity_threshold_w;

    RVec pace(sc.n_users);
    for (int m = 0; m < sc.n_users; ++m) {
        int slots_left = sc.deadline[m] - t;
        pace(m) = slots_left > 0 ? std::max(0.0, remaining(m)) /
                                       (sc.slot_duration_s * sc.bandwidth_hz * slots_left)
                                 : 0.0;
    }
    try {
        auto res = solve_psp(inst, opt.window.psp);
        if (W_out) *W_out = res.W;
        return penalty_metric(res.W, inst.g, H_t, sc, inst.kt, pace, table, opt.beta_scale);
    } catch (const InfeasibleError&) {
        if (W_out) *W_out = CMat::Zero(sc.n_beams, sc.n_users);
        return 1e9 * (1.0 + cand.sum());  // rank infeasible actions last, deterministically
    }
}

}  // namespace detail_policy

struct DnnDataset {
    std::vector<RVec> X;
    std::vector<double> y;
};

// Data collection: play a greedy argmin-metric policy over rollouts seeded by
// the heuristic plan, labeling every sampled candidate by its realized metric.
inline DnnDataset collect_training_data(const Scenario& sc,
                                        const std::vector<std::vector<CMat>>& realizations,
                                        const ModcodTable& table, const PolicyOptions& opt,
                                        std::mt19937_64& rng) {
    DnnDataset ds;
    RateAssignment base = heuristic_assign(sc, table);
    for (const auto& H : realizations) {
        RVec remaining = RVec::Map(sc.demand_bits.data(), sc.n_users);
        RVec g_prev = base.g.col(0);
        for (int t = 0; t < sc.n_slots; ++t) {
            auto cands = sample_candidates(g_prev, table, opt.half_width, opt.n_candidates, rng);
            cands.insert(cands.begin(), base.g.col(t));  // heuristic anchor
            int best = 0;
            double best_metric = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < cands.size(); ++i) {
                // zero rates past each user's deadline before scoring
                for (int m = 0; m < sc.n_users; ++m)
                    if (t >= sc.deadline[m]) cands[i](m) = 0.0;
                double metric =
                    detail_policy::rollout_metric(sc, H[t], t, cands[i], remaining, table, opt);
                ds.X.push_back(build_features(H[t], remaining, t, sc, cands[i]));
                ds.y.push_back(metric);
                if (metric < best_metric) {
                    best_metric = metric;
                    best = static_cast<int>(i);
                }
            }
            g_prev = cands[best];
            for (int m = 0; m < sc.n_users; ++m)
                remaining(m) -= table.f_dvb(g_prev(m)) * sc.slot_duration_s * sc.bandwidth_hz;
        }
    }
    return ds;
}

// argmin_i Phi(X_i): sample candidates, score with the net, lowest index wins ties.
inline RVec infer_action(const Mlp& model, const CMat& H_t, const RVec& remaining, int t,
                         const Scenario& sc, const RVec& g_prev, const RVec& anchor,
                         const ModcodTable& table, const PolicyOptions& opt,
                         std::mt19937_64& rng) {
    auto cands = sample_candidates(g_prev, table, opt.half_width, opt.n_candidates, rng);
    cands.insert(cands.begin(), anchor);
    int best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cands.size(); ++i) {
        for (int m = 0; m < sc.n_users; ++m)
            if (t >= sc.deadline[m]) cands[i](m) = 0.0;
        double score = model.predict(build_features(H_t, remaining, t, sc, cands[i]));
        if (score < best_score) {  // strict: ties keep the lowest index
            best_score = score;
            best = static_cast<int>(i);
        }
    }
    return cands[best];
}

// Assemble a WindowSolution from a fixed rate assignment by solving each slot;
// shared by the heuristic and DNN pipelines.
inline WindowSolution plan_from_rates(RateAssignment g, const Scenario& sc,
                                      const std::vector<CMat>& H, const ModcodTable& table,
                                      const WindowOptions& opt = {}) {
    bool needs_repair = false;
    for (int m = 0; m < sc.n_users && !needs_repair; ++m)
        if (delivered_bits(g, sc.slot_duration_s, sc.bandwidth_hz, table, m, sc.deadline[m]) <
            sc.demand_bits[m] * (1.0 - 1e-12))
            needs_repair = true;
    for (int t = 0; t < sc.n_slots && !needs_repair; ++t) {
        try {
            solve_psp(detail_window::slot_instance(sc, H, g, t), opt.psp);
        } catch (const InfeasibleError&) {
            needs_repair = true;
        }
    }
    if (needs_repair) g = repair_rounding(g, sc, H, table, opt);

    WindowSolution sol;
    sol.g = g;
    sol.plan.w.resize(sc.n_slots);
    sol.active.assign(sc.n_slots, std::vector<bool>(sc.n_beams, false));
    for (int t = 0; t < sc.n_slots; ++t) {
        auto res = solve_psp(detail_window::slot_instance(sc, H, g, t), opt.psp);
        sol.plan.w[t] = res.W;
        sol.active[t] = res.active;
        sol.power += res.objective;
    }
    auto rep = check_feasibility(sol.plan, sol.g, sc, H, table);
    if (!rep.feasible) throw InfeasibleError("plan_from_rates: plan fails feasibility re-check");
    return sol;
}

inline WindowSolution run_heuristic_pipeline(const Scenario& sc, const std::vector<CMat>& H,
                                             const ModcodTable& table,
                                             const WindowOptions& opt = {}) {
    return plan_from_rates(heuristic_assign(sc, table), sc, H, table, opt);
}

inline WindowSolution run_dnn_pipeline(const Scenario& sc, const std::vector<CMat>& H,
                                       const Mlp& model, const ModcodTable& table,
                                       const PolicyOptions& opt, std::mt19937_64& rng) {
    bool all_zero = true;
    for (double q : sc.demand_bits) all_zero = all_zero && q <= 0.0;
    if (all_zero) return plan_from_rates(RateAssignment::zero(sc), sc, H, table, opt.window);

    RateAssignment base = heuristic_assign(sc, table);
    RateAssignment g = RateAssignment::zero(sc);
    RVec remaining = RVec::Map(sc.demand_bits.data(), sc.n_users);
    RVec g_prev = base.g.col(0);
    for (int t = 0; t < sc.n_slots; ++t) {
        RVec act = infer_action(model, H[t], remaining, t, sc, g_prev, base.g.col(t), table,
                                opt, rng);
        g.g.col(t) = act;
        g_prev = act;
        for (int m = 0; m < sc.n_users; ++m)
            remaining(m) -= table.f_dvb(act(m)) * sc.slot_duration_s * sc.bandwidth_hz;
    }
    return plan_from_rates(g, sc, H, table, opt.window);
}

}  // namespace satbh
