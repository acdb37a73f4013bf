#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "satbh/modcod.hpp"
#include "satbh/scenario.hpp"

namespace satbh {

// Eq.-level physical accounting shared by all solvers. One physical channel
// per user: h_{j,m} = h_m, column m of H_t, regardless of the interfering
// stream index j.

// SINR of user m in one slot: |h_m^H w_m|^2 / (sum_{j!=m} |h_m^H w_j|^2 + sigma^2).
inline double compute_sinr(const CMat& H_t, const CMat& W_t, double sigma2, int m) {
    if (H_t.rows() != W_t.rows() || H_t.cols() != W_t.cols())
        throw ContractViolation("compute_sinr: shape mismatch");
    if (sigma2 <= 0) throw ContractViolation("compute_sinr: sigma2 must be > 0");
    if (m < 0 || m >= H_t.cols()) throw ContractViolation("compute_sinr: user index");
    const CVec h = H_t.col(m);
    const double sig = std::norm(h.dot(W_t.col(m)));
    if (sig == 0.0) return 0.0;
    double interf = 0.0;
    for (int j = 0; j < W_t.cols(); ++j)
        if (j != m) interf += std::norm(h.dot(W_t.col(j)));
    return sig / (interf + sigma2);
}

// P_n[t] = sum_m |w_{n,m}[t]|^2
inline double beam_power(const CMat& W_t, int n) {
    if (n < 0 || n >= W_t.rows()) throw ContractViolation("beam_power: beam index");
    return W_t.row(n).squaredNorm();
}

inline RVec beam_powers(const CMat& W_t) {
    return W_t.rowwise().squaredNorm();
}

// Transmit power plus rho_hw per beam whose power strictly exceeds the
// activity threshold.
inline double payload_power(const PrecodingPlan& plan, double rho_hw,
                            double activity_threshold) {
    if (activity_threshold <= 0)
        throw ContractViolation("payload_power: threshold must be > 0");
    double total = 0.0;
    for (const CMat& W_t : plan.w) {
        for (int n = 0; n < W_t.rows(); ++n) {
            double p = beam_power(W_t, n);
            total += p;
            if (p > activity_threshold) total += rho_hw;
        }
    }
    return total;
}

inline int active_beam_count(const CMat& W_t, double activity_threshold) {
    int c = 0;
    for (int n = 0; n < W_t.rows(); ++n)
        if (beam_power(W_t, n) > activity_threshold) ++c;
    return c;
}

// Bits delivered to user m over its transmission period.
inline double delivered_bits(const RateAssignment& ra, double slot_duration_s,
                             double bandwidth_hz, const ModcodTable& table, int m,
                             int deadline_m) {
    double bits = 0.0;
    for (int t = 0; t < deadline_m && t < ra.g.cols(); ++t)
        bits += slot_duration_s * bandwidth_hz * table.f_dvb(ra.g(m, t));
    return bits;
}

struct ConstraintSlack {
    std::string name;
    double worst_slack = 0.0;  // negative = violated
    bool ok = true;
};

struct FeasibilityReport {
    std::vector<ConstraintSlack> constraints;
    bool feasible = true;

    const ConstraintSlack& operator[](const std::string& name) const {
        for (const auto& c : constraints)
            if (c.name == name) return c;
        throw ContractViolation("feasibility: unknown constraint " + name);
    }
};

// Diagnostic evaluation of (C1)-(C5) of the original problem.
inline FeasibilityReport check_feasibility(const PrecodingPlan& plan,
                                           const RateAssignment& ra,
                                           const Scenario& sc,
                                           const std::vector<CMat>& H,
                                           const ModcodTable& table,
                                           double sinr_rel_tol = 1e-6) {
    FeasibilityReport rep;
    ConstraintSlack c1{"C1", 1e300, true};  // SINR >= target, relative slack
    ConstraintSlack c2{"C2", 1e300, true};  // active beams <= K_t
    ConstraintSlack c3{"C3", 1e300, true};  // P_n <= cap
    ConstraintSlack c4{"C4", 1e300, true};  // delivered >= demand
    ConstraintSlack c5{"C5", 0.0, true};    // g in Omega

    for (int t = 0; t < sc.n_slots; ++t) {
        for (int m = 0; m < sc.n_users; ++m) {
            double g = ra.g(m, t);
            try {
                table.index_of(g);
            } catch (const ContractViolation&) {
                c5.ok = false;
                c5.worst_slack = -1.0;
            }
            if (g > 0) {
                double gamma = compute_sinr(H[t], plan.w[t], sc.noise_power_w[m], m);
                double slack = (gamma - g) / g;
                c1.worst_slack = std::min(c1.worst_slack, slack);
                if (slack < -sinr_rel_tol) c1.ok = false;
            }
        }
        int active = active_beam_count(plan.w[t], sc.activity_threshold_w);
        double k_slack = static_cast<double>(sc.slot_budget[t] - active);
        c2.worst_slack = std::min(c2.worst_slack, k_slack);
        if (k_slack < 0) c2.ok = false;
        for (int n = 0; n < sc.n_beams; ++n) {
            double p_slack = sc.max_beam_power_w[n] - beam_power(plan.w[t], n);
            c3.worst_slack = std::min(c3.worst_slack, p_slack);
            if (p_slack < -1e-9 * sc.max_beam_power_w[n]) c3.ok = false;
        }
    }
    for (int m = 0; m < sc.n_users; ++m) {
        double got = delivered_bits(ra, sc.slot_duration_s, sc.bandwidth_hz, table, m,
                                    sc.deadline[m]);
        double slack = got - sc.demand_bits[m];
        c4.worst_slack = std::min(c4.worst_slack, slack);
        if (slack < -1e-6 * std::max(1.0, sc.demand_bits[m])) c4.ok = false;
    }

    rep.constraints = {c1, c2, c3, c4, c5};
    for (const auto& c : rep.constraints) rep.feasible = rep.feasible && c.ok;
    return rep;
}

}  // namespace satbh
