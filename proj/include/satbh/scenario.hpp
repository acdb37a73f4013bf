#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "satbh/config.hpp"
#include "satbh/errors.hpp"

namespace satbh {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

// Static system parameters shared by every solver: beam/user counts, the
// scheduling window, power caps, traffic demands and per-user deadlines.
struct Scenario {
    int n_beams = 0;                     // N
    int n_users = 0;                     // M
    int n_slots = 0;                     // T
    std::vector<int> slot_budget;        // K_t, per slot
    double hw_power_w = 0.0;             // rho_hw per illuminated beam
    std::vector<double> max_beam_power_w;
    double slot_duration_s = 0.0;
    double bandwidth_hz = 0.0;
    std::vector<double> noise_power_w;   // sigma^2 per user
    std::vector<double> demand_bits;     // Qbar_m
    std::vector<int> deadline;           // Tbar_m, 1-based slot index
    double activity_threshold_w = 1e-6;  // strict threshold for the l0 count

    void validate() const {
        if (n_beams < 1 || n_users < 1 || n_slots < 1)
            throw ContractViolation("scenario: counts must be >= 1");
        if (hw_power_w <= 0 || slot_duration_s <= 0 || bandwidth_hz <= 0)
            throw ContractViolation("scenario: powers/durations/bandwidth must be > 0");
        if (activity_threshold_w <= 0)
            throw ContractViolation("scenario: activity threshold must be > 0");
        if (static_cast<int>(slot_budget.size()) != n_slots)
            throw ContractViolation("scenario: slot_budget size != n_slots");
        for (int k : slot_budget)
            if (k < 1) throw ContractViolation("scenario: K_t must be >= 1");
        if (static_cast<int>(max_beam_power_w.size()) != n_beams)
            throw ContractViolation("scenario: max_beam_power size != n_beams");
        for (double p : max_beam_power_w)
            if (p <= 0) throw ContractViolation("scenario: beam power cap must be > 0");
        if (static_cast<int>(noise_power_w.size()) != n_users)
            throw ContractViolation("scenario: noise size != n_users");
        for (double s : noise_power_w)
            if (s <= 0) throw ContractViolation("scenario: noise power must be > 0");
        if (static_cast<int>(demand_bits.size()) != n_users ||
            static_cast<int>(deadline.size()) != n_users)
            throw ContractViolation("scenario: demand/deadline size != n_users");
        for (double q : demand_bits)
            if (q < 0) throw ContractViolation("scenario: demands must be >= 0");
        for (int d : deadline)
            if (d < 1 || d > n_slots)
                throw ContractViolation("scenario: deadline outside [1, T]");
    }

    // Users still awaiting service in slot t (0-based): Tbar_m >= t+1.
    std::vector<int> served_users(int t) const {
        std::vector<int> out;
        for (int m = 0; m < n_users; ++m)
            if (deadline[m] >= t + 1) out.push_back(m);
        return out;
    }
};

// Precoder tensor w[t](n, m); w = 0 encodes "no service".
struct PrecodingPlan {
    std::vector<CMat> w;  // n_slots entries of n_beams x n_users

    static PrecodingPlan zero(const Scenario& sc) {
        PrecodingPlan p;
        p.w.assign(sc.n_slots, CMat::Zero(sc.n_beams, sc.n_users));
        return p;
    }
};

// Per-user per-slot target-SINR selections, every entry a member of Omega.
struct RateAssignment {
    RMat g;  // n_users x n_slots, linear SINR targets

    static RateAssignment zero(const Scenario& sc) {
        RateAssignment r;
        r.g = RMat::Zero(sc.n_users, sc.n_slots);
        return r;
    }
};

// Scenario ingestion from the [system]/[power]/[demands] config sections.
// dB-suffixed keys are converted to linear/watts here, once.
inline Scenario load_scenario(const Config& cfg) {
    Scenario sc;
    sc.n_beams = static_cast<int>(cfg.get_int("system.n_beams"));
    sc.n_users = static_cast<int>(cfg.get_int("system.n_users"));
    sc.n_slots = static_cast<int>(cfg.get_int("system.n_slots"));
    sc.slot_duration_s = cfg.get_double("system.slot_duration_s");
    sc.bandwidth_hz = cfg.get_double("system.bandwidth_hz");

    if (cfg.has("system.slot_budget") && cfg.get_str("system.slot_budget").front() == '[') {
        for (double v : cfg.get_vec("system.slot_budget"))
            sc.slot_budget.push_back(static_cast<int>(v));
    } else {
        sc.slot_budget.assign(sc.n_slots, static_cast<int>(cfg.get_int("system.slot_budget")));
    }

    sc.hw_power_w = cfg.get_double("power.hw_power_w");
    if (cfg.has("power.max_beam_power_w") &&
        cfg.get_str("power.max_beam_power_w").front() == '[') {
        sc.max_beam_power_w = cfg.get_vec("power.max_beam_power_w");
    } else {
        sc.max_beam_power_w.assign(sc.n_beams, cfg.get_double("power.max_beam_power_w"));
    }
    double sigma2;
    if (cfg.has("power.noise_power_db"))
        sigma2 = db_to_linear(cfg.get_double("power.noise_power_db"));
    else
        sigma2 = cfg.get_double("power.noise_power_w");
    sc.noise_power_w.assign(sc.n_users, sigma2);
    sc.activity_threshold_w = cfg.get_double("power.activity_threshold_w", 1e-6);

    for (double q : cfg.get_vec("demands.demand_mbits"))
        sc.demand_bits.push_back(q * 1e6);
    for (double d : cfg.get_vec("demands.deadline"))
        sc.deadline.push_back(static_cast<int>(d));

    sc.validate();
    return sc;
}

}  // namespace satbh
