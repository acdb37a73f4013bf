#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "satbh/channel.hpp"
#include "satbh/csv.hpp"
#include "satbh/mlp.hpp"
#include "satbh/policies.hpp"
#include "satbh/window_opt.hpp"

namespace satbh {

// Everything the channel generator needs, loaded from the [geometry] and
// [channel] config sections.
struct ChannelSetup {
    std::vector<UserGeometry> geometry;
    BeamPattern pattern;
    ChannelParams params;
};

inline ChannelSetup load_channel_setup(const Config& cfg, const Scenario& sc,
                                       const std::string& base_dir = ".") {
    ChannelSetup setup;
    double carrier = cfg.get_double("channel.carrier_hz");
    double orbit = cfg.get_double("channel.orbit_lon_deg", 13.0);
    setup.params.wavelength_m = 299792458.0 / carrier;
    setup.params.rician_factor = db_to_linear(cfg.get_double("channel.rician_factor_db", 10.0));
    setup.params.zeta = cfg.get_double("channel.zeta", 0.05);
    double sd_geo = deg2rad(cfg.get_double("channel.phase_noise_geo_deg", 1.0));
    double sd_user = deg2rad(cfg.get_double("channel.phase_noise_user_deg", 1.0));
    setup.params.var_geo = sd_geo * sd_geo;
    setup.params.var_user = sd_user * sd_user;
    setup.params.var_xi = cfg.get_double("channel.nlos_variance", 1.0);
    setup.params.divide_by_path_loss = cfg.get_bool("channel.divide_by_path_loss", false);

    if (cfg.has("geometry.csv")) {
        setup.geometry = load_geometry_csv(base_dir + "/" + cfg.get_str("geometry.csv"), orbit);
    } else {
        auto lats = cfg.get_vec("geometry.user_lat_deg");
        auto lons = cfg.get_vec("geometry.user_lon_deg");
        double rx_db = cfg.get_double("geometry.rx_gain_db", 0.0);
        if (static_cast<int>(lats.size()) != sc.n_users || lats.size() != lons.size())
            throw ContractViolation("geometry: user coordinate count != n_users");
        for (int m = 0; m < sc.n_users; ++m) {
            UserGeometry u;
            u.lat_deg = lats[m];
            u.lon_deg = lons[m];
            u.rx_gain = db_to_linear(rx_db);
            u.slant_m = slant_distance(u.lat_deg, u.lon_deg, orbit);
            setup.geometry.push_back(u);
        }
    }

    if (cfg.has("channel.beam_grid_csv")) {
        setup.pattern =
            BeamPattern::from_grid_csv(base_dir + "/" + cfg.get_str("channel.beam_grid_csv"));
    } else {
        auto blats = cfg.get_vec("channel.beam_lat_deg");
        auto blons = cfg.get_vec("channel.beam_lon_deg");
        if (static_cast<int>(blats.size()) != sc.n_beams || blats.size() != blons.size())
            throw ContractViolation("channel: beam boresight count != n_beams");
        std::vector<std::pair<double, double>> bores;
        for (int n = 0; n < sc.n_beams; ++n) bores.emplace_back(blats[n], blons[n]);
        setup.pattern = BeamPattern::parametric(
            bores, db_to_linear(cfg.get_double("channel.beam_peak_gain_db", 50.0)),
            cfg.get_double("channel.beam_rolloff", 1.0));
    }
    if (setup.pattern.n_beams() != sc.n_beams)
        throw ContractViolation("channel: pattern beams != n_beams");
    return setup;
}

struct ResultRow {
    std::uint64_t seed = 0;
    std::string pipeline;
    int kt = 0;
    double q1_mbits = 0.0;
    double total_power_w = 0.0;
    int total_active_beams = 0;
    bool feasible = false;
    double wall_ms = 0.0;
};

namespace detail_exp {

inline void write_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ContractViolation("cannot write " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string plan_csv(const PrecodingPlan& plan) {
    std::ostringstream out;
    out << "t,n,m,re,im\n";
    for (std::size_t t = 0; t < plan.w.size(); ++t)
        for (int n = 0; n < plan.w[t].rows(); ++n)
            for (int m = 0; m < plan.w[t].cols(); ++m)
                out << t << ',' << n << ',' << m << ',' << csv::fmt(plan.w[t](n, m).real())
                    << ',' << csv::fmt(plan.w[t](n, m).imag()) << '\n';
    return out.str();
}

inline std::string rates_csv(const RateAssignment& ra) {
    std::ostringstream out;
    out << "m,t,g\n";
    for (int m = 0; m < ra.g.rows(); ++m)
        for (int t = 0; t < ra.g.cols(); ++t)
            out << m << ',' << t << ',' << csv::fmt(ra.g(m, t)) << '\n';
    return out.str();
}

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream out;
    out << "iter,user,demand_gap,objective,active_beams\n";
    for (const auto& r : trace)
        out << r.iter << ',' << r.user << ',' << csv::fmt(r.demand_gap) << ','
            << csv::fmt(r.objective) << ',' << r.active_beams << '\n';
    return out.str();
}

inline PrecodingPlan read_plan_csv(const std::string& path, const Scenario& sc) {
    auto t = csv::read_file(path);
    int ct = t.col("t"), cn = t.col("n"), cm = t.col("m"), cre = t.col("re"), cim = t.col("im");
    auto plan = PrecodingPlan::zero(sc);
    for (const auto& row : t.rows) {
        int ti = std::stoi(row[ct]);
        if (ti < 0 || ti >= sc.n_slots) throw ContractViolation("plan csv: slot out of range");
        plan.w[ti](std::stoi(row[cn]), std::stoi(row[cm])) = {std::stod(row[cre]),
                                                              std::stod(row[cim])};
    }
    return plan;
}

inline RateAssignment read_rates_csv(const std::string& path, const Scenario& sc) {
    auto t = csv::read_file(path);
    int cm = t.col("m"), ct = t.col("t"), cg = t.col("g");
    auto ra = RateAssignment::zero(sc);
    for (const auto& row : t.rows)
        ra.g(std::stoi(row[cm]), std::stoi(row[ct])) = std::stod(row[cg]);
    return ra;
}

}  // namespace detail_exp

struct RunArtifacts {
    ResultRow row;
    WindowSolution sol;
    bool has_solution = false;
};

// One (pipeline, seed) run on a fully-specified scenario.
inline RunArtifacts run_single(const Scenario& sc, const ChannelSetup& setup,
                               const ModcodTable& table, const std::string& pipeline,
                               std::uint64_t seed, const PolicyOptions& popt,
                               const Mlp* model = nullptr) {
    RunArtifacts out;
    out.row.seed = seed;
    out.row.pipeline = pipeline;
    out.row.kt = sc.slot_budget.empty() ? 0 : sc.slot_budget[0];
    out.row.q1_mbits = sc.demand_bits.empty() ? 0.0 : sc.demand_bits[0] / 1e6;

    auto cr = generate_realization(sc, setup.geometry, setup.pattern, setup.params, seed);
    auto fit = fit_xi(table);
    auto t0 = std::chrono::steady_clock::now();
    try {
        if (pipeline == "window") {
            out.sol = run_window(sc, cr.h, table, fit, popt.window);
        } else if (pipeline == "heuristic") {
            out.sol = run_heuristic_pipeline(sc, cr.h, table, popt.window);
        } else if (pipeline == "dnn-run") {
            if (!model) throw ContractViolation("dnn-run: no model provided");
            auto rng = make_stream(seed, "dnn-candidates");
            out.sol = run_dnn_pipeline(sc, cr.h, *model, table, popt, rng);
        } else {
            throw ContractViolation("unknown pipeline: " + pipeline);
        }
        out.has_solution = true;
        out.row.feasible = true;
        out.row.total_power_w = out.sol.power;
        for (const auto& slot : out.sol.active)
            for (bool b : slot)
                if (b) ++out.row.total_active_beams;
    } catch (const InfeasibleError&) {
        out.row.feasible = false;
    }
    auto t1 = std::chrono::steady_clock::now();
    out.row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return out;
}

// Train a model from rollouts over derived channel seeds and save it.
inline Mlp train_dnn_model(const Scenario& sc, const ChannelSetup& setup,
                           const ModcodTable& table, std::uint64_t seed,
                           const PolicyOptions& popt, std::vector<double>* loss_curve = nullptr) {
    std::vector<std::vector<CMat>> reals;
    for (int r = 0; r < popt.train_realizations; ++r) {
        auto cr = generate_realization(sc, setup.geometry, setup.pattern, setup.params,
                                       splitmix64(seed + 1000003ull * (r + 1)));
        reals.push_back(cr.h);
    }
    auto rng_collect = make_stream(seed, "dnn-collect");
    auto ds = collect_training_data(sc, reals, table, popt, rng_collect);

    auto rng_init = make_stream(seed, "dnn-init");
    Mlp model = Mlp::make({5 * sc.n_users, 100, 100, 100, 100, 1}, 0.2, rng_init);
    auto rng_train = make_stream(seed, "dnn-train");
    auto curve = train(model, ds.X, ds.y, popt.train, rng_train);
    if (loss_curve) *loss_curve = curve;
    return model;
}

struct ExperimentSpec {
    std::string scenario_path;
    std::string modcod_path;
    std::string model_path;
    std::string out_dir = ".";
    std::vector<std::uint64_t> seeds;
    std::string pipeline = "window";
    std::string axis = "none";  // none | kt | q1
    std::vector<double> values;
};

inline std::string run_tag(const ResultRow& r) {
    std::ostringstream s;
    s << r.pipeline << "_seed" << r.seed << "_kt" << r.kt << "_q1" << csv::fmt(r.q1_mbits);
    return s.str();
}

inline std::string results_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    out << "seed,pipeline,kt,q1_mbits,total_power_w,total_active_beams,feasible,wall_ms\n";
    for (const auto& r : rows)
        out << r.seed << ',' << r.pipeline << ',' << r.kt << ',' << csv::fmt(r.q1_mbits) << ','
            << csv::fmt(r.total_power_w) << ',' << r.total_active_beams << ','
            << (r.feasible ? 1 : 0) << ',' << csv::fmt(r.wall_ms) << '\n';
    return out.str();
}

// Apply one sweep-axis value to a scenario copy.
inline Scenario apply_axis(const Scenario& base, const std::string& axis, double value) {
    Scenario sc = base;
    if (axis == "kt") {
        sc.slot_budget.assign(sc.n_slots, static_cast<int>(value));
    } else if (axis == "q1") {
        if (sc.demand_bits.empty()) throw ContractViolation("q1 sweep: no users");
        sc.demand_bits[0] = value * 1e6;
    } else if (axis != "none") {
        throw ContractViolation("unknown sweep axis: " + axis);
    }
    sc.validate();
    return sc;
}

// Execute the full spec; returns all rows (also written to out_dir/results.csv
// together with per-run plan/rates/trace files).
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
    Config cfg = Config::from_file(spec.scenario_path);
    Scenario base = load_scenario(cfg);
    std::string base_dir =
        std::filesystem::path(spec.scenario_path).parent_path().string();
    if (base_dir.empty()) base_dir = ".";
    ChannelSetup setup = load_channel_setup(cfg, base, base_dir);
    ModcodTable table = ModcodTable::from_csv(
        spec.modcod_path.empty() ? base_dir + "/modcod_table.csv" : spec.modcod_path);

    PolicyOptions popt;
    popt.n_candidates = static_cast<int>(cfg.get_int("policy.candidates", 32));
    popt.half_width = static_cast<int>(cfg.get_int("policy.half_width", 2));
    popt.train_realizations = static_cast<int>(cfg.get_int("policy.train_realizations", 50));
    popt.train.epochs = static_cast<int>(cfg.get_int("policy.epochs", 300));
    popt.train.lr = cfg.get_double("policy.lr", 1e-3);
    popt.train.batch = static_cast<int>(cfg.get_int("policy.batch", 64));
    popt.window.r0 = cfg.get_double("window.r0", popt.window.r0);
    popt.window.mu0 = cfg.get_double("window.mu0", popt.window.mu0);
    popt.window.max_inner =
        static_cast<int>(cfg.get_int("window.max_inner", popt.window.max_inner));
    popt.window.max_outer =
        static_cast<int>(cfg.get_int("window.max_outer", popt.window.max_outer));
    popt.window.inner_stall =
        static_cast<int>(cfg.get_int("window.inner_stall", popt.window.inner_stall));

    std::filesystem::create_directories(spec.out_dir);

    if (spec.pipeline == "dnn-train") {
        if (spec.model_path.empty()) throw ContractViolation("dnn-train: --model required");
        std::vector<double> curve;
        std::uint64_t seed = spec.seeds.empty() ? 1 : spec.seeds[0];
        Mlp model = train_dnn_model(base, setup, table, seed, popt, &curve);
        save_model(model, spec.model_path);
        std::ostringstream loss;
        loss << "epoch,loss\n";
        for (std::size_t e = 0; e < curve.size(); ++e)
            loss << e << ',' << csv::fmt(curve[e]) << '\n';
        detail_exp::write_atomic(spec.out_dir + "/training_loss.csv", loss.str());
        return {};
    }

    Mlp model;
    bool have_model = false;
    if (spec.pipeline == "dnn-run") {
        if (spec.model_path.empty()) throw ContractViolation("dnn-run: --model required");
        model = load_model(spec.model_path);
        have_model = true;
    }

    std::vector<double> values = spec.values;
    if (spec.axis == "none" || values.empty()) values = {0.0};

    std::vector<ResultRow> rows;
    for (double v : values) {
        Scenario sc = spec.axis == "none" ? base : apply_axis(base, spec.axis, v);
        for (std::uint64_t seed : spec.seeds) {
            auto art = run_single(sc, setup, table, spec.pipeline, seed, popt,
                                  have_model ? &model : nullptr);
            rows.push_back(art.row);
            if (art.has_solution) {
                std::string tag = run_tag(art.row);
                detail_exp::write_atomic(spec.out_dir + "/plan_" + tag + ".csv",
                                         detail_exp::plan_csv(art.sol.plan));
                detail_exp::write_atomic(spec.out_dir + "/rates_" + tag + ".csv",
                                         detail_exp::rates_csv(art.sol.g));
                if (!art.sol.trace.empty())
                    detail_exp::write_atomic(spec.out_dir + "/trace_" + tag + ".csv",
                                             detail_exp::trace_csv(art.sol.trace));
            }
        }
    }
    detail_exp::write_atomic(spec.out_dir + "/results.csv", results_csv(rows));
    return rows;
}

// Re-check every feasible row of a results file against its stored plan and
// rate files; returns the number of disagreements.
inline int verify_results(const std::string& results_path, const std::string& scenario_path,
                          const std::string& modcod_path, std::string* report = nullptr) {
    Config cfg = Config::from_file(scenario_path);
    Scenario base = load_scenario(cfg);
    std::string base_dir = std::filesystem::path(scenario_path).parent_path().string();
    if (base_dir.empty()) base_dir = ".";
    ChannelSetup setup = load_channel_setup(cfg, base, base_dir);
    ModcodTable table = ModcodTable::from_csv(
        modcod_path.empty() ? base_dir + "/modcod_table.csv" : modcod_path);
    std::string dir = std::filesystem::path(results_path).parent_path().string();
    if (dir.empty()) dir = ".";

    auto t = csv::read_file(results_path);
    int cs = t.col("seed"), cp = t.col("pipeline"), ck = t.col("kt"), cq = t.col("q1_mbits"),
        cf = t.col("feasible");
    int mismatches = 0;
    std::ostringstream rep;
    for (const auto& row : t.rows) {
        ResultRow r;
        r.seed = std::stoull(row[cs]);
        r.pipeline = row[cp];
        r.kt = std::stoi(row[ck]);
        r.q1_mbits = std::stod(row[cq]);
        bool stored_feasible = std::stoi(row[cf]) != 0;
        if (!stored_feasible) continue;  // nothing stored to re-check

        Scenario sc = base;
        sc.slot_budget.assign(sc.n_slots, r.kt);
        if (!sc.demand_bits.empty()) sc.demand_bits[0] = r.q1_mbits * 1e6;
        sc.validate();
        std::string tag = run_tag(r);
        auto plan = detail_exp::read_plan_csv(dir + "/plan_" + tag + ".csv", sc);
        auto ra = detail_exp::read_rates_csv(dir + "/rates_" + tag + ".csv", sc);
        auto cr = generate_realization(sc, setup.geometry, setup.pattern, setup.params, r.seed);
        auto check = check_feasibility(plan, ra, sc, cr.h, table);
        if (check.feasible != stored_feasible) {
            ++mismatches;
            rep << "mismatch: " << tag << " recomputed "
                << (check.feasible ? "feasible" : "infeasible") << "\n";
        }
    }
    if (report) *report = rep.str();
    return mismatches;
}

}  // namespace satbh
