#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "satbh/experiments.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    auto range = s.find("..");
    if (range != std::string::npos) {
        std::uint64_t a = std::stoull(s.substr(0, range));
        std::uint64_t b = std::stoull(s.substr(range + 2));
        for (std::uint64_t v = a; v <= b; ++v) out.push_back(v);
        return out;
    }
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::stoull(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::stod(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

int execute(satbh::ExperimentSpec spec) {
    auto rows = satbh::run_experiment(spec);
    bool all_ok = true;
    for (const auto& r : rows) {
        std::printf("%s seed=%llu kt=%d q1=%g: %s power=%.3f W active=%d (%.0f ms)\n",
                    r.pipeline.c_str(), static_cast<unsigned long long>(r.seed), r.kt,
                    r.q1_mbits, r.feasible ? "feasible" : "INFEASIBLE", r.total_power_w,
                    r.total_active_beams, r.wall_ms);
        all_ok = all_ok && r.feasible;
    }
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multibeam beam-hopping payload power minimization"};
    app.require_subcommand(1);

    std::string scenario, seeds = "1", pipeline = "window", axis = "kt", values_s;
    std::string out_dir = ".", modcod, model, results;

    auto* run = app.add_subcommand("run", "run a pipeline over seeds");
    run->add_option("--scenario", scenario)->required();
    run->add_option("--seeds", seeds);
    run->add_option("--pipeline", pipeline);
    run->add_option("--out", out_dir);
    run->add_option("--modcod-table", modcod);
    run->add_option("--model", model);

    auto* sweep = app.add_subcommand("sweep", "sweep kt or q1 over seeds");
    sweep->add_option("--scenario", scenario)->required();
    sweep->add_option("--seeds", seeds);
    sweep->add_option("--pipeline", pipeline);
    sweep->add_option("--axis", axis)->check(CLI::IsMember({"kt", "q1"}));
    sweep->add_option("--values", values_s)->required();
    sweep->add_option("--out", out_dir);
    sweep->add_option("--modcod-table", modcod);
    sweep->add_option("--model", model);

    auto* fitc = app.add_subcommand("fit-modcod", "fit the Shannon-gap model to a table");
    fitc->add_option("--modcod-table", modcod)->required();

    auto* verify = app.add_subcommand("verify", "re-check stored plans in a results file");
    verify->add_option("results", results)->required();
    verify->add_option("--scenario", scenario)->required();
    verify->add_option("--modcod-table", modcod);

    CLI11_PARSE(app, argc, argv);

    try {
        if (fitc->parsed()) {
            auto table = satbh::ModcodTable::from_csv(modcod);
            auto fit = satbh::fit_xi(table);
            std::printf("xi_fit=%.6f rmse=%.6f r_max=%.6f entries=%d\n", fit.xi_fit, fit.rmse,
                        fit.r_max, table.size());
            return 0;
        }
        if (verify->parsed()) {
            std::string report;
            int bad = satbh::verify_results(results, scenario, modcod, &report);
            if (bad == 0) {
                std::printf("verify: all stored plans agree\n");
                return 0;
            }
            std::fputs(report.c_str(), stderr);
            return 1;
        }
        satbh::ExperimentSpec spec;
        spec.scenario_path = scenario;
        spec.modcod_path = modcod;
        spec.model_path = model;
        spec.out_dir = out_dir;
        spec.seeds = parse_seeds(seeds);
        spec.pipeline = pipeline;
        if (sweep->parsed()) {
            spec.axis = axis;
            spec.values = parse_values(values_s);
        } else {
            spec.axis = "none";
        }
        return execute(std::move(spec));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
