#include <cmath>

#include "doctest.h"
#include "satbh/modcod.hpp"

using namespace satbh;

namespace {
ModcodTable shipped() { return ModcodTable::from_csv(std::string(SATBH_DATA_DIR) + "/modcod_table.csv"); }
}

TEST_CASE("f_dvb exact lookup and Omega membership") {
    auto t = shipped();
    CHECK(t.f_dvb(0.0) == 0.0);
    CHECK(t.f_dvb(t.gamma_max()) == doctest::Approx(t.rate_max()));
    CHECK(t.f_dvb(t.omega(1)) == doctest::Approx(t.entries()[0].rate));
    CHECK_THROWS_AS(t.f_dvb(t.omega(1) * 1.01), ContractViolation);
}

TEST_CASE("f_sn closed form") {
    ShannonFit fit{2.0, 0.0, 4.0};
    CHECK(f_sn(0.0, fit) == 0.0);
    CHECK(f_sn(2.0, fit) == doctest::Approx(1.0));  // g = xi
    CHECK(f_sn(2.0 * (std::pow(2.0, 4.0) - 1.0) + 10.0, fit) == doctest::Approx(4.0));
}

TEST_CASE("fit_xi recovers exact synthetic gap") {
    std::vector<ModcodEntry> entries;
    for (double gdb = -2.0; gdb <= 16.0; gdb += 2.0) {
        double g = db_to_linear(gdb);
        entries.push_back({"syn", g, std::log2(1.0 + g / 2.0)});
    }
    auto fit = fit_xi(ModcodTable(entries));
    CHECK(fit.xi_fit == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fit.rmse <= 1e-8);
}

TEST_CASE("fit_xi scales with the SINR axis") {
    std::vector<ModcodEntry> base, scaled;
    for (double gdb = 0.0; gdb <= 12.0; gdb += 3.0) {
        double g = db_to_linear(gdb);
        base.push_back({"b", g, std::log2(1.0 + g / 1.5)});
        scaled.push_back({"s", 3.0 * g, std::log2(1.0 + g / 1.5)});
    }
    auto f1 = fit_xi(ModcodTable(base));
    auto f2 = fit_xi(ModcodTable(scaled));
    CHECK(f2.xi_fit == doctest::Approx(3.0 * f1.xi_fit).epsilon(1e-5));
}

TEST_CASE("shipped table fit lands in the published band") {
    auto fit = fit_xi(shipped());
    CHECK(fit.xi_fit >= 1.33);
    CHECK(fit.xi_fit <= 1.62);
    CHECK(fit.rmse >= 0.05);
    CHECK(fit.rmse <= 0.09);
}

TEST_CASE("round_to_omega nearest with tie-up") {
    std::vector<ModcodEntry> entries = {{"a", 1.0, 1.0}, {"b", 2.0, 2.0}, {"c", 4.0, 3.0}};
    ModcodTable t(entries);
    CHECK(t.round_to_omega(0.0) == 0.0);
    CHECK(t.round_to_omega(2.9) == 2.0);
    CHECK(t.round_to_omega(3.0) == 4.0);  // exact midpoint rounds up
    CHECK(t.round_to_omega(0.5) == 1.0);  // midpoint between 0 and 1
    // idempotent on members
    for (int l = 0; l <= t.size(); ++l) CHECK(t.round_to_omega(t.omega(l)) == t.omega(l));
}

TEST_CASE("f_sn approximates every shipped row within 3 RMSE") {
    auto t = shipped();
    auto fit = fit_xi(t);
    for (const auto& e : t.entries())
        CHECK(std::abs(f_sn(e.gamma, fit) - e.rate) <= 3.0 * fit.rmse);
}
