#include "doctest.h"
#include "satbh/config.hpp"
#include "satbh/scenario.hpp"

using namespace satbh;

namespace {
const char* kSample = R"(
# sample scenario
[system]
n_beams = 3
n_users = 2
n_slots = 4
slot_budget = 2
slot_duration_s = 0.02
bandwidth_hz = 500e6

[power]
hw_power_w = 5.0
max_beam_power_w = [50, 60, 70]
noise_power_db = -118.42
activity_threshold_w = 1e-6

[demands]
demand_mbits = [200, 300]
deadline = [3, 4]
)";
}

TEST_CASE("config parses sections, scalars, arrays, comments") {
    auto cfg = Config::from_string(kSample);
    CHECK(cfg.get_int("system.n_beams") == 3);
    CHECK(cfg.get_double("system.bandwidth_hz") == doctest::Approx(5e8));
    CHECK(cfg.get_vec("power.max_beam_power_w").size() == 3);
    CHECK(cfg.get_double("missing.key", 7.5) == 7.5);
    CHECK_THROWS(cfg.get_double("demands.demand_mbits"));
    CHECK_THROWS(Config::from_string("orphan line without equals"));
}

TEST_CASE("scenario ingestion converts units once") {
    auto sc = load_scenario(Config::from_string(kSample));
    CHECK(sc.n_beams == 3);
    CHECK(sc.slot_budget == std::vector<int>{2, 2, 2, 2});
    CHECK(sc.noise_power_w[0] == doctest::Approx(std::pow(10.0, -118.42 / 10.0)));
    CHECK(sc.demand_bits[1] == doctest::Approx(3e8));
    CHECK(sc.max_beam_power_w[2] == 70.0);
}

TEST_CASE("scenario validation rejects bad parameters") {
    auto sc = load_scenario(Config::from_string(kSample));
    sc.deadline[0] = 9;  // past the window
    CHECK_THROWS_AS(sc.validate(), ContractViolation);
    sc = load_scenario(Config::from_string(kSample));
    sc.slot_budget[1] = 0;
    CHECK_THROWS_AS(sc.validate(), ContractViolation);
}

TEST_CASE("served users follow deadlines") {
    auto sc = load_scenario(Config::from_string(kSample));
    CHECK(sc.served_users(0) == std::vector<int>{0, 1});
    CHECK(sc.served_users(3) == std::vector<int>{1});
}
