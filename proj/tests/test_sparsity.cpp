#include <cmath>

#include "doctest.h"
#include "satbh/sparsity.hpp"

using namespace satbh;

TEST_CASE("update_weights closed form") {
    RMat P = RMat::Zero(1, 1);
    CHECK(update_weights(P, 1e-4)(0, 0) == doctest::Approx(100.0));
    P(0, 0) = 3.0;
    CHECK(update_weights(P, 1e-2)(0, 0) == doctest::Approx(1.0 / std::sqrt(9.01)));
    P(0, 0) = 1e9;
    CHECK(update_weights(P, 1e-6)(0, 0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK_THROWS_AS(update_weights(P, 0.0), ContractViolation);
}

TEST_CASE("update_weights is order-reversing") {
    RMat P(1, 3);
    P << 0.1, 1.0, 10.0;
    auto psi = update_weights(P, 1e-6);
    CHECK(psi(0, 0) > psi(0, 1));
    CHECK(psi(0, 1) > psi(0, 2));
}

TEST_CASE("weighted_activity approximates the active count at the fixed point") {
    RVec P(4);
    P << 10.0, 0.0, 5.0, 0.0;
    RVec psi = update_weights(P, 1e-8);
    double act = weighted_activity(P, psi);
    CHECK(act == doctest::Approx(2.0).epsilon(1e-8));

    CHECK(weighted_activity(RVec::Zero(4), psi) == 0.0);

    // single beam at sqrt(eps) contributes 1/sqrt(2)
    double eps = 1e-4;
    RVec P1(1);
    P1 << std::sqrt(eps);
    CHECK(weighted_activity(P1, update_weights(P1, eps)) ==
          doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("psi P stays below one elementwise") {
    RVec P(5);
    P << 0.0, 1e-6, 0.1, 3.0, 50.0;
    RVec psi = update_weights(P, 1e-6);
    for (int i = 0; i < 5; ++i) CHECK(psi(i) * P(i) < 1.0);
}
