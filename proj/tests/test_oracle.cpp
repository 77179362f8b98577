#include <doctest.h>

#include <cmath>
#include <vector>

#include "covertqcd/oracle.hpp"
#include "test_helpers.hpp"

using namespace covertqcd;

TEST_CASE("innocent law at horizon 1 is the pre-change marginal") {
    // theta_1(k) = I{1 > k} = 0 for every k >= 1, so the first adversary
    // observation is always pre-change.
    Scenario s = test::reference_scenario(1.0);
    Pmf law = enumerate_eve_distribution(s, Policy::innocent(100), 1);
    REQUIRE(law.size() == 2);
    CHECK(law[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(law[1] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("always-probe never-stop law at horizon 2 matches hand mixture") {
    // With beta = 1 and a threshold too high to reach in two steps, the
    // adversary sees Q^1_0 x Q^1_1 when the change lands at k = 1 and
    // Q^1_0 x Q^1_0 otherwise:
    //   P(z1,z2) = pi_1 Q10(z1) Q11(z2) + (1 - pi_1) Q10(z1) Q10(z2).
    Scenario s = test::reference_scenario(14.0);
    Pmf law = enumerate_eve_distribution(s, Policy::constant_beta(1.0), 2);
    REQUIRE(law.size() == 4);
    const double rho = s.prior.rho;
    auto q10 = [](int z) { return z ? 0.6 : 0.4; };
    auto q11 = [](int z) { return z ? 0.7 : 0.3; };
    for (int z1 = 0; z1 < 2; ++z1)
        for (int z2 = 0; z2 < 2; ++z2) {
            double expect = rho * q10(z1) * q11(z2) +
                            (1.0 - rho) * q10(z1) * q10(z2);
            CHECK(law[static_cast<std::size_t>(z1 * 2 + z2)] ==
                  doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("enumerated laws are normalized across configurations") {
    Scenario s = test::reference_scenario(1.0);
    for (double beta : {0.0, 0.3, 1.0})
        for (int n = 1; n <= 5; ++n) {
            Pmf law = enumerate_eve_distribution(s, Policy::constant_beta(beta), n);
            double mass = 0.0;
            for (std::size_t i = 0; i < law.size(); ++i) mass += law[i];
            CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("truncated divergence chain") {
    Scenario s = test::reference_scenario(1.0);

    SUBCASE("no probing, no distinguishability") {
        TruncatedDistributions td =
            truncated_kl_vs_ecb(s, Policy::constant_beta(0.0), 4);
        CHECK(td.true_kl == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(td.ecb_truncated == doctest::Approx(0.0));
    }

    SUBCASE("surrogate strictly dominates at beta = 1") {
        TruncatedDistributions td =
            truncated_kl_vs_ecb(s, Policy::constant_beta(1.0), 4);
        CHECK(td.true_kl > 0.0);
        CHECK(td.true_kl < td.ecb_truncated);
    }

    SUBCASE("true divergence is non-decreasing in the horizon") {
        for (double beta : {0.1, 0.5, 1.0}) {
            double prev = 0.0;
            for (int n = 1; n <= 6; ++n) {
                TruncatedDistributions td =
                    truncated_kl_vs_ecb(s, Policy::constant_beta(beta), n);
                CHECK(td.true_kl >= prev - 1e-12);
                CHECK(td.true_kl <= td.ecb_truncated + 1e-12);
                prev = td.true_kl;
            }
        }
    }
}

TEST_CASE("per-changepoint decomposition") {
    Scenario s = test::reference_scenario(1.0);
    Policy pol = Policy::constant_beta(0.5);
    const int horizon = 5;
    auto slices = per_changepoint_slices(s, pol, horizon);
    REQUIRE(slices.size() == static_cast<std::size_t>(horizon) + 1);

    SUBCASE("weights reconstruct the prior") {
        double total = 0.0;
        for (const auto& sl : slices) total += sl.weight;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(slices.back().weight ==
              doctest::Approx(s.prior.tail(horizon)).epsilon(1e-12));
    }

    SUBCASE("conditional chain: kl_k <= ecb_k for every changepoint") {
        for (const auto& sl : slices) {
            CHECK(sl.kl >= 0.0);
            CHECK(sl.kl <= sl.ecb + 1e-12);
        }
    }

    SUBCASE("joint convexity: mixture divergence below the conditional mix") {
        TruncatedDistributions td = truncated_kl_vs_ecb(s, pol, horizon);
        double mix = 0.0;
        for (const auto& sl : slices) mix += sl.weight * sl.kl;
        CHECK(td.true_kl <= mix + 1e-12);
    }
}

TEST_CASE("oracle rejects infeasible requests") {
    Scenario s = test::reference_scenario(1.0);
    CHECK_THROWS_AS(enumerate_eve_distribution(s, Policy::constant_beta(0.5), 9),
                    std::invalid_argument);
    CHECK_THROWS_AS(enumerate_eve_distribution(s, Policy::constant_beta(0.5), 0),
                    std::invalid_argument);
    BeliefGridPolicy gp;
    gp.grid = {0.0, 1.0};
    gp.stop = {0, 1};
    gp.beta = {0.1, 0.0};
    CHECK_THROWS_AS(enumerate_eve_distribution(s, Policy::dp(&gp), 3),
                    std::invalid_argument);
}

TEST_CASE("stopping inside the enumeration reduces adversary exposure") {
    // At alpha = e^-1 the threshold is low enough that many beta = 1 paths
    // stop inside a 6-step window; the truncated budget must then fall below
    // the never-stop budget.
    Scenario stop_soon = test::reference_scenario(1.0);
    Scenario stop_late = test::reference_scenario(14.0);
    TruncatedDistributions a =
        truncated_kl_vs_ecb(stop_soon, Policy::constant_beta(1.0), 6);
    TruncatedDistributions b =
        truncated_kl_vs_ecb(stop_late, Policy::constant_beta(1.0), 6);
    CHECK(a.ecb_truncated < b.ecb_truncated);
    CHECK(a.true_kl <= a.ecb_truncated);
    CHECK(b.true_kl <= b.ecb_truncated);
}
