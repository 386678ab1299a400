#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sequre/error.hpp"
#include "sequre/key_rate.hpp"
#include "sequre/param_estimation.hpp"

using namespace sequre;

namespace {

DetectorConfig detector(double eta, double v_el)
{
    DetectorConfig d;
    d.efficiency = eta;
    d.electronic_noise = v_el;
    return d;
}

}  // namespace

TEST(KeyRate, ThermalEntropyKnownValues)
{
    EXPECT_EQ(thermal_entropy(0.0), 0.0);
    EXPECT_NEAR(thermal_entropy(1.0), 2.0, 1e-15);
    EXPECT_NEAR(thermal_entropy(0.5), 1.5 * std::log2(1.5) + 0.5, 1e-15);
}

TEST(KeyRate, NoiseDecomposition)
{
    const auto n = noise_decomposition(0.5, 0.02, 0.6, 0.01);
    EXPECT_NEAR(n.chi_line, 1.02, 1e-15);
    EXPECT_NEAR(n.chi_hom, 1.01 / 0.6 - 1.0, 1e-15);
    EXPECT_NEAR(n.chi_tot, n.chi_line + n.chi_hom / 0.5, 1e-15);
}

TEST(KeyRate, MutualInformationIsShannonCapacity)
{
    const double v_a = 3.0;
    const auto n = noise_decomposition(0.3, 0.01, 0.6, 0.01);
    const double snr = v_a / (1.0 + n.chi_tot);
    EXPECT_NEAR(mutual_info_ab(v_a, n.chi_tot), 0.5 * std::log2(1.0 + snr), 1e-14);
}

TEST(KeyRate, CollectiveMatchesCovarianceOracle)
{
    for (double v_a : {0.7, 4.0, 25.0})
        for (double t : {0.1, 0.2754, 0.8})
            for (double xi : {0.0, 0.05, 0.2})
                for (double eta : {0.6, 1.0}) {
                    const double v_el = eta < 1.0 ? 0.01 : 0.0;
                    const auto n = noise_decomposition(t, xi, eta, v_el);
                    EXPECT_NEAR(eve_collective(v_a, n.chi_line, n.chi_hom, n.chi_tot, t),
                                oracle::holevo(v_a, t, xi, eta, v_el), 1e-9)
                        << v_a << ' ' << t << ' ' << xi << ' ' << eta;
                }
}

TEST(KeyRate, IndividualMatchesClonerOracle)
{
    for (double v_a : {0.7, 4.0, 25.0})
        for (double t : {0.1, 0.2754, 0.8})
            for (double xi : {0.0, 0.05, 0.2}) {
                const auto n = noise_decomposition(t, xi, 0.6, 0.01);
                EXPECT_NEAR(eve_individual(v_a, n.chi_line, n.chi_hom, t), oracle::individual(v_a, t, xi, 0.6, 0.01),
                            1e-12);
            }
}

TEST(KeyRate, IndividualReducesToPerfectDetectorForm)
{
    const double v_a = 5.0, t = 0.4, xi = 0.03;
    const double v = v_a + 1.0;
    const auto n = noise_decomposition(t, xi, 1.0, 0.0);
    const double textbook = 0.5 * std::log2(t * t * (v + n.chi_line) * (1.0 / v + n.chi_line));
    EXPECT_NEAR(eve_individual(v_a, n.chi_line, n.chi_hom, t), textbook, 1e-12);
}

TEST(KeyRate, PerfectChannelHasNoEavesdropper)
{
    const auto r = rate_at(4.0, 1.0, 0.0, detector(1.0, 0.0), CodeTable::flat(0.9));
    EXPECT_EQ(r.i_be, 0.0);
    EXPECT_EQ(r.chi_be, 0.0);
    EXPECT_NEAR(r.k_collective, 0.9 * r.i_ab, 1e-15);
    EXPECT_NEAR(r.k_individual, 0.9 * r.i_ab, 1e-15);
}

TEST(KeyRate, CollectiveNeverExceedsIndividual)
{
    for (double xi = 0.0; xi <= 0.3; xi += 0.01)
        for (double v_a : {1.0, 4.0, 16.0}) {
            const auto r = rate_at(v_a, 0.2754, xi, detector(0.6, 0.01), CodeTable::flat(0.9));
            EXPECT_LE(r.k_collective_raw, r.k_individual_raw + 1e-12);
        }
}

TEST(KeyRate, LevelFollowsSign)
{
    const auto codes = CodeTable::flat(0.9);
    EXPECT_EQ(rate_at(4.0, 0.2754, 0.01, detector(0.6, 0.01), codes).level, SecurityLevel::collective);
    EXPECT_EQ(rate_at(4.0, 0.2754, 0.2, detector(0.6, 0.01), codes).level, SecurityLevel::individual);
    EXPECT_EQ(rate_at(4.0, 0.2754, 0.5, detector(0.6, 0.01), codes).level, SecurityLevel::none);
}

TEST(KeyRate, RateInBitsPerSecond)
{
    RateSettings s;
    s.pulse_rate = 1e6;
    s.usable_fraction = 0.5;
    s.disclosed_fraction = 0.25;
    const auto r = rate_at(4.0, 0.5, 0.01, detector(0.6, 0.01), CodeTable::flat(0.9), s);
    EXPECT_NEAR(r.k_bps_collective, r.k_collective * 1e6 * 0.5 * 0.75, 1e-9);
}

TEST(KeyRate, NoCodeBelowTable)
{
    const auto codes = CodeTable::single(5.0, 0.9);
    try {
        rate_at(4.0, 0.2754, 0.01, detector(0.6, 0.01), codes);
        FAIL() << "expected NoCodeAvailable";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::no_code_available);
    }
}

TEST(KeyRate, CodeTableLookup)
{
    const CodeTable t({{1.0, 0.8}, {0.5, 0.9}, {3.0, 0.95}});
    EXPECT_FALSE(t.beta_at(0.4));
    EXPECT_DOUBLE_EQ(*t.beta_at(0.7), 0.9);
    EXPECT_DOUBLE_EQ(*t.beta_at(2.0), 0.8);
    EXPECT_DOUBLE_EQ(*t.beta_at(10.0), 0.95);
    EXPECT_THROW(CodeTable({{1.0, 1.5}}), Error);
}

TEST(KeyRate, OptimizedVarianceIsLocalMaximum)
{
    const auto det = detector(0.6, 0.01);
    const auto codes = CodeTable::flat(0.9);
    const double va = optimize_va(0.2754, 0.02, det, codes);
    const double k = rate_at(va, 0.2754, 0.02, det, codes).k_collective;
    EXPECT_GE(k + 1e-9, rate_at(va * 0.9, 0.2754, 0.02, det, codes).k_collective);
    EXPECT_GE(k + 1e-9, rate_at(va * 1.1, 0.2754, 0.02, det, codes).k_collective);
}

TEST(KeyRate, SecretRateFromEstimateUsesEstimatedParameters)
{
    EstimatedParams est;
    est.v_a = 4.0;
    est.transmission = 0.2754;
    est.excess_noise = 0.01;
    const auto det = detector(0.6, 0.01);
    const auto a = secret_rate(est, det, CodeTable::flat(0.9));
    const auto b = rate_at(4.0, 0.2754, 0.01, det, CodeTable::flat(0.9));
    EXPECT_DOUBLE_EQ(a.k_collective, b.k_collective);
}

TEST(KeyRate, SecurityLevelNames)
{
    for (auto l : {SecurityLevel::collective, SecurityLevel::individual, SecurityLevel::none})
        EXPECT_EQ(security_level_from(to_string(l)), l);
    EXPECT_THROW(security_level_from("bogus"), Error);
}
