#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sequre/link_sim.hpp"

namespace sequre {

/// Running sums over (a, b) pairs. Moments from several blocks can be merged
/// so that the estimator can pool a window larger than one block.
struct PairMoments {
    std::size_t n = 0;
    double sum_a = 0.0;
    double sum_b = 0.0;
    double sum_aa = 0.0;
    double sum_bb = 0.0;
    double sum_ab = 0.0;

    void add(const SiftedPair& p) noexcept;
    void add(std::span<const SiftedPair> pairs) noexcept;
    PairMoments& operator+=(const PairMoments& other) noexcept;

    double var_a() const noexcept;
    double var_b() const noexcept;
    double cov_ab() const noexcept;
};

struct EstimatedParams {
    double v_a = 0.0;
    double transmission = 0.0;
    double excess_noise = 0.0;       // clamped at zero; used for rates
    double excess_noise_raw = 0.0;   // as estimated, may be slightly negative
    std::size_t n_used = 0;

    double se_v_a = 0.0;
    double se_transmission = 0.0;
    double se_excess_noise = 0.0;

    double slope = 0.0;              // cov(a, b) / var(a)
    double residual_variance = 0.0;  // var(b) - slope^2 var(a)
    bool transmission_flagged = false;  // estimate above 1 (statistical slack)
};

struct DisclosureSplit {
    std::vector<SiftedPair> disclosed;
    std::vector<SiftedPair> kept;
};

inline constexpr std::size_t min_estimation_pairs = 10'000;

/// Uniformly random disjoint split; each pair is disclosed independently with `fraction`.
DisclosureSplit select_disclosed(std::span<const SiftedPair> pairs, double fraction,
                                 std::uint64_t seed);

/// `shot_noise` is the calibrated N0 of the raw values; 1 when they are already in SNU.
EstimatedParams estimate(std::span<const SiftedPair> disclosed, const DetectorConfig& det,
                         double shot_noise = 1.0);
EstimatedParams estimate(const PairMoments& moments, const DetectorConfig& det,
                         double shot_noise = 1.0);

double snr(const EstimatedParams& est, const DetectorConfig& det);

}  // namespace sequre
