#include "sequre/param_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sequre/error.hpp"
#include "sequre/rng.hpp"

namespace sequre {

void PairMoments::add(const SiftedPair& p) noexcept
{
    ++n;
    sum_a += p.a;
    sum_b += p.b;
    sum_aa += p.a * p.a;
    sum_bb += p.b * p.b;
    sum_ab += p.a * p.b;
}

void PairMoments::add(std::span<const SiftedPair> pairs) noexcept
{
    for (const auto& p : pairs) add(p);
}

PairMoments& PairMoments::operator+=(const PairMoments& o) noexcept
{
    n += o.n;
    sum_a += o.sum_a;
    sum_b += o.sum_b;
    sum_aa += o.sum_aa;
    sum_bb += o.sum_bb;
    sum_ab += o.sum_ab;
    return *this;
}

double PairMoments::var_a() const noexcept
{
    const double m = sum_a / static_cast<double>(n);
    return sum_aa / static_cast<double>(n) - m * m;
}

double PairMoments::var_b() const noexcept
{
    const double m = sum_b / static_cast<double>(n);
    return sum_bb / static_cast<double>(n) - m * m;
}

double PairMoments::cov_ab() const noexcept
{
    const double nn = static_cast<double>(n);
    return sum_ab / nn - (sum_a / nn) * (sum_b / nn);
}

DisclosureSplit select_disclosed(std::span<const SiftedPair> pairs, double fraction,
                                 std::uint64_t seed)
{
    require(fraction > 0.0 && fraction < 1.0, Errc::fraction_out_of_range,
            "disclosed fraction must be in (0, 1)");
    auto eng = make_engine(seed);
    const auto threshold = static_cast<std::uint64_t>(std::ldexp(fraction, 53));
    DisclosureSplit split;
    split.disclosed.reserve(static_cast<std::size_t>(fraction * pairs.size() * 1.01) + 16);
    split.kept.reserve(pairs.size() - split.disclosed.capacity() / 2);
    for (const auto& p : pairs) {
        if ((eng() >> 11) < threshold)
            split.disclosed.push_back(p);
        else
            split.kept.push_back(p);
    }
    return split;
}

EstimatedParams estimate(std::span<const SiftedPair> disclosed, const DetectorConfig& det,
                         double shot_noise)
{
    PairMoments m;
    m.add(disclosed);
    return estimate(m, det, shot_noise);
}

EstimatedParams estimate(const PairMoments& moments, const DetectorConfig& det, double shot_noise)
{
    require(moments.n >= min_estimation_pairs, Errc::degenerate_sample,
            "parameter estimation needs at least " + std::to_string(min_estimation_pairs) + " pairs");
    require(shot_noise > 0.0, Errc::calibration_out_of_range, "shot noise must be positive");

    const double n = static_cast<double>(moments.n);
    // Raw values on both ends share the calibrated shot-noise unit.
    const double mean_a = moments.sum_a / n;
    const double var_a = moments.var_a() / shot_noise;
    const double var_b = moments.var_b() / shot_noise;
    const double cov = moments.cov_ab() / shot_noise;
    require(var_a > 1e-12 * (1.0 + mean_a * mean_a / shot_noise), Errc::degenerate_sample,
            "Alice's disclosed values have no variance");

    const double eta = det.efficiency;
    const double vel = det.electronic_noise;

    EstimatedParams est;
    est.n_used = moments.n;
    est.v_a = var_a;
    est.slope = cov / var_a;
    est.transmission = est.slope * est.slope / eta;
    est.residual_variance = var_b - est.slope * est.slope * var_a;
    est.transmission_flagged = est.transmission > 1.0;

    const double eta_t = eta * est.transmission;
    if (eta_t > 0.0) {
        est.excess_noise_raw = (est.residual_variance - 1.0 - vel) / eta_t;
    } else {
        est.excess_noise_raw = std::numeric_limits<double>::infinity();
    }
    est.excess_noise = std::max(0.0, est.excess_noise_raw);

    // Large-sample standard errors of the Gaussian regression b = slope * a + noise.
    const double resid = std::max(est.residual_variance, 0.0);
    const double se_slope = std::sqrt(resid / (n * var_a));
    est.se_v_a = var_a * std::sqrt(2.0 / n);
    est.se_transmission = 2.0 * std::abs(est.slope) * se_slope / eta;
    if (eta_t > 0.0) {
        const double se_resid = resid * std::sqrt(2.0 / n);
        const double d_resid = 1.0 / eta_t;
        const double d_t = est.excess_noise_raw / est.transmission;
        est.se_excess_noise = std::sqrt(d_resid * d_resid * se_resid * se_resid
                                        + d_t * d_t * est.se_transmission * est.se_transmission);
    } else {
        est.se_excess_noise = std::numeric_limits<double>::infinity();
    }
    return est;
}

double snr(const EstimatedParams& est, const DetectorConfig& det)
{
    const double eta_t = det.efficiency * est.transmission;
    return eta_t * est.v_a / (1.0 + det.electronic_noise + eta_t * est.excess_noise);
}

}  // namespace sequre
