#include "sequre/key_rate.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "sequre/error.hpp"
#include "sequre/param_estimation.hpp"

namespace sequre {

namespace {

constexpr double sqrt_tolerance = 1e-12;
constexpr double physicality_tolerance = 1e-6;

double clamped_sqrt(double x, const char* what)
{
    if (x < -sqrt_tolerance) fail(Errc::numerical_domain, std::string(what) + " is negative");
    return std::sqrt(std::max(x, 0.0));
}

// Symplectic eigenvalues of a two-mode block from its invariants:
// nu1^2 + nu2^2 = sum, nu1^2 nu2^2 = product. Eigenvalues below 1 by rounding
// are projected back onto the physical set keeping the product fixed.
std::array<double, 2> symplectic_pair(double sum, double product)
{
    if (product <= 0.0) fail(Errc::numerical_domain, "symplectic invariant product is not positive");
    const double disc = clamped_sqrt(sum * sum - 4.0 * product, "symplectic discriminant");
    const double big2 = 0.5 * (sum + disc);
    const double small2 = product / big2;
    if (small2 < 0.0) fail(Errc::numerical_domain, "squared symplectic eigenvalue is negative");
    double big = std::sqrt(big2);
    double small = std::sqrt(small2);
    if (small < 1.0) {
        if (small < 1.0 - physicality_tolerance)
            fail(Errc::numerical_domain, "symplectic eigenvalue below the vacuum level");
        small = 1.0;
        big = std::max(1.0, std::sqrt(product));
    }
    return {big, small};
}

double entropy_of(double nu) { return thermal_entropy((nu - 1.0) / 2.0); }

}  // namespace

NoiseDecomposition noise_decomposition(double transmission, double excess_noise, double efficiency,
                                       double electronic_noise)
{
    NoiseDecomposition n;
    n.chi_line = 1.0 / transmission - 1.0 + excess_noise;
    n.chi_hom = (1.0 + electronic_noise) / efficiency - 1.0;
    n.chi_tot = n.chi_line + n.chi_hom / transmission;
    return n;
}

double thermal_entropy(double x)
{
    if (x <= 0.0) return 0.0;
    return (x + 1.0) * std::log2(x + 1.0) - x * std::log2(x);
}

double mutual_info_ab(double v_a, double chi_tot)
{
    if (v_a <= 0.0) return 0.0;
    return 0.5 * std::log2((v_a + 1.0 + chi_tot) / (1.0 + chi_tot));
}

double eve_individual(double v_a, double chi_line, double chi_hom, double transmission)
{
    const double v = v_a + 1.0;
    const double t = transmission;
    const double v_b = t * (v + chi_line) + chi_hom;
    const double v_b_given_e = 1.0 / (t * (1.0 / v + chi_line)) + chi_hom;
    return std::max(0.0, 0.5 * std::log2(v_b / v_b_given_e));
}

double eve_collective(double v_a, double chi_line, double chi_hom, double chi_tot, double transmission)
{
    const double v = v_a + 1.0;
    const double t = transmission;
    const double a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line) * (v + chi_line);
    const double b = t * t * (v * chi_line + 1.0) * (v * chi_line + 1.0);
    const double sqrt_b = std::sqrt(b);
    const double denom = t * (v + chi_tot);
    const double c = (a * chi_hom + v * sqrt_b + t * (v + chi_line)) / denom;
    const double d = sqrt_b * (v + sqrt_b * chi_hom) / denom;

    const auto [l1, l2] = symplectic_pair(a, b);
    const auto [l3, l4] = symplectic_pair(c, d);
    return entropy_of(l1) + entropy_of(l2) - entropy_of(l3) - entropy_of(l4);
}

CodeTable::CodeTable(std::vector<CodeEntry> entries) : entries_(std::move(entries))
{
    for (const auto& e : entries_) {
        require(e.beta > 0.0 && e.beta < 1.0 + 1e-12, Errc::invalid_config,
                "code efficiency must be in (0, 1]");
        require(e.snr > 0.0, Errc::invalid_config, "code operating SNR must be positive");
    }
    std::sort(entries_.begin(), entries_.end(),
              [](const CodeEntry& x, const CodeEntry& y) { return x.snr < y.snr; });
}

CodeTable CodeTable::single(double snr, double beta) { return CodeTable({{snr, beta}}); }

CodeTable CodeTable::flat(double beta, double min_snr, double max_snr)
{
    std::vector<CodeEntry> entries;
    for (double s = min_snr; s <= max_snr * (1.0 + 1e-12); s *= 1.05) entries.push_back({s, beta});
    return CodeTable(std::move(entries));
}

std::optional<double> CodeTable::beta_at(double snr) const
{
    std::optional<double> beta;
    for (const auto& e : entries_) {
        if (e.snr > snr) break;
        beta = e.beta;
    }
    return beta;
}

double CodeTable::lowest_snr() const
{
    require(!entries_.empty(), Errc::no_code_available, "code table is empty");
    return entries_.front().snr;
}

std::string_view to_string(SecurityLevel level) noexcept
{
    switch (level) {
    case SecurityLevel::collective: return "collective";
    case SecurityLevel::individual: return "individual";
    case SecurityLevel::none: return "none";
    }
    return "none";
}

SecurityLevel security_level_from(std::string_view text)
{
    if (text == "collective") return SecurityLevel::collective;
    if (text == "individual") return SecurityLevel::individual;
    if (text == "none") return SecurityLevel::none;
    fail(Errc::parse_error, "unknown security level: " + std::string(text));
}

double RateReport::k_selected() const noexcept
{
    switch (level) {
    case SecurityLevel::collective: return k_collective;
    case SecurityLevel::individual: return k_individual;
    case SecurityLevel::none: return 0.0;
    }
    return 0.0;
}

double RateReport::k_bps_selected() const noexcept
{
    switch (level) {
    case SecurityLevel::collective: return k_bps_collective;
    case SecurityLevel::individual: return k_bps_individual;
    case SecurityLevel::none: return 0.0;
    }
    return 0.0;
}

RateReport rate_at(double v_a, double transmission, double excess_noise, const DetectorConfig& det,
                   const CodeTable& codes, const RateSettings& settings)
{
    const auto noise = noise_decomposition(transmission, excess_noise, det.efficiency,
                                           det.electronic_noise);
    RateReport r;
    r.v_a = v_a;
    const double eta_t = det.efficiency * transmission;
    r.snr = eta_t * v_a / (1.0 + det.electronic_noise + eta_t * excess_noise);
    const auto beta = codes.beta_at(r.snr);
    if (!beta)
        fail(Errc::no_code_available,
             "measured SNR " + std::to_string(r.snr) + " is below every available code");
    r.beta = *beta;
    r.i_ab = mutual_info_ab(v_a, noise.chi_tot);
    r.i_be = eve_individual(v_a, noise.chi_line, noise.chi_hom, transmission);
    r.chi_be = eve_collective(v_a, noise.chi_line, noise.chi_hom, noise.chi_tot, transmission);
    r.k_individual_raw = r.beta * r.i_ab - r.i_be;
    r.k_collective_raw = r.beta * r.i_ab - r.chi_be;
    r.k_individual = std::max(0.0, r.k_individual_raw);
    r.k_collective = std::min(std::max(0.0, r.k_collective_raw), r.k_individual);

    const double pulses = settings.effective_pulse_rate();
    r.k_bps_individual = r.k_individual * pulses;
    r.k_bps_collective = r.k_collective * pulses;
    if (r.k_collective > 0.0)
        r.level = SecurityLevel::collective;
    else if (r.k_individual > 0.0)
        r.level = SecurityLevel::individual;
    else
        r.level = SecurityLevel::none;
    return r;
}

RateReport secret_rate(const EstimatedParams& est, const DetectorConfig& det, const CodeTable& codes,
                       const RateSettings& settings)
{
    return rate_at(est.v_a, est.transmission, est.excess_noise, det, codes, settings);
}

namespace {

struct Objective {
    double transmission;
    double excess_noise;
    const DetectorConfig& det;
    const CodeTable& codes;
    bool collective;

    double operator()(double v_a) const
    {
        const double eta_t = det.efficiency * transmission;
        const double s = eta_t * v_a / (1.0 + det.electronic_noise + eta_t * excess_noise);
        const auto beta = codes.beta_at(s);
        if (!beta) return -std::numeric_limits<double>::infinity();
        const auto noise = noise_decomposition(transmission, excess_noise, det.efficiency,
                                               det.electronic_noise);
        const double info = *beta * mutual_info_ab(v_a, noise.chi_tot);
        const double eve = collective
            ? eve_collective(v_a, noise.chi_line, noise.chi_hom, noise.chi_tot, transmission)
            : eve_individual(v_a, noise.chi_line, noise.chi_hom, transmission);
        return info - eve;
    }
};

// Golden-section refinement of a maximum bracketed by [lo, hi]; the code
// efficiency is constant inside the bracket so the objective is smooth there.
double refine(const Objective& f, double lo, double hi)
{
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int i = 0; i < 80 && hi - lo > 1e-10 * (1.0 + hi); ++i) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    return 0.5 * (lo + hi);
}

double maximize(const Objective& f, double& best_value)
{
    const double eta_t = f.det.efficiency * f.transmission;
    const double noise = 1.0 + f.det.electronic_noise + eta_t * f.excess_noise;

    // Candidate abscissae: a log grid plus every point where the code changes,
    // and the segment boundaries each refinement must respect.
    std::vector<double> breaks{min_modulation_variance, max_modulation_variance};
    for (const auto& e : f.codes.entries()) {
        const double v = e.snr * noise / eta_t;
        if (v > min_modulation_variance && v < max_modulation_variance) breaks.push_back(v);
    }
    std::sort(breaks.begin(), breaks.end());

    double best_x = min_modulation_variance;
    best_value = -std::numeric_limits<double>::infinity();
    auto consider = [&](double x) {
        const double v = f(x);
        if (v > best_value) {
            best_value = v;
            best_x = x;
        }
    };
    for (double b : breaks) consider(b);
    constexpr int grid = 400;
    const double ratio = std::log(max_modulation_variance / min_modulation_variance);
    for (int i = 0; i <= grid; ++i) consider(min_modulation_variance * std::exp(ratio * i / grid));

    // Refine within the code segment containing the best grid point.
    const double step = std::exp(ratio / grid);
    double lo = std::max(min_modulation_variance, best_x / step);
    double hi = std::min(max_modulation_variance, best_x * step);
    for (double b : breaks) {
        if (b <= best_x) lo = std::max(lo, b);
        if (b > best_x) hi = std::min(hi, b);
    }
    if (hi > lo) {
        const double x = refine(f, lo, hi);
        consider(x);
        // Segment starts are attainable; a segment's supremum at its open upper end is not.
        consider(lo);
    }
    return best_x;
}

}  // namespace

double optimize_va(double transmission, double excess_noise, const DetectorConfig& det,
                   const CodeTable& codes)
{
    double best_collective = 0.0;
    const double v_coll = maximize({transmission, excess_noise, det, codes, true}, best_collective);
    if (best_collective > 0.0) return v_coll;
    double best_individual = 0.0;
    const double v_ind = maximize({transmission, excess_noise, det, codes, false}, best_individual);
    if (best_individual > 0.0) return v_ind;
    return v_coll;
}

}  // namespace sequre
