#pragma once

// Secret key rates of the Gaussian-modulated coherent-state protocol with
// homodyne detection and reverse reconciliation. Detector noise (eta, v_el)
// is trusted: it is calibrated in a secure environment and not given to Eve.

#include <optional>
#include <string_view>
#include <vector>

#include "sequre/link_sim.hpp"

namespace sequre {

struct EstimatedParams;

struct NoiseDecomposition {
    double chi_line = 0.0;  // channel noise referred to the input: 1/T - 1 + xi
    double chi_hom = 0.0;   // homodyne noise: (1 + v_el)/eta - 1
    double chi_tot = 0.0;   // chi_line + chi_hom / T
};

NoiseDecomposition noise_decomposition(double transmission, double excess_noise,
                                       double efficiency, double electronic_noise);

/// g(x) = (x+1) log2(x+1) - x log2(x): von Neumann entropy of a thermal state
/// with mean photon number x. g(0) = 0.
double thermal_entropy(double x);

double mutual_info_ab(double v_a, double chi_tot);

/// Shannon information of an individual (entangling-cloner) attacker on Bob's
/// measured value. Reduces to 1/2 log2[T^2 (V + chi_line)(1/V + chi_line)] for a
/// perfect detector.
double eve_individual(double v_a, double chi_line, double chi_hom, double transmission);

/// Holevo bound between Eve and Bob's homodyne outcome from the symplectic
/// eigenvalues of the two-mode and the conditional covariance matrices.
double eve_collective(double v_a, double chi_line, double chi_hom, double chi_tot,
                      double transmission);

struct CodeEntry {
    double snr = 0.0;   // operating SNR of the code
    double beta = 0.0;  // reconciliation efficiency at that SNR
};

/// Efficiencies of the available error-correcting codes, sorted by SNR.
class CodeTable {
public:
    CodeTable() = default;
    explicit CodeTable(std::vector<CodeEntry> entries);

    static CodeTable single(double snr, double beta);
    /// Constant efficiency on a fine SNR grid, used for band and what-if studies.
    static CodeTable flat(double beta, double min_snr = 0.05, double max_snr = 40.0);

    /// Efficiency of the code operating nearest at or below `snr`.
    std::optional<double> beta_at(double snr) const;
    const std::vector<CodeEntry>& entries() const { return entries_; }
    double lowest_snr() const;

private:
    std::vector<CodeEntry> entries_;
};

enum class SecurityLevel { collective, individual, none };

std::string_view to_string(SecurityLevel level) noexcept;
SecurityLevel security_level_from(std::string_view text);

struct RateReport {
    double v_a = 0.0;
    double snr = 0.0;
    double beta = 0.0;
    double i_ab = 0.0;
    double i_be = 0.0;
    double chi_be = 0.0;
    double k_individual_raw = 0.0;  // before clamping, bits/pulse
    double k_collective_raw = 0.0;
    double k_individual = 0.0;      // clamped at zero, bits/pulse
    double k_collective = 0.0;
    double k_bps_individual = 0.0;
    double k_bps_collective = 0.0;
    SecurityLevel level = SecurityLevel::none;

    double k_selected() const noexcept;
    double k_bps_selected() const noexcept;
};

struct RateSettings {
    double pulse_rate = 500'000.0;
    double usable_fraction = 0.5;
    double disclosed_fraction = 0.5;

    double effective_pulse_rate() const noexcept
    {
        return pulse_rate * usable_fraction * (1.0 - disclosed_fraction);
    }
};

/// Rates at explicit physical parameters. Throws NoCodeAvailable when the SNR
/// lies below every code in the table.
RateReport rate_at(double v_a, double transmission, double excess_noise, const DetectorConfig& det,
                   const CodeTable& codes, const RateSettings& settings = {});

RateReport secret_rate(const EstimatedParams& est, const DetectorConfig& det, const CodeTable& codes,
                       const RateSettings& settings = {});

inline constexpr double min_modulation_variance = 0.1;
inline constexpr double max_modulation_variance = 100.0;

/// Modulation variance maximizing the collective rate, or the individual rate
/// when no variance yields a positive collective rate.
double optimize_va(double transmission, double excess_noise, const DetectorConfig& det,
                   const CodeTable& codes);

}  // namespace sequre
