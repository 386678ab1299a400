#pragma once

// Statistical model of the quantum layer. Every quadrature value is in
// shot-noise units (SNU): vacuum variance is 1.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace sequre {

class KeyValueConfig;

struct ModulatorConfig {
    double v_a = 4.0;                 // modulation variance per quadrature, SNU
    double pulse_rate = 500'000.0;    // pulses per second
    std::size_t frame_len = 65'536;   // pulses per processing block
    double usable_fraction = 0.5;     // share of pulses carrying signal (rest: sync/calibration)

    void validate() const;
};

struct InterceptResend {
    double fraction = 1.0;  // share of pulses Eve measures and re-prepares
};

struct ChannelConfig {
    double transmission = 1.0;    // power transmission T in (0, 1]
    double excess_noise = 0.0;    // xi, referred to the channel input
    std::optional<InterceptResend> attack;
    double lo_scale = 1.0;        // multiplicative tampering of the LO seen by Bob

    void validate() const;
};

struct DetectorConfig {
    double efficiency = 0.6;          // eta
    double electronic_noise = 0.01;   // v_el, SNU
    double lo_cal_slope = 1.0;        // shot noise = slope * lo + intercept
    double lo_cal_intercept = 0.0;
    double lo_nominal = 1.0;
    double lo_jitter = 1e-3;          // relative std of the LO photodiode reading
    double lo_alarm_threshold = 0.05; // relative deviation raising the LO alarm

    void validate() const;
};

enum class Quadrature : std::uint8_t { x0 = 0, xpi2 = 1 };

struct PulseRecord {
    double a_x = 0.0;
    double a_p = 0.0;
    Quadrature b_choice = Quadrature::x0;
    double b_value = 0.0;
    double lo_reading = 0.0;

    bool operator==(const PulseRecord&) const = default;
};

struct SiftedPair {
    double a = 0.0;
    double b = 0.0;

    bool operator==(const SiftedPair&) const = default;
};

struct LoStatus {
    double mean_lo = 0.0;
    double max_relative_deviation = 0.0;
    bool alarm = false;
};

/// Shot-noise level from the calibrated linear LO law.
double calibrate_shot_noise(double lo_power, const DetectorConfig& det);

/// One block of `mod.frame_len` pulses; a pure function of its inputs and seed.
std::vector<PulseRecord> generate_block(const ModulatorConfig& mod, const ChannelConfig& ch,
                                        const DetectorConfig& det, std::uint64_t seed);

/// Pairs Alice's value of the quadrature Bob measured with Bob's outcome.
std::vector<SiftedPair> sift(std::span<const PulseRecord> block);

LoStatus monitor_lo(std::span<const PulseRecord> block, const DetectorConfig& det);

// Columnar text export: one pulse per line "a_x a_p choice b_value lo_reading".
void write_block(std::ostream& out, std::span<const PulseRecord> block);
std::vector<PulseRecord> read_block(std::istream& in);

struct LinkConfig {
    ModulatorConfig modulator;
    ChannelConfig channel;
    DetectorConfig detector;
};

/// Reads `modulator.*`, `channel.*` and `detector.*` keys; absent keys keep their defaults.
LinkConfig link_config_from(const KeyValueConfig& cfg);

}  // namespace sequre
