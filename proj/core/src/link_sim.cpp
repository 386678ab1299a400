#include "sequre/link_sim.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "sequre/config.hpp"
#include "sequre/error.hpp"
#include "sequre/rng.hpp"

namespace sequre {

void ModulatorConfig::validate() const
{
    require(v_a > 0.0, Errc::invalid_config, "modulation variance must be positive");
    require(pulse_rate > 0.0, Errc::invalid_config, "pulse rate must be positive");
    require(frame_len >= 1, Errc::invalid_config, "frame length must be at least one pulse");
    require(usable_fraction > 0.0 && usable_fraction <= 1.0, Errc::invalid_config,
            "usable fraction must be in (0, 1]");
}

void ChannelConfig::validate() const
{
    require(transmission > 0.0 && transmission <= 1.0, Errc::invalid_config,
            "transmission must be in (0, 1]");
    require(excess_noise >= 0.0, Errc::invalid_config, "excess noise must be non-negative");
    if (attack)
        require(attack->fraction >= 0.0 && attack->fraction <= 1.0, Errc::invalid_config,
                "intercept-resend fraction must be in [0, 1]");
    require(lo_scale > 0.0, Errc::invalid_config, "LO scale must be positive");
}

void DetectorConfig::validate() const
{
    require(efficiency > 0.0 && efficiency <= 1.0, Errc::invalid_config,
            "detector efficiency must be in (0, 1]");
    require(electronic_noise >= 0.0, Errc::invalid_config, "electronic noise must be non-negative");
    require(lo_cal_slope > 0.0, Errc::invalid_config, "LO calibration slope must be positive");
    require(lo_nominal > 0.0, Errc::invalid_config, "nominal LO power must be positive");
    require(lo_jitter >= 0.0, Errc::invalid_config, "LO jitter must be non-negative");
    require(lo_alarm_threshold > 0.0, Errc::invalid_config, "LO alarm threshold must be positive");
}

double calibrate_shot_noise(double lo_power, const DetectorConfig& det)
{
    require(lo_power > 0.0, Errc::calibration_out_of_range, "LO power must be positive");
    const double n0 = det.lo_cal_slope * lo_power + det.lo_cal_intercept;
    require(n0 > 0.0, Errc::calibration_out_of_range,
            "calibrated shot noise is not positive at LO power " + std::to_string(lo_power));
    return n0;
}

std::vector<PulseRecord> generate_block(const ModulatorConfig& mod, const ChannelConfig& ch,
                                        const DetectorConfig& det, std::uint64_t seed)
{
    mod.validate();
    ch.validate();
    det.validate();

    auto eng = make_engine(seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    const double sigma_a = std::sqrt(mod.v_a);
    const double gain = std::sqrt(det.efficiency * ch.transmission);
    const double noise_sd = std::sqrt(1.0 + det.electronic_noise
                                      + det.efficiency * ch.transmission * ch.excess_noise);
    const double attack_fraction = ch.attack ? ch.attack->fraction : 0.0;
    const std::uint64_t attack_threshold =
        static_cast<std::uint64_t>(std::ldexp(attack_fraction, 53));

    std::vector<PulseRecord> block(mod.frame_len);
    for (auto& p : block) {
        p.a_x = sigma_a * unit(eng);
        p.a_p = sigma_a * unit(eng);
        const std::uint64_t r = eng();
        p.b_choice = (r & 1U) ? Quadrature::xpi2 : Quadrature::x0;
        double field = p.b_choice == Quadrature::x0 ? p.a_x : p.a_p;
        if ((r >> 11) < attack_threshold) {
            // Eve splits the pulse to read both quadratures (each reading carries
            // two vacuum units) and resends a coherent state at her estimate.
            field += std::sqrt(2.0) * unit(eng);
        }
        p.b_value = gain * field + noise_sd * unit(eng);
        p.lo_reading = det.lo_nominal * ch.lo_scale * (1.0 + det.lo_jitter * unit(eng));
    }
    return block;
}

std::vector<SiftedPair> sift(std::span<const PulseRecord> block)
{
    require(!block.empty(), Errc::empty_block, "cannot sift an empty block");
    std::vector<SiftedPair> pairs;
    pairs.reserve(block.size());
    for (const auto& p : block)
        pairs.push_back({p.b_choice == Quadrature::x0 ? p.a_x : p.a_p, p.b_value});
    return pairs;
}

LoStatus monitor_lo(std::span<const PulseRecord> block, const DetectorConfig& det)
{
    require(!block.empty(), Errc::empty_block, "cannot monitor an empty block");
    LoStatus status;
    double sum = 0.0;
    for (const auto& p : block) {
        sum += p.lo_reading;
        const double dev = std::abs(p.lo_reading - det.lo_nominal) / det.lo_nominal;
        status.max_relative_deviation = std::max(status.max_relative_deviation, dev);
    }
    status.mean_lo = sum / static_cast<double>(block.size());
    status.alarm = status.max_relative_deviation > det.lo_alarm_threshold;
    return status;
}

void write_block(std::ostream& out, std::span<const PulseRecord> block)
{
    const auto old_precision = out.precision(17);
    for (const auto& p : block) {
        out << p.a_x << ' ' << p.a_p << ' ' << (p.b_choice == Quadrature::x0 ? "X0" : "Xpi2") << ' '
            << p.b_value << ' ' << p.lo_reading << '\n';
    }
    out.precision(old_precision);
}

std::vector<PulseRecord> read_block(std::istream& in)
{
    std::vector<PulseRecord> block;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream row(line);
        PulseRecord p;
        std::string choice;
        if (!(row >> p.a_x >> p.a_p >> choice >> p.b_value >> p.lo_reading))
            fail(Errc::parse_error, "malformed pulse line: " + line);
        if (choice == "X0")
            p.b_choice = Quadrature::x0;
        else if (choice == "Xpi2")
            p.b_choice = Quadrature::xpi2;
        else
            fail(Errc::parse_error, "unknown quadrature: " + choice);
        block.push_back(p);
    }
    return block;
}

LinkConfig link_config_from(const KeyValueConfig& cfg)
{
    LinkConfig lc;
    auto& m = lc.modulator;
    m.v_a = cfg.get_double("modulator.v_a", m.v_a);
    m.pulse_rate = cfg.get_double("modulator.pulse_rate", m.pulse_rate);
    m.frame_len = static_cast<std::size_t>(cfg.get_int("modulator.frame_len", static_cast<long long>(m.frame_len)));
    m.usable_fraction = cfg.get_double("modulator.usable_fraction", m.usable_fraction);

    auto& c = lc.channel;
    c.transmission = cfg.get_double("channel.transmission", c.transmission);
    if (const auto db = cfg.find("channel.loss_db")) c.transmission = std::pow(10.0, -std::stod(*db) / 10.0);
    c.excess_noise = cfg.get_double("channel.excess_noise", c.excess_noise);
    if (cfg.contains("channel.intercept_resend"))
        c.attack = InterceptResend{cfg.get_double("channel.intercept_resend", 0.0)};
    c.lo_scale = cfg.get_double("channel.lo_scale", c.lo_scale);

    auto& d = lc.detector;
    d.efficiency = cfg.get_double("detector.efficiency", d.efficiency);
    d.electronic_noise = cfg.get_double("detector.electronic_noise", d.electronic_noise);
    d.lo_cal_slope = cfg.get_double("detector.lo_cal_slope", d.lo_cal_slope);
    d.lo_cal_intercept = cfg.get_double("detector.lo_cal_intercept", d.lo_cal_intercept);
    d.lo_nominal = cfg.get_double("detector.lo_nominal", d.lo_nominal);
    d.lo_jitter = cfg.get_double("detector.lo_jitter", d.lo_jitter);
    d.lo_alarm_threshold = cfg.get_double("detector.lo_alarm_threshold", d.lo_alarm_threshold);

    m.validate();
    c.validate();
    d.validate();
    return lc;
}

}  // namespace sequre
