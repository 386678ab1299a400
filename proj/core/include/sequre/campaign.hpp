#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sequre/key_manager.hpp"
#include "sequre/key_rate.hpp"
#include "sequre/ldpc.hpp"
#include "sequre/link_sim.hpp"
#include "sequre/param_estimation.hpp"
#include "sequre/postprocessing.hpp"
#include "sequre/reconciliation.hpp"
#include "sequre/secure_channel.hpp"

namespace sequre {

class KeyValueConfig;

/// Days [start_day, end_day) counted from the start of the owning phase.
struct DowntimeWindow {
    double start_day = 0.0;
    double end_day = 0.0;
};

struct PhaseSpec {
    std::string name;
    unsigned days = 0;
    double transmission = 1.0;
    double xi_mean = 0.0;
    double xi_std = 0.0;
    DetectorConfig detector;
    std::vector<DowntimeWindow> downtime;
    std::optional<double> attack_fraction;

    bool down(unsigned day_in_phase) const;
};

struct Scenario {
    std::string name = "scenario";
    std::vector<PhaseSpec> phases;
    unsigned blocks_per_day = 10;
    ModulatorConfig modulator;  ///< frame_len is the pulse count of one block
    double disclosed_fraction = 0.5;
    std::size_t recon_block_length = 65'536;
    double initial_v_a = 0.0;   ///< 0: optimize for the first phase's nominal channel
    CodeTable codes = CodeTable::flat(0.90);
    ReconConfig recon;
    VerifyPolicy verify;
    PoolPolicy pool;
    std::uint64_t seed = 1;

    void validate() const;
    /// Real pulses per day over simulated pulses per day.
    double compression_factor() const;
    RateSettings rate_settings() const;
    unsigned total_days() const;

    static Scenario from_config(const KeyValueConfig& cfg);
    static Scenario load(const std::filesystem::path& path);
};

struct TelemetryRow {
    unsigned day = 0;
    std::string phase;
    unsigned block = 0;
    double xi_true = 0.0;
    double xi_block = 0.0;   ///< this block's disclosed pairs alone
    double xi_est = 0.0;     ///< pooled over the day's batch; drives the rate
    double t_est = 0.0;
    double v_a = 0.0;
    double snr = 0.0;
    double k_bps_collective = 0.0;
    double k_bps_individual = 0.0;
    double k_bps = 0.0;
    SecurityLevel level = SecurityLevel::none;
    unsigned frames = 0;
    unsigned frames_ok = 0;
    double beta_realized = 0.0;
    std::uint64_t leak_bits = 0;
    std::uint64_t key_bits = 0;
    double keys_day = 0.0;   ///< k_bps * 86400 / 128 at full pulse rate
    std::string alarms;
};

void write_telemetry_header(std::ostream& out);
void write_telemetry_row(std::ostream& out, const TelemetryRow& row);
std::vector<TelemetryRow> read_telemetry(std::istream& in);

inline constexpr double keys_per_day_threshold = 8640.0;
inline constexpr double sufficient_rate_bps = 20.0;

struct PhaseSummary {
    std::string name;
    unsigned active_days = 0;
    unsigned collective_blocks = 0;
    unsigned individual_blocks = 0;
    unsigned none_blocks = 0;
    double mean_rate_bps = 0.0;
    double min_keys_day = 0.0;
    double mean_keys_day = 0.0;
    std::uint64_t key_bits = 0;
    bool breach = false;
};

struct CampaignSummary {
    std::string scenario;
    std::uint64_t seed = 0;
    double compression_factor = 0.0;
    std::size_t rows = 0;
    std::vector<PhaseSummary> phases;
    std::uint64_t key_bits = 0;
    std::uint64_t frames_total = 0;
    std::uint64_t frames_failed = 0;
    std::uint64_t verify_failures = 0;
    std::uint64_t channel_frames_sent = 0;
    std::uint64_t masks_consumed = 0;
    std::uint64_t auth_blocks_pulled = 0;
    bool keys_agree = true;
    bool breach = false;
    bool alarm = false;

    void write(std::ostream& out) const;
};

struct CampaignOptions {
    std::optional<std::filesystem::path> output_dir;
    std::shared_ptr<KeyStore> alice_store;  ///< created in memory when absent
    std::shared_ptr<KeyStore> bob_store;
    /// Called after each active day has been ingested.
    std::function<void(unsigned day)> on_day_end;
    std::optional<unsigned> blocks_per_day;  ///< overrides the scenario
};

struct CampaignResult {
    std::vector<TelemetryRow> telemetry;
    CampaignSummary summary;
};

/// Fixed 1 KiB pre-shared secret derived from a seed (both ends install the same file).
std::vector<std::uint8_t> derive_preshared_secret(std::uint64_t seed);

/// Both ends of the post-processing chain, linked by an authenticated channel.
class DayPipeline {
public:
    DayPipeline(const Scenario& scenario, std::shared_ptr<KeyStore> alice, std::shared_ptr<KeyStore> bob,
                std::uint64_t seed);

    struct Plan {
        unsigned day = 0;
        const PhaseSpec* phase = nullptr;
        double v_a = 4.0;
        unsigned blocks = 1;
        double time = 0.0;  ///< simulated seconds at the start of the day
    };

    struct Outcome {
        std::vector<TelemetryRow> rows;
        EstimatedParams estimate;
        std::optional<RateReport> rate;
        std::uint64_t key_bits = 0;
        unsigned frames = 0;
        unsigned frames_failed = 0;
        unsigned verify_failures = 0;
        bool keys_agree = true;
        bool lo_alarm = false;
    };

    Outcome run(const Plan& plan);

    const SecureSession& alice_channel() const { return *alice_session_; }
    const SecureSession& bob_channel() const { return *bob_session_; }
    const AuthKeyring& alice_keyring() const { return *alice_keys_; }

private:
    const Scenario& scenario_;
    std::shared_ptr<KeyStore> alice_;
    std::shared_ptr<KeyStore> bob_;
    std::uint64_t seed_;
    CodeBook codes_;
    SyndromeDecoder decoder_;
    std::shared_ptr<AuthKeyring> alice_keys_;
    std::shared_ptr<AuthKeyring> bob_keys_;
    std::unique_ptr<SecureSession> alice_session_;
    std::unique_ptr<SecureSession> bob_session_;
};

CampaignResult run_campaign(const Scenario& scenario, std::uint64_t seed, const CampaignOptions& options = {});

struct ReplayVerdict {
    bool has_verdict = false;
    unsigned days = 0;
    double min_keys_day = 0.0;
    double mean_keys_day = 0.0;
    double max_keys_day = 0.0;
    double min_rate_bps = 0.0;
    std::vector<unsigned> breach_days;
    bool breach() const { return !breach_days.empty(); }
};

/// Per-day mean rate from telemetry, compared with the key-per-day and sufficiency lines.
ReplayVerdict replay_check(const std::vector<TelemetryRow>& rows);

}  // namespace sequre
