#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "sequre/campaign.hpp"
#include "sequre/error.hpp"
#include "sequre/rng.hpp"
#include "sequre/secure_channel.hpp"
#include "sequre/tunnel_run.hpp"

namespace {

constexpr int exit_breach = 2;
constexpr int exit_alarm = 3;
constexpr int exit_error = 1;

void print_rate(const sequre::RateReport& r)
{
    std::printf("v_a                = %.4f\n", r.v_a);
    std::printf("snr                = %.4f\n", r.snr);
    std::printf("beta               = %.3f\n", r.beta);
    std::printf("i_ab               = %.6f bit/pulse\n", r.i_ab);
    std::printf("i_be               = %.6f bit/pulse\n", r.i_be);
    std::printf("chi_be             = %.6f bit/pulse\n", r.chi_be);
    std::printf("k_individual       = %.6f bit/pulse (raw %.6f)\n", r.k_individual, r.k_individual_raw);
    std::printf("k_collective       = %.6f bit/pulse (raw %.6f)\n", r.k_collective, r.k_collective_raw);
    std::printf("k_bps_individual   = %.1f\n", r.k_bps_individual);
    std::printf("k_bps_collective   = %.1f\n", r.k_bps_collective);
    std::printf("security_level     = %s\n", std::string(sequre::to_string(r.level)).c_str());
    std::printf("keys_per_day       = %.0f\n", r.k_bps_selected() * 86400.0 / 128.0);
}

std::vector<std::uint8_t> seeded_key_bits(std::uint64_t seed, std::size_t keys)
{
    auto eng = sequre::make_engine(seed);
    std::vector<std::uint8_t> bits(keys * sequre::key_block_bits);
    for (std::size_t i = 0; i < bits.size(); i += 64) {
        const std::uint64_t w = eng();
        for (std::size_t j = 0; j < 64; ++j) bits[i + j] = static_cast<std::uint8_t>((w >> j) & 1U);
    }
    return bits;
}

std::shared_ptr<sequre::KeyStore> open_store(const std::string& path, std::uint64_t seed, std::size_t seed_keys)
{
    sequre::PoolPolicy pool;
    pool.auth_fraction = 0.0;
    if (!path.empty()) return std::make_shared<sequre::KeyStore>(pool, 0.0, std::filesystem::path(path));
    auto store = std::make_shared<sequre::KeyStore>(pool);
    store->ingest(seeded_key_bits(seed, seed_keys), sequre::SecurityLevel::collective, 0.0);
    return store;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"seqcli: simulated CV-QKD link, post-processing and key delivery"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Replay a campaign scenario in compressed time");
    std::string scenario_path = "scenarios/sequre_default.conf";
    std::optional<std::uint64_t> seed;
    std::string out_dir = "campaign_out";
    std::optional<unsigned> blocks_per_day;
    std::optional<double> compression;
    std::uint64_t soak_bytes = 0;
    run->add_option("-s,--scenario", scenario_path, "Scenario file")->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Campaign seed (default: scenario.seed)");
    run->add_option("-o,--out", out_dir, "Output directory for telemetry.csv and summary.txt");
    auto* bpd = run->add_option("--blocks-per-day", blocks_per_day, "Blocks simulated per day")->check(CLI::PositiveNumber);
    run->add_option("--compression", compression, "Real pulses per simulated pulse; sets blocks per day")
        ->check(CLI::PositiveNumber)
        ->excludes(bpd);
    run->add_option("--tunnel-bytes", soak_bytes, "Run the encrypted tunnel alongside the campaign");

    // replay-check
    auto* replay = app.add_subcommand("replay-check", "Recompute keys/day from telemetry");
    std::string telemetry_path;
    replay->add_option("telemetry", telemetry_path, "telemetry.csv")->required()->check(CLI::ExistingFile);

    // keyrate
    auto* keyrate = app.add_subcommand("keyrate", "One-shot secret key rate");
    double kr_va = 0.0, kr_t = 0.0, kr_loss = 5.6, kr_xi = 0.005, kr_eta = 0.6, kr_vel = 0.01, kr_beta = 0.9;
    double kr_rate = 500'000.0;
    keyrate->add_option("--v-a", kr_va, "Modulation variance in SNU; 0 optimizes");
    auto* t_opt = keyrate->add_option("-T,--transmission", kr_t, "Channel transmission");
    keyrate->add_option("--loss-db", kr_loss, "Channel loss in dB")->excludes(t_opt);
    keyrate->add_option("--xi", kr_xi, "Excess noise in SNU");
    keyrate->add_option("--eta", kr_eta, "Detector efficiency");
    keyrate->add_option("--v-el", kr_vel, "Electronic noise in SNU");
    keyrate->add_option("--beta", kr_beta, "Reconciliation efficiency");
    keyrate->add_option("--pulse-rate", kr_rate, "Pulses per second");

    // tunnel
    auto* tunnel = app.add_subcommand("tunnel", "Encrypted tunnel with timed key renewal");
    std::uint64_t tn_bytes = std::uint64_t{1} << 30;
    double tn_period = 10.0, tn_throughput = 100e6, tn_grace = 0.0;
    std::uint64_t tn_cap = std::uint64_t{1} << 35;
    std::string tn_alice, tn_bob, tn_listen, tn_connect;
    std::uint64_t tn_seed = 1;
    std::size_t tn_keys = 64;
    bool tn_refuse = false;
    tunnel->add_option("--bytes", tn_bytes, "Bytes to transfer in loopback mode");
    tunnel->add_option("--period", tn_period, "Key renewal period in seconds");
    tunnel->add_option("--throughput", tn_throughput, "Link throughput in bit/s for the simulated clock");
    tunnel->add_option("--cap-bits", tn_cap, "Maximum bits encrypted under one key");
    tunnel->add_option("--grace", tn_grace, "Seconds to keep the last key after exhaustion; 0 halts");
    tunnel->add_option("--alice-store", tn_alice, "Sender key store file (default: seeded keys)");
    tunnel->add_option("--bob-store", tn_bob, "Receiver key store file (default: seeded keys)");
    tunnel->add_option("--seed", tn_seed, "Seed for the shared demo keys");
    tunnel->add_option("--keys", tn_keys, "Number of seeded demo keys");
    tunnel->add_flag("--refuse-individual", tn_refuse, "Skip keys certified only against individual attacks");
    auto* listen = tunnel->add_option("--listen", tn_listen, "Receive on host:port and write plaintext to stdout");
    tunnel->add_option("--connect", tn_connect, "Send stdin to host:port")->excludes(listen);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto scenario = sequre::Scenario::load(scenario_path);
            sequre::CampaignOptions opts;
            opts.output_dir = out_dir;
            if (blocks_per_day) opts.blocks_per_day = *blocks_per_day;
            if (compression)
                opts.blocks_per_day = std::max(1U, static_cast<unsigned>(std::lround(
                    scenario.modulator.pulse_rate * 86400.0
                    / (*compression * static_cast<double>(scenario.modulator.frame_len)))));
            const std::uint64_t s = seed.value_or(scenario.seed);
            opts.alice_store = std::make_shared<sequre::KeyStore>(scenario.pool);
            opts.bob_store = std::make_shared<sequre::KeyStore>(scenario.pool);

            std::thread soak;
            sequre::TunnelReport soak_report;
            if (soak_bytes > 0) {
                opts.on_day_end = [&](unsigned) {
                    if (soak.joinable()) return;
                    sequre::TunnelJob job;
                    job.bytes = soak_bytes;
                    soak = std::thread([&, job] { soak_report = sequre::run_tunnel(*opts.alice_store, *opts.bob_store, job); });
                };
            }
            const auto result = sequre::run_campaign(scenario, s, opts);
            if (soak.joinable()) soak.join();
            result.summary.write(std::cout);
            bool alarm = result.summary.alarm;
            if (soak_bytes > 0) {
                std::printf("tunnel.bytes = %llu\ntunnel.renewals = %llu\ntunnel.max_bits_under_key = %llu\n"
                            "tunnel.mismatched_bytes = %llu\ntunnel.ok = %s\n",
                            static_cast<unsigned long long>(soak_report.bytes_received),
                            static_cast<unsigned long long>(soak_report.sender.renewals),
                            static_cast<unsigned long long>(soak_report.sender.max_bits_under_key),
                            static_cast<unsigned long long>(soak_report.mismatched_bytes),
                            soak_report.ok() ? "true" : "false");
                if (!soak_report.error.empty()) std::fprintf(stderr, "tunnel: %s\n", soak_report.error.c_str());
                alarm = alarm || !soak_report.ok();
            }
            if (result.summary.breach) return exit_breach;
            return alarm ? exit_alarm : 0;
        }

        if (*replay) {
            std::ifstream in(telemetry_path);
            const auto v = sequre::replay_check(sequre::read_telemetry(in));
            if (!v.has_verdict) {
                std::puts("verdict = empty");
                return 0;
            }
            std::printf("days = %u\nmin_keys_day = %.0f\nmean_keys_day = %.0f\nmax_keys_day = %.0f\n"
                        "min_rate_bps = %.1f\nbreach_days = %zu\n",
                        v.days, v.min_keys_day, v.mean_keys_day, v.max_keys_day, v.min_rate_bps,
                        v.breach_days.size());
            for (auto d : v.breach_days) std::printf("breach_day = %u\n", d);
            std::printf("verdict = %s\n", v.breach() ? "breach" : "ok");
            return v.breach() ? exit_breach : 0;
        }

        if (*keyrate) {
            const double t = kr_t > 0.0 ? kr_t : std::pow(10.0, -kr_loss / 10.0);
            sequre::DetectorConfig det;
            det.efficiency = kr_eta;
            det.electronic_noise = kr_vel;
            const auto codes = sequre::CodeTable::flat(kr_beta);
            const double va = kr_va > 0.0 ? kr_va : sequre::optimize_va(t, kr_xi, det, codes);
            sequre::RateSettings settings;
            settings.pulse_rate = kr_rate;
            print_rate(sequre::rate_at(va, t, kr_xi, det, codes, settings));
            return 0;
        }

        if (*tunnel) {
            sequre::TunnelJob job;
            job.bytes = tn_bytes;
            job.throughput_bps = tn_throughput;
            job.policy.period_seconds = tn_period;
            job.policy.cap_bits = tn_cap;
            job.policy.refuse_individual = tn_refuse;
            if (tn_grace > 0.0) {
                job.policy.exhaustion = sequre::Exhaustion::grace;
                job.policy.grace_seconds = tn_grace;
            }
            job.policy.validate();

            auto split = [](const std::string& hp) {
                const auto c = hp.rfind(':');
                if (c == std::string::npos) return std::pair<std::string, std::uint16_t>{"127.0.0.1", static_cast<std::uint16_t>(std::stoi(hp))};
                return std::pair<std::string, std::uint16_t>{hp.substr(0, c), static_cast<std::uint16_t>(std::stoi(hp.substr(c + 1)))};
            };

            if (!tn_listen.empty()) {
                auto store = open_store(tn_bob, tn_seed, tn_keys);
                const auto [host, port] = split(tn_listen);
                sequre::TcpListener listener(port, host);
                auto conn = listener.accept();
                sequre::TunnelReceiver rx(sequre::key_supply_from(*store, {}), conn, tn_refuse);
                while (auto chunk = rx.read()) std::fwrite(chunk->data(), 1, chunk->size(), stdout);
                std::fprintf(stderr, "frames = %llu renewals = %llu\n",
                             static_cast<unsigned long long>(rx.ledger().frames),
                             static_cast<unsigned long long>(rx.ledger().renewals));
                return 0;
            }
            if (!tn_connect.empty()) {
                auto store = open_store(tn_alice, tn_seed, tn_keys);
                const auto [host, port] = split(tn_connect);
                sequre::TunnelSender tx(job.policy, sequre::key_supply_from(*store, {}),
                                        sequre::TcpStream::connect(host, port), job.throughput_bps);
                std::vector<std::uint8_t> buf(1 << 16);
                std::size_t n;
                while ((n = std::fread(buf.data(), 1, buf.size(), stdin)) > 0) tx.write(std::span(buf).first(n));
                tx.close();
                std::fprintf(stderr, "frames = %llu renewals = %llu\n",
                             static_cast<unsigned long long>(tx.ledger().frames),
                             static_cast<unsigned long long>(tx.ledger().renewals));
                return 0;
            }

            auto alice = open_store(tn_alice, tn_seed, tn_keys);
            auto bob = open_store(tn_bob, tn_seed, tn_keys);
            job.key_wait = std::chrono::milliseconds(0);
            const auto r = sequre::run_tunnel(*alice, *bob, job);
            std::printf("bytes_sent = %llu\nbytes_received = %llu\nmismatched_bytes = %llu\nframes = %llu\n"
                        "renewals = %llu\ncap_renewals = %llu\nmax_bits_under_key = %llu\nsimulated_seconds = %.2f\n",
                        static_cast<unsigned long long>(r.bytes_sent), static_cast<unsigned long long>(r.bytes_received),
                        static_cast<unsigned long long>(r.mismatched_bytes),
                        static_cast<unsigned long long>(r.sender.frames),
                        static_cast<unsigned long long>(r.sender.renewals),
                        static_cast<unsigned long long>(r.sender.cap_renewals),
                        static_cast<unsigned long long>(r.sender.max_bits_under_key), r.simulated_seconds);
            if (!r.error.empty()) std::fprintf(stderr, "error: %s\n", r.error.c_str());
            return r.ok() ? 0 : exit_alarm;
        }
    } catch (const sequre::Error& e) {
        std::fprintf(stderr, "seqcli: %s\n", e.what());
        return exit_error;
    }
    return 0;
}
