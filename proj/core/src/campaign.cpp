#include "sequre/campaign.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "sequre/config.hpp"
#include "sequre/error.hpp"
#include "sequre/rng.hpp"

namespace sequre {

namespace {

constexpr double seconds_per_day = 86'400.0;

enum SeedPurpose : std::uint64_t {
    seed_pulses = 1,
    seed_xi = 2,
    seed_disclose = 3,
    seed_verify = 4,
    seed_amplify = 5,
    seed_secret = 6,
};

std::uint64_t seed_for(std::uint64_t root, unsigned day, unsigned block, std::uint64_t purpose)
{
    return derive_seed(root, (static_cast<std::uint64_t>(day) << 32) | (static_cast<std::uint64_t>(block) << 8) | purpose);
}

class Writer {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v)
    {
        for (int s = 24; s >= 0; s -= 8) bytes.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void u64(std::uint64_t v)
    {
        for (int s = 56; s >= 0; s -= 8) bytes.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void blob(std::span<const std::uint8_t> b)
    {
        u32(static_cast<std::uint32_t>(b.size()));
        bytes.insert(bytes.end(), b.begin(), b.end());
    }

    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(std::vector<std::uint8_t> b) : owned_(std::move(b)), bytes_(owned_) {}
    std::uint64_t uint(int width)
    {
        require(pos_ + width <= bytes_.size(), Errc::parse_error, "truncated campaign message");
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v = (v << 8) | bytes_[pos_++];
        return v;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
    std::uint64_t u64() { return uint(8); }
    double f64() { return std::bit_cast<double>(uint(8)); }
    std::span<const std::uint8_t> blob()
    {
        const auto n = u32();
        require(pos_ + n <= bytes_.size(), Errc::parse_error, "truncated campaign message");
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::vector<std::uint8_t> owned_;
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<DowntimeWindow> parse_windows(const std::string& text)
{
    std::vector<DowntimeWindow> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
        if (item.empty()) continue;
        const auto dash = item.find('-');
        require(dash != std::string::npos, Errc::scenario_invalid, "downtime window '" + item + "' is not start-end");
        out.push_back({std::stod(item.substr(0, dash)), std::stod(item.substr(dash + 1))});
    }
    return out;
}

}  // namespace

bool PhaseSpec::down(unsigned day_in_phase) const
{
    const double d = day_in_phase;
    return std::any_of(downtime.begin(), downtime.end(),
                       [d](const DowntimeWindow& w) { return d >= w.start_day && d < w.end_day; });
}

void Scenario::validate() const
{
    require(blocks_per_day >= 1, Errc::scenario_invalid, "blocks_per_day must be at least 1");
    require(disclosed_fraction > 0.0 && disclosed_fraction < 1.0, Errc::scenario_invalid,
            "disclosed_fraction must be in (0, 1)");
    require(recon_block_length >= 1024, Errc::scenario_invalid, "reconciliation block too short");
    require(initial_v_a >= 0.0, Errc::scenario_invalid, "initial_v_a must be non-negative");
    require(!codes.entries().empty(), Errc::scenario_invalid, "scenario needs a code table");
    modulator.validate();
    recon.validate();
    pool.validate();
    for (const auto& p : phases) {
        require(p.days > 0, Errc::scenario_invalid, "phase '" + p.name + "' has no duration");
        require(p.transmission > 0.0 && p.transmission <= 1.0, Errc::scenario_invalid,
                "phase '" + p.name + "' transmission out of (0, 1]");
        require(p.xi_mean >= 0.0 && p.xi_std >= 0.0, Errc::scenario_invalid,
                "phase '" + p.name + "' noise statistics must be non-negative");
        p.detector.validate();
        for (const auto& w : p.downtime)
            require(w.start_day >= 0.0 && w.end_day > w.start_day && w.end_day <= p.days, Errc::scenario_invalid,
                    "downtime window outside phase '" + p.name + "'");
        if (p.attack_fraction)
            require(*p.attack_fraction >= 0.0 && *p.attack_fraction <= 1.0, Errc::scenario_invalid,
                    "attack fraction must be in [0, 1]");
    }
}

double Scenario::compression_factor() const
{
    return modulator.pulse_rate * seconds_per_day
           / (static_cast<double>(blocks_per_day) * static_cast<double>(modulator.frame_len));
}

RateSettings Scenario::rate_settings() const
{
    return {modulator.pulse_rate, modulator.usable_fraction, disclosed_fraction};
}

unsigned Scenario::total_days() const
{
    unsigned d = 0;
    for (const auto& p : phases) d += p.days;
    return d;
}

Scenario Scenario::from_config(const KeyValueConfig& cfg)
{
    Scenario s;
    const LinkConfig link = link_config_from(cfg);
    s.name = cfg.get_string("scenario.name", s.name);
    s.seed = static_cast<std::uint64_t>(cfg.get_int("scenario.seed", static_cast<long long>(s.seed)));
    s.modulator = link.modulator;
    s.blocks_per_day = static_cast<unsigned>(cfg.get_int("campaign.blocks_per_day", s.blocks_per_day));
    s.disclosed_fraction = cfg.get_double("campaign.disclosed_fraction", s.disclosed_fraction);
    s.recon_block_length = static_cast<std::size_t>(
        cfg.get_int("campaign.recon_block_length", static_cast<long long>(s.recon_block_length)));
    s.initial_v_a = cfg.get_double("campaign.initial_v_a", s.initial_v_a);

    if (const auto beta = cfg.find("codes.beta")) s.codes = CodeTable::flat(std::stod(*beta));
    s.recon.quantizer.levels = static_cast<unsigned>(cfg.get_int("recon.levels", s.recon.quantizer.levels));
    s.recon.quantizer.clip = cfg.get_double("recon.clip", s.recon.quantizer.clip);
    s.recon.quantizer.labeling = labeling_from(cfg.get_string("recon.labeling", "natural"));
    s.recon.rate_margin = cfg.get_double("recon.rate_margin", s.recon.rate_margin);
    s.recon.rate_margin_slope = cfg.get_double("recon.rate_margin_slope", s.recon.rate_margin_slope);
    s.recon.max_iterations = static_cast<unsigned>(cfg.get_int("recon.max_iterations", s.recon.max_iterations));
    s.verify.reveal_count = static_cast<std::size_t>(
        cfg.get_int("verify.reveal_count", static_cast<long long>(s.verify.reveal_count)));
    s.pool.auth_fraction = cfg.get_double("pool.auth_fraction", s.pool.auth_fraction);
    s.pool.low_water = static_cast<std::size_t>(cfg.get_int("pool.low_water", static_cast<long long>(s.pool.low_water)));

    const auto count = cfg.get_int("phases", 0);
    require(count >= 0, Errc::scenario_invalid, "phase count must be non-negative");
    for (long long i = 1; i <= count; ++i) {
        const std::string pre = "phase." + std::to_string(i) + ".";
        PhaseSpec p;
        p.name = cfg.get_string(pre + "name", "phase-" + std::to_string(i));
        const auto days = cfg.get_int(pre + "days", 0);
        require(days > 0, Errc::scenario_invalid, "phase " + std::to_string(i) + " needs days > 0");
        p.days = static_cast<unsigned>(days);
        p.transmission = cfg.get_double(pre + "transmission", link.channel.transmission);
        if (const auto db = cfg.find(pre + "loss_db")) p.transmission = std::pow(10.0, -std::stod(*db) / 10.0);
        p.xi_mean = cfg.get_double(pre + "xi_mean", 0.0);
        p.xi_std = cfg.get_double(pre + "xi_std", 0.0);
        p.detector = link.detector;
        p.detector.efficiency = cfg.get_double(pre + "detector.efficiency", p.detector.efficiency);
        p.detector.electronic_noise = cfg.get_double(pre + "detector.electronic_noise", p.detector.electronic_noise);
        if (const auto w = cfg.find(pre + "downtime")) p.downtime = parse_windows(*w);
        if (cfg.contains(pre + "intercept_resend")) p.attack_fraction = cfg.get_double(pre + "intercept_resend", 1.0);
        s.phases.push_back(std::move(p));
    }
    s.validate();
    return s;
}

Scenario Scenario::load(const std::filesystem::path& path) { return from_config(KeyValueConfig::load(path)); }

void write_telemetry_header(std::ostream& out)
{
    out << "day,phase,block,xi_true,xi_block,xi_est,t_est,v_a,snr,k_bps_collective,k_bps_individual,k_bps,"
           "security_level,frames,frames_ok,beta_realized,leak_bits,key_bits,keys_day,alarms\n";
}

void write_telemetry_row(std::ostream& out, const TelemetryRow& r)
{
    out << r.day << ',' << r.phase << ',' << r.block << ',' << format_double(r.xi_true) << ','
        << format_double(r.xi_block) << ',' << format_double(r.xi_est) << ',' << format_double(r.t_est) << ','
        << format_double(r.v_a) << ',' << format_double(r.snr) << ',' << format_double(r.k_bps_collective) << ','
        << format_double(r.k_bps_individual) << ',' << format_double(r.k_bps) << ',' << to_string(r.level) << ','
        << r.frames << ',' << r.frames_ok << ',' << format_double(r.beta_realized) << ',' << r.leak_bits << ','
        << r.key_bits << ',' << format_double(r.keys_day) << ',' << r.alarms << '\n';
}

std::vector<TelemetryRow> read_telemetry(std::istream& in)
{
    std::vector<TelemetryRow> rows;
    std::string line;
    if (!std::getline(in, line)) return rows;
    require(line.rfind("day,phase,block", 0) == 0, Errc::parse_error, "telemetry header not recognized");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        require(f.size() == 20, Errc::parse_error, "telemetry row has " + std::to_string(f.size()) + " fields");
        TelemetryRow r;
        try {
            r.day = static_cast<unsigned>(std::stoul(f[0]));
            r.phase = f[1];
            r.block = static_cast<unsigned>(std::stoul(f[2]));
            r.xi_true = std::stod(f[3]);
            r.xi_block = std::stod(f[4]);
            r.xi_est = std::stod(f[5]);
            r.t_est = std::stod(f[6]);
            r.v_a = std::stod(f[7]);
            r.snr = std::stod(f[8]);
            r.k_bps_collective = std::stod(f[9]);
            r.k_bps_individual = std::stod(f[10]);
            r.k_bps = std::stod(f[11]);
            r.level = security_level_from(f[12]);
            r.frames = static_cast<unsigned>(std::stoul(f[13]));
            r.frames_ok = static_cast<unsigned>(std::stoul(f[14]));
            r.beta_realized = std::stod(f[15]);
            r.leak_bits = std::stoull(f[16]);
            r.key_bits = std::stoull(f[17]);
            r.keys_day = std::stod(f[18]);
            r.alarms = f[19];
        } catch (const std::logic_error&) {
            fail(Errc::parse_error, "malformed telemetry row: " + line);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void CampaignSummary::write(std::ostream& out) const
{
    out << "scenario = " << scenario << '\n'
        << "seed = " << seed << '\n'
        << "compression_factor = " << format_double(compression_factor) << '\n'
        << "rows = " << rows << '\n'
        << "key_bits = " << key_bits << '\n'
        << "frames_total = " << frames_total << '\n'
        << "frames_failed = " << frames_failed << '\n'
        << "verify_failures = " << verify_failures << '\n'
        << "channel_frames_sent = " << channel_frames_sent << '\n'
        << "masks_consumed = " << masks_consumed << '\n'
        << "auth_blocks_pulled = " << auth_blocks_pulled << '\n'
        << "keys_agree = " << (keys_agree ? "true" : "false") << '\n'
        << "phases = " << phases.size() << '\n';
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const auto& p = phases[i];
        const std::string pre = "phase." + std::to_string(i + 1) + ".";
        out << pre << "name = " << p.name << '\n'
            << pre << "active_days = " << p.active_days << '\n'
            << pre << "collective_blocks = " << p.collective_blocks << '\n'
            << pre << "individual_blocks = " << p.individual_blocks << '\n'
            << pre << "none_blocks = " << p.none_blocks << '\n'
            << pre << "mean_rate_bps = " << format_double(p.mean_rate_bps) << '\n'
            << pre << "min_keys_day = " << format_double(p.min_keys_day) << '\n'
            << pre << "mean_keys_day = " << format_double(p.mean_keys_day) << '\n'
            << pre << "key_bits = " << p.key_bits << '\n'
            << pre << "breach = " << (p.breach ? "true" : "false") << '\n';
    }
    out << "breach = " << (breach ? "true" : "false") << '\n'
        << "alarm = " << (alarm ? "true" : "false") << '\n';
}

std::vector<std::uint8_t> derive_preshared_secret(std::uint64_t seed)
{
    auto eng = make_engine(derive_seed(seed, seed_secret));
    std::vector<std::uint8_t> secret(preshared_secret_bytes);
    for (std::size_t i = 0; i < secret.size(); i += 8) {
        const std::uint64_t w = eng();
        for (std::size_t j = 0; j < 8; ++j) secret[i + j] = static_cast<std::uint8_t>(w >> (8 * j));
    }
    return secret;
}

namespace {

AuthKeyring::Supply auth_supply(const std::shared_ptr<KeyStore>& store)
{
    return [store]() -> std::optional<std::array<std::uint8_t, 16>> {
        try {
            return store->request_key(Consumer::auth, 0.0).bits;
        } catch (const Error& e) {
            if (e.code() == Errc::pool_empty) return std::nullopt;
            throw;
        }
    };
}

std::vector<std::uint8_t> encode_doubles(std::span<const SiftedPair> pairs)
{
    Writer w;
    w.bytes.reserve(4 + 8 * pairs.size());
    w.u32(static_cast<std::uint32_t>(pairs.size()));
    for (const auto& p : pairs) w.f64(p.b);
    return std::move(w.bytes);
}

void encode_estimate(Writer& w, const EstimatedParams& e)
{
    for (double v : {e.v_a, e.transmission, e.excess_noise, e.excess_noise_raw, e.se_v_a, e.se_transmission,
                     e.se_excess_noise, e.slope, e.residual_variance})
        w.f64(v);
    w.u64(e.n_used);
    w.u8(e.transmission_flagged ? 1 : 0);
}

EstimatedParams decode_estimate(Reader& r)
{
    EstimatedParams e;
    for (double* v : {&e.v_a, &e.transmission, &e.excess_noise, &e.excess_noise_raw, &e.se_v_a, &e.se_transmission,
                      &e.se_excess_noise, &e.slope, &e.residual_variance})
        *v = r.f64();
    e.n_used = r.u64();
    e.transmission_flagged = r.u8() != 0;
    return e;
}

void add_alarm(std::string& alarms, const char* what)
{
    if (!alarms.empty()) alarms += ';';
    alarms += what;
}

}  // namespace

DayPipeline::DayPipeline(const Scenario& scenario, std::shared_ptr<KeyStore> alice, std::shared_ptr<KeyStore> bob,
                         std::uint64_t seed)
    : scenario_(scenario), alice_(std::move(alice)), bob_(std::move(bob)), seed_(seed)
{
    const auto secret = derive_preshared_secret(seed);
    alice_keys_ = std::make_shared<AuthKeyring>(secret, auth_supply(alice_));
    bob_keys_ = std::make_shared<AuthKeyring>(secret, auth_supply(bob_));
    auto [a_end, b_end] = make_pipe();
    const std::uint64_t session = derive_seed(seed, 0x5E55'1011);
    alice_session_ = std::make_unique<SecureSession>(a_end, alice_keys_, Role::alice, session);
    bob_session_ = std::make_unique<SecureSession>(b_end, bob_keys_, Role::bob, session);
}

DayPipeline::Outcome DayPipeline::run(const Plan& plan)
{
    require(plan.phase != nullptr, Errc::invalid_config, "day plan without phase");
    const PhaseSpec& phase = *plan.phase;
    const DetectorConfig& det = phase.detector;
    SecureSession& alice = *alice_session_;
    SecureSession& bob = *bob_session_;

    Outcome out;
    const std::size_t n = scenario_.recon_block_length;

    struct BlockData {
        TelemetryRow row;
        std::vector<SiftedPair> kept;
    };
    std::vector<BlockData> blocks(plan.blocks);
    PairMoments day_moments;

    for (unsigned b = 0; b < plan.blocks; ++b) {
        auto& blk = blocks[b];
        blk.row.day = plan.day;
        blk.row.phase = phase.name;
        blk.row.block = b;

        auto xi_eng = make_engine(seed_for(seed_, plan.day, b, seed_xi));
        std::normal_distribution<double> xi_dist(phase.xi_mean, phase.xi_std);
        const double xi = phase.xi_std > 0.0 ? std::max(0.0, xi_dist(xi_eng)) : phase.xi_mean;
        blk.row.xi_true = xi;

        ModulatorConfig mod = scenario_.modulator;
        mod.v_a = plan.v_a;
        ChannelConfig ch;
        ch.transmission = phase.transmission;
        ch.excess_noise = xi;
        if (phase.attack_fraction) ch.attack = InterceptResend{*phase.attack_fraction};

        const auto pulses = generate_block(mod, ch, det, seed_for(seed_, plan.day, b, seed_pulses));
        const LoStatus lo = monitor_lo(pulses, det);
        if (lo.alarm) {
            out.lo_alarm = true;
            add_alarm(blk.row.alarms, "lo");
        }
        const double n0 = calibrate_shot_noise(lo.mean_lo, det);
        auto pairs = sift(pulses);
        const double scale = 1.0 / std::sqrt(n0);
        for (auto& p : pairs) {
            p.a *= scale;
            p.b *= scale;
        }
        auto split = select_disclosed(pairs, scenario_.disclosed_fraction, seed_for(seed_, plan.day, b, seed_disclose));

        // Bob discloses his values at the sampled positions; Alice pairs them with hers.
        bob.send(MessageType::estimation, encode_doubles(split.disclosed));
        Reader r(alice.expect(MessageType::estimation));
        const auto count = r.u32();
        require(count == split.disclosed.size(), Errc::parse_error, "disclosure size mismatch");
        PairMoments block_moments;
        for (std::uint32_t i = 0; i < count; ++i) block_moments.add(SiftedPair{split.disclosed[i].a, r.f64()});
        if (block_moments.n >= min_estimation_pairs) {
            try {
                blk.row.xi_block = estimate(block_moments, det).excess_noise_raw;
            } catch (const Error&) {
                blk.row.xi_block = 0.0;
            }
        }
        day_moments += block_moments;
        blk.kept = std::move(split.kept);
    }

    // Alice estimates on the pooled batch and announces the result.
    out.estimate = estimate(day_moments, det);
    {
        Writer w;
        encode_estimate(w, out.estimate);
        alice.send(MessageType::estimation, w.bytes);
        Reader r(bob.expect(MessageType::estimation));
        const auto bob_view = decode_estimate(r);
        require(bob_view.slope == out.estimate.slope, Errc::integrity_failure, "estimate mismatch across ends");
    }
    const EstimatedParams& est = out.estimate;
    try {
        out.rate = secret_rate(est, det, scenario_.codes, scenario_.rate_settings());
    } catch (const Error& e) {
        if (e.code() != Errc::no_code_available) throw;
    }
    const SecurityLevel level = out.rate ? out.rate->level : SecurityLevel::none;
    const double k_bps = out.rate ? out.rate->k_bps_selected() : 0.0;

    for (auto& blk : blocks) {
        auto& row = blk.row;
        row.xi_est = est.excess_noise_raw;
        row.t_est = est.transmission;
        row.v_a = est.v_a;
        row.snr = snr(est, det);
        if (out.rate) {
            row.k_bps_collective = out.rate->k_bps_collective;
            row.k_bps_individual = out.rate->k_bps_individual;
        } else {
            add_alarm(row.alarms, "no_code");
        }
        if (out.rate && level == SecurityLevel::none) add_alarm(row.alarms, "no_key");
        row.k_bps = k_bps;
        row.level = level;
        row.keys_day = k_bps * seconds_per_day / static_cast<double>(key_block_bits);
        row.frames = static_cast<unsigned>(blk.kept.size() / n);
        if (est.transmission_flagged) add_alarm(row.alarms, "t_above_one");
    }

    if (level == SecurityLevel::none) {
        for (auto& blk : blocks) out.rows.push_back(std::move(blk.row));
        return out;
    }

    // Reconciliation: Bob sends every frame's transcript in one message.
    const ChannelModel model = ChannelModel::from_estimate(est);
    struct Frame {
        unsigned block;
        std::span<const SiftedPair> pairs;
        BitPlanes bob_planes;
        Transcript transcript;
        std::vector<std::uint8_t> alice_bits;
        std::vector<std::uint8_t> bob_bits;
        bool decoded = false;
        double beta = 0.0;
    };
    // Frames are cut from the day's kept pairs in order; a frame belongs to the block it starts in.
    std::vector<SiftedPair> day_kept;
    std::vector<std::size_t> block_start;
    for (auto& blk : blocks) {
        block_start.push_back(day_kept.size());
        day_kept.insert(day_kept.end(), blk.kept.begin(), blk.kept.end());
        blk.row.frames = 0;
    }
    std::vector<Frame> frames;
    for (std::size_t f = 0; f + n <= day_kept.size(); f += n) {
        const auto b = static_cast<unsigned>(std::upper_bound(block_start.begin(), block_start.end(), f)
                                             - block_start.begin() - 1);
        ++blocks[b].row.frames;
        frames.push_back({b, std::span<const SiftedPair>(day_kept).subspan(f, n), {}, {}, {}, {}, false, 0.0});
    }

    {
        Writer w;
        w.u32(static_cast<std::uint32_t>(frames.size()));
        for (auto& fr : frames) {
            std::vector<double> bv(n);
            for (std::size_t j = 0; j < n; ++j) bv[j] = fr.pairs[j].b;
            auto bob_out = bob_prepare(bv, model, scenario_.recon, codes_);
            fr.bob_planes = std::move(bob_out.planes);
            const double h = empirical_symbol_entropy(bv, bob_out.transcript.sigma_b, scenario_.recon.quantizer);
            const double i_ab = 0.5 * std::log2(1.0 + model.snr());
            fr.beta = i_ab > 0.0 ? (h - static_cast<double>(bob_out.transcript.leak_bits()) / n) / i_ab : 0.0;
            w.blob(bob_out.transcript.encode());
        }
        bob.send(MessageType::reconciliation, w.bytes);
    }

    // Alice decodes, then reports per-frame status and a verification seed.
    {
        Reader r(alice.expect(MessageType::reconciliation));
        require(r.u32() == frames.size(), Errc::parse_error, "frame count mismatch");
        Writer w;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            auto& fr = frames[i];
            fr.transcript = Transcript::decode(r.blob());
            std::vector<double> av(n);
            for (std::size_t j = 0; j < n; ++j) av[j] = fr.pairs[j].a;
            auto res = alice_decode(av, model, fr.transcript, scenario_.recon, codes_, decoder_);
            fr.decoded = !res.frame_error;
            if (fr.decoded) fr.alice_bits = key_material(res.planes, fr.transcript);
            w.u8(fr.decoded ? 1 : 0);
            w.u64(seed_for(seed_, plan.day, static_cast<unsigned>(i), seed_verify));
        }
        alice.send(MessageType::verification, w.bytes);
    }

    // Bob reveals the sampled bits and proposes the hashing seed.
    std::vector<VerifyResult> positions(frames.size());
    {
        Reader r(bob.expect(MessageType::verification));
        Writer w;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            auto& fr = frames[i];
            const bool decoded = r.u8() != 0;
            const std::uint64_t vseed = r.u64();
            if (!decoded) {
                w.u8(0);
                continue;
            }
            fr.bob_bits = key_material(fr.bob_planes, fr.transcript);
            positions[i].positions = sample_positions(fr.bob_bits.size(), scenario_.verify.reveal_count, vseed);
            std::vector<std::uint8_t> revealed;
            for (auto p : positions[i].positions) revealed.push_back(fr.bob_bits[p]);
            w.u8(1);
            w.blob(pack_bits(revealed));
            w.u64(seed_for(seed_, plan.day, static_cast<unsigned>(i), seed_amplify));
        }
        bob.send(MessageType::verification, w.bytes);
    }

    // Alice compares and announces the verdict; both ends then hash.
    std::vector<std::uint64_t> pa_seed(frames.size(), 0);
    std::vector<bool> verified(frames.size(), false);
    {
        Reader r(alice.expect(MessageType::verification));
        Writer w;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            auto& fr = frames[i];
            if (r.u8() == 0) {
                w.u8(0);
                continue;
            }
            const auto revealed = unpack_bits(r.blob(), scenario_.verify.reveal_count);
            pa_seed[i] = r.u64();
            const auto pos = sample_positions(fr.alice_bits.size(), scenario_.verify.reveal_count,
                                              seed_for(seed_, plan.day, static_cast<unsigned>(i), seed_verify));
            bool ok = true;
            for (std::size_t k = 0; k < pos.size(); ++k) ok = ok && fr.alice_bits[pos[k]] == revealed[k];
            verified[i] = ok;
            w.u8(ok ? 1 : 0);
        }
        alice.send(MessageType::amplification, w.bytes);
        Reader verdict(bob.expect(MessageType::amplification));
        for (std::size_t i = 0; i < frames.size(); ++i)
            require((verdict.u8() != 0) == verified[i], Errc::integrity_failure, "verdict mismatch across ends");
    }

    for (std::size_t i = 0; i < frames.size(); ++i) {
        auto& fr = frames[i];
        auto& row = blocks[fr.block].row;
        ++out.frames;
        if (!fr.decoded) {
            ++out.frames_failed;
            add_alarm(row.alarms, "frame_error");
            continue;
        }
        row.beta_realized += fr.beta;
        row.leak_bits += fr.transcript.leak_bits();
        if (!verified[i]) {
            ++out.verify_failures;
            add_alarm(row.alarms, "verify_mismatch");
            continue;
        }
        ++row.frames_ok;
        const auto a_in = remove_positions(fr.alice_bits, positions[i].positions);
        const auto b_in = remove_positions(fr.bob_bits, positions[i].positions);
        KeyMaterial ka;
        KeyMaterial kb;
        try {
            ka = amplify(a_in, n, *out.rate, scenario_.verify.reveal_count, pa_seed[i]);
            kb = amplify(b_in, n, *out.rate, scenario_.verify.reveal_count, pa_seed[i]);
        } catch (const Error& e) {
            if (e.code() != Errc::non_positive_length) throw;
            continue;
        }
        if (ka.bits != kb.bits) out.keys_agree = false;
        const double t = plan.time + seconds_per_day * (fr.block + 1) / static_cast<double>(plan.blocks);
        alice_->ingest(ka.bits, ka.level, t);
        bob_->ingest(kb.bits, kb.level, t);
        row.key_bits += ka.bits.size();
        out.key_bits += ka.bits.size();
    }
    for (auto& blk : blocks) {
        const unsigned decoded = blk.row.frames - static_cast<unsigned>(std::count_if(
            frames.begin(), frames.end(), [&](const Frame& f) { return &blocks[f.block] == &blk && !f.decoded; }));
        if (decoded > 0) blk.row.beta_realized /= decoded;
        out.rows.push_back(std::move(blk.row));
    }
    return out;
}

CampaignResult run_campaign(const Scenario& scenario_in, std::uint64_t seed, const CampaignOptions& options)
{
    Scenario scenario = scenario_in;
    if (options.blocks_per_day) scenario.blocks_per_day = *options.blocks_per_day;
    scenario.validate();

    auto alice = options.alice_store ? options.alice_store : std::make_shared<KeyStore>(scenario.pool);
    auto bob = options.bob_store ? options.bob_store : std::make_shared<KeyStore>(scenario.pool);
    DayPipeline pipeline(scenario, alice, bob, seed);

    std::unique_ptr<std::ofstream> csv;
    if (options.output_dir) {
        std::filesystem::create_directories(*options.output_dir);
        csv = std::make_unique<std::ofstream>(*options.output_dir / "telemetry.csv");
        if (!*csv) fail(Errc::io_error, "cannot write telemetry in " + options.output_dir->string());
        write_telemetry_header(*csv);
    }

    CampaignResult result;
    auto& summary = result.summary;
    summary.scenario = scenario.name;
    summary.seed = seed;
    summary.compression_factor = scenario.compression_factor();

    double v_a = scenario.initial_v_a;
    if (v_a <= 0.0 && !scenario.phases.empty()) {
        const auto& p0 = scenario.phases.front();
        v_a = optimize_va(p0.transmission, p0.xi_mean, p0.detector, scenario.codes);
    }

    unsigned day = 0;
    for (const auto& phase : scenario.phases) {
        PhaseSummary ps;
        ps.name = phase.name;
        double rate_sum = 0.0;
        double keys_sum = 0.0;
        bool first = true;
        for (unsigned d = 0; d < phase.days; ++d, ++day) {
            if (phase.down(d)) continue;
            DayPipeline::Plan plan;
            plan.day = day;
            plan.phase = &phase;
            plan.v_a = v_a;
            plan.blocks = scenario.blocks_per_day;
            plan.time = day * seconds_per_day;
            auto outcome = pipeline.run(plan);

            for (const auto& row : outcome.rows) {
                if (csv) write_telemetry_row(*csv, row);
                switch (row.level) {
                case SecurityLevel::collective: ++ps.collective_blocks; break;
                case SecurityLevel::individual: ++ps.individual_blocks; break;
                case SecurityLevel::none: ++ps.none_blocks; break;
                }
            }
            const double rate = outcome.rate ? outcome.rate->k_bps_selected() : 0.0;
            const double keys_day = rate * seconds_per_day / static_cast<double>(key_block_bits);
            rate_sum += rate;
            keys_sum += keys_day;
            ps.min_keys_day = first ? keys_day : std::min(ps.min_keys_day, keys_day);
            first = false;
            ++ps.active_days;
            ps.key_bits += outcome.key_bits;

            summary.frames_total += outcome.frames;
            summary.frames_failed += outcome.frames_failed;
            summary.verify_failures += outcome.verify_failures;
            summary.keys_agree = summary.keys_agree && outcome.keys_agree;
            summary.alarm = summary.alarm || outcome.lo_alarm || !outcome.rate
                            || outcome.rate->level == SecurityLevel::none;
            result.telemetry.insert(result.telemetry.end(), outcome.rows.begin(), outcome.rows.end());

            // Next day's modulation follows the latest estimate.
            const double t = std::min(outcome.estimate.transmission, 1.0);
            if (t > 0.0) v_a = optimize_va(t, outcome.estimate.excess_noise, phase.detector, scenario.codes);

            if (options.on_day_end) options.on_day_end(day);
        }
        if (ps.active_days > 0) {
            ps.mean_rate_bps = rate_sum / ps.active_days;
            ps.mean_keys_day = keys_sum / ps.active_days;
            ps.breach = ps.min_keys_day < keys_per_day_threshold;
        }
        summary.key_bits += ps.key_bits;
        summary.breach = summary.breach || ps.breach;
        summary.phases.push_back(ps);
    }

    summary.rows = result.telemetry.size();
    const auto la = pipeline.alice_channel().ledger();
    const auto lb = pipeline.bob_channel().ledger();
    summary.channel_frames_sent = la.frames_sent + lb.frames_sent;
    summary.masks_consumed = pipeline.alice_keyring().masks_consumed(Role::alice)
                             + pipeline.alice_keyring().masks_consumed(Role::bob);
    summary.auth_blocks_pulled = pipeline.alice_keyring().blocks_pulled();
    summary.alarm = summary.alarm || pipeline.alice_channel().alarm() || pipeline.bob_channel().alarm()
                    || summary.verify_failures > 0 || !summary.keys_agree;

    if (options.output_dir) {
        std::ofstream s(*options.output_dir / "summary.txt");
        summary.write(s);
    }
    return result;
}

ReplayVerdict replay_check(const std::vector<TelemetryRow>& rows)
{
    ReplayVerdict v;
    if (rows.empty()) return v;
    std::map<unsigned, std::pair<double, unsigned>> per_day;
    for (const auto& r : rows) {
        auto& [sum, count] = per_day[r.day];
        sum += r.k_bps;
        ++count;
    }
    v.has_verdict = true;
    v.days = static_cast<unsigned>(per_day.size());
    double total = 0.0;
    bool first = true;
    for (const auto& [day, acc] : per_day) {
        const double rate = acc.first / acc.second;
        const double keys = rate * seconds_per_day / static_cast<double>(key_block_bits);
        if (first) {
            v.min_keys_day = v.max_keys_day = keys;
            v.min_rate_bps = rate;
            first = false;
        }
        v.min_keys_day = std::min(v.min_keys_day, keys);
        v.max_keys_day = std::max(v.max_keys_day, keys);
        v.min_rate_bps = std::min(v.min_rate_bps, rate);
        total += keys;
        if (keys < keys_per_day_threshold || rate < sufficient_rate_bps) v.breach_days.push_back(day);
    }
    v.mean_keys_day = total / v.days;
    return v;
}

}  // namespace sequre
