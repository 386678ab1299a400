#include "sequre/reconciliation.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <numbers>
#include <numeric>

#include "sequre/error.hpp"

namespace sequre {

std::string_view to_string(Labeling l) { return l == Labeling::gray ? "gray" : "natural"; }

Labeling labeling_from(std::string_view name)
{
    if (name == "gray") return Labeling::gray;
    if (name == "natural") return Labeling::natural;
    fail(Errc::invalid_config, "unknown labeling '" + std::string(name) + "'");
}

std::string_view to_string(LevelOutcome o)
{
    switch (o) {
    case LevelOutcome::decoded: return "decoded";
    case LevelOutcome::disclosed: return "disclosed";
    case LevelOutcome::failed: return "failed";
    case LevelOutcome::skipped: return "skipped";
    }
    return "?";
}

void QuantizerConfig::validate() const
{
    require(levels >= 1 && levels <= 12, Errc::invalid_config, "quantizer levels must be in [1, 12]");
    require(clip > 0.0 && std::isfinite(clip), Errc::invalid_config, "quantizer clip must be positive");
}

unsigned QuantizerConfig::label(unsigned cell) const
{
    return labeling == Labeling::gray ? cell ^ (cell >> 1) : cell;
}

unsigned quantize_cell(double b, double sigma_b, const QuantizerConfig& q)
{
    const double k = q.cells();
    const double width = 2.0 * q.clip * sigma_b / k;
    const double idx = std::floor((b + q.clip * sigma_b) / width);
    return static_cast<unsigned>(std::clamp(idx, 0.0, k - 1.0));
}

BitPlanes quantize(std::span<const double> b_values, double sigma_b, const QuantizerConfig& q)
{
    q.validate();
    require(!b_values.empty(), Errc::empty_block, "nothing to quantize");
    require(sigma_b > 0.0, Errc::invalid_config, "sigma_b must be positive");
    BitPlanes planes(q.levels, std::vector<std::uint8_t>(b_values.size()));
    for (std::size_t j = 0; j < b_values.size(); ++j) {
        const unsigned lab = q.label(quantize_cell(b_values[j], sigma_b, q));
        for (unsigned i = 0; i < q.levels; ++i) planes[i][j] = (lab >> i) & 1U;
    }
    return planes;
}

double ChannelModel::sigma_b() const { return std::sqrt(gain * gain * v_a + noise_variance); }

ChannelModel ChannelModel::from_estimate(const EstimatedParams& est)
{
    return {est.slope, std::max(est.residual_variance, 1e-12), est.v_a};
}

ChannelModel ChannelModel::from_snr(double snr, double v_a)
{
    require(snr > 0.0 && v_a > 0.0, Errc::invalid_config, "SNR and V_A must be positive");
    return {std::sqrt(snr), v_a, v_a};
}

namespace {

constexpr double min_noise_variance = 1e-24;

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Cell probabilities of b given mean mu; edges are the quantizer boundaries.
void cell_probabilities(double mu, double sd, std::span<const double> edges, double* out)
{
    const std::size_t k = edges.size() + 1;
    double prev = 0.0;
    for (std::size_t c = 0; c + 1 < k; ++c) {
        const double cdf = norm_cdf((edges[c] - mu) / sd);
        out[c] = std::max(cdf - prev, 0.0);
        prev = cdf;
    }
    out[k - 1] = std::max(1.0 - prev, 0.0);
}

std::vector<double> inner_edges(double sigma_b, const QuantizerConfig& q)
{
    const unsigned k = q.cells();
    const double width = 2.0 * q.clip * sigma_b / k;
    std::vector<double> edges(k - 1);
    for (unsigned c = 1; c < k; ++c) edges[c - 1] = -q.clip * sigma_b + width * c;
    return edges;
}

double plogp(double p) { return p > 0.0 ? -p * std::log2(p) : 0.0; }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v)
{
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::uint64_t uint(int width)
    {
        require(pos_ + width <= bytes_.size(), Errc::parse_error, "truncated transcript");
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v = (v << 8) | bytes_[pos_++];
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t count)
    {
        require(pos_ + count <= bytes_.size(), Errc::parse_error, "truncated transcript");
        auto s = bytes_.subspan(pos_, count);
        pos_ += count;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<double> plane_conditional_entropies(const ChannelModel& model, const QuantizerConfig& q)
{
    q.validate();
    const unsigned k = q.cells();
    const double sd_a = std::sqrt(model.v_a);
    const double sd_z = std::sqrt(std::max(model.noise_variance, min_noise_variance));
    const auto edges = inner_edges(model.sigma_b(), q);

    // Simpson rule over a in [-8 sd_a, 8 sd_a].
    constexpr int steps = 800;
    const double h = 16.0 * sd_a / steps;
    std::vector<double> joint(q.levels, 0.0);  // H(B_0..B_i | A)
    std::vector<double> p(k);
    std::vector<double> group(k);
    double weight_total = 0.0;
    for (int s = 0; s <= steps; ++s) {
        const double a = -8.0 * sd_a + h * s;
        const double w = (s == 0 || s == steps ? 1.0 : (s % 2 ? 4.0 : 2.0))
                         * std::exp(-0.5 * (a / sd_a) * (a / sd_a));
        weight_total += w;
        cell_probabilities(model.gain * a, sd_z, edges, p.data());
        for (unsigned i = 0; i < q.levels; ++i) {
            const unsigned mask = (2U << i) - 1U;
            std::fill(group.begin(), group.end(), 0.0);
            for (unsigned c = 0; c < k; ++c) group[q.label(c) & mask] += p[c];
            double hsum = 0.0;
            for (unsigned g = 0; g <= mask; ++g) hsum += plogp(group[g]);
            joint[i] += w * hsum;
        }
    }
    std::vector<double> out(q.levels);
    double prev = 0.0;
    for (unsigned i = 0; i < q.levels; ++i) {
        const double hj = joint[i] / weight_total;
        out[i] = std::clamp(hj - prev, 0.0, 1.0);
        prev = hj;
    }
    return out;
}

void ReconConfig::validate() const
{
    quantizer.validate();
    require(rate_step > 0.0 && rate_step < 0.5, Errc::invalid_config, "rate step must be in (0, 0.5)");
    require(rate_margin >= 0.0 && rate_margin < 1.0, Errc::invalid_config, "rate margin must be in [0, 1)");
    require(rate_margin_slope >= 0.0 && rate_margin_slope < 1.0, Errc::invalid_config, "rate margin slope must be in [0, 1)");
    require(max_iterations >= 1, Errc::invalid_config, "decoder needs at least one iteration");
}

double ReconConfig::pick_rate(double conditional_entropy) const
{
    const double target = 1.0 - conditional_entropy - rate_margin - rate_margin_slope * conditional_entropy;
    const double k = std::floor(target / rate_step + 1e-9);
    const double top = std::round((1.0 - rate_step) / rate_step);
    const double r = std::min(k, top) * rate_step;
    return r < rate_step - 1e-12 ? 0.0 : r;
}

std::uint64_t Transcript::leak_bits() const
{
    std::uint64_t leak = 0;
    for (const auto& l : levels) leak += l.bit_length;
    return leak;
}

std::vector<std::uint8_t> Transcript::encode() const
{
    std::vector<std::uint8_t> out;
    put_u32(out, block_length);
    out.push_back(static_cast<std::uint8_t>(quantizer.levels));
    out.push_back(static_cast<std::uint8_t>(quantizer.labeling));
    put_u64(out, std::bit_cast<std::uint64_t>(quantizer.clip));
    put_u64(out, std::bit_cast<std::uint64_t>(sigma_b));
    put_u64(out, code_seed);
    out.push_back(static_cast<std::uint8_t>(levels.size()));
    for (const auto& l : levels) {
        out.push_back(l.level);
        out.push_back(static_cast<std::uint8_t>(l.kind));
        put_u32(out, l.bit_length);
        out.insert(out.end(), l.payload.begin(), l.payload.end());
    }
    return out;
}

Transcript Transcript::decode(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    Transcript t;
    t.block_length = static_cast<std::uint32_t>(r.uint(4));
    t.quantizer.levels = static_cast<unsigned>(r.uint(1));
    const auto lab = r.uint(1);
    require(lab <= 1, Errc::parse_error, "unknown labeling tag");
    t.quantizer.labeling = static_cast<Labeling>(lab);
    t.quantizer.clip = std::bit_cast<double>(r.uint(8));
    t.sigma_b = std::bit_cast<double>(r.uint(8));
    t.code_seed = r.uint(8);
    const auto count = r.uint(1);
    for (std::uint64_t i = 0; i < count; ++i) {
        LevelMessage m;
        m.level = static_cast<std::uint8_t>(r.uint(1));
        const auto kind = r.uint(1);
        require(kind == 1 || kind == 2, Errc::parse_error, "unknown payload kind");
        m.kind = static_cast<PayloadKind>(kind);
        m.bit_length = static_cast<std::uint32_t>(r.uint(4));
        auto payload = r.take((m.bit_length + 7) / 8);
        m.payload.assign(payload.begin(), payload.end());
        t.levels.push_back(std::move(m));
    }
    require(r.done(), Errc::parse_error, "trailing bytes after transcript");
    return t;
}

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits)
{
    std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i] & 1U) out[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
    return out;
}

std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t bit_count)
{
    require(bytes.size() * 8 >= bit_count, Errc::length_mismatch, "not enough bytes for bit count");
    std::vector<std::uint8_t> out(bit_count);
    for (std::size_t i = 0; i < bit_count; ++i) out[i] = (bytes[i / 8] >> (i % 8)) & 1U;
    return out;
}

double empirical_symbol_entropy(std::span<const double> b_values, double sigma_b, const QuantizerConfig& q)
{
    std::vector<std::size_t> hist(q.cells(), 0);
    for (double b : b_values) ++hist[quantize_cell(b, sigma_b, q)];
    double h = 0.0;
    for (auto c : hist) h += plogp(static_cast<double>(c) / static_cast<double>(b_values.size()));
    return h;
}

BobOutput bob_prepare(std::span<const double> b_values, const ChannelModel& model,
                      const ReconConfig& cfg, CodeBook& codes)
{
    cfg.validate();
    require(!b_values.empty(), Errc::empty_block, "no values to reconcile");
    const std::size_t n = b_values.size();

    double mean = 0.0;
    for (double b : b_values) mean += b;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double b : b_values) var += (b - mean) * (b - mean);
    var /= static_cast<double>(n);
    require(var > 0.0, Errc::degenerate_sample, "Bob's values have zero variance");

    BobOutput out;
    out.transcript.block_length = static_cast<std::uint32_t>(n);
    out.transcript.quantizer = cfg.quantizer;
    out.transcript.sigma_b = std::sqrt(var);
    out.transcript.code_seed = cfg.code_seed;
    out.planes = quantize(b_values, out.transcript.sigma_b, cfg.quantizer);

    ChannelModel planning = model;
    planning.noise_variance = std::max(planning.noise_variance, min_noise_variance);
    out.model_entropy = plane_conditional_entropies(planning, cfg.quantizer);

    for (unsigned i = 0; i < cfg.quantizer.levels; ++i) {
        LevelMessage msg;
        msg.level = static_cast<std::uint8_t>(i);
        const double rate = cfg.pick_rate(out.model_entropy[i]);
        if (rate <= 0.0) {
            msg.kind = PayloadKind::disclosed;
            msg.bit_length = static_cast<std::uint32_t>(n);
            msg.payload = pack_bits(out.planes[i]);
        } else {
            const auto code = codes.get(n, rate, cfg.code_seed);
            const auto syn = code->syndrome(out.planes[i]);
            msg.kind = PayloadKind::syndrome;
            msg.bit_length = static_cast<std::uint32_t>(syn.size());
            msg.payload = pack_bits(syn);
        }
        out.transcript.levels.push_back(std::move(msg));
    }
    return out;
}

AliceOutput alice_decode(std::span<const double> a_values, const ChannelModel& model,
                         const Transcript& transcript, const ReconConfig& cfg, CodeBook& codes,
                         SyndromeDecoder& decoder)
{
    const std::size_t n = a_values.size();
    require(n == transcript.block_length, Errc::length_mismatch, "block length differs from transcript");
    const QuantizerConfig& q = transcript.quantizer;
    q.validate();
    require(transcript.levels.size() == q.levels, Errc::parse_error, "transcript level count mismatch");

    const unsigned k = q.cells();
    const auto edges = inner_edges(transcript.sigma_b, q);
    const double sd_z = std::sqrt(std::max(model.noise_variance, min_noise_variance));

    std::vector<double> probs(n * k);
    for (std::size_t j = 0; j < n; ++j) cell_probabilities(model.gain * a_values[j], sd_z, edges, &probs[j * k]);

    std::vector<unsigned> labels(k);
    for (unsigned c = 0; c < k; ++c) labels[c] = q.label(c);

    AliceOutput out;
    out.planes.assign(q.levels, {});
    std::vector<unsigned> known(n, 0);  // decoded lower bits of each label
    std::vector<double> llr(n);
    constexpr double llr_cap = 40.0;

    for (unsigned i = 0; i < q.levels; ++i) {
        const LevelMessage& msg = transcript.levels[i];
        require(msg.level == i, Errc::parse_error, "transcript levels out of order");
        LevelReport rep;
        rep.level = i;
        auto& plane = out.planes[i];

        if (out.frame_error) {
            rep.outcome = LevelOutcome::skipped;
            out.levels.push_back(rep);
            continue;
        }

        if (msg.kind == PayloadKind::disclosed) {
            require(msg.bit_length == n, Errc::parse_error, "disclosed plane has wrong length");
            plane = unpack_bits(msg.payload, n);
            rep.outcome = LevelOutcome::disclosed;
        } else {
            const unsigned lower = (1U << i) - 1U;
            for (std::size_t j = 0; j < n; ++j) {
                const double* p = &probs[j * k];
                double p0 = 0.0;
                double p1 = 0.0;
                for (unsigned c = 0; c < k; ++c) {
                    if ((labels[c] & lower) != known[j]) continue;
                    ((labels[c] >> i) & 1U ? p1 : p0) += p[c];
                }
                double l;
                if (p0 <= 0.0 && p1 <= 0.0) l = 0.0;
                else if (p1 <= 0.0) l = llr_cap;
                else if (p0 <= 0.0) l = -llr_cap;
                else l = std::clamp(std::log(p0 / p1), -llr_cap, llr_cap);
                llr[j] = l;
            }
            require(msg.bit_length > 0 && msg.bit_length < n, Errc::parse_error, "bad syndrome length");
            const double rate = 1.0 - static_cast<double>(msg.bit_length) / static_cast<double>(n);
            const auto code = codes.get(n, rate, transcript.code_seed);
            require(code->m() == msg.bit_length, Errc::parse_error, "syndrome length does not match code");
            const auto syn = unpack_bits(msg.payload, msg.bit_length);
            const auto res = decoder.decode(*code, llr, syn, cfg.max_iterations, plane);
            rep.rate = code->rate();
            rep.iterations = res.iterations;
            for (std::size_t j = 0; j < n; ++j) rep.corrections += plane[j] != (llr[j] < 0.0 ? 1 : 0);
            if (res.converged) {
                rep.outcome = LevelOutcome::decoded;
            } else {
                rep.outcome = LevelOutcome::failed;
                out.frame_error = true;
            }
        }
        for (std::size_t j = 0; j < n && !out.frame_error; ++j) known[j] |= static_cast<unsigned>(plane[j]) << i;
        out.levels.push_back(rep);
    }
    return out;
}

std::vector<std::uint8_t> key_material(const BitPlanes& planes, const Transcript& transcript)
{
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < planes.size() && i < transcript.levels.size(); ++i) {
        if (transcript.levels[i].kind != PayloadKind::syndrome) continue;
        out.insert(out.end(), planes[i].begin(), planes[i].end());
    }
    return out;
}

ReconResult reconcile(std::span<const SiftedPair> pairs, const ChannelModel& model,
                      const ReconConfig& cfg, CodeBook& codes)
{
    require(!pairs.empty(), Errc::empty_block, "no pairs to reconcile");
    std::vector<double> a(pairs.size());
    std::vector<double> b(pairs.size());
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        a[j] = pairs[j].a;
        b[j] = pairs[j].b;
    }

    BobOutput bob = bob_prepare(b, model, cfg, codes);
    SyndromeDecoder decoder;
    AliceOutput alice = alice_decode(a, model, bob.transcript, cfg, codes, decoder);

    ReconResult result;
    result.report.leak_bits = bob.transcript.leak_bits();
    result.report.levels = alice.levels;
    for (std::size_t i = 0; i < result.report.levels.size(); ++i)
        result.report.levels[i].model_entropy = bob.model_entropy[i];
    result.report.frame_error = alice.frame_error;
    result.report.quantized_entropy = empirical_symbol_entropy(b, bob.transcript.sigma_b, cfg.quantizer);
    result.report.i_ab = 0.5 * std::log2(1.0 + model.snr());
    if (result.report.i_ab > 0.0) {
        result.report.beta_realized
            = (result.report.quantized_entropy
               - static_cast<double>(result.report.leak_bits) / static_cast<double>(pairs.size()))
              / result.report.i_ab;
    }
    if (!alice.frame_error) {
        result.alice_bits = key_material(alice.planes, bob.transcript);
        result.bob_bits = key_material(bob.planes, bob.transcript);
    }
    result.transcript = std::move(bob.transcript);
    return result;
}

}  // namespace sequre
