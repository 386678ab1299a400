#include "sequre/ldpc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sequre/error.hpp"
#include "sequre/rng.hpp"

namespace sequre {

double DegreeProfile::mean_degree() const
{
    double total = 0.0;
    double mean = 0.0;
    for (const auto& [d, f] : columns) {
        mean += d * f;
        total += f;
    }
    return total > 0.0 ? mean / total : 0.0;
}

DegreeProfile DegreeProfile::standard() { return {{{2, 0.40}, {3, 0.45}, {10, 0.15}}}; }

DegreeProfile DegreeProfile::regular(unsigned degree) { return {{{degree, 1.0}}}; }

namespace {

std::vector<unsigned> column_degrees(std::size_t n, const DegreeProfile& profile)
{
    double total = 0.0;
    for (const auto& [d, f] : profile.columns) total += f;
    std::vector<unsigned> degrees;
    degrees.reserve(n);
    double cumulative = 0.0;
    for (const auto& [d, f] : profile.columns) {
        cumulative += f / total;
        const auto upto = static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n)));
        while (degrees.size() < std::min(upto, n)) degrees.push_back(d);
    }
    while (degrees.size() < n) degrees.push_back(profile.columns.back().first);
    return degrees;
}

}  // namespace

LdpcCode build_code(std::size_t n, double rate, std::uint64_t seed, const DegreeProfile& profile)
{
    require(rate > 0.0 && rate < 1.0, Errc::invalid_config, "code rate must be in (0, 1)");
    require(n >= 4, Errc::invalid_config, "code length too small");
    const auto m = static_cast<std::size_t>(std::llround((1.0 - rate) * static_cast<double>(n)));
    require(m >= 2 && m < n, Errc::invalid_config, "degenerate syndrome length");

    auto eng = make_engine(derive_seed(seed, (static_cast<std::uint64_t>(n) << 32) ^ m));

    // Column weights never exceed the number of checks.
    std::vector<unsigned> degrees = column_degrees(n, profile);
    for (auto& d : degrees) d = static_cast<unsigned>(std::min<std::size_t>(d, m));

    // Weight-2 columns form a staircase (column j touches checks j and j+1) so
    // that they close no cycle among themselves; the rest are spread randomly.
    // Weight-2 columns beyond the staircase length are raised to weight 3.
    std::vector<std::uint32_t> columns(n);
    std::iota(columns.begin(), columns.end(), 0U);
    for (std::size_t i = n; i > 1; --i) std::swap(columns[i - 1], columns[uniform_below(eng, i)]);

    std::vector<std::vector<std::uint32_t>> var_checks(n);
    std::size_t stair = 0;
    for (auto v : columns) {
        if (degrees[v] != 2) continue;
        if (stair + 1 < m) {
            var_checks[v] = {static_cast<std::uint32_t>(stair), static_cast<std::uint32_t>(stair + 1)};
            ++stair;
        } else {
            // A random weight-2 column would close a short codeword with the staircase.
            degrees[v] = static_cast<unsigned>(std::min<std::size_t>(3, m));
        }
    }

    std::vector<std::uint32_t> check_degree(m, 0);
    for (const auto& cs : var_checks)
        for (auto c : cs) ++check_degree[c];

    // Socket pool for the remaining edges, filled so check degrees end up as even as possible.
    std::size_t remaining_edges = 0;
    for (std::size_t v = 0; v < n; ++v)
        if (var_checks[v].empty()) remaining_edges += degrees[v];
    std::size_t total_edges = remaining_edges;
    for (auto d : check_degree) total_edges += d;

    std::vector<std::uint32_t> sockets;
    sockets.reserve(remaining_edges);
    {
        const std::size_t base = total_edges / m;
        std::size_t extra = total_edges % m;
        std::vector<std::uint32_t> order(m);
        std::iota(order.begin(), order.end(), 0U);
        for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[uniform_below(eng, i)]);
        std::vector<std::size_t> target(m, base);
        for (auto c : order) {
            if (extra == 0) break;
            ++target[c];
            --extra;
        }
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t k = check_degree[c]; k < target[c]; ++k) sockets.push_back(static_cast<std::uint32_t>(c));
        // Staircase checks may already exceed the even share; top up elsewhere.
        for (std::size_t c = 0; sockets.size() < remaining_edges; c = (c + 1) % m)
            sockets.push_back(static_cast<std::uint32_t>(c));
        sockets.resize(remaining_edges);
    }
    for (std::size_t i = sockets.size(); i > 1; --i) std::swap(sockets[i - 1], sockets[uniform_below(eng, i)]);

    std::size_t next = 0;
    for (std::size_t v = 0; v < n; ++v) {
        if (!var_checks[v].empty()) continue;
        auto& cs = var_checks[v];
        for (unsigned k = 0; k < degrees[v]; ++k) {
            // Resolve duplicates by swapping with a random later socket.
            std::size_t tries = 0;
            while (std::find(cs.begin(), cs.end(), sockets[next]) != cs.end() && tries < 64) {
                const std::size_t j = next + uniform_below(eng, sockets.size() - next);
                std::swap(sockets[next], sockets[j]);
                ++tries;
            }
            if (std::find(cs.begin(), cs.end(), sockets[next]) == cs.end()) cs.push_back(sockets[next]);
            ++next;
        }
    }

    LdpcCode code;
    code.n_ = n;
    code.seed_ = seed;
    code.column_weight_.resize(n);
    std::vector<std::uint32_t> count(m + 1, 0);
    for (std::size_t v = 0; v < n; ++v) {
        std::sort(var_checks[v].begin(), var_checks[v].end());
        code.column_weight_[v] = static_cast<std::uint32_t>(var_checks[v].size());
        for (auto c : var_checks[v]) ++count[c + 1];
    }
    std::partial_sum(count.begin(), count.end(), count.begin());
    code.check_ptr_ = count;
    code.edge_var_.resize(count.back());
    std::vector<std::uint32_t> fill(count.begin(), count.end() - 1);
    for (std::size_t v = 0; v < n; ++v)
        for (auto c : var_checks[v]) code.edge_var_[fill[c]++] = static_cast<std::uint32_t>(v);
    return code;
}

std::vector<std::uint8_t> LdpcCode::syndrome(std::span<const std::uint8_t> bits) const
{
    require(bits.size() == n_, Errc::length_mismatch, "word length differs from code length");
    std::vector<std::uint8_t> s(m(), 0);
    for (std::size_t c = 0; c < m(); ++c) {
        std::uint8_t acc = 0;
        for (auto e = check_ptr_[c]; e < check_ptr_[c + 1]; ++e) acc ^= bits[edge_var_[e]];
        s[c] = acc & 1U;
    }
    return s;
}

std::uint64_t LdpcCode::structure_hash() const
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    mix(n_);
    mix(m());
    for (auto p : check_ptr_) mix(p);
    for (auto v : edge_var_) mix(v);
    return h;
}

std::shared_ptr<const LdpcCode> CodeBook::get(std::size_t n, double rate, std::uint64_t seed)
{
    const auto m = static_cast<std::size_t>(std::llround((1.0 - rate) * static_cast<double>(n)));
    std::lock_guard lock(mutex_);
    auto& slot = codes_[{n, m, seed}];
    if (!slot) slot = std::make_shared<const LdpcCode>(build_code(n, rate, seed, profile_));
    return slot;
}

namespace {

constexpr double llr_limit = 40.0;
constexpr double phi_floor = 1e-12;

// phi(x) = -log(tanh(x/2)), an involution on (0, inf).
inline double phi_exact(double x)
{
    x = std::clamp(x, phi_floor, llr_limit);
    return std::log1p(2.0 / std::expm1(x));
}

// Linear interpolation on a fine grid; exact near zero where phi is steep.
class PhiTable {
public:
    static constexpr double step = 1.0 / 256.0;
    static constexpr double exact_below = 0.125;
    static constexpr double zero_above = 24.0;

    PhiTable() : values_(static_cast<std::size_t>(zero_above / step) + 2)
    {
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] = phi_exact(std::max(i * step, phi_floor));
    }

    double operator()(double x) const
    {
        if (x < exact_below) return phi_exact(x);
        if (x >= zero_above) return 0.0;
        const double pos = x / step;
        const auto i = static_cast<std::size_t>(pos);
        const double f = pos - static_cast<double>(i);
        return values_[i] + f * (values_[i + 1] - values_[i]);
    }

private:
    std::vector<double> values_;
};

const PhiTable& phi_table()
{
    static const PhiTable table;
    return table;
}

}  // namespace

DecodeResult SyndromeDecoder::decode(const LdpcCode& code, std::span<const double> channel_llr,
                                     std::span<const std::uint8_t> syndrome,
                                     unsigned max_iterations, std::vector<std::uint8_t>& bits)
{
    const std::size_t n = code.n();
    const std::size_t m = code.m();
    require(channel_llr.size() == n, Errc::length_mismatch, "LLR vector length differs from code length");
    require(syndrome.size() == m, Errc::length_mismatch, "syndrome length differs from code");

    const auto ptr = code.check_ptr();
    const auto var = code.edge_var();

    posterior_.assign(channel_llr.begin(), channel_llr.end());
    check_msg_.assign(code.edges(), 0.0);
    bits.resize(n);

    std::size_t max_deg = 0;
    for (std::size_t c = 0; c < m; ++c) max_deg = std::max<std::size_t>(max_deg, ptr[c + 1] - ptr[c]);
    scratch_.resize(2 * max_deg);

    auto syndrome_matches = [&]() {
        for (std::size_t v = 0; v < n; ++v) bits[v] = posterior_[v] < 0.0 ? 1 : 0;
        for (std::size_t c = 0; c < m; ++c) {
            std::uint8_t acc = syndrome[c];
            for (auto e = ptr[c]; e < ptr[c + 1]; ++e) acc ^= bits[var[e]];
            if (acc & 1U) return false;
        }
        return true;
    };

    DecodeResult result;
    if (syndrome_matches()) {
        result.converged = true;
        return result;
    }

    const PhiTable& phi = phi_table();
    double* extrinsic = scratch_.data();
    double* magnitude = scratch_.data() + max_deg;
    for (unsigned it = 1; it <= max_iterations; ++it) {
        for (std::size_t c = 0; c < m; ++c) {
            const auto begin = ptr[c];
            const auto deg = ptr[c + 1] - begin;
            bool negative = syndrome[c] != 0;
            double sum = 0.0;
            for (std::uint32_t k = 0; k < deg; ++k) {
                const double q = posterior_[var[begin + k]] - check_msg_[begin + k];
                extrinsic[k] = q;
                negative ^= q < 0.0;
                magnitude[k] = phi(std::abs(q));
                sum += magnitude[k];
            }
            for (std::uint32_t k = 0; k < deg; ++k) {
                const double q = extrinsic[k];
                const bool neg = negative ^ (q < 0.0);
                const double mag = phi(std::max(sum - magnitude[k], 0.0));
                const double r = neg ? -mag : mag;
                check_msg_[begin + k] = r;
                posterior_[var[begin + k]] = std::clamp(q + r, -1e3, 1e3);
            }
        }
        if (syndrome_matches()) {
            result.converged = true;
            result.iterations = it;
            return result;
        }
        result.iterations = it;
    }
    return result;
}

}  // namespace sequre
