#include "sequre/postprocessing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_set>

#include "sequre/error.hpp"
#include "sequre/rng.hpp"

namespace sequre {

std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k, std::uint64_t seed)
{
    require(k <= n, Errc::invalid_config, "cannot reveal more positions than bits");
    auto eng = make_engine(seed);
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(k * 2);
    for (std::size_t j = n - k; j < n; ++j) {
        const std::size_t t = uniform_below(eng, j + 1);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<std::size_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

VerifyResult verify(std::span<const std::uint8_t> bits_a, std::span<const std::uint8_t> bits_b,
                    const VerifyPolicy& policy, std::uint64_t seed)
{
    require(bits_a.size() == bits_b.size(), Errc::length_mismatch, "verification strings differ in length");
    require(policy.reveal_count >= 1, Errc::invalid_config, "reveal count must be at least 1");
    VerifyResult r;
    r.positions = sample_positions(bits_a.size(), policy.reveal_count, seed);
    for (auto p : r.positions) {
        if ((bits_a[p] ^ bits_b[p]) & 1U) {
            r.ok = false;
            break;
        }
    }
    return r;
}

std::vector<std::uint8_t> remove_positions(std::span<const std::uint8_t> bits,
                                           std::span<const std::size_t> positions)
{
    std::vector<std::uint8_t> out;
    out.reserve(bits.size() - std::min(bits.size(), positions.size()));
    std::size_t next = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (next < positions.size() && positions[next] == i) {
            ++next;
            continue;
        }
        out.push_back(bits[i]);
    }
    return out;
}

std::vector<std::uint8_t> toeplitz_seed_bits(std::size_t length, std::uint64_t seed)
{
    auto eng = make_engine(seed);
    std::vector<std::uint8_t> bits(length);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < length; ++i) {
        if (i % 64 == 0) word = eng();
        bits[i] = (word >> (i % 64)) & 1U;
    }
    return bits;
}

ToeplitzHash::ToeplitzHash(std::size_t n_in, std::size_t n_out, std::vector<std::uint8_t> seed_bits)
    : n_in_(n_in), n_out_(n_out)
{
    require(n_in >= 1 && n_out >= 1, Errc::invalid_config, "Toeplitz dimensions must be positive");
    require(seed_bits.size() == n_in + n_out - 1, Errc::length_mismatch,
            "Toeplitz seed must have n_in + n_out - 1 bits");
    seed_words_.assign((seed_bits.size() + 63) / 64 + 1, 0);
    for (std::size_t i = 0; i < seed_bits.size(); ++i)
        if (seed_bits[i] & 1U) seed_words_[i / 64] |= std::uint64_t{1} << (i % 64);
}

ToeplitzHash ToeplitzHash::from_seed(std::size_t n_in, std::size_t n_out, std::uint64_t seed)
{
    return ToeplitzHash(n_in, n_out, toeplitz_seed_bits(n_in + n_out - 1, seed));
}

std::vector<std::uint8_t> ToeplitzHash::apply(std::span<const std::uint8_t> bits) const
{
    require(bits.size() == n_in_, Errc::length_mismatch, "input length differs from Toeplitz width");
    // out_i = XOR_k seed[i + k] * x[n_in - 1 - k]: a sliding window over the seed
    // against the reversed input.
    const std::size_t words = (n_in_ + 63) / 64;
    std::vector<std::uint64_t> rev(words, 0);
    for (std::size_t k = 0; k < n_in_; ++k)
        if (bits[n_in_ - 1 - k] & 1U) rev[k / 64] |= std::uint64_t{1} << (k % 64);

    std::vector<std::uint8_t> out(n_out_);
    for (std::size_t i = 0; i < n_out_; ++i) {
        const std::size_t base = i / 64;
        const unsigned shift = i % 64;
        std::uint64_t acc = 0;
        for (std::size_t w = 0; w < words; ++w) {
            std::uint64_t window = seed_words_[base + w] >> shift;
            if (shift != 0) window |= seed_words_[base + w + 1] << (64 - shift);
            acc ^= window & rev[w];
        }
        out[i] = static_cast<std::uint8_t>(std::popcount(acc) & 1);
    }
    return out;
}

std::size_t output_length(std::size_t n_pairs, double k_per_pulse, std::size_t revealed)
{
    const double raw = std::floor(static_cast<double>(n_pairs) * std::max(k_per_pulse, 0.0));
    const double len = raw - static_cast<double>(revealed);
    require(len > 0.0, Errc::non_positive_length, "privacy amplification leaves no key");
    return static_cast<std::size_t>(len);
}

KeyMaterial amplify(std::span<const std::uint8_t> bits, std::size_t n_pairs, const RateReport& rate,
                    std::size_t revealed, std::uint64_t seed)
{
    const std::size_t len = output_length(n_pairs, rate.k_selected(), revealed);
    require(len <= bits.size(), Errc::length_mismatch, "requested key longer than reconciled input");
    KeyMaterial km;
    km.bits = ToeplitzHash::from_seed(bits.size(), len, seed).apply(bits);
    km.level = rate.level;
    return km;
}

}  // namespace sequre
