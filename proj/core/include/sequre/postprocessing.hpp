#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sequre/key_rate.hpp"

namespace sequre {

struct VerifyPolicy {
    std::size_t reveal_count = 64;
};

struct VerifyResult {
    bool ok = true;
    std::vector<std::size_t> positions;  ///< sorted, distinct
};

/// Uniform k-subset of [0, n) (Floyd's algorithm), sorted.
std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k, std::uint64_t seed);

VerifyResult verify(std::span<const std::uint8_t> bits_a, std::span<const std::uint8_t> bits_b,
                    const VerifyPolicy& policy, std::uint64_t seed);

/// Copy of `bits` without the (sorted) revealed positions.
std::vector<std::uint8_t> remove_positions(std::span<const std::uint8_t> bits,
                                           std::span<const std::size_t> positions);

/// Toeplitz matrix over GF(2): entry (i, j) is seed bit (n_in - 1 + i - j).
class ToeplitzHash {
public:
    ToeplitzHash(std::size_t n_in, std::size_t n_out, std::vector<std::uint8_t> seed_bits);
    /// Seed drawn from a deterministic generator.
    static ToeplitzHash from_seed(std::size_t n_in, std::size_t n_out, std::uint64_t seed);

    std::size_t n_in() const { return n_in_; }
    std::size_t n_out() const { return n_out_; }
    std::vector<std::uint8_t> apply(std::span<const std::uint8_t> bits) const;

private:
    std::size_t n_in_;
    std::size_t n_out_;
    std::vector<std::uint64_t> seed_words_;
};

std::vector<std::uint8_t> toeplitz_seed_bits(std::size_t length, std::uint64_t seed);

/// floor(n_pairs * k_per_pulse) - revealed; NonPositiveLength when that is not positive.
std::size_t output_length(std::size_t n_pairs, double k_per_pulse, std::size_t revealed);

struct KeyMaterial {
    std::vector<std::uint8_t> bits;
    SecurityLevel level = SecurityLevel::none;
};

KeyMaterial amplify(std::span<const std::uint8_t> bits, std::size_t n_pairs, const RateReport& rate,
                    std::size_t revealed, std::uint64_t seed);

}  // namespace sequre
