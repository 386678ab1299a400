#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sequre/ldpc.hpp"
#include "sequre/link_sim.hpp"
#include "sequre/param_estimation.hpp"

namespace sequre {

enum class Labeling : std::uint8_t { gray = 0, natural = 1 };

std::string_view to_string(Labeling l);
Labeling labeling_from(std::string_view name);

struct QuantizerConfig {
    unsigned levels = 4;
    double clip = 2.75;  ///< in units of sigma_b
    Labeling labeling = Labeling::natural;

    void validate() const;
    unsigned cells() const { return 1U << levels; }
    unsigned label(unsigned cell) const;
};

/// Cell of b on the uniform grid over [-clip*sigma_b, clip*sigma_b]; outer cells unbounded.
unsigned quantize_cell(double b, double sigma_b, const QuantizerConfig& q);

/// Bit plane i holds bit i of every value's label.
using BitPlanes = std::vector<std::vector<std::uint8_t>>;
BitPlanes quantize(std::span<const double> b_values, double sigma_b, const QuantizerConfig& q);

/// Linear-Gaussian link seen by reconciliation: b = gain * a + z, Var z = noise_variance.
struct ChannelModel {
    double gain = 1.0;
    double noise_variance = 1.0;
    double v_a = 1.0;

    double snr() const { return gain * gain * v_a / noise_variance; }
    double sigma_b() const;
    static ChannelModel from_estimate(const EstimatedParams& est);
    static ChannelModel from_snr(double snr, double v_a = 1.0);
};

/// Per-plane entropy H(B_i | A, B_0..B_{i-1}) under the model, in decoding order.
std::vector<double> plane_conditional_entropies(const ChannelModel& model, const QuantizerConfig& q);

struct ReconConfig {
    QuantizerConfig quantizer;
    double rate_step = 0.05;
    double rate_margin = 0.02;
    double rate_margin_slope = 0.05;  ///< extra margin per bit of plane entropy
    unsigned max_iterations = 100;
    std::uint64_t code_seed = 0x5EC0'0DE5ULL;

    void validate() const;
    /// Highest grid rate <= 1 - h - (margin + slope * h), capped at 1 - step; 0 means disclose.
    double pick_rate(double conditional_entropy) const;
};

enum class PayloadKind : std::uint8_t { syndrome = 1, disclosed = 2 };

struct LevelMessage {
    std::uint8_t level = 0;
    PayloadKind kind = PayloadKind::syndrome;
    std::uint32_t bit_length = 0;
    std::vector<std::uint8_t> payload;  ///< packed, LSB-first within each byte
};

struct Transcript {
    std::uint32_t block_length = 0;
    QuantizerConfig quantizer;
    double sigma_b = 0.0;
    std::uint64_t code_seed = 0;
    std::vector<LevelMessage> levels;

    std::uint64_t leak_bits() const;
    std::vector<std::uint8_t> encode() const;
    static Transcript decode(std::span<const std::uint8_t> bytes);
};

enum class LevelOutcome : std::uint8_t { decoded, disclosed, failed, skipped };
std::string_view to_string(LevelOutcome o);

struct LevelReport {
    unsigned level = 0;
    LevelOutcome outcome = LevelOutcome::skipped;
    double rate = 0.0;
    double model_entropy = 0.0;
    unsigned iterations = 0;
    std::size_t corrections = 0;  ///< bits flipped relative to the channel hard decision
};

struct ReconReport {
    std::uint64_t leak_bits = 0;
    std::vector<LevelReport> levels;
    double quantized_entropy = 0.0;  ///< empirical H(Q) of Bob's symbols, bits/pair
    double i_ab = 0.0;
    double beta_realized = 0.0;
    bool frame_error = false;
};

struct BobOutput {
    Transcript transcript;
    BitPlanes planes;
    std::vector<double> model_entropy;
};

struct AliceOutput {
    BitPlanes planes;
    std::vector<LevelReport> levels;
    bool frame_error = false;
};

BobOutput bob_prepare(std::span<const double> b_values, const ChannelModel& model,
                      const ReconConfig& cfg, CodeBook& codes);

AliceOutput alice_decode(std::span<const double> a_values, const ChannelModel& model,
                         const Transcript& transcript, const ReconConfig& cfg, CodeBook& codes,
                         SyndromeDecoder& decoder);

/// Concatenated non-disclosed planes; the reconciled key material.
std::vector<std::uint8_t> key_material(const BitPlanes& planes, const Transcript& transcript);

double empirical_symbol_entropy(std::span<const double> b_values, double sigma_b, const QuantizerConfig& q);

struct ReconResult {
    std::vector<std::uint8_t> alice_bits;
    std::vector<std::uint8_t> bob_bits;
    Transcript transcript;
    ReconReport report;
};

/// Both ends in one call. Requires pairs.size() to be the block length.
ReconResult reconcile(std::span<const SiftedPair> pairs, const ChannelModel& model,
                      const ReconConfig& cfg, CodeBook& codes);

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t bit_count);

}  // namespace sequre
