#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sequre/key_manager.hpp"

namespace sequre {

class ByteStream;

using AesKey = std::array<std::uint8_t, 16>;
using GcmNonce = std::array<std::uint8_t, 12>;
using GcmTag = std::array<std::uint8_t, 16>;

/// Single AES-128 block encryption (FIPS-197).
std::array<std::uint8_t, 16> aes128_encrypt_block(const AesKey& key, const std::array<std::uint8_t, 16>& block);

/// AES-128-GCM with a 96-bit nonce and 128-bit tag (NIST SP 800-38D).
class Aes128Gcm {
public:
    explicit Aes128Gcm(const AesKey& key);
    ~Aes128Gcm();
    Aes128Gcm(const Aes128Gcm&) = delete;
    Aes128Gcm& operator=(const Aes128Gcm&) = delete;

    /// Writes ciphertext into `out` (same size as plaintext) and returns the tag.
    GcmTag seal(const GcmNonce& nonce, std::span<const std::uint8_t> aad,
                std::span<const std::uint8_t> plaintext, std::span<std::uint8_t> out);
    /// Returns false on tag mismatch; `out` is then unspecified.
    bool open(const GcmNonce& nonce, std::span<const std::uint8_t> aad, std::span<const std::uint8_t> ciphertext,
              const GcmTag& tag, std::span<std::uint8_t> out);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

enum class Exhaustion : std::uint8_t { halt, grace };

struct RenewalPolicy {
    double period_seconds = 10.0;
    double min_period_seconds = 3.0;
    std::uint64_t cap_bits = std::uint64_t{1} << 35;
    Exhaustion exhaustion = Exhaustion::halt;
    double grace_seconds = 0.0;
    bool refuse_individual = false;

    /// Rejects periods below the floor.
    void validate() const;
};

enum class FrameType : std::uint8_t { data = 1, rekey = 2 };

/// Supplies the next application key in FIFO order; nullopt when none is left.
using KeySupply = std::function<std::optional<KeyBlock>()>;

KeySupply key_supply_from(KeyStore& store, const std::function<double()>& clock);

struct TunnelLedger {
    std::uint64_t frames = 0;
    std::uint64_t payload_bytes = 0;
    std::uint64_t renewals = 0;           ///< key switches after the first key
    std::uint64_t cap_renewals = 0;       ///< renewals forced by the exposure cap
    std::uint64_t max_bits_under_key = 0;
    std::uint64_t integrity_failures = 0;
    std::uint64_t refused_keys = 0;
    bool nonce_reuse = false;
    bool halted = false;
    std::vector<std::uint64_t> key_ids;   ///< keys used, in order
};

/// Sending end: frames plaintext, encrypts under the active key and renews on a
/// simulated clock advanced by the configured throughput.
class TunnelSender {
public:
    TunnelSender(RenewalPolicy policy, KeySupply keys, std::shared_ptr<ByteStream> out,
                 double throughput_bps, std::size_t max_frame_bytes = 1 << 16);

    /// Throws PoolEmpty (after applying the exhaustion policy) when no key can be used.
    void write(std::span<const std::uint8_t> plaintext);
    void close();

    double now() const { return now_; }
    const TunnelLedger& ledger() const { return ledger_; }

private:
    void renew(bool forced_by_cap);
    void send_frame(FrameType type, std::span<const std::uint8_t> payload);

    RenewalPolicy policy_;
    KeySupply keys_;
    std::shared_ptr<ByteStream> out_;
    double throughput_bps_;
    std::size_t max_frame_;
    double now_ = 0.0;
    double key_since_ = 0.0;
    std::optional<std::uint64_t> key_id_;
    std::unique_ptr<Aes128Gcm> cipher_;
    std::uint64_t counter_ = 0;
    std::uint64_t bits_under_key_ = 0;
    std::optional<double> exhausted_since_;
    std::vector<std::uint8_t> scratch_;
    TunnelLedger ledger_;
};

/// Receiving end; follows rekey frames using its own key supply.
class TunnelReceiver {
public:
    /// Frames under the previous key stay acceptable for this many frames after a switch.
    static constexpr unsigned overlap_frames = 2;

    TunnelReceiver(KeySupply keys, std::shared_ptr<ByteStream> in, bool refuse_individual = false);

    /// Next plaintext chunk; nullopt at end of stream. Throws IntegrityFailure on a bad frame.
    std::optional<std::vector<std::uint8_t>> read();
    const TunnelLedger& ledger() const { return ledger_; }

private:
    struct ActiveKey {
        std::uint64_t id = 0;
        std::unique_ptr<Aes128Gcm> cipher;
        std::uint64_t last_counter = 0;
        bool any = false;
        std::uint64_t bits = 0;
    };

    KeySupply keys_;
    std::shared_ptr<ByteStream> in_;
    bool refuse_individual_;
    std::optional<ActiveKey> current_;
    std::optional<ActiveKey> previous_;
    unsigned frames_since_switch_ = 0;
    TunnelLedger ledger_;
};

}  // namespace sequre
