#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "sequre/enc_link.hpp"

namespace sequre {

struct TunnelJob {
    std::uint64_t bytes = std::uint64_t{1} << 30;
    RenewalPolicy policy;
    double throughput_bps = 100e6;
    std::size_t chunk_bytes = 1 << 16;
    std::uint64_t payload_seed = 1;
    /// How long either end waits for a key that has not been produced yet.
    std::chrono::milliseconds key_wait{std::chrono::seconds(120)};
};

struct TunnelReport {
    TunnelLedger sender;
    TunnelLedger receiver;
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    std::uint64_t mismatched_bytes = 0;
    double simulated_seconds = 0.0;
    std::string error;  ///< empty on success

    bool ok() const { return error.empty() && mismatched_bytes == 0 && bytes_received == bytes_sent; }
};

/// Key supply that polls the store until a key appears or the wait expires.
KeySupply waiting_key_supply(KeyStore& store, std::chrono::milliseconds wait);

/// Pushes a deterministic byte stream from Alice's tunnel end to Bob's over an
/// in-process pipe, each end drawing application keys from its own store.
TunnelReport run_tunnel(KeyStore& alice, KeyStore& bob, const TunnelJob& job);

}  // namespace sequre
