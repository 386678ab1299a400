#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sequre/key_rate.hpp"

namespace sequre {

class ByteStream;

inline constexpr std::size_t key_block_bits = 128;
using KeyBytes = std::array<std::uint8_t, key_block_bits / 8>;

enum class Consumer : std::uint8_t { auth = 0, app = 1 };
enum class KeyState : std::uint8_t { available, reserved, delivered, destroyed };

std::string_view to_string(Consumer c);
std::string_view to_string(KeyState s);

struct KeyBlock {
    std::uint64_t id = 0;
    KeyBytes bits{};
    SecurityLevel level = SecurityLevel::none;
    double created_at = 0.0;  ///< simulated seconds
    Consumer pool = Consumer::app;
    KeyState state = KeyState::available;
};

struct PoolPolicy {
    double auth_fraction = 0.1;
    std::size_t low_water = 100;

    void validate() const;
    /// Pool of the block with global index k: an even spread of auth blocks at the configured fraction.
    Consumer pool_of(std::uint64_t k) const;
};

struct PoolCounts {
    std::size_t available = 0;
    std::uint64_t ingested = 0;
    std::uint64_t delivered = 0;
};

struct KeyStats {
    PoolCounts auth;
    PoolCounts app;
    double elapsed_seconds = 0.0;
    double production_bps = 0.0;
    double consumption_bps = 0.0;
    double keys_per_day = 0.0;
    bool low_water_alarm = false;
};

/// Thread-safe key store for one end. Optional persistence: an append-only
/// file of fixed-size checksummed records, compacted on open.
class KeyStore {
public:
    explicit KeyStore(PoolPolicy policy = {}, double start_time = 0.0,
                      std::optional<std::filesystem::path> store_path = std::nullopt);
    ~KeyStore();
    KeyStore(const KeyStore&) = delete;
    KeyStore& operator=(const KeyStore&) = delete;

    /// Bits are 0/1 values; whole 128-bit blocks become keys, the remainder waits for the next call.
    std::vector<std::uint64_t> ingest(std::span<const std::uint8_t> bits, SecurityLevel level, double now);

    /// Oldest available block of the pool; throws PoolEmpty.
    KeyBlock request_key(Consumer consumer, double now);
    std::vector<KeyBlock> request_keys(Consumer consumer, std::size_t count, double now);

    KeyStats stats(double now) const;
    std::size_t buffered_bits() const;
    std::uint64_t next_id() const;
    /// Conservation: ingested = available + delivered, per pool.
    bool balanced() const;
    const PoolPolicy& policy() const { return policy_; }

private:
    struct Persistence;

    void load_and_compact();
    void persist_block(const KeyBlock& block);
    void persist_delivery(const KeyBlock& block, double now);
    void persist_buffer();

    mutable std::mutex mutex_;
    PoolPolicy policy_;
    double start_time_;
    std::uint64_t next_id_ = 0;
    std::array<std::deque<KeyBlock>, 2> pools_;
    std::array<PoolCounts, 2> counts_{};
    std::vector<std::uint8_t> remainder_;
    std::unique_ptr<Persistence> store_;
};

/// Request/response codec of the local key interface.
struct KeyRequest {
    Consumer consumer = Consumer::app;
    std::uint32_t count = 1;
};

std::vector<std::uint8_t> encode_request(const KeyRequest& r);
KeyRequest decode_request(std::span<const std::uint8_t> bytes);
/// Empty `keys` with `ok == false` signals PoolEmpty.
std::vector<std::uint8_t> encode_response(bool ok, std::span<const KeyBlock> keys);
std::vector<KeyBlock> decode_response(std::span<const std::uint8_t> bytes);

/// Answers requests on `stream` until the peer disconnects; returns the number served.
std::size_t serve_keys(KeyStore& store, ByteStream& stream, const std::function<double()>& clock);

class KeyClient {
public:
    explicit KeyClient(std::shared_ptr<ByteStream> stream) : stream_(std::move(stream)) {}
    /// Throws PoolEmpty when the service has too few keys.
    std::vector<KeyBlock> request(Consumer consumer, std::uint32_t count);

private:
    std::shared_ptr<ByteStream> stream_;
};

}  // namespace sequre
