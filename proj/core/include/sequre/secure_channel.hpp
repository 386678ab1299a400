#pragma once

#include <array>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sequre {

/// Multiplication in GF(2^w) for w in {8, 16, 64}.
class GaloisField {
public:
    explicit GaloisField(unsigned width);
    unsigned width() const { return width_; }
    std::uint64_t mask() const { return width_ == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width_) - 1; }
    std::uint64_t multiply(std::uint64_t a, std::uint64_t b) const;

private:
    unsigned width_;
    std::uint64_t reduction_;  ///< low part of the modulus
};

/// Polynomial evaluation hash: the 64-bit byte length and then the message,
/// both split into w-bit blocks, evaluated at the key by Horner's rule.
class PolyHash {
public:
    PolyHash(unsigned width, std::uint64_t key);
    std::uint64_t hash(std::span<const std::uint8_t> message) const;
    std::uint64_t tag(std::span<const std::uint8_t> message, std::uint64_t one_time_mask) const
    {
        return (hash(message) ^ one_time_mask) & field_.mask();
    }
    unsigned width() const { return field_.width(); }
    /// Number of field blocks hashed for a message of `bytes` bytes.
    std::size_t blocks(std::size_t bytes) const;

private:
    std::uint64_t times_key(std::uint64_t x) const;

    GaloisField field_;
    std::uint64_t key_;
    std::vector<std::array<std::uint64_t, 256>> key_table_;  ///< byte j of x times key
};

/// Reliable, ordered byte transport.
class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    /// Fills `out` completely or throws ConnectionLost.
    virtual void read_exact(std::span<std::uint8_t> out) = 0;
    virtual void close() = 0;
};

/// In-process duplex pipe; `make_pipe` returns the two connected ends.
std::pair<std::shared_ptr<ByteStream>, std::shared_ptr<ByteStream>> make_pipe();

class TcpStream final : public ByteStream {
public:
    explicit TcpStream(int fd) : fd_(fd) {}
    ~TcpStream() override;
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;

    static std::shared_ptr<TcpStream> connect(const std::string& host, std::uint16_t port);

    void write(std::span<const std::uint8_t> bytes) override;
    void read_exact(std::span<std::uint8_t> out) override;
    void close() override;

private:
    int fd_;
};

class TcpListener {
public:
    /// Port 0 picks an ephemeral port; see port().
    explicit TcpListener(std::uint16_t port, const std::string& host = "127.0.0.1");
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const { return port_; }
    std::shared_ptr<TcpStream> accept();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

enum class Role : std::uint8_t { alice = 0, bob = 1 };

enum class MessageType : std::uint8_t {
    reconciliation = 1,
    verification = 2,
    amplification = 3,
    key_management = 4,
    control = 5,
    estimation = 6,
};

struct SecureFrame {
    std::uint64_t session = 0;
    std::uint64_t sequence = 0;
    std::uint8_t type = 0;
    std::vector<std::uint8_t> payload;
    std::uint64_t tag = 0;

    /// session || sequence || type || payload: the authenticated bytes.
    std::vector<std::uint8_t> authenticated_bytes() const;
    /// 4-byte big-endian length, then the authenticated bytes, then the tag.
    std::vector<std::uint8_t> encode() const;
    static SecureFrame decode_body(std::span<const std::uint8_t> body);
};

inline constexpr std::size_t preshared_secret_bytes = 1024;

/// Tag keys for one end: a per-session hash key plus one-time masks per
/// direction, indexed by sequence number. Masks come first from the
/// pre-shared secret, then from 128-bit authentication-pool blocks, each of
/// which contributes one mask to each direction.
class AuthKeyring {
public:
    using Supply = std::function<std::optional<std::array<std::uint8_t, 16>>()>;

    AuthKeyring(std::span<const std::uint8_t> preshared, Supply supply = {});

    std::uint64_t hash_key() const { return hash_key_; }
    /// Mask for `sequence` in direction `from`, pulling pool blocks as needed.
    std::uint64_t mask(Role from, std::uint64_t sequence);
    /// Destroys the masks of direction `from` up to and including `sequence`.
    void consume(Role from, std::uint64_t sequence);

    std::uint64_t masks_consumed(Role from) const;
    std::uint64_t masks_available(Role from) const;
    std::uint64_t blocks_pulled() const;

private:
    void pull_block();

    mutable std::mutex mutex_;
    Supply supply_;
    std::uint64_t hash_key_ = 0;
    std::array<std::deque<std::uint64_t>, 2> masks_;
    std::array<std::uint64_t, 2> first_index_{};  ///< sequence number of masks_[d].front()
    std::array<std::uint64_t, 2> consumed_{};
    std::uint64_t blocks_pulled_ = 0;
};

struct ChannelLedger {
    std::uint64_t frames_sent = 0;
    std::uint64_t frames_received = 0;
    std::uint64_t masks_consumed_send = 0;
    std::uint64_t masks_consumed_recv = 0;
    std::uint64_t tag_failures = 0;
    std::uint64_t replays = 0;
};

struct ReceivedMessage {
    MessageType type;
    std::vector<std::uint8_t> payload;
};

/// One end of the authenticated classical channel.
class SecureSession {
public:
    SecureSession(std::shared_ptr<ByteStream> stream, std::shared_ptr<AuthKeyring> keys, Role role,
                  std::uint64_t session_id);

    void send(MessageType type, std::span<const std::uint8_t> payload);
    /// Throws TagMismatch, SequenceReplay or ConnectionLost; bad frames are dropped.
    ReceivedMessage recv();
    /// Receives and requires the given type.
    std::vector<std::uint8_t> expect(MessageType type);

    ChannelLedger ledger() const;
    Role role() const { return role_; }
    bool alarm() const;

    /// Largest forward gap in sequence numbers a receiver accepts.
    static constexpr std::uint64_t sequence_window = 1024;

private:
    std::uint64_t next_expected_limit() const
    {
        return (last_received_ ? *last_received_ + 1 : 0) + sequence_window;
    }

    std::shared_ptr<ByteStream> stream_;
    std::shared_ptr<AuthKeyring> keys_;
    Role role_;
    std::uint64_t session_;
    PolyHash hash_;

    std::mutex send_mutex_;
    std::mutex recv_mutex_;
    mutable std::mutex ledger_mutex_;
    std::uint64_t next_send_ = 0;
    std::optional<std::uint64_t> last_received_;
    ChannelLedger ledger_;
};

}  // namespace sequre
