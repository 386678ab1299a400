#include "sequre/secure_channel.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "sequre/error.hpp"

namespace sequre {

GaloisField::GaloisField(unsigned width) : width_(width)
{
    switch (width) {
    case 8: reduction_ = 0x1B; break;      // x^8 + x^4 + x^3 + x + 1
    case 16: reduction_ = 0x100B; break;   // x^16 + x^12 + x^3 + x + 1
    case 64: reduction_ = 0x1B; break;     // x^64 + x^4 + x^3 + x + 1
    default: fail(Errc::invalid_config, "field width must be 8, 16 or 64");
    }
}

std::uint64_t GaloisField::multiply(std::uint64_t a, std::uint64_t b) const
{
    const std::uint64_t m = mask();
    const std::uint64_t top = std::uint64_t{1} << (width_ - 1);
    a &= m;
    b &= m;
    std::uint64_t r = 0;
    while (b != 0) {
        if (b & 1U) r ^= a;
        b >>= 1;
        const bool carry = (a & top) != 0;
        a = (a << 1) & m;
        if (carry) a ^= reduction_;
    }
    return r;
}

PolyHash::PolyHash(unsigned width, std::uint64_t key) : field_(width), key_(key & field_.mask())
{
    key_table_.resize(field_.width() / 8);
    for (std::size_t j = 0; j < key_table_.size(); ++j)
        for (std::uint64_t b = 0; b < 256; ++b) key_table_[j][b] = field_.multiply(b << (8 * j), key_);
}

std::uint64_t PolyHash::times_key(std::uint64_t x) const
{
    std::uint64_t r = 0;
    for (std::size_t j = 0; j < key_table_.size(); ++j) r ^= key_table_[j][(x >> (8 * j)) & 0xFF];
    return r;
}

std::size_t PolyHash::blocks(std::size_t bytes) const
{
    const std::size_t per = field_.width() / 8;
    return 8 / per + (bytes + per - 1) / per;
}

std::uint64_t PolyHash::hash(std::span<const std::uint8_t> message) const
{
    const std::size_t per = field_.width() / 8;
    std::uint64_t acc = 0;
    auto absorb = [&](std::uint64_t block) { acc = times_key(acc ^ block); };

    const std::uint64_t length = message.size();
    for (std::size_t off = 0; off < 8; off += per) {
        std::uint64_t block = 0;
        for (std::size_t i = 0; i < per; ++i) block = (block << 8) | ((length >> (8 * (7 - off - i))) & 0xFF);
        absorb(block);
    }
    for (std::size_t off = 0; off < message.size(); off += per) {
        std::uint64_t block = 0;
        for (std::size_t i = 0; i < per; ++i)
            block = (block << 8) | (off + i < message.size() ? message[off + i] : 0U);
        absorb(block);
    }
    return acc;
}

namespace {

constexpr std::size_t pipe_capacity = std::size_t{8} << 20;

struct PipeBuffer {
    std::mutex mutex;
    std::condition_variable ready;
    std::condition_variable space;
    std::deque<std::uint8_t> bytes;
    bool closed = false;
};

class PipeEnd final : public ByteStream {
public:
    PipeEnd(std::shared_ptr<PipeBuffer> in, std::shared_ptr<PipeBuffer> out)
        : in_(std::move(in)), out_(std::move(out)) {}
    ~PipeEnd() override { close(); }

    void write(std::span<const std::uint8_t> bytes) override
    {
        std::unique_lock lock(out_->mutex);
        std::size_t done = 0;
        while (done < bytes.size()) {
            out_->space.wait(lock, [&] { return out_->bytes.size() < pipe_capacity || out_->closed; });
            if (out_->closed) fail(Errc::connection_lost, "pipe closed");
            const std::size_t n = std::min(bytes.size() - done, pipe_capacity - out_->bytes.size());
            out_->bytes.insert(out_->bytes.end(), bytes.begin() + static_cast<std::ptrdiff_t>(done),
                               bytes.begin() + static_cast<std::ptrdiff_t>(done + n));
            done += n;
            out_->ready.notify_all();
        }
    }

    void read_exact(std::span<std::uint8_t> out) override
    {
        std::unique_lock lock(in_->mutex);
        std::size_t done = 0;
        while (done < out.size()) {
            in_->ready.wait(lock, [&] { return !in_->bytes.empty() || in_->closed; });
            if (in_->bytes.empty()) fail(Errc::connection_lost, "pipe closed");
            const std::size_t n = std::min(out.size() - done, in_->bytes.size());
            std::copy_n(in_->bytes.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(done));
            in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(n));
            done += n;
            in_->space.notify_all();
        }
    }

    void close() override
    {
        for (auto* buf : {in_.get(), out_.get()}) {
            std::lock_guard lock(buf->mutex);
            buf->closed = true;
            buf->ready.notify_all();
            buf->space.notify_all();
        }
    }

private:
    std::shared_ptr<PipeBuffer> in_;
    std::shared_ptr<PipeBuffer> out_;
};

std::uint64_t load_be64(const std::uint8_t* p)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
    return v;
}

void store_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes)
{
    for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::pair<std::shared_ptr<ByteStream>, std::shared_ptr<ByteStream>> make_pipe()
{
    auto ab = std::make_shared<PipeBuffer>();
    auto ba = std::make_shared<PipeBuffer>();
    return {std::make_shared<PipeEnd>(ba, ab), std::make_shared<PipeEnd>(ab, ba)};
}

TcpStream::~TcpStream() { close(); }

std::shared_ptr<TcpStream> TcpStream::connect(const std::string& host, std::uint16_t port)
{
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0)
        fail(Errc::connection_lost, "cannot resolve " + host);
    int fd = -1;
    for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) fail(Errc::connection_lost, "cannot connect to " + host + ":" + service);
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_shared<TcpStream>(fd);
}

void TcpStream::write(std::span<const std::uint8_t> bytes)
{
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) fail(Errc::connection_lost, "send failed");
        done += static_cast<std::size_t>(n);
    }
}

void TcpStream::read_exact(std::span<std::uint8_t> out)
{
    std::size_t done = 0;
    while (done < out.size()) {
        const auto n = ::recv(fd_, out.data() + done, out.size() - done, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) fail(Errc::connection_lost, "peer closed the connection");
        done += static_cast<std::size_t>(n);
    }
}

void TcpStream::close()
{
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

TcpListener::TcpListener(std::uint16_t port, const std::string& host)
{
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) fail(Errc::io_error, "socket() failed");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) fail(Errc::invalid_config, "bad listen address " + host);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
        ::close(fd_);
        fail(Errc::io_error, "cannot listen on port " + std::to_string(port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener()
{
    if (fd_ >= 0) ::close(fd_);
}

std::shared_ptr<TcpStream> TcpListener::accept()
{
    int fd;
    do {
        fd = ::accept(fd_, nullptr, nullptr);
    } while (fd < 0 && errno == EINTR);
    if (fd < 0) fail(Errc::connection_lost, "accept failed");
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_shared<TcpStream>(fd);
}

std::vector<std::uint8_t> SecureFrame::authenticated_bytes() const
{
    std::vector<std::uint8_t> out;
    out.reserve(17 + payload.size());
    store_be(out, session, 8);
    store_be(out, sequence, 8);
    out.push_back(type);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::vector<std::uint8_t> SecureFrame::encode() const
{
    const std::size_t body = 8 + 8 + 1 + payload.size() + 8;
    require(body <= 0xFFFFFFFFULL, Errc::invalid_config, "frame too large");
    std::vector<std::uint8_t> out;
    out.reserve(4 + body);
    store_be(out, body, 4);
    store_be(out, session, 8);
    store_be(out, sequence, 8);
    out.push_back(type);
    out.insert(out.end(), payload.begin(), payload.end());
    store_be(out, tag, 8);
    return out;
}

SecureFrame SecureFrame::decode_body(std::span<const std::uint8_t> body)
{
    require(body.size() >= 25, Errc::parse_error, "frame shorter than header and tag");
    SecureFrame f;
    f.session = load_be64(body.data());
    f.sequence = load_be64(body.data() + 8);
    f.type = body[16];
    f.payload.assign(body.begin() + 17, body.end() - 8);
    f.tag = load_be64(body.data() + body.size() - 8);
    return f;
}

AuthKeyring::AuthKeyring(std::span<const std::uint8_t> preshared, Supply supply) : supply_(std::move(supply))
{
    require(preshared.size() == preshared_secret_bytes, Errc::invalid_config, "pre-shared secret must be 1 KiB");
    hash_key_ = load_be64(preshared.data());
    for (std::size_t off = 8, j = 0; off + 8 <= preshared.size(); off += 8, ++j)
        masks_[j % 2].push_back(load_be64(preshared.data() + off));
}

void AuthKeyring::pull_block()
{
    std::optional<std::array<std::uint8_t, 16>> block;
    if (supply_) block = supply_();
    if (!block) fail(Errc::key_store_empty, "no authentication key material left");
    masks_[0].push_back(load_be64(block->data()));
    masks_[1].push_back(load_be64(block->data() + 8));
    ++blocks_pulled_;
}

std::uint64_t AuthKeyring::mask(Role from, std::uint64_t sequence)
{
    std::lock_guard lock(mutex_);
    const auto d = static_cast<std::size_t>(from);
    require(sequence >= first_index_[d], Errc::sequence_replay, "mask already destroyed");
    while (sequence - first_index_[d] >= masks_[d].size()) pull_block();
    return masks_[d][sequence - first_index_[d]];
}

void AuthKeyring::consume(Role from, std::uint64_t sequence)
{
    std::lock_guard lock(mutex_);
    const auto d = static_cast<std::size_t>(from);
    while (first_index_[d] <= sequence && !masks_[d].empty()) {
        masks_[d].front() = 0;
        masks_[d].pop_front();
        ++first_index_[d];
        ++consumed_[d];
    }
}

std::uint64_t AuthKeyring::masks_consumed(Role from) const
{
    std::lock_guard lock(mutex_);
    return consumed_[static_cast<std::size_t>(from)];
}

std::uint64_t AuthKeyring::masks_available(Role from) const
{
    std::lock_guard lock(mutex_);
    return masks_[static_cast<std::size_t>(from)].size();
}

std::uint64_t AuthKeyring::blocks_pulled() const
{
    std::lock_guard lock(mutex_);
    return blocks_pulled_;
}

SecureSession::SecureSession(std::shared_ptr<ByteStream> stream, std::shared_ptr<AuthKeyring> keys, Role role,
                             std::uint64_t session_id)
    : stream_(std::move(stream)), keys_(std::move(keys)), role_(role), session_(session_id),
      hash_(64, keys_->hash_key())
{
}

void SecureSession::send(MessageType type, std::span<const std::uint8_t> payload)
{
    std::lock_guard lock(send_mutex_);
    SecureFrame f;
    f.session = session_;
    f.sequence = next_send_;
    f.type = static_cast<std::uint8_t>(type);
    f.payload.assign(payload.begin(), payload.end());
    f.tag = hash_.tag(f.authenticated_bytes(), keys_->mask(role_, f.sequence));
    keys_->consume(role_, f.sequence);
    ++next_send_;
    stream_->write(f.encode());
    std::lock_guard ll(ledger_mutex_);
    ++ledger_.frames_sent;
    ++ledger_.masks_consumed_send;
}

ReceivedMessage SecureSession::recv()
{
    std::lock_guard lock(recv_mutex_);
    std::array<std::uint8_t, 4> prefix{};
    stream_->read_exact(prefix);
    const std::uint32_t len = (std::uint32_t{prefix[0]} << 24) | (std::uint32_t{prefix[1]} << 16)
                              | (std::uint32_t{prefix[2]} << 8) | prefix[3];
    require(len >= 25, Errc::tag_mismatch, "frame length below minimum");
    std::vector<std::uint8_t> body(len);
    stream_->read_exact(body);
    SecureFrame f = SecureFrame::decode_body(body);

    const Role peer = role_ == Role::alice ? Role::bob : Role::alice;
    auto reject = [&](Errc code, const char* what, bool replay) {
        std::lock_guard ll(ledger_mutex_);
        (replay ? ledger_.replays : ledger_.tag_failures) += 1;
        fail(code, what);
    };
    if (f.session != session_) reject(Errc::tag_mismatch, "frame from another session", false);
    if (last_received_ && f.sequence <= *last_received_) reject(Errc::sequence_replay, "sequence number reused", true);
    if (f.sequence >= next_expected_limit()) reject(Errc::tag_mismatch, "sequence number out of window", false);

    const std::uint64_t expected = hash_.tag(f.authenticated_bytes(), keys_->mask(peer, f.sequence));
    if (expected != f.tag) reject(Errc::tag_mismatch, "authentication tag mismatch", false);
    keys_->consume(peer, f.sequence);
    last_received_ = f.sequence;

    std::lock_guard ll(ledger_mutex_);
    ++ledger_.frames_received;
    ++ledger_.masks_consumed_recv;
    return {static_cast<MessageType>(f.type), std::move(f.payload)};
}

std::vector<std::uint8_t> SecureSession::expect(MessageType type)
{
    auto msg = recv();
    require(msg.type == type, Errc::parse_error, "unexpected message type on secure channel");
    return std::move(msg.payload);
}

ChannelLedger SecureSession::ledger() const
{
    std::lock_guard ll(ledger_mutex_);
    return ledger_;
}

bool SecureSession::alarm() const
{
    std::lock_guard ll(ledger_mutex_);
    return ledger_.tag_failures > 0 || ledger_.replays > 0;
}

}  // namespace sequre
