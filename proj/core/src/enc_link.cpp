#include "sequre/enc_link.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <cstring>

#include "sequre/error.hpp"
#include "sequre/secure_channel.hpp"

namespace sequre {

namespace {

struct CtxDeleter {
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

CtxPtr new_ctx()
{
    CtxPtr c(EVP_CIPHER_CTX_new());
    if (!c) fail(Errc::io_error, "cannot allocate cipher context");
    return c;
}

void check(int ok, const char* what)
{
    if (ok != 1) fail(Errc::io_error, what);
}

}  // namespace

std::array<std::uint8_t, 16> aes128_encrypt_block(const AesKey& key, const std::array<std::uint8_t, 16>& block)
{
    auto ctx = new_ctx();
    check(EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_ecb(), nullptr, key.data(), nullptr), "AES init");
    EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
    std::array<std::uint8_t, 16> out{};
    int len = 0;
    check(EVP_EncryptUpdate(ctx.get(), out.data(), &len, block.data(), 16), "AES update");
    return out;
}

struct Aes128Gcm::Impl {
    CtxPtr enc = new_ctx();
    CtxPtr dec = new_ctx();
};

Aes128Gcm::Aes128Gcm(const AesKey& key) : impl_(std::make_unique<Impl>())
{
    check(EVP_EncryptInit_ex(impl_->enc.get(), EVP_aes_128_gcm(), nullptr, key.data(), nullptr), "GCM init");
    check(EVP_DecryptInit_ex(impl_->dec.get(), EVP_aes_128_gcm(), nullptr, key.data(), nullptr), "GCM init");
}

Aes128Gcm::~Aes128Gcm() = default;

GcmTag Aes128Gcm::seal(const GcmNonce& nonce, std::span<const std::uint8_t> aad,
                       std::span<const std::uint8_t> plaintext, std::span<std::uint8_t> out)
{
    require(out.size() >= plaintext.size(), Errc::length_mismatch, "ciphertext buffer too small");
    EVP_CIPHER_CTX* c = impl_->enc.get();
    check(EVP_EncryptInit_ex(c, nullptr, nullptr, nullptr, nonce.data()), "GCM nonce");
    int len = 0;
    if (!aad.empty()) check(EVP_EncryptUpdate(c, nullptr, &len, aad.data(), static_cast<int>(aad.size())), "GCM aad");
    if (!plaintext.empty())
        check(EVP_EncryptUpdate(c, out.data(), &len, plaintext.data(), static_cast<int>(plaintext.size())), "GCM data");
    check(EVP_EncryptFinal_ex(c, out.data() + plaintext.size(), &len), "GCM final");
    GcmTag tag{};
    check(EVP_CIPHER_CTX_ctrl(c, EVP_CTRL_GCM_GET_TAG, 16, tag.data()), "GCM tag");
    return tag;
}

bool Aes128Gcm::open(const GcmNonce& nonce, std::span<const std::uint8_t> aad,
                     std::span<const std::uint8_t> ciphertext, const GcmTag& tag, std::span<std::uint8_t> out)
{
    require(out.size() >= ciphertext.size(), Errc::length_mismatch, "plaintext buffer too small");
    EVP_CIPHER_CTX* c = impl_->dec.get();
    check(EVP_DecryptInit_ex(c, nullptr, nullptr, nullptr, nonce.data()), "GCM nonce");
    int len = 0;
    if (!aad.empty()) check(EVP_DecryptUpdate(c, nullptr, &len, aad.data(), static_cast<int>(aad.size())), "GCM aad");
    if (!ciphertext.empty())
        check(EVP_DecryptUpdate(c, out.data(), &len, ciphertext.data(), static_cast<int>(ciphertext.size())), "GCM data");
    GcmTag t = tag;
    check(EVP_CIPHER_CTX_ctrl(c, EVP_CTRL_GCM_SET_TAG, 16, t.data()), "GCM tag");
    return EVP_DecryptFinal_ex(c, out.data() + ciphertext.size(), &len) == 1;
}

void RenewalPolicy::validate() const
{
    require(min_period_seconds >= 3.0, Errc::invalid_config, "renewal floor cannot be below 3 s");
    if (period_seconds < min_period_seconds) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "renewal period %g s is below the %g s floor", period_seconds, min_period_seconds);
        fail(Errc::invalid_config, msg);
    }
    require(cap_bits > 0 && cap_bits <= (std::uint64_t{1} << 35), Errc::invalid_config,
            "per-key cap must be in (0, 2^35] bits");
    require(grace_seconds >= 0.0, Errc::invalid_config, "grace must be non-negative");
}

KeySupply key_supply_from(KeyStore& store, const std::function<double()>& clock)
{
    return [&store, clock]() -> std::optional<KeyBlock> {
        try {
            return store.request_key(Consumer::app, clock ? clock() : 0.0);
        } catch (const Error& e) {
            if (e.code() == Errc::pool_empty) return std::nullopt;
            throw;
        }
    };
}

namespace {

constexpr std::size_t header_bytes = 1 + 8 + 12;
constexpr std::size_t tag_bytes = 16;

GcmNonce make_nonce(std::uint64_t key_id, std::uint64_t counter)
{
    GcmNonce n{};
    for (int i = 0; i < 4; ++i) n[i] = static_cast<std::uint8_t>(key_id >> (8 * (3 - i)));
    for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(counter >> (8 * (7 - i)));
    return n;
}

std::uint64_t nonce_counter(const std::uint8_t* nonce)
{
    std::uint64_t c = 0;
    for (int i = 4; i < 12; ++i) c = (c << 8) | nonce[i];
    return c;
}

std::optional<KeyBlock> next_usable(const KeySupply& keys, bool refuse_individual, TunnelLedger& ledger)
{
    for (;;) {
        auto k = keys();
        if (!k) return std::nullopt;
        if (refuse_individual && k->level != SecurityLevel::collective) {
            ++ledger.refused_keys;
            continue;
        }
        return k;
    }
}

}  // namespace

TunnelSender::TunnelSender(RenewalPolicy policy, KeySupply keys, std::shared_ptr<ByteStream> out,
                           double throughput_bps, std::size_t max_frame_bytes)
    : policy_(policy), keys_(std::move(keys)), out_(std::move(out)), throughput_bps_(throughput_bps),
      max_frame_(max_frame_bytes)
{
    policy_.validate();
    require(throughput_bps > 0.0, Errc::invalid_config, "throughput must be positive");
    require(max_frame_bytes >= 1 && max_frame_bytes * 8 <= policy_.cap_bits, Errc::invalid_config,
            "frame size must fit under the per-key cap");
}

void TunnelSender::send_frame(FrameType type, std::span<const std::uint8_t> payload)
{
    const std::size_t body = header_bytes + payload.size() + tag_bytes;
    scratch_.resize(4 + body);
    std::uint8_t* p = scratch_.data();
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(body >> (8 * (3 - i)));
    p[4] = static_cast<std::uint8_t>(type);
    for (int i = 0; i < 8; ++i) p[5 + i] = static_cast<std::uint8_t>(*key_id_ >> (8 * (7 - i)));
    const GcmNonce nonce = make_nonce(*key_id_, counter_);
    std::memcpy(p + 13, nonce.data(), nonce.size());
    const auto tag = cipher_->seal(nonce, std::span(p + 4, header_bytes), payload,
                                   std::span(p + 4 + header_bytes, payload.size()));
    std::memcpy(p + 4 + header_bytes + payload.size(), tag.data(), tag_bytes);
    ++counter_;
    out_->write(scratch_);
}

void TunnelSender::renew(bool forced_by_cap)
{
    auto k = next_usable(keys_, policy_.refuse_individual, ledger_);
    if (!k) {
        const bool can_continue = cipher_ && policy_.exhaustion == Exhaustion::grace;
        if (!exhausted_since_) exhausted_since_ = now_;
        if (!can_continue || forced_by_cap || now_ - *exhausted_since_ > policy_.grace_seconds) {
            ledger_.halted = true;
            fail(Errc::pool_empty, "no application key available for renewal");
        }
        return;
    }
    exhausted_since_.reset();
    const bool first = !key_id_.has_value();
    AesKey key{};
    std::copy(k->bits.begin(), k->bits.end(), key.begin());
    k->bits.fill(0);
    cipher_ = std::make_unique<Aes128Gcm>(key);
    key.fill(0);
    key_id_ = k->id;
    counter_ = 0;
    bits_under_key_ = 0;
    key_since_ = now_;
    ledger_.key_ids.push_back(k->id);
    if (!first) {
        ++ledger_.renewals;
        if (forced_by_cap) ++ledger_.cap_renewals;
    }
    send_frame(FrameType::rekey, {});
}

void TunnelSender::write(std::span<const std::uint8_t> plaintext)
{
    require(!ledger_.halted, Errc::pool_empty, "tunnel halted");
    std::size_t off = 0;
    do {
        const std::size_t chunk = std::min(max_frame_, plaintext.size() - off);
        const std::uint64_t bits = static_cast<std::uint64_t>(chunk) * 8;
        if (!key_id_) renew(false);
        else if (now_ - key_since_ >= policy_.period_seconds && !exhausted_since_) renew(false);
        else if (exhausted_since_) renew(false);
        if (bits_under_key_ + bits > policy_.cap_bits) renew(true);

        send_frame(FrameType::data, plaintext.subspan(off, chunk));
        bits_under_key_ += bits;
        ledger_.max_bits_under_key = std::max(ledger_.max_bits_under_key, bits_under_key_);
        ledger_.payload_bytes += chunk;
        ++ledger_.frames;
        now_ += static_cast<double>(bits) / throughput_bps_;
        off += chunk;
    } while (off < plaintext.size());
}

void TunnelSender::close() { out_->close(); }

TunnelReceiver::TunnelReceiver(KeySupply keys, std::shared_ptr<ByteStream> in, bool refuse_individual)
    : keys_(std::move(keys)), in_(std::move(in)), refuse_individual_(refuse_individual)
{
}

std::optional<std::vector<std::uint8_t>> TunnelReceiver::read()
{
    for (;;) {
        std::array<std::uint8_t, 4> prefix{};
        try {
            in_->read_exact(prefix);
        } catch (const Error& e) {
            if (e.code() == Errc::connection_lost) return std::nullopt;
            throw;
        }
        const std::size_t body = (std::size_t{prefix[0]} << 24) | (std::size_t{prefix[1]} << 16)
                                 | (std::size_t{prefix[2]} << 8) | prefix[3];
        auto reject = [&](const char* what) {
            ++ledger_.integrity_failures;
            fail(Errc::integrity_failure, what);
        };
        if (body < header_bytes + tag_bytes) reject("frame shorter than header");
        std::vector<std::uint8_t> frame(body);
        in_->read_exact(frame);

        const auto type = static_cast<FrameType>(frame[0]);
        std::uint64_t key_id = 0;
        for (int i = 0; i < 8; ++i) key_id = (key_id << 8) | frame[1 + i];
        GcmNonce nonce{};
        std::memcpy(nonce.data(), frame.data() + 9, nonce.size());
        const std::uint64_t counter = nonce_counter(nonce.data());
        if (nonce != make_nonce(key_id, counter)) reject("nonce does not match key id");
        GcmTag tag{};
        std::memcpy(tag.data(), frame.data() + body - tag_bytes, tag_bytes);
        const auto aad = std::span<const std::uint8_t>(frame.data(), header_bytes);
        const auto ct = std::span<const std::uint8_t>(frame.data() + header_bytes, body - header_bytes - tag_bytes);

        if (type == FrameType::rekey) {
            auto k = next_usable(keys_, refuse_individual_, ledger_);
            if (!k) reject("no key to follow the peer's renewal");
            if (k->id != key_id) reject("renewal key id differs from local key sequence");
            AesKey key{};
            std::copy(k->bits.begin(), k->bits.end(), key.begin());
            ActiveKey next;
            next.id = k->id;
            next.cipher = std::make_unique<Aes128Gcm>(key);
            key.fill(0);
            std::vector<std::uint8_t> none;
            if (!ct.empty() || !next.cipher->open(nonce, aad, ct, tag, none)) reject("renewal frame failed authentication");
            next.last_counter = counter;
            next.any = true;
            if (current_) {
                ++ledger_.renewals;
                previous_ = std::move(current_);
            }
            ledger_.key_ids.push_back(next.id);
            current_ = std::move(next);
            frames_since_switch_ = 0;
            continue;
        }
        if (type != FrameType::data) reject("unknown frame type");

        ActiveKey* key = nullptr;
        if (current_ && current_->id == key_id) key = &*current_;
        else if (previous_ && previous_->id == key_id && frames_since_switch_ < overlap_frames) key = &*previous_;
        if (key == nullptr) reject("frame under an unknown or retired key");
        if (key->any && counter <= key->last_counter) {
            ledger_.nonce_reuse = true;
            reject("nonce reused");
        }
        std::vector<std::uint8_t> plain(ct.size());
        if (!key->cipher->open(nonce, aad, ct, tag, plain)) reject("frame failed authentication");
        key->last_counter = counter;
        key->any = true;
        key->bits += static_cast<std::uint64_t>(plain.size()) * 8;
        ledger_.max_bits_under_key = std::max(ledger_.max_bits_under_key, key->bits);
        if (key == &*current_ && ++frames_since_switch_ >= overlap_frames) previous_.reset();
        ++ledger_.frames;
        ledger_.payload_bytes += plain.size();
        return plain;
    }
}

}  // namespace sequre
