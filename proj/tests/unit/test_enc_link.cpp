#include <gtest/gtest.h>

#include <deque>
#include <thread>

#include "sequre/enc_link.hpp"
#include "sequre/error.hpp"
#include "sequre/secure_channel.hpp"
#include "sequre/tunnel_run.hpp"

using namespace sequre;

namespace {

std::vector<std::uint8_t> hex(std::string_view s)
{
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i + 1 < s.size(); i += 2)
        out.push_back(static_cast<std::uint8_t>(std::stoul(std::string(s.substr(i, 2)), nullptr, 16)));
    return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> arr(std::string_view s)
{
    const auto v = hex(s);
    std::array<std::uint8_t, N> a{};
    std::copy(v.begin(), v.end(), a.begin());
    return a;
}

struct GcmCase {
    const char* key;
    const char* iv;
    const char* pt;
    const char* aad;
    const char* ct;
    const char* tag;
};

// GCM specification test cases 1-4.
const GcmCase gcm_cases[] = {
    {"00000000000000000000000000000000", "000000000000000000000000", "", "", "",
     "58e2fccefa7e3061367f1d57a4e7455a"},
    {"00000000000000000000000000000000", "000000000000000000000000", "00000000000000000000000000000000", "",
     "0388dace60b6a392f328c2b971b2fe78", "ab6e47d42cec13bdf53a67b21257bddf"},
    {"feffe9928665731c6d6a8f9467308308", "cafebabefacedbaddecaf888",
     "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b391aafd255",
     "",
     "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091473f5985",
     "4d5c2af327cd64a62cf35abd2ba6fab4"},
    {"feffe9928665731c6d6a8f9467308308", "cafebabefacedbaddecaf888",
     "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39",
     "feedfacedeadbeeffeedfacedeadbeefabaddad2",
     "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091",
     "5bc94fbc3221a5db94fae95ae7121a47"},
};

KeyBlock key_block(std::uint64_t id, SecurityLevel level = SecurityLevel::collective)
{
    KeyBlock k;
    k.id = id;
    k.level = level;
    for (std::size_t i = 0; i < k.bits.size(); ++i) k.bits[i] = static_cast<std::uint8_t>(id * 31 + i);
    return k;
}

KeySupply list_supply(std::vector<KeyBlock> keys)
{
    auto q = std::make_shared<std::deque<KeyBlock>>(keys.begin(), keys.end());
    return [q]() -> std::optional<KeyBlock> {
        if (q->empty()) return std::nullopt;
        auto k = q->front();
        q->pop_front();
        return k;
    };
}

std::vector<KeyBlock> keys(std::size_t n, SecurityLevel level = SecurityLevel::collective)
{
    std::vector<KeyBlock> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(key_block(i, level));
    return v;
}

std::vector<std::uint8_t> drain(TunnelReceiver& rx)
{
    std::vector<std::uint8_t> all;
    while (auto chunk = rx.read()) all.insert(all.end(), chunk->begin(), chunk->end());
    return all;
}

std::vector<std::uint8_t> payload(std::size_t n)
{
    std::vector<std::uint8_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(i * 7 + (i >> 8));
    return v;
}

}  // namespace

TEST(Aes, Fips197AppendixC1)
{
    const auto out = aes128_encrypt_block(arr<16>("000102030405060708090a0b0c0d0e0f"),
                                          arr<16>("00112233445566778899aabbccddeeff"));
    EXPECT_EQ(out, (arr<16>("69c4e0d86a7b0430d8cdb78070b4c55a")));
}

TEST(Gcm, SpecificationTestCases)
{
    for (const auto& c : gcm_cases) {
        Aes128Gcm g(arr<16>(c.key));
        const auto pt = hex(c.pt), aad = hex(c.aad);
        std::vector<std::uint8_t> ct(pt.size());
        const auto tag = g.seal(arr<12>(c.iv), aad, pt, ct);
        EXPECT_EQ(ct, hex(c.ct));
        EXPECT_EQ(tag, arr<16>(c.tag));
        std::vector<std::uint8_t> back(ct.size());
        EXPECT_TRUE(g.open(arr<12>(c.iv), aad, ct, tag, back));
        EXPECT_EQ(back, pt);
        auto bad = tag;
        bad[0] ^= 1;
        EXPECT_FALSE(g.open(arr<12>(c.iv), aad, ct, bad, back));
    }
}

TEST(RenewalPolicy, PeriodFloor)
{
    RenewalPolicy p;
    p.period_seconds = 2.0;
    EXPECT_THROW(p.validate(), Error);
    p.period_seconds = 3.0;
    EXPECT_NO_THROW(p.validate());
    p.min_period_seconds = 1.0;
    EXPECT_THROW(p.validate(), Error);
    RenewalPolicy q;
    q.cap_bits = (std::uint64_t{1} << 35) + 1;
    EXPECT_THROW(q.validate(), Error);
    auto [a, b] = make_pipe();
    RenewalPolicy r;
    r.period_seconds = 2.0;
    EXPECT_THROW(TunnelSender(r, list_supply(keys(2)), a, 1e6), Error);
}

TEST(Tunnel, RoundTripWithTimedRenewals)
{
    auto [a, b] = make_pipe();
    RenewalPolicy p;
    p.period_seconds = 3.0;
    // 1 MB/s simulated: 4 MB takes 32 s -> keys switch every 3 s.
    TunnelSender tx(p, list_supply(keys(20)), a, 1e6, 4096);
    TunnelReceiver rx(list_supply(keys(20)), b);
    const auto data = payload(4'000'000);
    std::vector<std::uint8_t> got;
    std::thread reader([&] { got = drain(rx); });
    tx.write(data);
    tx.close();
    reader.join();
    EXPECT_EQ(got, data);
    EXPECT_EQ(tx.ledger().renewals, 10U);
    EXPECT_EQ(rx.ledger().renewals, tx.ledger().renewals);
    EXPECT_EQ(rx.ledger().key_ids, tx.ledger().key_ids);
    EXPECT_FALSE(rx.ledger().nonce_reuse);
    EXPECT_EQ(rx.ledger().integrity_failures, 0U);
}

TEST(Tunnel, CapForcesRenewal)
{
    auto [a, b] = make_pipe();
    RenewalPolicy p;
    p.cap_bits = 8 * 10'000;
    TunnelSender tx(p, list_supply(keys(20)), a, 1e9, 1000);
    TunnelReceiver rx(list_supply(keys(20)), b);
    tx.write(payload(50'000));
    tx.close();
    EXPECT_EQ(drain(rx).size(), 50'000U);
    EXPECT_EQ(tx.ledger().renewals, 4U);
    EXPECT_EQ(tx.ledger().cap_renewals, 4U);
    EXPECT_LE(tx.ledger().max_bits_under_key, p.cap_bits);
    EXPECT_LE(rx.ledger().max_bits_under_key, p.cap_bits);
}

TEST(Tunnel, EmptyWriteStillFrames)
{
    auto [a, b] = make_pipe();
    TunnelSender tx(RenewalPolicy{}, list_supply(keys(1)), a, 1e6);
    TunnelReceiver rx(list_supply(keys(1)), b);
    tx.write({});
    tx.close();
    const auto chunk = rx.read();
    ASSERT_TRUE(chunk);
    EXPECT_TRUE(chunk->empty());
    EXPECT_FALSE(rx.read());
}

TEST(Tunnel, HaltWhenKeysRunOut)
{
    auto [a, b] = make_pipe();
    RenewalPolicy p;
    p.period_seconds = 3.0;
    TunnelSender tx(p, list_supply(keys(2)), a, 1e3, 100);
    // 100-byte frames take 0.8 s at 1 kbit/s; 1000 bytes need a third key.
    try {
        tx.write(payload(1000));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::pool_empty);
    }
    EXPECT_TRUE(tx.ledger().halted);
    EXPECT_THROW(tx.write(payload(10)), Error);
}

TEST(Tunnel, GraceKeepsOldKeyForAWhile)
{
    auto [a, b] = make_pipe();
    RenewalPolicy p;
    p.period_seconds = 3.0;
    p.exhaustion = Exhaustion::grace;
    p.grace_seconds = 2.0;
    TunnelSender tx(p, list_supply(keys(1)), a, 1e3, 100);
    // The period ends at 3.2 s on a frame boundary; grace runs out 2 s later.
    tx.write(payload(500));
    EXPECT_FALSE(tx.ledger().halted);
    EXPECT_THROW(tx.write(payload(500)), Error);
    EXPECT_TRUE(tx.ledger().halted);
    EXPECT_NEAR(tx.now(), 5.6, 1e-9);
}

TEST(Tunnel, RefuseIndividualSkipsKeys)
{
    auto mixed = keys(6);
    mixed[1].level = SecurityLevel::individual;
    mixed[3].level = SecurityLevel::individual;
    auto [a, b] = make_pipe();
    RenewalPolicy p;
    p.period_seconds = 3.0;
    p.refuse_individual = true;
    TunnelSender tx(p, list_supply(mixed), a, 1e3, 100);
    TunnelReceiver rx(list_supply(mixed), b, true);
    tx.write(payload(1000));
    tx.close();
    EXPECT_EQ(drain(rx).size(), 1000U);
    EXPECT_EQ(tx.ledger().key_ids, (std::vector<std::uint64_t>{0, 2, 4}));
    EXPECT_EQ(tx.ledger().refused_keys, 2U);
    EXPECT_EQ(rx.ledger().key_ids, tx.ledger().key_ids);
}

TEST(Tunnel, TamperedFrameDetected)
{
    auto [a, mid] = make_pipe();
    auto [mid2, b] = make_pipe();
    TunnelSender tx(RenewalPolicy{}, list_supply(keys(2)), a, 1e6, 64);
    TunnelReceiver rx(list_supply(keys(2)), b);
    tx.write(payload(64));
    tx.close();
    std::vector<std::uint8_t> wire;
    std::array<std::uint8_t, 1> byte{};
    try {
        for (;;) {
            mid->read_exact(byte);
            wire.push_back(byte[0]);
        }
    } catch (const Error&) {
    }
    wire.back() ^= 0x80;  // last tag byte of the data frame
    mid2->write(wire);
    mid2->close();
    try {
        rx.read();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::integrity_failure);
    }
    EXPECT_EQ(rx.ledger().integrity_failures, 1U);
}

TEST(Tunnel, KeyMismatchDetected)
{
    auto [a, b] = make_pipe();
    auto other = keys(2);
    other[0].bits[0] ^= 1;
    TunnelSender tx(RenewalPolicy{}, list_supply(keys(2)), a, 1e6);
    TunnelReceiver rx(list_supply(other), b);
    tx.write(payload(100));
    tx.close();
    EXPECT_THROW(rx.read(), Error);
}

TEST(Tunnel, RunTunnelOverKeyStores)
{
    KeyStore alice, bob;
    std::vector<std::uint8_t> bits(128 * 40);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (i * 2654435761U >> 7) & 1U;
    alice.ingest(bits, SecurityLevel::collective, 0.0);
    bob.ingest(bits, SecurityLevel::collective, 0.0);
    TunnelJob job;
    job.bytes = 8 << 20;
    job.policy.period_seconds = 3.0;
    job.throughput_bps = 8e6;
    job.key_wait = std::chrono::milliseconds(200);
    const auto r = run_tunnel(alice, bob, job);
    EXPECT_TRUE(r.ok()) << r.error;
    EXPECT_EQ(r.bytes_received, job.bytes);
    EXPECT_EQ(r.sender.renewals, 2U);
    EXPECT_NEAR(r.simulated_seconds, 8.0 * 1.048576, 1e-6);
}
