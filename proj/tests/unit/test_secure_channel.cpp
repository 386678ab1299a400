#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "oracles.hpp"
#include "sequre/error.hpp"
#include "sequre/secure_channel.hpp"

using namespace sequre;

namespace {

std::vector<std::uint8_t> secret(unsigned seed)
{
    std::mt19937 eng(seed);
    std::vector<std::uint8_t> s(preshared_secret_bytes);
    for (auto& b : s) b = static_cast<std::uint8_t>(eng());
    return s;
}

AuthKeyring::Supply counting_supply(std::uint8_t fill)
{
    return [fill]() -> std::optional<std::array<std::uint8_t, 16>> {
        std::array<std::uint8_t, 16> b;
        b.fill(fill);
        return b;
    };
}

struct Pair {
    std::shared_ptr<ByteStream> a_stream, b_stream;
    std::shared_ptr<SecureSession> alice, bob;
};

Pair make_sessions(unsigned seed = 1, AuthKeyring::Supply sa = {}, AuthKeyring::Supply sb = {})
{
    Pair p;
    std::tie(p.a_stream, p.b_stream) = make_pipe();
    const auto s = secret(seed);
    p.alice = std::make_shared<SecureSession>(p.a_stream, std::make_shared<AuthKeyring>(s, sa), Role::alice, 7);
    p.bob = std::make_shared<SecureSession>(p.b_stream, std::make_shared<AuthKeyring>(s, sb), Role::bob, 7);
    return p;
}

}  // namespace

TEST(GaloisField, MatchesReferenceMultiplication)
{
    const GaloisField f8(8), f16(16);
    for (std::uint64_t a = 0; a < 256; ++a)
        for (std::uint64_t b = 0; b < 256; ++b)
            ASSERT_EQ(f8.multiply(a, b), oracle::gf_mul_reference(a, b, 8, 0x11B));
    std::mt19937_64 eng(3);
    for (int i = 0; i < 20000; ++i) {
        const std::uint64_t a = eng() & 0xFFFF, b = eng() & 0xFFFF;
        ASSERT_EQ(f16.multiply(a, b), oracle::gf_mul_reference(a, b, 16, 0x1100B));
    }
    EXPECT_EQ(f8.multiply(0x57, 0x83), 0xC1U);
    EXPECT_THROW(GaloisField(12), Error);
}

TEST(GaloisField, Wide64IsAFieldOnSamples)
{
    const GaloisField f(64);
    std::mt19937_64 eng(4);
    for (int i = 0; i < 1000; ++i) {
        const auto a = eng(), b = eng(), c = eng();
        EXPECT_EQ(f.multiply(a, b), f.multiply(b, a));
        EXPECT_EQ(f.multiply(a, b ^ c), f.multiply(a, b) ^ f.multiply(a, c));
        EXPECT_EQ(f.multiply(f.multiply(a, b), c), f.multiply(a, f.multiply(b, c)));
    }
}

TEST(PolyHash, HornerWithLengthFirst)
{
    const GaloisField f(16);
    const std::uint64_t k = 0x1234;
    const std::vector<std::uint8_t> msg{0xAB, 0xCD, 0xEF};
    // Length 3 as four 16-bit blocks, then 0xABCD, 0xEF00.
    const std::uint64_t blocks[] = {0, 0, 0, 3, 0xABCD, 0xEF00};
    std::uint64_t acc = 0;
    for (auto b : blocks) acc = f.multiply(acc ^ b, k);
    const PolyHash h(16, k);
    EXPECT_EQ(h.hash(msg), acc);
    EXPECT_EQ(h.blocks(3), 6U);
}

TEST(PolyHash, EightBitSubstitutionForgeryIsExactlyTwoToMinusEight)
{
    // Enumerate every key and mask; count how often a substituted single-byte
    // message carries the same tag as the original.
    for (unsigned m : {0x00U, 0x80U})
        for (unsigned forged = 1; forged < 256; forged += 17) {
            if (forged == m) continue;
            std::size_t success = 0;
            for (std::uint64_t key = 0; key < 256; ++key) {
                const PolyHash h(8, key);
                for (std::uint64_t mask = 0; mask < 256; ++mask)
                    success += h.tag(std::vector<std::uint8_t>{std::uint8_t(m)}, mask)
                               == h.tag(std::vector<std::uint8_t>{std::uint8_t(forged)}, mask);
            }
            ASSERT_EQ(success, 256U) << m << ' ' << forged;
        }
}

TEST(PolyHash, SixteenBitRandomForgeryRate)
{
    std::mt19937_64 eng(9);
    const int trials = 400000;
    int success = 0;
    std::vector<std::uint8_t> msg(32);
    for (int t = 0; t < trials; ++t) {
        for (auto& b : msg) b = static_cast<std::uint8_t>(eng());
        const PolyHash h(16, eng());
        const std::uint64_t mask = eng();
        auto forged = msg;
        forged[eng() % forged.size()] ^= static_cast<std::uint8_t>(1U << (eng() % 8));
        success += h.tag(msg, mask) == h.tag(forged, mask);
    }
    // Bound for 32-byte messages: (blocks) / 2^16.
    EXPECT_LE(double(success) / trials, 20.0 / 65536.0);
}

TEST(Keyring, MasksPerDirectionAndPoolRefill)
{
    int pulled = 0;
    AuthKeyring k(secret(2), [&]() -> std::optional<std::array<std::uint8_t, 16>> {
        ++pulled;
        std::array<std::uint8_t, 16> b{};
        b[7] = 1;
        b[15] = 2;
        return b;
    });
    EXPECT_EQ(k.masks_available(Role::alice), 64U);
    EXPECT_EQ(k.masks_available(Role::bob), 63U);
    EXPECT_EQ(k.mask(Role::alice, 64), 1U);
    EXPECT_EQ(k.mask(Role::bob, 63), 2U);
    EXPECT_EQ(pulled, 1);
    k.consume(Role::alice, 10);
    EXPECT_EQ(k.masks_consumed(Role::alice), 11U);
    try {
        k.mask(Role::alice, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::sequence_replay);
    }
    AuthKeyring empty(secret(2));
    EXPECT_THROW(empty.mask(Role::alice, 200), Error);
    EXPECT_THROW(AuthKeyring(std::vector<std::uint8_t>(10)), Error);
}

TEST(SecureSession, RoundTripAndLedgerBalance)
{
    auto p = make_sessions(1, counting_supply(1), counting_supply(1));
    for (int i = 0; i < 200; ++i) {
        const std::vector<std::uint8_t> msg(i, static_cast<std::uint8_t>(i));
        p.alice->send(MessageType::reconciliation, msg);
        EXPECT_EQ(p.bob->expect(MessageType::reconciliation), msg);
        p.bob->send(MessageType::verification, msg);
        EXPECT_EQ(p.alice->expect(MessageType::verification), msg);
    }
    const auto la = p.alice->ledger(), lb = p.bob->ledger();
    EXPECT_EQ(la.frames_sent, 200U);
    EXPECT_EQ(la.masks_consumed_send, la.frames_sent);
    EXPECT_EQ(lb.masks_consumed_recv, la.frames_sent);
    EXPECT_EQ(lb.masks_consumed_send, lb.frames_sent);
    EXPECT_EQ(la.masks_consumed_recv, lb.frames_sent);
    EXPECT_FALSE(p.alice->alarm());
    EXPECT_FALSE(p.bob->alarm());
}

TEST(SecureSession, WrongMessageTypeRejected)
{
    auto p = make_sessions();
    p.alice->send(MessageType::control, std::vector<std::uint8_t>{1});
    EXPECT_THROW(p.bob->expect(MessageType::estimation), Error);
}

TEST(SecureSession, TamperedFrameFailsTag)
{
    auto [a, b] = make_pipe();
    const auto s = secret(4);
    auto alice_keys = std::make_shared<AuthKeyring>(s);
    SecureSession bob(b, std::make_shared<AuthKeyring>(s), Role::bob, 1);

    SecureFrame f;
    f.session = 1;
    f.sequence = 0;
    f.type = static_cast<std::uint8_t>(MessageType::control);
    f.payload = {1, 2, 3};
    const PolyHash h(64, alice_keys->hash_key());
    f.tag = h.tag(f.authenticated_bytes(), alice_keys->mask(Role::alice, 0));
    auto bytes = f.encode();
    bytes[4 + 17] ^= 0x01;
    a->write(bytes);
    try {
        bob.recv();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::tag_mismatch);
    }
    EXPECT_EQ(bob.ledger().tag_failures, 1U);
    EXPECT_EQ(bob.ledger().masks_consumed_recv, 0U);
    EXPECT_TRUE(bob.alarm());

    // The untouched frame still verifies afterwards.
    a->write(f.encode());
    EXPECT_EQ(bob.recv().payload, f.payload);
}

TEST(SecureSession, ReplayRejected)
{
    auto [a, b] = make_pipe();
    const auto s = secret(5);
    auto keys = std::make_shared<AuthKeyring>(s);
    SecureSession bob(b, std::make_shared<AuthKeyring>(s), Role::bob, 2);
    SecureFrame f;
    f.session = 2;
    f.type = static_cast<std::uint8_t>(MessageType::control);
    f.payload = {9};
    f.tag = PolyHash(64, keys->hash_key()).tag(f.authenticated_bytes(), keys->mask(Role::alice, 0));
    a->write(f.encode());
    bob.recv();
    a->write(f.encode());
    try {
        bob.recv();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::sequence_replay);
    }
    EXPECT_EQ(bob.ledger().replays, 1U);
}

TEST(SecureSession, OtherSessionRejected)
{
    auto [a, b] = make_pipe();
    const auto s = secret(6);
    SecureSession alice(a, std::make_shared<AuthKeyring>(s), Role::alice, 3);
    SecureSession bob(b, std::make_shared<AuthKeyring>(s), Role::bob, 4);
    alice.send(MessageType::control, std::vector<std::uint8_t>{1});
    EXPECT_THROW(bob.recv(), Error);
}

TEST(SecureSession, MismatchedSecretsNeverVerify)
{
    auto [a, b] = make_pipe();
    SecureSession alice(a, std::make_shared<AuthKeyring>(secret(7)), Role::alice, 1);
    SecureSession bob(b, std::make_shared<AuthKeyring>(secret(8)), Role::bob, 1);
    alice.send(MessageType::control, std::vector<std::uint8_t>{1, 2});
    EXPECT_THROW(bob.recv(), Error);
}

TEST(SecureFrame, EncodeDecode)
{
    SecureFrame f;
    f.session = 0x0102030405060708ULL;
    f.sequence = 42;
    f.type = 3;
    f.payload = {5, 6, 7};
    f.tag = 0xDEADBEEFULL;
    const auto bytes = f.encode();
    ASSERT_EQ(bytes.size(), 4U + 25U + 3U);
    const auto back = SecureFrame::decode_body(std::span(bytes).subspan(4));
    EXPECT_EQ(back.session, f.session);
    EXPECT_EQ(back.sequence, 42U);
    EXPECT_EQ(back.payload, f.payload);
    EXPECT_EQ(back.tag, f.tag);
    EXPECT_THROW(SecureFrame::decode_body(std::vector<std::uint8_t>(10)), Error);
}

TEST(Transport, TcpLoopbackSession)
{
    TcpListener listener(0);
    const auto s = secret(10);
    std::vector<std::uint8_t> got;
    std::thread server([&] {
        auto stream = listener.accept();
        SecureSession bob(stream, std::make_shared<AuthKeyring>(s), Role::bob, 5);
        got = bob.expect(MessageType::key_management);
        bob.send(MessageType::key_management, got);
    });
    auto stream = TcpStream::connect("127.0.0.1", listener.port());
    SecureSession alice(stream, std::make_shared<AuthKeyring>(s), Role::alice, 5);
    const std::vector<std::uint8_t> msg(100'000, 0x5A);
    alice.send(MessageType::key_management, msg);
    EXPECT_EQ(alice.expect(MessageType::key_management), msg);
    server.join();
    EXPECT_EQ(got, msg);
}

TEST(Transport, ClosedPipeReportsConnectionLost)
{
    auto [a, b] = make_pipe();
    a->close();
    std::array<std::uint8_t, 4> buf{};
    try {
        b->read_exact(buf);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::connection_lost);
    }
}
