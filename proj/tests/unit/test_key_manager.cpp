#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "sequre/error.hpp"
#include "sequre/key_manager.hpp"
#include "sequre/secure_channel.hpp"

using namespace sequre;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bits(std::size_t n, unsigned seed)
{
    std::mt19937 eng(seed);
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) b = eng() & 1U;
    return v;
}

KeyBytes pack(std::span<const std::uint8_t> b)
{
    KeyBytes k{};
    for (std::size_t i = 0; i < key_block_bits; ++i)
        if (b[i]) k[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
    return k;
}

class TempDir {
public:
    TempDir()
    {
        path_ = fs::temp_directory_path() / ("sequre_km_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path file(const std::string& name) const { return path_ / name; }

private:
    static inline int counter_ = 0;
    fs::path path_;
};

std::vector<std::uint8_t> slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

bool contains(const std::vector<std::uint8_t>& hay, std::span<const std::uint8_t> needle)
{
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

TEST(PoolPolicy, EvenSpreadAtFraction)
{
    PoolPolicy p;
    p.auth_fraction = 0.1;
    int auth = 0;
    for (std::uint64_t k = 0; k < 1000; ++k) auth += p.pool_of(k) == Consumer::auth;
    EXPECT_EQ(auth, 100);
    for (std::uint64_t k = 0; k < 10; ++k) EXPECT_EQ(p.pool_of(k) == Consumer::auth, k == 9);
    p.auth_fraction = 1.5;
    EXPECT_THROW(p.validate(), Error);
}

TEST(KeyStore, IngestSplitsIntoBlocksAndBuffersRemainder)
{
    KeyStore s;
    const auto b = bits(300, 1);
    const auto ids = s.ingest(b, SecurityLevel::collective, 1.0);
    EXPECT_EQ(ids, (std::vector<std::uint64_t>{0, 1}));
    EXPECT_EQ(s.buffered_bits(), 44U);
    const auto more = s.ingest(bits(84, 2), SecurityLevel::collective, 2.0);
    EXPECT_EQ(more.size(), 1U);
    EXPECT_EQ(s.buffered_bits(), 0U);
    EXPECT_TRUE(s.balanced());
}

TEST(KeyStore, FifoDeliveryWithLevelAndPool)
{
    PoolPolicy p;
    p.auth_fraction = 0.5;
    KeyStore s(p);
    const auto b = bits(128 * 6, 3);
    s.ingest(b, SecurityLevel::individual, 5.0);
    const auto k0 = s.request_key(Consumer::app, 6.0);
    const auto k1 = s.request_key(Consumer::app, 6.0);
    EXPECT_EQ(k0.id, 0U);
    EXPECT_EQ(k1.id, 2U);
    EXPECT_EQ(k0.bits, pack(std::span(b).subspan(0, 128)));
    EXPECT_EQ(k0.level, SecurityLevel::individual);
    EXPECT_EQ(k0.state, KeyState::delivered);
    EXPECT_EQ(s.request_key(Consumer::auth, 6.0).id, 1U);
    EXPECT_TRUE(s.balanced());
    const auto st = s.stats(6.0);
    EXPECT_EQ(st.app.delivered, 2U);
    EXPECT_EQ(st.app.available, 1U);
    EXPECT_EQ(st.auth.available, 2U);
}

TEST(KeyStore, EmptyPoolAndAtomicBatch)
{
    KeyStore s;
    try {
        s.request_key(Consumer::app, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::pool_empty);
    }
    s.ingest(bits(128 * 3, 4), SecurityLevel::collective, 0.0);
    EXPECT_THROW(s.request_keys(Consumer::app, 4, 0.0), Error);
    EXPECT_EQ(s.stats(0.0).app.available, 3U);
    EXPECT_EQ(s.request_keys(Consumer::app, 3, 0.0).size(), 3U);
}

TEST(KeyStore, KeysPerDayThreshold)
{
    KeyStore s(PoolPolicy{}, 0.0);
    // 8640 keys per day is 0.1 key/s; ingest 10 keys over 100 s.
    s.ingest(bits(128 * 10, 5), SecurityLevel::collective, 100.0);
    const auto st = s.stats(100.0);
    EXPECT_NEAR(st.keys_per_day, 8640.0, 1e-9);
    EXPECT_NEAR(st.production_bps, 12.8, 1e-12);
}

TEST(KeyStore, LowWaterAlarm)
{
    PoolPolicy p;
    p.low_water = 5;
    p.auth_fraction = 0.0;
    KeyStore s(p);
    s.ingest(bits(128 * 6, 6), SecurityLevel::collective, 0.0);
    EXPECT_FALSE(s.stats(1.0).low_water_alarm);
    s.request_key(Consumer::app, 1.0);
    EXPECT_FALSE(s.stats(1.0).low_water_alarm);
    s.request_key(Consumer::app, 1.0);
    EXPECT_TRUE(s.stats(1.0).low_water_alarm);
}

TEST(KeyStore, PersistenceSurvivesReopen)
{
    TempDir dir;
    const auto path = dir.file("keys.db");
    const auto b = bits(128 * 5 + 40, 7);
    {
        KeyStore s(PoolPolicy{}, 0.0, path);
        s.ingest(b, SecurityLevel::collective, 1.0);
        s.request_key(Consumer::app, 2.0);
    }
    KeyStore s(PoolPolicy{}, 0.0, path);
    EXPECT_EQ(s.next_id(), 5U);
    EXPECT_EQ(s.buffered_bits(), 40U);
    EXPECT_TRUE(s.balanced());
    const auto st = s.stats(3.0);
    EXPECT_EQ(st.app.ingested, 5U);
    EXPECT_EQ(st.app.delivered, 1U);
    const auto k = s.request_key(Consumer::app, 3.0);
    EXPECT_EQ(k.id, 1U);
    EXPECT_EQ(k.bits, pack(std::span(b).subspan(128, 128)));

    // Buffered bits complete the next block after reopening.
    const auto ids = s.ingest(bits(88, 8), SecurityLevel::collective, 4.0);
    EXPECT_EQ(ids, (std::vector<std::uint64_t>{5}));
}

TEST(KeyStore, TornTailIsDropped)
{
    TempDir dir;
    const auto path = dir.file("keys.db");
    {
        KeyStore s(PoolPolicy{}, 0.0, path);
        s.ingest(bits(128 * 3, 9), SecurityLevel::collective, 1.0);
    }
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        const char garbage[30] = {'S', 'Q', 'K', 'R', 1};
        out.write(garbage, sizeof garbage);
    }
    KeyStore s(PoolPolicy{}, 0.0, path);
    EXPECT_EQ(s.stats(1.0).app.available, 3U);
    EXPECT_EQ(fs::file_size(path) % 48, 0U);
}

TEST(KeyStore, CorruptRecordIsSkipped)
{
    TempDir dir;
    const auto path = dir.file("keys.db");
    {
        KeyStore s(PoolPolicy{}, 0.0, path);
        s.ingest(bits(128 * 3, 10), SecurityLevel::collective, 1.0);
    }
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        // Third record: second key block after the two watermark records.
        f.seekp(3 * 48 + 30);
        f.put('\xFF');
    }
    KeyStore s(PoolPolicy{}, 0.0, path);
    EXPECT_EQ(s.stats(1.0).app.available, 2U);
    EXPECT_EQ(s.request_key(Consumer::app, 1.0).id, 0U);
    EXPECT_EQ(s.request_key(Consumer::app, 1.0).id, 2U);
}

TEST(KeyStore, DeliveredKeysAreNotRecoverableFromFile)
{
    TempDir dir;
    const auto path = dir.file("keys.db");
    KeyStore s(PoolPolicy{}, 0.0, path);
    // Odd ingest sizes so buffered remainders straddle key boundaries.
    for (unsigned i = 0; i < 8; ++i) s.ingest(bits(100 + 7 * i, 20 + i), SecurityLevel::collective, i);
    std::vector<KeyBlock> delivered;
    while (s.stats(10.0).app.available > 1) delivered.push_back(s.request_key(Consumer::app, 10.0));
    ASSERT_GE(delivered.size(), 3U);
    const auto file = slurp(path);
    for (const auto& k : delivered) {
        for (std::size_t off = 0; off + 8 <= k.bits.size(); off += 4)
            EXPECT_FALSE(contains(file, std::span(k.bits).subspan(off, 8))) << "key " << k.id << " offset " << off;
    }
}

TEST(KeyService, CodecRoundTrip)
{
    const auto req = decode_request(encode_request({Consumer::auth, 7}));
    EXPECT_EQ(req.consumer, Consumer::auth);
    EXPECT_EQ(req.count, 7U);
    EXPECT_THROW(decode_request(std::vector<std::uint8_t>{9, 0, 0, 0, 1}), Error);

    KeyBlock k;
    k.id = 99;
    k.level = SecurityLevel::individual;
    k.created_at = 12.5;
    k.bits.fill(0x42);
    const std::vector<KeyBlock> ks{k};
    const auto back = decode_response(encode_response(true, ks));
    ASSERT_EQ(back.size(), 1U);
    EXPECT_EQ(back[0].id, 99U);
    EXPECT_EQ(back[0].bits, k.bits);
    EXPECT_EQ(back[0].level, SecurityLevel::individual);
    EXPECT_DOUBLE_EQ(back[0].created_at, 12.5);
    try {
        decode_response(encode_response(false, {}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::pool_empty);
    }
}

TEST(KeyService, ServesOverStream)
{
    KeyStore store;
    store.ingest(bits(128 * 20, 11), SecurityLevel::collective, 0.0);
    auto [client_end, server_end] = make_pipe();
    std::size_t served = 0;
    std::thread server([&, end = server_end] { served = serve_keys(store, *end, [] { return 1.0; }); });
    KeyClient client(client_end);
    EXPECT_EQ(client.request(Consumer::app, 4).size(), 4U);
    EXPECT_EQ(client.request(Consumer::auth, 2).size(), 2U);
    EXPECT_THROW(client.request(Consumer::app, 1000), Error);
    client_end->close();
    server.join();
    EXPECT_EQ(served, 6U);
    EXPECT_TRUE(store.balanced());
}
