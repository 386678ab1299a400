#include "sequre/key_manager.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "sequre/error.hpp"
#include "sequre/secure_channel.hpp"

namespace sequre {

std::string_view to_string(Consumer c) { return c == Consumer::auth ? "auth" : "app"; }

std::string_view to_string(KeyState s)
{
    switch (s) {
    case KeyState::available: return "available";
    case KeyState::reserved: return "reserved";
    case KeyState::delivered: return "delivered";
    case KeyState::destroyed: return "destroyed";
    }
    return "?";
}

void PoolPolicy::validate() const
{
    require(auth_fraction >= 0.0 && auth_fraction < 1.0, Errc::invalid_config, "auth_fraction must be in [0, 1)");
}

Consumer PoolPolicy::pool_of(std::uint64_t k) const
{
    const auto before = std::floor(static_cast<double>(k) * auth_fraction);
    const auto after = std::floor(static_cast<double>(k + 1) * auth_fraction);
    return after > before ? Consumer::auth : Consumer::app;
}

namespace {

constexpr std::size_t record_size = 48;
constexpr std::uint8_t magic[4] = {'S', 'Q', 'K', 'R'};

enum RecordKind : std::uint8_t {
    rec_block = 1,
    rec_delivered = 2,
    rec_buffer = 3,
    rec_ingested_base = 4,
    rec_delivered_base = 5,
    rec_void = 6,
    rec_erased = 7,
};

struct Record {
    std::uint8_t kind = 0;
    std::uint8_t level = 0;
    std::uint8_t pool = 0;
    std::uint64_t id = 0;
    double time = 0.0;
    KeyBytes key{};
    std::uint32_t aux = 0;
};

std::uint32_t fnv1a(const std::uint8_t* p, std::size_t n)
{
    std::uint32_t h = 2166136261U;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 16777619U;
    }
    return h;
}

void put(std::uint8_t* p, std::uint64_t v, int bytes)
{
    for (int i = 0; i < bytes; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * (bytes - 1 - i)));
}

std::uint64_t get(const std::uint8_t* p, int bytes)
{
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | p[i];
    return v;
}

std::array<std::uint8_t, record_size> serialize(const Record& r)
{
    std::array<std::uint8_t, record_size> b{};
    std::memcpy(b.data(), magic, 4);
    b[4] = r.kind;
    b[5] = r.level;
    b[6] = r.pool;
    put(&b[8], r.id, 8);
    put(&b[16], std::bit_cast<std::uint64_t>(r.time), 8);
    std::memcpy(&b[24], r.key.data(), r.key.size());
    put(&b[40], r.aux, 4);
    put(&b[44], fnv1a(b.data(), 44), 4);
    return b;
}

std::optional<Record> parse(const std::uint8_t* b)
{
    if (std::memcmp(b, magic, 4) != 0) return std::nullopt;
    if (get(&b[44], 4) != fnv1a(b, 44)) return std::nullopt;
    Record r;
    r.kind = b[4];
    r.level = b[5];
    r.pool = b[6];
    r.id = get(&b[8], 8);
    r.time = std::bit_cast<double>(get(&b[16], 8));
    std::memcpy(r.key.data(), &b[24], r.key.size());
    r.aux = static_cast<std::uint32_t>(get(&b[40], 4));
    return r;
}

KeyBytes pack_key(std::span<const std::uint8_t> bits)
{
    KeyBytes k{};
    for (std::size_t i = 0; i < key_block_bits; ++i)
        if (bits[i] & 1U) k[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
    return k;
}

}  // namespace

struct KeyStore::Persistence {
    std::filesystem::path path;
    std::fstream file;
    std::map<std::uint64_t, std::streamoff> offsets;
    std::optional<std::streamoff> buffer_at;

    std::streamoff append(const Record& r)
    {
        const auto bytes = serialize(r);
        file.seekp(0, std::ios::end);
        const auto at = static_cast<std::streamoff>(file.tellp());
        file.write(reinterpret_cast<const char*>(bytes.data()), record_size);
        file.flush();
        if (!file) fail(Errc::io_error, "cannot append to key store " + path.string());
        return at;
    }

    void overwrite(std::streamoff at, const Record& r)
    {
        const auto bytes = serialize(r);
        file.seekp(at);
        file.write(reinterpret_cast<const char*>(bytes.data()), record_size);
        file.flush();
        if (!file) fail(Errc::io_error, "cannot rewrite key store record");
    }
};

KeyStore::KeyStore(PoolPolicy policy, double start_time, std::optional<std::filesystem::path> store_path)
    : policy_(policy), start_time_(start_time)
{
    policy_.validate();
    if (store_path) {
        store_ = std::make_unique<Persistence>();
        store_->path = *store_path;
        load_and_compact();
    }
}

KeyStore::~KeyStore() = default;

void KeyStore::load_and_compact()
{
    const auto& path = store_->path;
    std::map<std::uint64_t, KeyBlock> available;
    std::array<std::uint64_t, 2> ingested_base{};
    std::array<std::uint64_t, 2> delivered_base{};
    std::array<std::uint64_t, 2> ingested_seen{};
    std::array<std::uint64_t, 2> delivered_seen{};
    std::uint64_t next_id = 0;

    if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::array<std::uint8_t, record_size> buf{};
        while (in.read(reinterpret_cast<char*>(buf.data()), record_size)) {
            const auto rec = parse(buf.data());
            if (!rec) continue;  // torn write
            const auto p = static_cast<std::size_t>(rec->pool & 1U);
            switch (rec->kind) {
            case rec_block: {
                KeyBlock b;
                b.id = rec->id;
                b.bits = rec->key;
                b.level = static_cast<SecurityLevel>(rec->level);
                b.created_at = rec->time;
                b.pool = static_cast<Consumer>(p);
                available[b.id] = b;
                ++ingested_seen[p];
                next_id = std::max(next_id, rec->id + 1);
                break;
            }
            case rec_erased:
                ++ingested_seen[p];
                next_id = std::max(next_id, rec->id + 1);
                break;
            case rec_delivered:
                available.erase(rec->id);
                ++delivered_seen[p];
                break;
            case rec_buffer:
                remainder_.clear();
                for (std::uint32_t i = 0; i < rec->aux && i < key_block_bits; ++i)
                    remainder_.push_back((rec->key[i / 8] >> (i % 8)) & 1U);
                break;
            case rec_ingested_base:
                ingested_base = {get(&rec->key[0], 8), get(&rec->key[8], 8)};
                next_id = std::max(next_id, rec->id);
                break;
            case rec_delivered_base:
                delivered_base = {get(&rec->key[0], 8), get(&rec->key[8], 8)};
                break;
            default:
                break;
            }
        }
    }

    next_id_ = next_id;
    for (std::size_t p = 0; p < 2; ++p) {
        counts_[p].ingested = ingested_base[p] + ingested_seen[p];
        counts_[p].delivered = delivered_base[p] + delivered_seen[p];
    }
    for (auto& [id, b] : available) pools_[static_cast<std::size_t>(b.pool)].push_back(b);

    // Compact: watermarks, surviving blocks, buffer.
    const auto tmp = std::filesystem::path(path.string() + ".compact");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(Errc::io_error, "cannot write key store " + tmp.string());
        auto emit = [&](const Record& r) {
            const auto bytes = serialize(r);
            out.write(reinterpret_cast<const char*>(bytes.data()), record_size);
        };
        Record base;
        base.kind = rec_ingested_base;
        base.id = next_id_;
        for (std::size_t p = 0; p < 2; ++p) put(&base.key[8 * p], counts_[p].ingested - pools_[p].size(), 8);
        emit(base);
        base.kind = rec_delivered_base;
        for (std::size_t p = 0; p < 2; ++p) put(&base.key[8 * p], counts_[p].delivered, 8);
        emit(base);
        for (const auto& [id, b] : available) {
            Record r;
            r.kind = rec_block;
            r.level = static_cast<std::uint8_t>(b.level);
            r.pool = static_cast<std::uint8_t>(b.pool);
            r.id = b.id;
            r.time = b.created_at;
            r.key = b.bits;
            emit(r);
        }
        if (!out) fail(Errc::io_error, "cannot write key store " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    store_->file.open(path, std::ios::binary | std::ios::in | std::ios::out);
    if (!store_->file) fail(Errc::io_error, "cannot open key store " + path.string());
    std::streamoff at = 2 * static_cast<std::streamoff>(record_size);
    for (const auto& [id, b] : available) {
        store_->offsets[id] = at;
        at += static_cast<std::streamoff>(record_size);
    }
    if (!remainder_.empty()) persist_buffer();
}

void KeyStore::persist_block(const KeyBlock& block)
{
    if (!store_) return;
    Record r;
    r.kind = rec_block;
    r.level = static_cast<std::uint8_t>(block.level);
    r.pool = static_cast<std::uint8_t>(block.pool);
    r.id = block.id;
    r.time = block.created_at;
    r.key = block.bits;
    store_->offsets[block.id] = store_->append(r);
}

void KeyStore::persist_delivery(const KeyBlock& block, double now)
{
    if (!store_) return;
    Record d;
    d.kind = rec_delivered;
    d.pool = static_cast<std::uint8_t>(block.pool);
    d.id = block.id;
    d.time = now;
    store_->append(d);

    // Erase the key bits from the original record.
    const auto it = store_->offsets.find(block.id);
    if (it != store_->offsets.end()) {
        Record e;
        e.kind = rec_erased;
        e.level = static_cast<std::uint8_t>(block.level);
        e.pool = static_cast<std::uint8_t>(block.pool);
        e.id = block.id;
        e.time = block.created_at;
        store_->overwrite(it->second, e);
        store_->offsets.erase(it);
    }
}

void KeyStore::persist_buffer()
{
    if (!store_) return;
    Record r;
    r.kind = rec_buffer;
    r.aux = static_cast<std::uint32_t>(remainder_.size());
    for (std::size_t i = 0; i < remainder_.size(); ++i)
        if (remainder_[i] & 1U) r.key[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
    const auto at = store_->append(r);
    // The previous buffer may hold bits of keys formed since.
    if (store_->buffer_at) {
        Record v;
        v.kind = rec_void;
        store_->overwrite(*store_->buffer_at, v);
    }
    store_->buffer_at = at;
}

std::vector<std::uint64_t> KeyStore::ingest(std::span<const std::uint8_t> bits, SecurityLevel level, double now)
{
    std::lock_guard lock(mutex_);
    std::vector<std::uint64_t> ids;
    remainder_.insert(remainder_.end(), bits.begin(), bits.end());
    std::size_t used = 0;
    while (remainder_.size() - used >= key_block_bits) {
        KeyBlock b;
        b.id = next_id_++;
        b.bits = pack_key(std::span(remainder_).subspan(used, key_block_bits));
        b.level = level;
        b.created_at = now;
        b.pool = policy_.pool_of(b.id);
        persist_block(b);
        const auto p = static_cast<std::size_t>(b.pool);
        pools_[p].push_back(b);
        ++counts_[p].ingested;
        ids.push_back(b.id);
        used += key_block_bits;
    }
    std::fill_n(remainder_.begin(), used, 0);
    remainder_.erase(remainder_.begin(), remainder_.begin() + static_cast<std::ptrdiff_t>(used));
    if (!bits.empty()) persist_buffer();
    return ids;
}

KeyBlock KeyStore::request_key(Consumer consumer, double now)
{
    std::lock_guard lock(mutex_);
    const auto p = static_cast<std::size_t>(consumer);
    require(!pools_[p].empty(), Errc::pool_empty, std::string(to_string(consumer)) + " pool is empty");
    KeyBlock b = pools_[p].front();
    pools_[p].front().bits.fill(0);
    pools_[p].pop_front();
    persist_delivery(b, now);
    ++counts_[p].delivered;
    b.state = KeyState::delivered;
    return b;
}

std::vector<KeyBlock> KeyStore::request_keys(Consumer consumer, std::size_t count, double now)
{
    {
        std::lock_guard lock(mutex_);
        require(pools_[static_cast<std::size_t>(consumer)].size() >= count, Errc::pool_empty,
                std::string(to_string(consumer)) + " pool holds fewer keys than requested");
    }
    std::vector<KeyBlock> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(request_key(consumer, now));
    return out;
}

KeyStats KeyStore::stats(double now) const
{
    std::lock_guard lock(mutex_);
    KeyStats s;
    s.auth = counts_[0];
    s.app = counts_[1];
    s.auth.available = pools_[0].size();
    s.app.available = pools_[1].size();
    s.elapsed_seconds = std::max(0.0, now - start_time_);
    const double produced = static_cast<double>(s.auth.ingested + s.app.ingested);
    const double consumed = static_cast<double>(s.auth.delivered + s.app.delivered);
    if (s.elapsed_seconds > 0.0) {
        s.production_bps = produced * key_block_bits / s.elapsed_seconds;
        s.consumption_bps = consumed * key_block_bits / s.elapsed_seconds;
        s.keys_per_day = produced * 86'400.0 / s.elapsed_seconds;
    }
    auto low = [&](const PoolCounts& c) { return c.delivered > 0 && c.available < policy_.low_water; };
    s.low_water_alarm = low(s.auth) || low(s.app);
    return s;
}

std::size_t KeyStore::buffered_bits() const
{
    std::lock_guard lock(mutex_);
    return remainder_.size();
}

std::uint64_t KeyStore::next_id() const
{
    std::lock_guard lock(mutex_);
    return next_id_;
}

bool KeyStore::balanced() const
{
    std::lock_guard lock(mutex_);
    for (std::size_t p = 0; p < 2; ++p)
        if (counts_[p].ingested != pools_[p].size() + counts_[p].delivered) return false;
    return true;
}

std::vector<std::uint8_t> encode_request(const KeyRequest& r)
{
    std::vector<std::uint8_t> out(5);
    out[0] = static_cast<std::uint8_t>(r.consumer);
    put(&out[1], r.count, 4);
    return out;
}

KeyRequest decode_request(std::span<const std::uint8_t> bytes)
{
    require(bytes.size() == 5 && bytes[0] <= 1, Errc::parse_error, "malformed key request");
    return {static_cast<Consumer>(bytes[0]), static_cast<std::uint32_t>(get(&bytes[1], 4))};
}

namespace {
constexpr std::size_t wire_key_size = 8 + 1 + 1 + 8 + 16;
}

std::vector<std::uint8_t> encode_response(bool ok, std::span<const KeyBlock> keys)
{
    std::vector<std::uint8_t> out(5 + keys.size() * wire_key_size);
    out[0] = ok ? 1 : 0;
    put(&out[1], keys.size(), 4);
    std::uint8_t* p = out.data() + 5;
    for (const auto& k : keys) {
        put(p, k.id, 8);
        p[8] = static_cast<std::uint8_t>(k.level);
        p[9] = static_cast<std::uint8_t>(k.pool);
        put(p + 10, std::bit_cast<std::uint64_t>(k.created_at), 8);
        std::memcpy(p + 18, k.bits.data(), 16);
        p += wire_key_size;
    }
    return out;
}

std::vector<KeyBlock> decode_response(std::span<const std::uint8_t> bytes)
{
    require(bytes.size() >= 5, Errc::parse_error, "malformed key response");
    if (bytes[0] == 0) fail(Errc::pool_empty, "key service has too few keys");
    const auto n = get(&bytes[1], 4);
    require(bytes.size() == 5 + n * wire_key_size, Errc::parse_error, "key response length mismatch");
    std::vector<KeyBlock> keys(n);
    const std::uint8_t* p = bytes.data() + 5;
    for (auto& k : keys) {
        k.id = get(p, 8);
        k.level = static_cast<SecurityLevel>(p[8]);
        k.pool = static_cast<Consumer>(p[9] & 1U);
        k.created_at = std::bit_cast<double>(get(p + 10, 8));
        std::memcpy(k.bits.data(), p + 18, 16);
        k.state = KeyState::delivered;
        p += wire_key_size;
    }
    return keys;
}

namespace {

void write_message(ByteStream& s, std::span<const std::uint8_t> body)
{
    std::array<std::uint8_t, 4> len{};
    put(len.data(), body.size(), 4);
    s.write(len);
    s.write(body);
}

std::vector<std::uint8_t> read_message(ByteStream& s)
{
    std::array<std::uint8_t, 4> len{};
    s.read_exact(len);
    std::vector<std::uint8_t> body(get(len.data(), 4));
    s.read_exact(body);
    return body;
}

}  // namespace

std::size_t serve_keys(KeyStore& store, ByteStream& stream, const std::function<double()>& clock)
{
    std::size_t served = 0;
    for (;;) {
        std::vector<std::uint8_t> msg;
        try {
            msg = read_message(stream);
        } catch (const Error& e) {
            if (e.code() == Errc::connection_lost) return served;
            throw;
        }
        const auto req = decode_request(msg);
        std::vector<KeyBlock> keys;
        bool ok = true;
        try {
            keys = store.request_keys(req.consumer, req.count, clock ? clock() : 0.0);
        } catch (const Error& e) {
            if (e.code() != Errc::pool_empty) throw;
            ok = false;
        }
        write_message(stream, encode_response(ok, keys));
        for (auto& k : keys) k.bits.fill(0);
        served += keys.size();
    }
}

std::vector<KeyBlock> KeyClient::request(Consumer consumer, std::uint32_t count)
{
    write_message(*stream_, encode_request({consumer, count}));
    return decode_response(read_message(*stream_));
}

}  // namespace sequre
