#include <benchmark/benchmark.h>

#include <random>

#include "sequre/enc_link.hpp"
#include "sequre/key_rate.hpp"
#include "sequre/ldpc.hpp"
#include "sequre/postprocessing.hpp"
#include "sequre/reconciliation.hpp"
#include "sequre/secure_channel.hpp"

using namespace sequre;

namespace {

std::vector<std::uint8_t> random_bits(std::size_t n, unsigned seed)
{
    std::mt19937 eng(seed);
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) b = eng() & 1U;
    return v;
}

void BM_SyndromeDecode(benchmark::State& state)
{
    const std::size_t n = 65'536;
    const double rate = 0.5;
    CodeBook book;
    const auto code = book.get(n, rate, 1);
    // BIAWGN at sigma 0.8 around a random word.
    std::mt19937_64 eng(2);
    std::normal_distribution<double> noise(0.0, 0.8);
    const auto word = random_bits(n, 3);
    const auto syn = code->syndrome(word);
    std::vector<double> llr(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = (word[i] ? -1.0 : 1.0) + noise(eng);
        llr[i] = 2.0 * y / 0.64;
    }
    SyndromeDecoder dec;
    std::vector<std::uint8_t> out;
    for (auto _ : state) {
        const auto r = dec.decode(*code, llr, syn, 100, out);
        benchmark::DoNotOptimize(r);
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SyndromeDecode)->Unit(benchmark::kMillisecond);

void BM_Reconcile(benchmark::State& state)
{
    const auto model = ChannelModel::from_snr(3.25);
    CodeBook book;
    std::mt19937_64 eng(4);
    std::normal_distribution<double> unit;
    std::vector<SiftedPair> pairs(65'536);
    for (auto& p : pairs) {
        p.a = unit(eng);
        p.b = model.gain * p.a + std::sqrt(model.noise_variance) * unit(eng);
    }
    for (auto _ : state) benchmark::DoNotOptimize(reconcile(pairs, model, ReconConfig{}, book));
}
BENCHMARK(BM_Reconcile)->Unit(benchmark::kMillisecond);

void BM_RateAt(benchmark::State& state)
{
    DetectorConfig det;
    const auto codes = CodeTable::flat(0.9);
    double xi = 0.01;
    for (auto _ : state) {
        benchmark::DoNotOptimize(rate_at(4.0, 0.2754, xi, det, codes));
        xi = xi < 0.2 ? xi + 1e-4 : 0.01;
    }
}
BENCHMARK(BM_RateAt);

void BM_OptimizeVa(benchmark::State& state)
{
    DetectorConfig det;
    const auto codes = CodeTable::flat(0.9);
    for (auto _ : state) benchmark::DoNotOptimize(optimize_va(0.2754, 0.02, det, codes));
}
BENCHMARK(BM_OptimizeVa)->Unit(benchmark::kMicrosecond);

void BM_Toeplitz(benchmark::State& state)
{
    const auto n_in = static_cast<std::size_t>(state.range(0));
    const auto h = ToeplitzHash::from_seed(n_in, n_in / 10, 5);
    const auto x = random_bits(n_in, 6);
    for (auto _ : state) benchmark::DoNotOptimize(h.apply(x));
    state.SetItemsProcessed(state.iterations() * n_in);
}
BENCHMARK(BM_Toeplitz)->Arg(16'384)->Arg(65'536)->Unit(benchmark::kMillisecond);

void BM_GcmSeal(benchmark::State& state)
{
    AesKey key{};
    key[0] = 1;
    Aes128Gcm g(key);
    const std::vector<std::uint8_t> pt(static_cast<std::size_t>(state.range(0)), 0x5A);
    std::vector<std::uint8_t> ct(pt.size());
    GcmNonce nonce{};
    for (auto _ : state) {
        ++nonce[11];
        benchmark::DoNotOptimize(g.seal(nonce, {}, pt, ct));
    }
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(pt.size()));
}
BENCHMARK(BM_GcmSeal)->Arg(1 << 16);

void BM_WegmanCarterTag(benchmark::State& state)
{
    const PolyHash h(64, 0x0123456789ABCDEFULL);
    const std::vector<std::uint8_t> msg(static_cast<std::size_t>(state.range(0)), 0x33);
    for (auto _ : state) benchmark::DoNotOptimize(h.tag(msg, 42));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(msg.size()));
}
BENCHMARK(BM_WegmanCarterTag)->Arg(1 << 10)->Arg(1 << 16);

}  // namespace
BENCHMARK_MAIN();
