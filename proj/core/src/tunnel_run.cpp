#include "sequre/tunnel_run.hpp"

#include <thread>

#include "sequre/error.hpp"
#include "sequre/rng.hpp"
#include "sequre/secure_channel.hpp"

namespace sequre {

namespace {

void fill_payload(std::uint64_t seed, std::uint64_t offset, std::span<std::uint8_t> out)
{
    // Counter-mode generator over 8-byte words so any offset can be regenerated.
    std::uint64_t word_index = offset >> 3;
    std::uint64_t word = derive_seed(seed, word_index);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::uint64_t pos = offset + i;
        if ((pos >> 3) != word_index) {
            word_index = pos >> 3;
            word = derive_seed(seed, word_index);
        }
        out[i] = static_cast<std::uint8_t>(word >> (8 * (pos & 7)));
    }
}

}  // namespace

KeySupply waiting_key_supply(KeyStore& store, std::chrono::milliseconds wait)
{
    return [&store, wait]() -> std::optional<KeyBlock> {
        const auto deadline = std::chrono::steady_clock::now() + wait;
        for (;;) {
            try {
                return store.request_key(Consumer::app, 0.0);
            } catch (const Error& e) {
                if (e.code() != Errc::pool_empty) throw;
            }
            if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    };
}

TunnelReport run_tunnel(KeyStore& alice, KeyStore& bob, const TunnelJob& job)
{
    job.policy.validate();
    TunnelReport report;
    auto [tx, rx] = make_pipe();

    std::string rx_error;
    std::thread receiver_thread([&, rx = rx] {
        try {
            TunnelReceiver receiver(waiting_key_supply(bob, job.key_wait), rx, job.policy.refuse_individual);
            std::vector<std::uint8_t> expect;
            while (auto chunk = receiver.read()) {
                expect.resize(chunk->size());
                fill_payload(job.payload_seed, report.bytes_received, expect);
                for (std::size_t i = 0; i < chunk->size(); ++i)
                    report.mismatched_bytes += (*chunk)[i] != expect[i];
                report.bytes_received += chunk->size();
            }
            report.receiver = receiver.ledger();
        } catch (const std::exception& e) {
            rx_error = e.what();
            rx->close();
        }
    });

    try {
        TunnelSender sender(job.policy, waiting_key_supply(alice, job.key_wait), tx, job.throughput_bps);
        std::vector<std::uint8_t> chunk(job.chunk_bytes);
        while (report.bytes_sent < job.bytes) {
            const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(chunk.size(), job.bytes - report.bytes_sent));
            fill_payload(job.payload_seed, report.bytes_sent, std::span(chunk).first(n));
            sender.write(std::span(chunk).first(n));
            report.bytes_sent += n;
        }
        sender.close();
        report.sender = sender.ledger();
        report.simulated_seconds = sender.now();
    } catch (const std::exception& e) {
        report.error = std::string("sender: ") + e.what();
        tx->close();
    }
    receiver_thread.join();
    if (!rx_error.empty()) report.error += (report.error.empty() ? "" : "; ") + std::string("receiver: ") + rx_error;
    return report;
}

}  // namespace sequre
