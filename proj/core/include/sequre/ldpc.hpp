#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace sequre {

/// Node-perspective variable degree distribution: (degree, fraction of columns).
struct DegreeProfile {
    std::vector<std::pair<unsigned, double>> columns;

    double mean_degree() const;
    /// Mean column weight 3.65: a staircase of weight-2 columns, weight-3 bulk
    /// and a few heavy columns; tuned for the reconciliation rates.
    static DegreeProfile standard();
    static DegreeProfile regular(unsigned degree);
};

/// Sparse parity-check matrix, reproducible from (n, rate, seed, profile).
class LdpcCode {
public:
    std::size_t n() const { return n_; }
    std::size_t m() const { return check_ptr_.size() - 1; }
    double rate() const { return 1.0 - static_cast<double>(m()) / static_cast<double>(n_); }
    std::uint64_t seed() const { return seed_; }
    std::size_t edges() const { return edge_var_.size(); }

    /// Check-major adjacency: variables of check c are edge_var()[check_ptr()[c] .. check_ptr()[c+1]).
    std::span<const std::uint32_t> check_ptr() const { return check_ptr_; }
    std::span<const std::uint32_t> edge_var() const { return edge_var_; }
    std::size_t column_weight(std::size_t var) const { return column_weight_[var]; }

    std::vector<std::uint8_t> syndrome(std::span<const std::uint8_t> bits) const;
    std::uint64_t structure_hash() const;

    friend LdpcCode build_code(std::size_t n, double rate, std::uint64_t seed,
                               const DegreeProfile& profile);

private:
    std::size_t n_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<std::uint32_t> check_ptr_;
    std::vector<std::uint32_t> edge_var_;
    std::vector<std::uint32_t> column_weight_;
};

/// Syndrome length is round((1 - rate) * n).
LdpcCode build_code(std::size_t n, double rate, std::uint64_t seed,
                    const DegreeProfile& profile = DegreeProfile::standard());

/// Thread-safe memo of constructed codes keyed by (n, syndrome length, seed).
class CodeBook {
public:
    explicit CodeBook(DegreeProfile profile = DegreeProfile::standard()) : profile_(std::move(profile)) {}

    std::shared_ptr<const LdpcCode> get(std::size_t n, double rate, std::uint64_t seed);

private:
    DegreeProfile profile_;
    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, std::uint64_t>, std::shared_ptr<const LdpcCode>> codes_;
};

struct DecodeResult {
    bool converged = false;
    unsigned iterations = 0;
};

/// Sum-product decoding toward a target syndrome, log-likelihood-ratio domain
/// (LLR = log P(0)/P(1)), layered schedule, early exit on syndrome match.
class SyndromeDecoder {
public:
    DecodeResult decode(const LdpcCode& code, std::span<const double> channel_llr,
                        std::span<const std::uint8_t> syndrome, unsigned max_iterations,
                        std::vector<std::uint8_t>& bits);

private:
    std::vector<double> posterior_;
    std::vector<double> check_msg_;
    std::vector<double> scratch_;
};

}  // namespace sequre
