#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sequre {

enum class Errc {
    invalid_config,
    calibration_out_of_range,
    empty_block,
    fraction_out_of_range,
    degenerate_sample,
    numerical_domain,
    no_code_available,
    decoder_failure,
    length_mismatch,
    non_positive_length,
    key_store_empty,
    tag_mismatch,
    sequence_replay,
    connection_lost,
    pool_empty,
    integrity_failure,
    cap_exceeded,
    scenario_invalid,
    io_error,
    parse_error,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what)
{
    if (!ok) fail(code, what);
}

}  // namespace sequre
