#include "sequre/error.hpp"

namespace sequre {

std::string_view to_string(Errc code) noexcept
{
    switch (code) {
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::calibration_out_of_range: return "CalibrationOutOfRange";
    case Errc::empty_block: return "EmptyBlock";
    case Errc::fraction_out_of_range: return "FractionOutOfRange";
    case Errc::degenerate_sample: return "DegenerateSample";
    case Errc::numerical_domain: return "NumericalDomain";
    case Errc::no_code_available: return "NoCodeAvailable";
    case Errc::decoder_failure: return "DecoderFailure";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::non_positive_length: return "NonPositiveLength";
    case Errc::key_store_empty: return "KeyStoreEmpty";
    case Errc::tag_mismatch: return "TagMismatch";
    case Errc::sequence_replay: return "SequenceReplay";
    case Errc::connection_lost: return "ConnectionLost";
    case Errc::pool_empty: return "PoolEmpty";
    case Errc::integrity_failure: return "IntegrityFailure";
    case Errc::cap_exceeded: return "CapExceeded";
    case Errc::scenario_invalid: return "ScenarioInvalid";
    case Errc::io_error: return "IoError";
    case Errc::parse_error: return "ParseError";
    }
    return "Unknown";
}

}  // namespace sequre
