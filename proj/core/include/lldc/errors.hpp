#pragma once

#include <stdexcept>
#include <string>

namespace lldc {

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define LLDC_ERROR(Name)                     \
  struct Name : ProtocolError {              \
    using ProtocolError::ProtocolError;      \
    Name() : ProtocolError(#Name) {}         \
  }

LLDC_ERROR(DegenerateKey);
LLDC_ERROR(MapRangeError);
LLDC_ERROR(DecryptFailed);
LLDC_ERROR(UnknownClient);
LLDC_ERROR(BadSignature);
LLDC_ERROR(TooFewClients);
LLDC_ERROR(TranscriptTampered);
LLDC_ERROR(NoTrustedSignature);
LLDC_ERROR(SlotNotFound);
LLDC_ERROR(SetupFailed);
LLDC_ERROR(CellOverflow);
LLDC_ERROR(RoundTimeout);
LLDC_ERROR(FrameError);
LLDC_ERROR(HistoryMismatch);
LLDC_ERROR(BlameInconsistent);
LLDC_ERROR(ConfigError);

#undef LLDC_ERROR

}  // namespace lldc
