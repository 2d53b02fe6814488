#pragma once

#include <stdexcept>
#include <string>

namespace qlm {

/// Malformed or inconsistent input data (files, records, parameters).
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration supplied by the caller.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Failure talking to a likelihood provider: transport, HTTP status, or a
/// response that violates the wire protocol.
class ProviderError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A provider answered, but the response breaks the wire contract
/// (unparseable body, token/logprob length mismatch, positive logprobs).
class ProtocolError : public ProviderError {
  public:
    using ProviderError::ProviderError;
};

}  // namespace qlm
