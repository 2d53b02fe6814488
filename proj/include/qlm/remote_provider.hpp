#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

#include "qlm/likelihood.hpp"

namespace qlm {

inline constexpr std::string_view kLoglikelihoodPath = "/v1/loglikelihood";
inline constexpr std::string_view kCompletionsPath = "/v1/completions";
inline constexpr const char* kEndpointEnvVar = "QLM_ENDPOINT";
inline constexpr const char* kTokenEnvVar = "QLM_API_TOKEN";

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    double backoff_multiplier = 2.0;
};

enum class WireFormat {
    /// POST /v1/loglikelihood {"context","continuation"} -> {"tokens","logprobs"}
    loglikelihood,
    /// POST /v1/completions with echo + logprobs and max_tokens 0; the
    /// continuation's tokens are picked out of the echoed prompt by offset.
    completions,
};

WireFormat parse_wire_format(std::string_view name);

struct RemoteOptions {
    /// Base URL such as http://host:8000, optionally with a path prefix.
    std::string endpoint;
    std::string auth_token;
    WireFormat format = WireFormat::loglikelihood;
    /// Sent as "model" in completions requests; unused otherwise.
    std::string model;
    RetryPolicy retry;
    double logprob_floor = kDefaultLogprobFloor;
    std::chrono::seconds timeout{120};
};

/// Endpoint and token from QLM_ENDPOINT / QLM_API_TOKEN; empty when unset.
RemoteOptions remote_options_from_env();

/// Decodes a /v1/loglikelihood response body. Bare -Infinity/NaN literals,
/// null, and "-inf"/"nan" strings are floored to `floor` with a warning.
LikelihoodResult decode_loglikelihood_response(std::string_view body, double floor = kDefaultLogprobFloor);

/// Decodes an echo+logprobs completions response, keeping the tokens that
/// reach past the first `context_chars` characters (code points) of the
/// echoed prompt.
LikelihoodResult decode_completions_response(std::string_view body, std::size_t context_chars,
                                             double floor = kDefaultLogprobFloor);

/// HTTP likelihood provider. Transport failures, 429 and 5xx responses are
/// retried with exponential backoff; other statuses and malformed bodies fail
/// immediately.
class RemoteProvider final : public LikelihoodProvider {
  public:
    explicit RemoteProvider(RemoteOptions options);

    LikelihoodResult loglikelihood(const LikelihoodRequest& request) override;
    [[nodiscard]] std::string describe() const override;

    /// HTTP requests sent, including retries.
    [[nodiscard]] std::uint64_t attempts() const { return attempts_.load(); }
    [[nodiscard]] std::uint64_t retries() const { return retries_.load(); }

  private:
    RemoteOptions options_;
    std::string host_;
    std::string path_;
    std::atomic<std::uint64_t> attempts_{0};
    std::atomic<std::uint64_t> retries_{0};
};

}  // namespace qlm
