#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace qlm {

inline constexpr double kDefaultLogprobFloor = -100.0;

/// Score the continuation (the query) given the context (prompt with the
/// document rendered in).
struct LikelihoodRequest {
    std::string context;
    std::string continuation;

    bool operator==(const LikelihoodRequest&) const = default;
};

/// Builds a request whose continuation is `query_text`, preceded by one space
/// unless the context is empty or already ends in whitespace.
LikelihoodRequest make_request(std::string context, std::string_view query_text);

/// Per-token log-probabilities of the continuation, in the provider's own
/// tokenization.
struct LikelihoodResult {
    std::vector<std::string> tokens;
    std::vector<double> logprobs;

    /// Throws ProtocolError on length mismatch, non-finite or positive values.
    void validate() const;

    bool operator==(const LikelihoodResult&) const = default;
};

/// Mean token log-probability. Throws DataError for an empty result.
double score_query_likelihood(const LikelihoodResult& result);

/// Maps NaN, -inf and anything below `floor` to `floor`.
double floor_logprob(double value, double floor = kDefaultLogprobFloor);

/// Anything that turns (context, continuation) into per-token logprobs.
/// Implementations must tolerate concurrent calls.
class LikelihoodProvider {
  public:
    virtual ~LikelihoodProvider() = default;

    virtual LikelihoodResult loglikelihood(const LikelihoodRequest& request) = 0;

    [[nodiscard]] virtual std::string describe() const = 0;
};

/// Assigns the same logprob to every whitespace-separated continuation token.
class ConstantProvider final : public LikelihoodProvider {
  public:
    explicit ConstantProvider(double logprob) : logprob_(logprob) {}

    LikelihoodResult loglikelihood(const LikelihoodRequest& request) override;
    [[nodiscard]] std::string describe() const override;

  private:
    double logprob_;
};

}  // namespace qlm
