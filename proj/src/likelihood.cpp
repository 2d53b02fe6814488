#include "qlm/likelihood.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "qlm/error.hpp"

namespace qlm {

LikelihoodRequest make_request(std::string context, std::string_view query_text) {
    LikelihoodRequest request;
    const bool needs_space = !context.empty() && std::isspace(static_cast<unsigned char>(context.back())) == 0;
    request.continuation = needs_space ? " " + std::string(query_text) : std::string(query_text);
    request.context = std::move(context);
    return request;
}

void LikelihoodResult::validate() const {
    if (tokens.size() != logprobs.size()) {
        throw ProtocolError(
            fmt::format("provider returned {} tokens but {} logprobs", tokens.size(), logprobs.size()));
    }
    for (double lp : logprobs) {
        if (!std::isfinite(lp)) {
            throw ProtocolError("provider logprob is not finite after flooring");
        }
        if (lp > 0.0) {
            throw ProtocolError(fmt::format("provider returned positive logprob {}", lp));
        }
    }
}

double score_query_likelihood(const LikelihoodResult& result) {
    if (result.logprobs.empty()) {
        throw DataError("cannot score an empty likelihood result");
    }
    // A running mean returns a constant input unchanged.
    double mean = 0.0;
    for (std::size_t i = 0; i < result.logprobs.size(); ++i) {
        mean += (result.logprobs[i] - mean) / static_cast<double>(i + 1);
    }
    return mean;
}

double floor_logprob(double value, double floor) {
    if (std::isnan(value) || value < floor) {
        return floor;
    }
    return value;
}

LikelihoodResult ConstantProvider::loglikelihood(const LikelihoodRequest& request) {
    LikelihoodResult result;
    std::istringstream in(request.continuation);
    std::string tok;
    while (in >> tok) {
        result.tokens.push_back(tok);
        result.logprobs.push_back(logprob_);
    }
    if (result.tokens.empty()) {
        throw DataError("continuation has no tokens");
    }
    return result;
}

std::string ConstantProvider::describe() const {
    return fmt::format("constant({})", logprob_);
}

}  // namespace qlm
