#include "qlm/remote_provider.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "qlm/error.hpp"

namespace qlm {

namespace {

using json = nlohmann::json;

// log-softmax outputs can round to a hair above zero.
constexpr double kPositiveTolerance = 1e-4;

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Python's json module writes -Infinity, Infinity and NaN as bare literals,
// which strict JSON parsers reject. Quote them so they decode as strings.
std::string quote_nonfinite_literals(std::string_view body) {
    std::string out;
    out.reserve(body.size());
    bool in_string = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (in_string) {
            out += c;
            if (c == '\\' && i + 1 < body.size()) {
                out += body[++i];
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            out += c;
            continue;
        }
        bool replaced = false;
        for (std::string_view lit : {"-Infinity", "Infinity", "NaN"}) {
            if (body.substr(i, lit.size()) == lit) {
                out += '"';
                out += lit;
                out += '"';
                i += lit.size() - 1;
                replaced = true;
                break;
            }
        }
        if (!replaced) {
            out += c;
        }
    }
    return out;
}

json parse_body(std::string_view body) {
    try {
        return json::parse(quote_nonfinite_literals(body));
    } catch (const json::exception& e) {
        throw ProtocolError(fmt::format("malformed provider response: {}", e.what()));
    }
}

// Returns the floored value; counts the values that needed flooring.
double decode_logprob(const json& value, double floor, std::size_t& floored) {
    double lp = 0.0;
    if (value.is_number()) {
        lp = value.get<double>();
    } else if (value.is_null()) {
        lp = -std::numeric_limits<double>::infinity();
    } else if (value.is_string()) {
        const auto s = lower(value.get<std::string>());
        if (s == "-inf" || s == "-infinity") {
            lp = -std::numeric_limits<double>::infinity();
        } else if (s == "nan") {
            lp = std::numeric_limits<double>::quiet_NaN();
        } else {
            throw ProtocolError(fmt::format("invalid logprob value \"{}\"", value.get<std::string>()));
        }
    } else {
        throw ProtocolError(fmt::format("invalid logprob value {}", value.dump()));
    }
    if (lp > 0.0) {
        if (lp > kPositiveTolerance) {
            throw ProtocolError(fmt::format("provider returned positive logprob {}", lp));
        }
        lp = 0.0;
    }
    const double out = floor_logprob(lp, floor);
    if (out != lp) {
        ++floored;
    }
    return out;
}

std::vector<std::string> token_strings(const json& arr, const char* what) {
    if (!arr.is_array()) {
        throw ProtocolError(fmt::format("\"{}\" must be an array", what));
    }
    std::vector<std::string> tokens;
    tokens.reserve(arr.size());
    for (const auto& t : arr) {
        if (!t.is_string()) {
            throw ProtocolError(fmt::format("\"{}\" entries must be strings", what));
        }
        tokens.push_back(t.get<std::string>());
    }
    return tokens;
}

const json& require(const json& obj, const char* key) {
    if (!obj.is_object()) {
        throw ProtocolError(fmt::format("expected an object holding \"{}\"", key));
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ProtocolError(fmt::format("provider response lacks \"{}\"", key));
    }
    return *it;
}

std::size_t code_points(std::string_view s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

void warn_floored(std::size_t floored, double floor) {
    if (floored > 0) {
        spdlog::warn("floored {} non-finite or out-of-range logprob(s) to {}", floored, floor);
    }
}

}  // namespace

WireFormat parse_wire_format(std::string_view name) {
    if (name == "loglikelihood") {
        return WireFormat::loglikelihood;
    }
    if (name == "completions") {
        return WireFormat::completions;
    }
    throw UsageError(fmt::format("unknown wire format '{}' (expected loglikelihood or completions)", name));
}

RemoteOptions remote_options_from_env() {
    RemoteOptions options;
    if (const char* endpoint = std::getenv(kEndpointEnvVar)) {
        options.endpoint = endpoint;
    }
    if (const char* token = std::getenv(kTokenEnvVar)) {
        options.auth_token = token;
    }
    return options;
}

LikelihoodResult decode_loglikelihood_response(std::string_view body, double floor) {
    const json root = parse_body(body);
    LikelihoodResult result;
    result.tokens = token_strings(require(root, "tokens"), "tokens");
    const auto& logprobs = require(root, "logprobs");
    if (!logprobs.is_array()) {
        throw ProtocolError("\"logprobs\" must be an array");
    }
    if (logprobs.size() != result.tokens.size()) {
        throw ProtocolError(
            fmt::format("provider returned {} tokens but {} logprobs", result.tokens.size(), logprobs.size()));
    }
    if (result.tokens.empty()) {
        throw ProtocolError("provider returned no tokens for the continuation");
    }
    std::size_t floored = 0;
    for (const auto& lp : logprobs) {
        result.logprobs.push_back(decode_logprob(lp, floor, floored));
    }
    warn_floored(floored, floor);
    result.validate();
    return result;
}

LikelihoodResult decode_completions_response(std::string_view body, std::size_t context_chars, double floor) {
    const json root = parse_body(body);
    const auto& choices = require(root, "choices");
    if (!choices.is_array() || choices.empty()) {
        throw ProtocolError("\"choices\" must be a non-empty array");
    }
    const auto& logprobs = require(choices[0], "logprobs");
    auto tokens = token_strings(require(logprobs, "tokens"), "tokens");
    const auto& values = require(logprobs, "token_logprobs");
    const auto& offsets = require(logprobs, "text_offset");
    if (!values.is_array() || !offsets.is_array() || values.size() != tokens.size() ||
        offsets.size() != tokens.size()) {
        throw ProtocolError("completions logprobs arrays differ in length");
    }
    LikelihoodResult result;
    std::size_t floored = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!offsets[i].is_number_integer()) {
            throw ProtocolError("\"text_offset\" entries must be integers");
        }
        const auto offset = offsets[i].get<std::size_t>();
        if (offset + code_points(tokens[i]) <= context_chars) {
            continue;
        }
        result.logprobs.push_back(decode_logprob(values[i], floor, floored));
        result.tokens.push_back(std::move(tokens[i]));
    }
    if (result.tokens.empty()) {
        throw ProtocolError("echoed prompt holds no continuation tokens");
    }
    warn_floored(floored, floor);
    result.validate();
    return result;
}

RemoteProvider::RemoteProvider(RemoteOptions options) : options_(std::move(options)) {
    if (options_.endpoint.empty()) {
        throw UsageError(fmt::format("no provider endpoint configured (set --endpoint or {})", kEndpointEnvVar));
    }
    if (options_.retry.max_attempts < 1) {
        throw UsageError("retry attempts must be at least 1");
    }
    std::string_view url = options_.endpoint;
    for (std::string_view known : {kLoglikelihoodPath, kCompletionsPath}) {
        if (url.size() >= known.size() && url.substr(url.size() - known.size()) == known) {
            url.remove_suffix(known.size());
        }
    }
    while (!url.empty() && url.back() == '/') {
        url.remove_suffix(1);
    }
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string_view::npos ? 0 : scheme_end + 3);
    host_ = std::string(url.substr(0, path_start));
    const std::string prefix = path_start == std::string_view::npos ? "" : std::string(url.substr(path_start));
    path_ = prefix + std::string(options_.format == WireFormat::loglikelihood ? kLoglikelihoodPath : kCompletionsPath);
}

LikelihoodResult RemoteProvider::loglikelihood(const LikelihoodRequest& request) {
    if (request.continuation.empty()) {
        throw DataError("likelihood request has an empty continuation");
    }
    json payload;
    if (options_.format == WireFormat::loglikelihood) {
        payload = {{"context", request.context}, {"continuation", request.continuation}};
    } else {
        payload = {{"prompt", request.context + request.continuation},
                   {"max_tokens", 0},
                   {"echo", true},
                   {"logprobs", 0},
                   {"temperature", 0}};
        if (!options_.model.empty()) {
            payload["model"] = options_.model;
        }
    }
    const std::string body = payload.dump();

    httplib::Client client(host_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    if (!options_.auth_token.empty()) {
        client.set_bearer_token_auth(options_.auth_token);
    }

    std::string last_error;
    auto backoff = options_.retry.initial_backoff;
    for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
        ++attempts_;
        auto res = client.Post(path_, body, "application/json");
        if (res && res->status == 200) {
            if (options_.format == WireFormat::loglikelihood) {
                return decode_loglikelihood_response(res->body, options_.logprob_floor);
            }
            return decode_completions_response(res->body, code_points(request.context), options_.logprob_floor);
        }
        if (res) {
            last_error = fmt::format("HTTP {}", res->status);
            if (res->status != 429 && res->status < 500) {
                throw ProviderError(fmt::format("{}{}: {}", host_, path_, last_error));
            }
        } else {
            last_error = httplib::to_string(res.error());
        }
        if (attempt < options_.retry.max_attempts) {
            spdlog::warn("{}{}: attempt {}/{} failed ({}), retrying in {} ms", host_, path_, attempt,
                         options_.retry.max_attempts, last_error, backoff.count());
            ++retries_;
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<std::int64_t>(static_cast<double>(backoff.count()) * options_.retry.backoff_multiplier));
        }
    }
    throw ProviderError(fmt::format("{}{}: giving up after {} attempt(s): {}", host_, path_,
                                    options_.retry.max_attempts, last_error));
}

std::string RemoteProvider::describe() const {
    return fmt::format("remote({}{})", host_, path_);
}

}  // namespace qlm
