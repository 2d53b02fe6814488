#include "qlm/reference_lm.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qlm/analyzer.hpp"
#include "qlm/error.hpp"

namespace qlm {

ReferenceLm ReferenceLm::train(std::span<const std::string> texts) {
    ReferenceLm lm;
    for (const auto& text : texts) {
        auto tokens = word_tokens(text);
        std::uint32_t prev = kUnk;
        for (auto& tok : tokens) {
            auto [it, inserted] = lm.vocab_.emplace(std::move(tok), static_cast<std::uint32_t>(lm.unigram_.size()));
            if (inserted) {
                lm.unigram_.push_back(0);
                lm.text_final_.push_back(0);
            }
            const auto cur = it->second;
            ++lm.unigram_[cur];
            if (prev != kUnk) {
                ++lm.bigram_[pair_key(prev, cur)];
            }
            prev = cur;
        }
        if (prev != kUnk) {
            ++lm.text_final_[prev];
        }
    }
    if (lm.vocab_.empty()) {
        throw DataError("cannot train a bigram model on an empty corpus");
    }
    return lm;
}

std::uint32_t ReferenceLm::id(std::string_view word) const {
    auto it = vocab_.find(word);
    return it == vocab_.end() ? kUnk : it->second;
}

bool ReferenceLm::in_vocabulary(std::string_view word) const {
    return id(word) != kUnk;
}

std::uint64_t ReferenceLm::unigram_count(std::string_view word) const {
    auto w = id(word);
    return w == kUnk ? 0 : unigram_[w];
}

std::uint64_t ReferenceLm::bigram_count(std::string_view prev, std::string_view next) const {
    auto a = id(prev);
    auto b = id(next);
    if (a == kUnk || b == kUnk) {
        return 0;
    }
    auto it = bigram_.find(pair_key(a, b));
    return it == bigram_.end() ? 0 : it->second;
}

double ReferenceLm::probability(std::string_view prev, std::string_view next) const {
    const auto w = id(prev);
    const auto v = id(next);
    const double vocab = static_cast<double>(vocab_.size());
    const double context_count = w == kUnk ? 0.0 : static_cast<double>(unigram_[w]);
    double numerator = 1.0;
    if (w != kUnk) {
        if (v == kUnk) {
            numerator += static_cast<double>(text_final_[w]);
        } else if (auto it = bigram_.find(pair_key(w, v)); it != bigram_.end()) {
            numerator += static_cast<double>(it->second);
        }
    }
    return numerator / (context_count + vocab + 1.0);
}

LikelihoodResult bigram_loglikelihood(const ReferenceLm& lm, const LikelihoodRequest& request) {
    auto tokens = word_tokens(request.continuation);
    if (tokens.empty()) {
        throw DataError("continuation has no word tokens");
    }
    auto context_tokens = word_tokens(request.context);
    std::string prev = context_tokens.empty() ? std::string() : context_tokens.back();

    LikelihoodResult result;
    result.logprobs.reserve(tokens.size());
    for (const auto& tok : tokens) {
        result.logprobs.push_back(std::log(lm.probability(prev, tok)));
        prev = tok;
    }
    result.tokens = std::move(tokens);
    return result;
}

std::string BigramProvider::describe() const {
    return fmt::format("bigram(V={})", lm_.vocabulary_size());
}

}  // namespace qlm
