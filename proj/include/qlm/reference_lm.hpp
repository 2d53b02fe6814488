#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qlm/likelihood.hpp"

namespace qlm {

/// Add-one smoothed word bigram model used as an offline stand-in for an LLM.
///
/// With V vocabulary words and c(w) the number of occurrences of w:
///   P(v | w)   = (c(w, v) + 1) / (c(w) + V + 1)   for v in the vocabulary
///   P(UNK | w) = (e(w) + 1)    / (c(w) + V + 1)
/// where e(w) counts occurrences of w that end a training text. Every context
/// therefore sums to one over vocabulary + UNK. Unknown context words, and an
/// empty context, get c(w) = e(w) = 0, i.e. the uniform 1 / (V + 1).
class ReferenceLm {
  public:
    /// Throws DataError when the texts contain no tokens at all.
    static ReferenceLm train(std::span<const std::string> texts);

    [[nodiscard]] std::size_t vocabulary_size() const { return vocab_.size(); }
    [[nodiscard]] bool in_vocabulary(std::string_view word) const;

    /// P(next | prev). Either word may be out of vocabulary; an empty `prev`
    /// means "no context".
    [[nodiscard]] double probability(std::string_view prev, std::string_view next) const;

    [[nodiscard]] std::uint64_t unigram_count(std::string_view word) const;
    [[nodiscard]] std::uint64_t bigram_count(std::string_view prev, std::string_view next) const;

  private:
    static constexpr std::uint32_t kUnk = UINT32_MAX;

    [[nodiscard]] std::uint32_t id(std::string_view word) const;
    static std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t{a} << 32) | b; }

    struct StringHash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
    };

    std::unordered_map<std::string, std::uint32_t, StringHash, std::equal_to<>> vocab_;
    std::vector<std::uint64_t> unigram_;
    std::vector<std::uint64_t> text_final_;
    std::unordered_map<std::uint64_t, std::uint64_t> bigram_;
};

/// Logprobs of the continuation's word tokens; token 0 conditions on the
/// last word of the context. Throws DataError if the continuation has no
/// word tokens.
LikelihoodResult bigram_loglikelihood(const ReferenceLm& lm, const LikelihoodRequest& request);

class BigramProvider final : public LikelihoodProvider {
  public:
    explicit BigramProvider(ReferenceLm lm) : lm_(std::move(lm)) {}

    LikelihoodResult loglikelihood(const LikelihoodRequest& request) override {
        return bigram_loglikelihood(lm_, request);
    }
    [[nodiscard]] std::string describe() const override;

    [[nodiscard]] const ReferenceLm& model() const { return lm_; }

  private:
    ReferenceLm lm_;
};

}  // namespace qlm
