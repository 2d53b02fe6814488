#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qlm/corpus.hpp"

namespace qlm {

inline constexpr std::string_view kDocPlaceholder = "{doc}";
inline constexpr std::size_t kDefaultDocMaxChars = 4000;
inline constexpr std::size_t kFewShotCount = 3;

/// Prompt wrapped around a candidate document: system_prefix + body + suffix,
/// where body holds exactly one {doc} placeholder.
struct PromptTemplate {
    std::string system_prefix;
    std::string body;
    std::string suffix;

    /// Throws DataError unless body contains {doc} exactly once.
    void validate() const;

    bool operator==(const PromptTemplate&) const = default;
};

struct FewShotExample {
    std::string document;
    std::string good_question;
    std::string bad_question;

    bool operator==(const FewShotExample&) const = default;
};

/// Templates keyed by (model family, dataset), plus optional three-example
/// few-shot blocks keyed by dataset.
class PromptCatalog {
  public:
    using Key = std::pair<std::string, std::string>;

    /// Throws DataError on a duplicate key or an invalid template.
    void add(std::string model_family, std::string dataset, PromptTemplate prompt);
    /// Throws DataError unless exactly three complete examples are given.
    void set_fewshot(std::string dataset, std::vector<FewShotExample> examples);

    /// Throws DataError when the key is missing.
    [[nodiscard]] const PromptTemplate& at(std::string_view model_family, std::string_view dataset) const;
    [[nodiscard]] const std::vector<FewShotExample>* fewshot(std::string_view dataset) const;

    [[nodiscard]] const std::map<Key, PromptTemplate>& entries() const { return entries_; }
    [[nodiscard]] const std::map<std::string, std::vector<FewShotExample>, std::less<>>& fewshot_sets() const {
        return fewshot_;
    }

    bool operator==(const PromptCatalog&) const = default;

  private:
    std::map<Key, PromptTemplate> entries_;
    std::map<std::string, std::vector<FewShotExample>, std::less<>> fewshot_;
};

PromptCatalog load_catalog(const std::filesystem::path& path);
PromptCatalog parse_catalog(std::string_view json_text, std::string_view source_name = "<catalog>");
std::string serialize_catalog(const PromptCatalog& catalog);

/// The built-in catalog: one zero-shot template per model family and dataset,
/// plus placeholder few-shot examples for each dataset.
const PromptCatalog& default_catalog();

/// Throws DataError unless `examples` holds exactly three complete triples.
void validate_fewshot(std::span<const FewShotExample> examples);

/// title + "\n" + body (just body when the title is empty), cut to at most
/// `max_chars` code points, at whitespace when the prefix contains any.
std::string document_text(const Document& doc, std::size_t max_chars);

std::string render_prompt(const PromptTemplate& prompt, const Document& doc,
                          std::size_t doc_max_chars = kDefaultDocMaxChars);

/// Three example blocks (body over the example document, then good and bad
/// questions) followed by the target block ending in "Good question:".
std::string render_fewshot(const PromptTemplate& prompt, std::span<const FewShotExample> examples,
                           const Document& doc, std::size_t doc_max_chars = kDefaultDocMaxChars);

/// Stable 64-bit FNV-1a hash of the template and few-shot block; part of the
/// likelihood cache key.
std::uint64_t prompt_fingerprint(const PromptTemplate& prompt, std::span<const FewShotExample> examples,
                                 std::size_t doc_max_chars);

}  // namespace qlm
