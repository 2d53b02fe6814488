#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace qlm {

struct AnalyzerOptions {
    bool lowercase = true;
    bool stem = false;
    /// Matched after lowercasing, before stemming.
    std::set<std::string> stopwords;

    bool operator==(const AnalyzerOptions&) const = default;
};

/// Splits text on runs of non-alphanumeric ASCII characters. Bytes >= 0x80
/// count as alphanumeric so UTF-8 words stay intact.
class Analyzer {
  public:
    Analyzer() = default;
    explicit Analyzer(AnalyzerOptions options) : options_(std::move(options)) {}

    [[nodiscard]] std::vector<std::string> analyze(std::string_view text) const;

    [[nodiscard]] const AnalyzerOptions& options() const { return options_; }

  private:
    AnalyzerOptions options_;
};

/// Porter (1980) suffix-stripping stemmer for lowercase ASCII words. Words
/// with other characters are returned unchanged.
std::string porter_stem(std::string_view word);

/// Lowercased alphanumeric word tokens; the tokenizer shared by the reference
/// language model and the default analyzer.
std::vector<std::string> word_tokens(std::string_view text);

}  // namespace qlm
