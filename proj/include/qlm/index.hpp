#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qlm/analyzer.hpp"
#include "qlm/corpus.hpp"

namespace qlm {

struct Posting {
    std::uint32_t doc = 0;  // document ordinal
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

struct TermStats {
    std::uint64_t cf = 0;
    std::vector<Posting> postings;  // ascending by doc ordinal

    bool operator==(const TermStats&) const = default;
};

/// Immutable postings and collection statistics for BM25 and Dirichlet
/// scoring. Documents are addressed by ordinal (load order) internally and by
/// id at the API boundary.
class InvertedIndex {
  public:
    /// Indexes title + " " + body of every document. Throws DataError on an
    /// empty collection.
    static InvertedIndex build(const std::vector<Document>& docs, const Analyzer& analyzer);

    static InvertedIndex load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    [[nodiscard]] std::uint32_t doc_count() const { return static_cast<std::uint32_t>(doc_ids_.size()); }
    [[nodiscard]] std::uint64_t total_terms() const { return total_terms_; }
    [[nodiscard]] double avgdl() const { return avgdl_; }

    [[nodiscard]] const std::string& doc_id(std::uint32_t ordinal) const { return doc_ids_.at(ordinal); }
    [[nodiscard]] std::uint32_t doc_len(std::uint32_t ordinal) const { return doc_lens_.at(ordinal); }
    [[nodiscard]] std::optional<std::uint32_t> ordinal(std::string_view doc_id) const;
    /// Throws DataError for an unknown id.
    [[nodiscard]] std::uint32_t require_ordinal(std::string_view doc_id) const;

    [[nodiscard]] const TermStats* term(std::string_view term) const;
    [[nodiscard]] std::uint64_t cf(std::string_view term) const;
    [[nodiscard]] std::uint32_t df(std::string_view term) const;
    [[nodiscard]] std::uint32_t tf(std::string_view term, std::uint32_t ordinal) const;
    [[nodiscard]] std::size_t vocabulary_size() const { return terms_.size(); }

    [[nodiscard]] const AnalyzerOptions& analyzer_options() const { return analyzer_options_; }
    [[nodiscard]] Analyzer analyzer() const { return Analyzer(analyzer_options_); }

    /// Throws DataError if cf, doc length, or avgdl bookkeeping disagree.
    void check_invariants() const;

    bool operator==(const InvertedIndex&) const = default;

  private:
    struct StringHash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
    };

    AnalyzerOptions analyzer_options_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lens_;
    std::unordered_map<std::string, std::uint32_t, StringHash, std::equal_to<>> ordinals_;
    std::unordered_map<std::string, TermStats, StringHash, std::equal_to<>> terms_;
    std::uint64_t total_terms_ = 0;
    double avgdl_ = 0.0;
};

}  // namespace qlm
