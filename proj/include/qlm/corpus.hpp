#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qlm {

struct Document {
    std::string id;
    std::string title;
    std::string body;

    bool operator==(const Document&) const = default;
};

struct Query {
    std::string id;
    std::string text;

    bool operator==(const Query&) const = default;
};

/// Graded relevance judgments. Absent (query, doc) pairs are unjudged.
class QrelSet {
  public:
    void set(const std::string& query_id, const std::string& doc_id, int grade);

    [[nodiscard]] std::optional<int> grade(std::string_view query_id, std::string_view doc_id) const;

    /// Judgments for one query, or nullptr when the query has none.
    [[nodiscard]] const std::map<std::string, int, std::less<>>* judgments_for(std::string_view query_id) const;

    [[nodiscard]] const std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>>& all() const {
        return judgments_;
    }

    /// Number of (query, doc) judgments.
    [[nodiscard]] std::size_t size() const;

  private:
    std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>> judgments_;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// One query's ranked list.
using Ranking = std::vector<ScoredDoc>;

/// Orders by score descending, then doc id ascending. Every Ranking that
/// leaves this module is in this order.
bool ranks_before(const ScoredDoc& lhs, const ScoredDoc& rhs);

void sort_ranking(Ranking& ranking);

/// Per-query ranked lists plus a run tag. Queries iterate in id order.
struct Run {
    std::string tag;
    std::map<std::string, Ranking, std::less<>> queries;

    /// Sorts `ranking` and stores it under `query_id`, replacing any previous
    /// list. Throws DataError on duplicate doc ids.
    void set(const std::string& query_id, Ranking ranking);

    [[nodiscard]] const Ranking* find(std::string_view query_id) const;

    bool operator==(const Run&) const = default;
};

/// Throws DataError if any query has duplicate doc ids or is out of order.
void validate_run(const Run& run);

std::vector<Document> load_corpus(const std::filesystem::path& path);
std::vector<Query> load_queries(const std::filesystem::path& path);
QrelSet load_qrels(const std::filesystem::path& path);

Run read_run(const std::filesystem::path& path);
void write_run(const Run& run, const std::filesystem::path& path);

/// TREC six-column text for `run`, exactly as write_run emits it.
std::string format_run(const Run& run);
Run parse_run(std::string_view text, std::string_view source_name = "<run>");

/// Shortest decimal text that parses back to exactly `value`.
std::string format_score(double value);

/// Id → document view over a loaded collection. The collection must outlive it.
class DocLookup {
  public:
    explicit DocLookup(const std::vector<Document>& docs);

    [[nodiscard]] const Document* find(std::string_view id) const;
    /// Throws DataError for unknown ids.
    [[nodiscard]] const Document& at(std::string_view id) const;

  private:
    std::unordered_map<std::string_view, const Document*> by_id_;
};

/// Writes `content` to a sibling temp file and renames it over `path`, so a
/// reader never observes a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace qlm
