#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "qlm/corpus.hpp"
#include "qlm/likelihood.hpp"
#include "qlm/prompts.hpp"
#include "qlm/retrieval.hpp"

namespace qlm {

enum class ErrorPolicy {
    /// A provider failure on any document fails the whole query (and the run).
    fail_query,
    /// A failed document gets `RerankOptions::floor_score` and a warning.
    floor,
};

ErrorPolicy parse_error_policy(std::string_view name);

struct RerankOptions {
    std::size_t depth = kDefaultCandidateDepth;
    std::size_t doc_max_chars = kDefaultDocMaxChars;
    unsigned concurrency = 8;
    ErrorPolicy on_error = ErrorPolicy::fail_query;
    double floor_score = kDefaultLogprobFloor;
};

/// The prompt to score under: a template, plus three examples for few-shot.
struct PromptSpec {
    PromptTemplate prompt;
    std::vector<FewShotExample> fewshot;

    [[nodiscard]] bool is_fewshot() const { return !fewshot.empty(); }
    /// render_prompt or render_fewshot, depending on whether few-shot examples are set.
    [[nodiscard]] std::string render(const Document& doc, std::size_t doc_max_chars) const;
};

/// Query-likelihood scores keyed by (prompt fingerprint, doc id, query id).
/// Safe for concurrent use.
class LikelihoodCache {
  public:
    using Key = std::tuple<std::uint64_t, std::string, std::string>;

    [[nodiscard]] std::optional<double> find(const Key& key);
    void insert(Key key, double score);

    [[nodiscard]] std::uint64_t hits() const { return hits_.load(); }
    [[nodiscard]] std::uint64_t misses() const { return misses_.load(); }
    [[nodiscard]] std::size_t size() const;
    /// Copy of every stored score, in key order.
    [[nodiscard]] std::map<Key, double> snapshot() const;

  private:
    mutable std::mutex mutex_;
    std::map<Key, double> scores_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

struct RerankStats {
    std::uint64_t scored_pairs = 0;
    std::uint64_t provider_requests = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t failures = 0;

    [[nodiscard]] double cache_hit_rate() const {
        return scored_pairs == 0 ? 0.0 : static_cast<double>(cache_hits) / static_cast<double>(scored_pairs);
    }
};

/// One rendered provider request, recorded in candidate order.
struct PromptRecord {
    std::string query_id;
    std::string doc_id;
    LikelihoodRequest request;

    bool operator==(const PromptRecord&) const = default;
};

/// Re-scores candidates by mean query-token log-likelihood under `provider`.
/// Provider calls run concurrently, but each score lands in its candidate's
/// slot, so the output does not depend on completion order.
class Reranker {
  public:
    Reranker(LikelihoodProvider& provider, PromptSpec prompt, RerankOptions options,
             LikelihoodCache* cache = nullptr);

    /// Scores every candidate (no depth cut) and returns them re-sorted.
    Ranking rerank(const Query& query, const Ranking& candidates, const DocLookup& docs);

    /// Re-ranks the top `depth` candidates of every query in `first_stage`.
    /// Every query in the run must be present in `queries`.
    Run rerank_run(const Run& first_stage, const std::vector<Query>& queries, const DocLookup& docs, std::string tag);

    [[nodiscard]] const RerankStats& stats() const { return stats_; }

    /// When set, every rendered request is appended here in candidate order.
    void record_prompts(std::vector<PromptRecord>* log) { prompt_log_ = log; }

  private:
    struct Job {
        const Query* query;
        const Document* doc;
    };

    std::vector<double> score_jobs(const std::vector<Job>& jobs);

    LikelihoodProvider& provider_;
    PromptSpec prompt_;
    RerankOptions options_;
    LikelihoodCache* cache_;
    std::uint64_t fingerprint_;
    RerankStats stats_;
    std::vector<PromptRecord>* prompt_log_ = nullptr;
};

}  // namespace qlm
