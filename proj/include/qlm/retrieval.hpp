#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qlm/corpus.hpp"
#include "qlm/index.hpp"

namespace qlm {

/// Lucene-style BM25 (non-negative idf, no (k1 + 1) numerator factor).
struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    /// Throws UsageError unless k1 > 0 and b in [0, 1].
    void validate() const;
};

struct DirichletParams {
    double mu = 1000.0;

    /// Throws UsageError unless mu is finite and positive.
    void validate() const;
};

inline constexpr std::size_t kDefaultCandidateDepth = 100;

/// Sum over query terms (repeats included) of
/// ln(1 + (N - df + 0.5) / (df + 0.5)) * tf / (tf + k1 * (1 - b + b * dl / avgdl)).
double bm25_score(const InvertedIndex& index, const Bm25Params& params, std::span<const std::string> query_terms,
                  std::string_view doc_id);

/// Documents with a positive BM25 score, best first, at most `k`.
Ranking bm25_search(const InvertedIndex& index, const Bm25Params& params, std::span<const std::string> query_terms,
                    std::size_t k);

/// Sum over query terms present in the collection of
/// ln((tf + mu * cf / total_terms) / (dl + mu)). Out-of-vocabulary terms add 0.
double dirichlet_score(const InvertedIndex& index, const DirichletParams& params,
                       std::span<const std::string> query_terms, std::string_view doc_id);

/// Scores every document; returns the top `k`.
Ranking dirichlet_search(const InvertedIndex& index, const DirichletParams& params,
                         std::span<const std::string> query_terms, std::size_t k);

enum class RetrievalModel { bm25, dirichlet };

RetrievalModel parse_retrieval_model(std::string_view name);

struct RetrievalConfig {
    RetrievalModel model = RetrievalModel::bm25;
    Bm25Params bm25;
    DirichletParams dirichlet;
    std::size_t k = kDefaultCandidateDepth;
};

/// Analyzes each query with the index's analyzer and searches it. Queries are
/// scored independently, so the work is spread over `threads` workers.
Run retrieve(const InvertedIndex& index, const std::vector<Query>& queries, const RetrievalConfig& config,
             std::string tag, unsigned threads = 1);

}  // namespace qlm
