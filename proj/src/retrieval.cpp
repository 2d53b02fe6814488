#include "qlm/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qlm/error.hpp"
#include "qlm/parallel.hpp"

namespace qlm {

namespace {

double bm25_idf(double n_docs, double df) {
    return std::log1p((n_docs - df + 0.5) / (df + 0.5));
}

double bm25_tf_part(const Bm25Params& params, double tf, double dl, double avgdl) {
    return tf / (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl));
}

double dirichlet_term(const DirichletParams& params, double tf, double cf, double total_terms, double dl) {
    return std::log((tf + params.mu * cf / total_terms) / (dl + params.mu));
}

void check_k(std::size_t k) {
    if (k < 1) {
        throw UsageError("search depth k must be at least 1");
    }
}

Ranking top_k(Ranking candidates, std::size_t k) {
    if (candidates.size() > k) {
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                          ranks_before);
        candidates.resize(k);
    } else {
        sort_ranking(candidates);
    }
    return candidates;
}

}  // namespace

void Bm25Params::validate() const {
    if (!(k1 > 0.0) || !std::isfinite(k1)) {
        throw UsageError(fmt::format("bm25 k1 must be positive, got {}", k1));
    }
    if (!(b >= 0.0 && b <= 1.0)) {
        throw UsageError(fmt::format("bm25 b must lie in [0, 1], got {}", b));
    }
}

void DirichletParams::validate() const {
    if (!(mu > 0.0) || !std::isfinite(mu)) {
        throw UsageError(fmt::format("dirichlet mu must be finite and positive, got {}", mu));
    }
}

double bm25_score(const InvertedIndex& index, const Bm25Params& params, std::span<const std::string> query_terms,
                  std::string_view doc_id) {
    const auto ordinal = index.require_ordinal(doc_id);
    const double n_docs = index.doc_count();
    const double dl = index.doc_len(ordinal);
    double score = 0.0;
    for (const auto& t : query_terms) {
        const auto tf = index.tf(t, ordinal);
        if (tf == 0) {
            continue;
        }
        score += bm25_idf(n_docs, index.df(t)) * bm25_tf_part(params, tf, dl, index.avgdl());
    }
    return score;
}

Ranking bm25_search(const InvertedIndex& index, const Bm25Params& params, std::span<const std::string> query_terms,
                    std::size_t k) {
    check_k(k);
    const double n_docs = index.doc_count();
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;

    // Term-at-a-time in query order, so each accumulator sums the same terms
    // in the same order as bm25_score.
    for (const auto& t : query_terms) {
        const auto* stats = index.term(t);
        if (stats == nullptr) {
            continue;
        }
        const double idf = bm25_idf(n_docs, static_cast<double>(stats->postings.size()));
        for (const auto& p : stats->postings) {
            if (acc[p.doc] == 0.0) {
                touched.push_back(p.doc);
            }
            acc[p.doc] += idf * bm25_tf_part(params, p.tf, index.doc_len(p.doc), index.avgdl());
        }
    }

    Ranking candidates;
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (auto d : touched) {
        if (acc[d] > 0.0) {
            candidates.push_back({index.doc_id(d), acc[d]});
        }
    }
    return top_k(std::move(candidates), k);
}

double dirichlet_score(const InvertedIndex& index, const DirichletParams& params,
                       std::span<const std::string> query_terms, std::string_view doc_id) {
    const auto ordinal = index.require_ordinal(doc_id);
    const double total = static_cast<double>(index.total_terms());
    const double dl = index.doc_len(ordinal);
    double score = 0.0;
    for (const auto& t : query_terms) {
        const auto cf = index.cf(t);
        if (cf == 0) {
            continue;
        }
        score += dirichlet_term(params, index.tf(t, ordinal), static_cast<double>(cf), total, dl);
    }
    return score;
}

Ranking dirichlet_search(const InvertedIndex& index, const DirichletParams& params,
                         std::span<const std::string> query_terms, std::size_t k) {
    check_k(k);
    const double total = static_cast<double>(index.total_terms());
    const std::uint32_t n_docs = index.doc_count();

    // Dense tf columns for the in-vocabulary query terms, in query order.
    struct Column {
        double cf;
        std::vector<std::uint32_t> tf;
    };
    std::vector<Column> columns;
    for (const auto& t : query_terms) {
        const auto* stats = index.term(t);
        if (stats == nullptr || stats->cf == 0) {
            continue;
        }
        Column col{static_cast<double>(stats->cf), std::vector<std::uint32_t>(n_docs, 0)};
        for (const auto& p : stats->postings) {
            col.tf[p.doc] = p.tf;
        }
        columns.push_back(std::move(col));
    }

    Ranking candidates;
    candidates.reserve(n_docs);
    for (std::uint32_t d = 0; d < n_docs; ++d) {
        const double dl = index.doc_len(d);
        double score = 0.0;
        for (const auto& col : columns) {
            score += dirichlet_term(params, col.tf[d], col.cf, total, dl);
        }
        candidates.push_back({index.doc_id(d), score});
    }
    return top_k(std::move(candidates), k);
}

RetrievalModel parse_retrieval_model(std::string_view name) {
    if (name == "bm25") {
        return RetrievalModel::bm25;
    }
    if (name == "dirichlet" || name == "qld") {
        return RetrievalModel::dirichlet;
    }
    throw UsageError(fmt::format("unknown retrieval model '{}' (expected bm25 or dirichlet)", name));
}

Run retrieve(const InvertedIndex& index, const std::vector<Query>& queries, const RetrievalConfig& config,
             std::string tag, unsigned threads) {
    check_k(config.k);
    config.bm25.validate();
    config.dirichlet.validate();
    const Analyzer analyzer = index.analyzer();

    std::vector<Ranking> results(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        auto terms = analyzer.analyze(queries[i].text);
        results[i] = config.model == RetrievalModel::bm25 ? bm25_search(index, config.bm25, terms, config.k)
                                                          : dirichlet_search(index, config.dirichlet, terms, config.k);
    });

    Run run;
    run.tag = std::move(tag);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        run.set(queries[i].id, std::move(results[i]));
    }
    return run;
}

}  // namespace qlm
