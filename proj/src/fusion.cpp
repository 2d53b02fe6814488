#include "qlm/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "qlm/error.hpp"

namespace qlm {

namespace {

std::map<std::string_view, double> normalized_scores(const Ranking& ranking) {
    std::map<std::string_view, double> out;
    if (ranking.empty()) {
        return out;
    }
    auto [lo, hi] = std::minmax_element(ranking.begin(), ranking.end(),
                                        [](const ScoredDoc& x, const ScoredDoc& y) { return x.score < y.score; });
    const double min = lo->score;
    const double range = hi->score - min;
    for (const auto& d : ranking) {
        out.emplace(d.doc_id, range > 0.0 ? (d.score - min) / range : 0.0);
    }
    return out;
}

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw UsageError(fmt::format("alpha must lie in [0, 1], got {}", alpha));
    }
}

}  // namespace

void FusionParams::validate() const {
    check_alpha(alpha);
}

Run minmax_normalize(const Run& run) {
    Run out;
    out.tag = run.tag;
    for (const auto& [qid, ranking] : run.queries) {
        const auto scores = normalized_scores(ranking);
        Ranking normalized;
        normalized.reserve(ranking.size());
        for (const auto& d : ranking) {
            normalized.push_back({d.doc_id, scores.at(d.doc_id)});
        }
        out.set(qid, std::move(normalized));
    }
    return out;
}

Run interpolate(const Run& a, const Run& b, const FusionParams& params, std::string tag) {
    params.validate();
    static const Ranking kEmpty;
    std::map<std::string_view, std::pair<const Ranking*, const Ranking*>> queries;
    for (const auto& [qid, ranking] : a.queries) {
        queries[qid] = {&ranking, &kEmpty};
    }
    for (const auto& [qid, ranking] : b.queries) {
        auto [it, inserted] = queries.try_emplace(qid, &kEmpty, &ranking);
        it->second.second = &ranking;
    }

    Run out;
    out.tag = std::move(tag);
    for (const auto& [qid, pair] : queries) {
        const auto na = normalized_scores(*pair.first);
        const auto nb = normalized_scores(*pair.second);
        std::map<std::string_view, std::pair<double, double>> fused;
        for (const auto& [doc, s] : na) {
            fused[doc].first = s;
        }
        for (const auto& [doc, s] : nb) {
            fused[doc].second = s;
        }
        Ranking ranking;
        ranking.reserve(fused.size());
        for (const auto& [doc, s] : fused) {
            // lerp(b', a', alpha) = alpha * a' + (1 - alpha) * b', exact at both ends.
            ranking.push_back({std::string(doc), std::lerp(s.second, s.first, params.alpha)});
        }
        out.set(std::string(qid), std::move(ranking));
    }
    return out;
}

Run truncate(const Run& run, std::size_t k) {
    if (k < 1) {
        throw UsageError("truncation depth k must be at least 1");
    }
    Run out;
    out.tag = run.tag;
    for (const auto& [qid, ranking] : run.queries) {
        out.queries.emplace(qid, Ranking(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(
                                                                                std::min(k, ranking.size()))));
    }
    return out;
}

std::vector<SweepRow> sweep_alpha(const Run& a, const Run& b, std::span<const double> alphas, const QrelSet& qrels,
                                  std::size_t k) {
    for (double alpha : alphas) {
        check_alpha(alpha);
    }
    std::vector<SweepRow> rows;
    rows.reserve(alphas.size());
    for (double alpha : alphas) {
        const Run fused = interpolate(a, b, FusionParams{alpha}, "sweep");
        rows.push_back({alpha, ndcg_at_k(fused, qrels, k).mean});
    }
    return rows;
}

std::string format_sweep(std::span<const SweepRow> rows) {
    std::string out = "alpha\tndcg\n";
    for (const auto& row : rows) {
        out += fmt::format("{}\t{}\n", format_score(row.alpha), format_score(row.ndcg));
    }
    return out;
}

std::vector<double> default_sweep_alphas() {
    std::vector<double> alphas;
    for (int i = 0; i <= 10; ++i) {
        alphas.push_back(static_cast<double>(i) / 10.0);
    }
    return alphas;
}

}  // namespace qlm
