#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qlm/corpus.hpp"
#include "qlm/eval.hpp"

namespace qlm {

/// Weight of the first run when fusing a first-stage run with re-ranker scores.
inline constexpr double kRerankAlpha = 0.2;
/// Weight of the first run when fusing two first-stage runs.
inline constexpr double kHybridAlpha = 0.5;

enum class Normalization { minmax };

struct FusionParams {
    double alpha = kRerankAlpha;
    Normalization normalization = Normalization::minmax;

    /// Throws UsageError unless alpha lies in [0, 1].
    void validate() const;
};

/// Per query, maps scores to (s - min) / (max - min), or to 0 when all scores
/// are equal.
Run minmax_normalize(const Run& run);

/// Per query, over the union of both runs' documents: alpha * a' + (1 - alpha) * b',
/// where a' and b' are min-max normalized scores and a document missing from
/// a run takes 0 there. Queries present in either run appear in the output.
Run interpolate(const Run& a, const Run& b, const FusionParams& params, std::string tag);

/// Keeps the first k documents of every query. Throws UsageError for k = 0.
Run truncate(const Run& run, std::size_t k);

struct SweepRow {
    double alpha = 0.0;
    double ndcg = 0.0;
};

/// Mean nDCG@k of interpolate(a, b, alpha) for every alpha.
std::vector<SweepRow> sweep_alpha(const Run& a, const Run& b, std::span<const double> alphas, const QrelSet& qrels,
                                  std::size_t k = kDefaultEvalDepth);

/// "alpha\tndcg" header plus one row per sweep point.
std::string format_sweep(std::span<const SweepRow> rows);

/// 0, 0.1, ..., 1.0 computed as i / 10 so every point is the nearest double.
std::vector<double> default_sweep_alphas();

}  // namespace qlm
