#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qlm/corpus.hpp"

namespace qlm {

inline constexpr std::size_t kDefaultEvalDepth = 10;
inline constexpr double kDefaultSignificanceLevel = 0.05;

using QueryScores = std::map<std::string, double, std::less<>>;

struct EvalReport {
    /// nDCG@k of every evaluable query (at least one positive judgment).
    QueryScores per_query;
    double mean = 0.0;
    std::size_t k = kDefaultEvalDepth;
    std::size_t evaluated_query_count = 0;
};

/// nDCG@k with gain 2^rel - 1 and discount log2(rank + 1). The ideal DCG uses
/// all judged documents of the query. Evaluable queries missing from the run
/// score 0. Throws UsageError for k = 0 and DataError when no query in `qrels`
/// has a positive judgment.
EvalReport ndcg_at_k(const Run& run, const QrelSet& qrels, std::size_t k = kDefaultEvalDepth);

/// "query_id\tndcg" rows followed by "# mean", "# queries" and "# k" lines.
std::string format_eval_report(const EvalReport& report);

/// I_x(a, b), the regularized incomplete beta function, for a, b > 0 and
/// x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
double student_t_two_tailed(double t, double df);

struct SigResult {
    double t_statistic = 0.0;
    double p_value = 1.0;
    std::size_t df = 1;
    double corrected_p = 1.0;
    /// Every difference equals the same nonzero value: p is 0 and t is
    /// reported as 0 because the statistic is unbounded.
    bool degenerate = false;
};

/// Two-tailed paired t-test over the query ids both maps share. Differences
/// are a - b. Throws DataError when fewer than two ids are shared.
SigResult paired_ttest(const QueryScores& a, const QueryScores& b);

enum class Correction { none, bonferroni };

Correction parse_correction(std::string_view name);
std::string_view correction_name(Correction correction);

struct NamedRun {
    std::string name;
    Run run;
};

struct SignificanceMatrix {
    std::vector<std::string> names;
    std::vector<double> means;
    /// tests[x][y] compares run x against run y (differences x - y).
    std::vector<std::vector<SigResult>> tests;
    /// marks[x][y]: x has the higher mean and its corrected p <= level.
    std::vector<std::vector<bool>> marks;
    std::size_t k = kDefaultEvalDepth;
    double level = kDefaultSignificanceLevel;
    Correction correction = Correction::bonferroni;
};

/// Bonferroni multiplies each p by the number of comparisons in its row
/// (runs - 1), capped at 1. Throws UsageError for fewer than two runs or a
/// level outside (0, 1].
SignificanceMatrix significance_matrix(const std::vector<NamedRun>& runs, const QrelSet& qrels,
                                       std::size_t k = kDefaultEvalDepth, double level = kDefaultSignificanceLevel,
                                       Correction correction = Correction::bonferroni);

/// Row label for run `index`: a..z, then aa, ab, ...
std::string run_label(std::size_t index);

/// Plain-text table: one row per run with its label, name and mean nDCG@k x
/// 100 (one decimal), followed by the labels of the runs it significantly
/// beats as a ^superscript.
std::string render_significance_matrix(const SignificanceMatrix& matrix);

}  // namespace qlm
