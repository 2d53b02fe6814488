#include "qlm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "qlm/error.hpp"

namespace qlm {

namespace {

double gain(int grade) {
    return grade > 0 ? std::exp2(static_cast<double>(grade)) - 1.0 : 0.0;
}

double discount(std::size_t rank) {
    return std::log2(static_cast<double>(rank) + 1.0);
}

// Continued fraction for I_x(a, b) by the modified Lentz method; converges
// quickly for x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) {
            return h;
        }
    }
    throw DataError(fmt::format("incomplete beta did not converge for a={}, b={}, x={}", a, b, x));
}

// I_x(a, b) with y = 1 - x supplied separately, so callers that know y
// exactly avoid the cancellation in 1 - x.
double incomplete_beta(double a, double b, double x, double y) {
    if (x <= 0.0) {
        return 0.0;
    }
    if (y <= 0.0) {
        return 1.0;
    }
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

}  // namespace

EvalReport ndcg_at_k(const Run& run, const QrelSet& qrels, std::size_t k) {
    if (k < 1) {
        throw UsageError("evaluation depth k must be at least 1");
    }
    EvalReport report;
    report.k = k;
    double total = 0.0;
    for (const auto& [qid, judgments] : qrels.all()) {
        std::vector<int> grades;
        grades.reserve(judgments.size());
        for (const auto& [doc, grade] : judgments) {
            grades.push_back(grade);
        }
        std::sort(grades.begin(), grades.end(), std::greater<>());
        if (grades.empty() || grades.front() <= 0) {
            continue;
        }
        double ideal = 0.0;
        for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
            ideal += gain(grades[i]) / discount(i + 1);
        }
        double dcg = 0.0;
        if (const auto* ranking = run.find(qid)) {
            for (std::size_t i = 0; i < std::min(k, ranking->size()); ++i) {
                auto it = judgments.find((*ranking)[i].doc_id);
                if (it != judgments.end()) {
                    dcg += gain(it->second) / discount(i + 1);
                }
            }
        }
        const double value = dcg / ideal;
        report.per_query.emplace(qid, value);
        total += value;
    }
    if (report.per_query.empty()) {
        throw DataError("no query has a positive relevance judgment");
    }
    report.evaluated_query_count = report.per_query.size();
    report.mean = total / static_cast<double>(report.evaluated_query_count);
    return report;
}

std::string format_eval_report(const EvalReport& report) {
    std::string out = "query_id\tndcg\n";
    for (const auto& [qid, value] : report.per_query) {
        out += fmt::format("{}\t{}\n", qid, format_score(value));
    }
    out += fmt::format("# k\t{}\n", report.k);
    out += fmt::format("# queries\t{}\n", report.evaluated_query_count);
    out += fmt::format("# mean\t{}\n", format_score(report.mean));
    return out;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
        throw UsageError(fmt::format("incomplete beta needs a, b > 0 and x in [0, 1], got a={}, b={}, x={}", a, b, x));
    }
    return incomplete_beta(a, b, x, 1.0 - x);
}

double student_t_two_tailed(double t, double df) {
    if (!(df > 0.0)) {
        throw UsageError(fmt::format("degrees of freedom must be positive, got {}", df));
    }
    if (std::isnan(t)) {
        throw UsageError("t statistic is NaN");
    }
    if (std::isinf(t)) {
        return 0.0;
    }
    const double t2 = t * t;
    const double x = df / (df + t2);
    const double y = t2 / (df + t2);
    return std::clamp(incomplete_beta(df / 2.0, 0.5, x, y), 0.0, 1.0);
}

SigResult paired_ttest(const QueryScores& a, const QueryScores& b) {
    std::vector<double> diffs;
    for (const auto& [qid, value] : a) {
        if (auto it = b.find(qid); it != b.end()) {
            diffs.push_back(value - it->second);
        }
    }
    if (diffs.size() < 2) {
        throw DataError(fmt::format("paired t-test needs at least 2 shared queries, got {}", diffs.size()));
    }
    const double n = static_cast<double>(diffs.size());
    double sum = 0.0;
    for (double d : diffs) {
        sum += d;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double d : diffs) {
        ss += (d - mean) * (d - mean);
    }
    SigResult result;
    result.df = diffs.size() - 1;
    const double sd = std::sqrt(ss / (n - 1.0));
    // Differences such as 0.6 - 0.5 and 0.7 - 0.6 disagree in the last bit;
    // spread at that level is rounding, not variance.
    if (sd <= 8.0 * std::numeric_limits<double>::epsilon() * std::fabs(mean)) {
        result.t_statistic = 0.0;
        result.degenerate = mean != 0.0;
        result.p_value = result.degenerate ? 0.0 : 1.0;
    } else {
        result.t_statistic = mean / (sd / std::sqrt(n));
        result.p_value = student_t_two_tailed(result.t_statistic, static_cast<double>(result.df));
    }
    result.corrected_p = result.p_value;
    return result;
}

Correction parse_correction(std::string_view name) {
    if (name == "none") {
        return Correction::none;
    }
    if (name == "bonferroni") {
        return Correction::bonferroni;
    }
    throw UsageError(fmt::format("unknown correction '{}' (expected none or bonferroni)", name));
}

std::string_view correction_name(Correction correction) {
    return correction == Correction::none ? "none" : "bonferroni";
}

SignificanceMatrix significance_matrix(const std::vector<NamedRun>& runs, const QrelSet& qrels, std::size_t k,
                                       double level, Correction correction) {
    if (runs.size() < 2) {
        throw UsageError("a significance matrix needs at least two runs");
    }
    if (!(level > 0.0 && level <= 1.0)) {
        throw UsageError(fmt::format("significance level must lie in (0, 1], got {}", level));
    }
    const std::size_t m = runs.size();
    std::vector<EvalReport> reports;
    reports.reserve(m);
    for (const auto& r : runs) {
        reports.push_back(ndcg_at_k(r.run, qrels, k));
    }

    SignificanceMatrix matrix;
    matrix.k = k;
    matrix.level = level;
    matrix.correction = correction;
    matrix.tests.assign(m, std::vector<SigResult>(m));
    matrix.marks.assign(m, std::vector<bool>(m, false));
    const double factor = correction == Correction::bonferroni ? static_cast<double>(m - 1) : 1.0;
    for (std::size_t x = 0; x < m; ++x) {
        matrix.names.push_back(runs[x].name);
        matrix.means.push_back(reports[x].mean);
    }
    for (std::size_t x = 0; x < m; ++x) {
        for (std::size_t y = 0; y < m; ++y) {
            if (x == y) {
                continue;
            }
            auto test = paired_ttest(reports[x].per_query, reports[y].per_query);
            test.corrected_p = std::min(1.0, test.p_value * factor);
            matrix.marks[x][y] = matrix.means[x] > matrix.means[y] && test.corrected_p <= level;
            matrix.tests[x][y] = test;
        }
    }
    return matrix;
}

std::string run_label(std::size_t index) {
    std::string label;
    ++index;
    while (index > 0) {
        --index;
        label.insert(label.begin(), static_cast<char>('a' + index % 26));
        index /= 26;
    }
    return label;
}

std::string render_significance_matrix(const SignificanceMatrix& matrix) {
    std::string out = fmt::format("# nDCG@{} x 100; superscripts: paired two-tailed t-test, correction={}, p <= {}\n",
                                  matrix.k, correction_name(matrix.correction), format_score(matrix.level));
    out += fmt::format("#\trun\tndcg@{}\n", matrix.k);
    for (std::size_t x = 0; x < matrix.names.size(); ++x) {
        std::string beats;
        for (std::size_t y = 0; y < matrix.names.size(); ++y) {
            if (matrix.marks[x][y]) {
                beats += run_label(y);
                beats += ',';
            }
        }
        out += fmt::format("{}\t{}\t{:.1f}", run_label(x), matrix.names[x], matrix.means[x] * 100.0);
        if (!beats.empty()) {
            beats.pop_back();
            out += "^" + beats;
        }
        out += '\n';
    }
    return out;
}

}  // namespace qlm
