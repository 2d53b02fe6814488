#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "qlm/error.hpp"
#include "qlm/fusion.hpp"
#include "support/support.hpp"

using namespace qlm;
namespace qt = qlm::testing;

namespace {

qlm::Run single(const Ranking& r, const std::string& tag = "t") {
    qlm::Run run;
    run.tag = tag;
    run.set("q", r);
    return run;
}

std::vector<std::string> order(const qlm::Run& run, const std::string& qid = "q") {
    std::vector<std::string> out;
    for (const auto& d : run.queries.at(qid)) {
        out.push_back(d.doc_id);
    }
    return out;
}

std::vector<std::string> doc_ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back("d" + std::to_string(i));
    }
    return out;
}

// Runs over overlapping random subsets of one document pool, with integer
// scores so ties occur.
std::pair<qlm::Run, qlm::Run> random_pair(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> size(1, 12);
    std::uniform_int_distribution<int> score(-5, 5);
    qlm::Run a;
    qlm::Run b;
    a.tag = "a";
    b.tag = "b";
    for (int q = 0; q < 3; ++q) {
        for (Run* run : {&a, &b}) {
            auto pool = doc_ids(15);
            std::shuffle(pool.begin(), pool.end(), rng);
            pool.resize(size(rng));
            Ranking r;
            for (auto& id : pool) {
                r.push_back({id, static_cast<double>(score(rng))});
            }
            run->set("q" + std::to_string(q), std::move(r));
        }
    }
    return {a, b};
}

}  // namespace

TEST(MinMax, Examples) {
    EXPECT_EQ(minmax_normalize(single({{"d1", 10}, {"d2", 5}, {"d3", 0}})),
              single({{"d1", 1.0}, {"d2", 0.5}, {"d3", 0.0}}));
    EXPECT_EQ(minmax_normalize(single({{"d1", 3}, {"d2", 3}})), single({{"d1", 0.0}, {"d2", 0.0}}));
    EXPECT_EQ(minmax_normalize(single({{"d1", -1}, {"d2", -2}, {"d3", -3}})),
              single({{"d1", 1.0}, {"d2", 0.5}, {"d3", 0.0}}));
}

TEST(MinMax, PreservesOrderAndRange) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const auto [a, b] = random_pair(rng);
        const auto n = minmax_normalize(a);
        for (const auto& [qid, ranking] : a.queries) {
            EXPECT_EQ(order(n, qid), order(a, qid));
            for (const auto& d : n.queries.at(qid)) {
                EXPECT_GE(d.score, 0.0);
                EXPECT_LE(d.score, 1.0);
            }
        }
    }
}

TEST(Interpolate, WorkedExample) {
    const auto a = single({{"d1", 10}, {"d2", 5}, {"d3", 0}});
    const auto b = single({{"d1", -2}, {"d2", -1}, {"d3", -3}});
    const auto fused = interpolate(a, b, {0.2}, "fused");
    EXPECT_EQ(fused, single({{"d2", 0.9}, {"d1", 0.6}, {"d3", 0.0}}, "fused"));
}

TEST(Interpolate, MissingDocumentsScoreZero) {
    const auto a = single({{"d1", 2}, {"d2", 0}});
    const auto b = single({{"d3", 5}, {"d2", 1}});
    const auto fused = interpolate(a, b, {0.5}, "f");
    EXPECT_EQ(fused, single({{"d1", 0.5}, {"d3", 0.5}, {"d2", 0.0}}, "f"));
}

TEST(Interpolate, QueriesFromEitherRunAppear) {
    qlm::Run a;
    a.set("q1", {{"d1", 1}});
    qlm::Run b;
    b.set("q2", {{"d2", 1}});
    const auto fused = interpolate(a, b, {0.3}, "f");
    EXPECT_EQ(fused.queries.size(), 2u);
}

TEST(Interpolate, Properties) {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> alpha_dist(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto [a, b] = random_pair(rng);
        const double alpha = alpha_dist(rng);
        const auto fused = interpolate(a, b, {alpha}, "f");
        for (const auto& [qid, ranking] : fused.queries) {
            // Union completeness.
            std::set<std::string> expected;
            for (const qlm::Run* run : {&a, &b}) {
                for (const auto& d : run->queries.at(qid)) {
                    expected.insert(d.doc_id);
                }
            }
            const auto got = order(fused, qid);
            EXPECT_EQ(got.size(), expected.size());
            EXPECT_EQ(std::set<std::string>(got.begin(), got.end()), expected);
        }
        // Symmetry: (b, a, 1 - alpha) scores every document like (a, b, alpha)
        // up to rounding in the last bits.
        const auto ab = interpolate(a, b, {0.25}, "f");
        const auto ba = interpolate(b, a, {0.75}, "f");
        for (const auto& [qid, ranking] : ab.queries) {
            std::map<std::string, double> mirrored;
            for (const auto& d : ba.queries.at(qid)) {
                mirrored[d.doc_id] = d.score;
            }
            ASSERT_EQ(mirrored.size(), ranking.size());
            for (const auto& d : ranking) {
                EXPECT_NEAR(mirrored.at(d.doc_id), d.score, 1e-12) << qid << " " << d.doc_id;
            }
        }
        // Affine invariance: scaling and shifting a leaves fused orders alone.
        qlm::Run scaled;
        scaled.tag = a.tag;
        for (const auto& [qid, ranking] : a.queries) {
            Ranking r;
            for (const auto& d : ranking) {
                r.push_back({d.doc_id, 4.0 * d.score + 17.0});
            }
            scaled.set(qid, r);
        }
        EXPECT_EQ(interpolate(scaled, b, {alpha}, "f"), fused);
    }
}

TEST(Interpolate, EndpointIdentities) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const auto [a, b] = random_pair(rng);
        const auto at_one = interpolate(a, b, {1.0}, "f");
        const auto at_zero = interpolate(a, b, {0.0}, "f");
        for (const auto& [qid, ranking] : a.queries) {
            // The prefix of the fused list holds run a's documents in run a's
            // order, unless a normalized score is 0 and ties with the
            // documents a never saw.
            const auto fused = order(at_one, qid);
            const auto na = minmax_normalize(a);
            std::vector<std::string> positive;
            for (const auto& d : na.queries.at(qid)) {
                if (d.score > 0.0) {
                    positive.push_back(d.doc_id);
                }
            }
            EXPECT_EQ(std::vector<std::string>(fused.begin(), fused.begin() + static_cast<long>(positive.size())),
                      positive);
            EXPECT_EQ(at_one.queries.at(qid).front().score, positive.empty() ? 0.0 : 1.0);
        }
        EXPECT_EQ(at_one, interpolate(b, a, {0.0}, "f"));
        EXPECT_EQ(at_zero, interpolate(b, a, {1.0}, "f"));
    }
}

TEST(Interpolate, RejectsAlphaOutsideUnitInterval) {
    const auto a = single({{"d1", 1}});
    EXPECT_THROW(interpolate(a, a, {1.5}, "f"), UsageError);
    EXPECT_THROW(interpolate(a, a, {-0.1}, "f"), UsageError);
}

TEST(Truncate, KeepsPrefix) {
    std::mt19937_64 rng(24);
    const auto run = single(qt::random_ranking(rng, doc_ids(150), 0, 1));
    const auto cut = truncate(run, 100);
    const auto full = order(run);
    EXPECT_EQ(order(cut), std::vector<std::string>(full.begin(), full.begin() + 100));
    const auto small = single(qt::random_ranking(rng, doc_ids(30), 0, 1));
    EXPECT_EQ(truncate(small, 100), small);
    EXPECT_EQ(order(truncate(run, 1)), std::vector<std::string>{full.front()});
    EXPECT_THROW(truncate(run, 0), UsageError);
}

TEST(Sweep, RowsEqualInterpolateThenEvaluate) {
    std::mt19937_64 rng(25);
    const auto vocab = qt::make_vocabulary(5);
    const auto queries = qt::random_queries(rng, 3, vocab, 1, 2);
    std::vector<Document> docs;
    for (const auto& id : doc_ids(15)) {
        docs.push_back({id, "", "x"});
    }
    const auto qrels = qt::random_qrels(rng, queries, docs, 8, 3);
    for (int trial = 0; trial < 20; ++trial) {
        auto [a, b] = random_pair(rng);
        const auto alphas = default_sweep_alphas();
        const auto rows = sweep_alpha(a, b, alphas, qrels, 10);
        ASSERT_EQ(rows.size(), 11u);
        EXPECT_EQ(rows[2].alpha, 0.2);
        for (const auto& row : rows) {
            EXPECT_EQ(row.ndcg, ndcg_at_k(interpolate(a, b, {row.alpha}, "sweep"), qrels, 10).mean);
        }
        // Identical runs give the same nDCG at every alpha.
        const auto same = sweep_alpha(a, a, alphas, qrels, 10);
        for (const auto& row : same) {
            EXPECT_EQ(row.ndcg, same.front().ndcg);
        }
    }
}

TEST(Sweep, FormatsTwoColumnTable) {
    const std::vector<SweepRow> rows = {{0.0, 0.5}, {0.1, 0.25}};
    EXPECT_EQ(format_sweep(rows), "alpha\tndcg\n0\t0.5\n0.1\t0.25\n");
}
