#pragma once

// Synthetic data and brute-force reference implementations shared by the unit
// tests and the acceptance suite. The oracles work from raw token lists and
// never touch the library's index or model classes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "qlm/corpus.hpp"
#include "qlm/retrieval.hpp"

namespace qlm::testing {

/// Lowercase alphabetic words: "wa", "wb", ..., then "wba", ...
std::vector<std::string> make_vocabulary(std::size_t size);

/// Documents whose title and body are space-separated vocabulary words.
std::vector<Document> random_corpus(std::mt19937_64& rng, std::size_t docs, const std::vector<std::string>& vocab,
                                    std::size_t min_len, std::size_t max_len);

std::vector<Query> random_queries(std::mt19937_64& rng, std::size_t count, const std::vector<std::string>& vocab,
                                  std::size_t min_len, std::size_t max_len);

/// Grades 0..max_grade for a random subset of documents per query.
QrelSet random_qrels(std::mt19937_64& rng, const std::vector<Query>& queries, const std::vector<Document>& docs,
                     std::size_t judged_per_query, int max_grade);

/// A ranking over `doc_ids` (shuffled) with random scores.
Ranking random_ranking(std::mt19937_64& rng, std::vector<std::string> doc_ids, double lo, double hi);

/// Splits on anything that is not [A-Za-z0-9] and lowercases.
std::vector<std::string> split_words(const std::string& text);

/// Term counts of title + " " + body, straight from the raw text.
struct RawDoc {
    std::string id;
    std::vector<std::string> tokens;
};
std::vector<RawDoc> raw_docs(const std::vector<Document>& docs);

double oracle_bm25(const std::vector<RawDoc>& docs, const std::vector<std::string>& query, std::size_t doc,
                   double k1, double b);

double oracle_dirichlet(const std::vector<RawDoc>& docs, const std::vector<std::string>& query, std::size_t doc,
                        double mu);

/// nDCG@k with the ideal DCG found by trying every ordering of the judged
/// documents. Only practical for up to about 8 judged documents.
double oracle_ndcg(const std::vector<std::string>& ranking, const std::map<std::string, int>& judgments,
                   std::size_t k);

/// Mean log-probability of `continuation` after `context` under the add-one
/// bigram model of `training`, recounting every n-gram by linear scans.
double oracle_bigram_score(const std::vector<std::string>& training, const std::string& context,
                           const std::string& continuation);

struct TTestOracle {
    double t = 0.0;
    double p = 1.0;
};

/// Paired two-tailed t-test with the tail from Boost.Math's Student t.
TTestOracle oracle_paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

/// An HTTP server on a free local port, serving until destroyed.
class StubServer {
  public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit StubServer(const std::string& path, Handler handler);
    ~StubServer();

    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    [[nodiscard]] std::string url() const;

  private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

/// A fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& prefix);
    ~TempDir();

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

/// Input files of a synthetic collection. Every query is built from words of
/// one "source" document, which is judged 2; a few random others are judged
/// 0 or 1.
struct ToyDataset {
    std::filesystem::path corpus;
    std::filesystem::path queries;
    std::filesystem::path qrels;
    /// Catalog with one "toy"/"toy" entry whose body is just "{doc}", plus
    /// three few-shot examples.
    std::filesystem::path catalog;
};

ToyDataset write_toy_dataset(const std::filesystem::path& dir, std::uint64_t seed, std::size_t docs,
                             std::size_t queries);

/// Runs a shell command and returns its exit status.
int run_command(const std::string& command);

void write_corpus(const std::filesystem::path& path, const std::vector<Document>& docs);
void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries);
void write_qrels(const std::filesystem::path& path, const QrelSet& qrels);

}  // namespace qlm::testing
