#include "support.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <sys/wait.h>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

namespace qlm::testing {

std::vector<std::string> make_vocabulary(std::size_t size) {
    std::vector<std::string> vocab;
    for (std::size_t i = 0; i < size; ++i) {
        std::string word = "w";
        std::size_t n = i;
        do {
            word += static_cast<char>('a' + n % 26);
            n /= 26;
        } while (n > 0);
        vocab.push_back(word);
    }
    return vocab;
}

namespace {

std::string random_text(std::mt19937_64& rng, const std::vector<std::string>& vocab, std::size_t min_len,
                        std::size_t max_len) {
    std::uniform_int_distribution<std::size_t> len(min_len, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::string text;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            text += ' ';
        }
        text += vocab[pick(rng)];
    }
    return text;
}

}  // namespace

std::vector<Document> random_corpus(std::mt19937_64& rng, std::size_t docs, const std::vector<std::string>& vocab,
                                    std::size_t min_len, std::size_t max_len) {
    std::vector<Document> out;
    for (std::size_t i = 0; i < docs; ++i) {
        out.push_back({"d" + std::to_string(i), random_text(rng, vocab, 1, 2),
                       random_text(rng, vocab, min_len, max_len)});
    }
    return out;
}

std::vector<Query> random_queries(std::mt19937_64& rng, std::size_t count, const std::vector<std::string>& vocab,
                                  std::size_t min_len, std::size_t max_len) {
    std::vector<Query> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back({"q" + std::to_string(i), random_text(rng, vocab, min_len, max_len)});
    }
    return out;
}

QrelSet random_qrels(std::mt19937_64& rng, const std::vector<Query>& queries, const std::vector<Document>& docs,
                     std::size_t judged_per_query, int max_grade) {
    QrelSet qrels;
    std::uniform_int_distribution<int> grade(0, max_grade);
    for (const auto& q : queries) {
        std::vector<std::size_t> order(docs.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < std::min(judged_per_query, order.size()); ++i) {
            qrels.set(q.id, docs[order[i]].id, grade(rng));
        }
    }
    return qrels;
}

Ranking random_ranking(std::mt19937_64& rng, std::vector<std::string> doc_ids, double lo, double hi) {
    std::shuffle(doc_ids.begin(), doc_ids.end(), rng);
    std::uniform_real_distribution<double> score(lo, hi);
    Ranking ranking;
    for (auto& id : doc_ids) {
        ranking.push_back({std::move(id), score(rng)});
    }
    return ranking;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) != 0) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) {
        words.push_back(cur);
    }
    return words;
}

std::vector<RawDoc> raw_docs(const std::vector<Document>& docs) {
    std::vector<RawDoc> out;
    for (const auto& d : docs) {
        out.push_back({d.id, split_words(d.title + " " + d.body)});
    }
    return out;
}

namespace {

double count_in(const std::vector<std::string>& tokens, const std::string& term) {
    return static_cast<double>(std::count(tokens.begin(), tokens.end(), term));
}

}  // namespace

double oracle_bm25(const std::vector<RawDoc>& docs, const std::vector<std::string>& query, std::size_t doc,
                   double k1, double b) {
    const double n = static_cast<double>(docs.size());
    double total_len = 0.0;
    for (const auto& d : docs) {
        total_len += static_cast<double>(d.tokens.size());
    }
    const double avgdl = total_len / n;
    const double dl = static_cast<double>(docs[doc].tokens.size());
    double score = 0.0;
    for (const auto& term : query) {
        double df = 0.0;
        for (const auto& d : docs) {
            df += count_in(d.tokens, term) > 0.0 ? 1.0 : 0.0;
        }
        const double tf = count_in(docs[doc].tokens, term);
        if (tf == 0.0) {
            continue;
        }
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        score += idf * tf / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    return score;
}

double oracle_dirichlet(const std::vector<RawDoc>& docs, const std::vector<std::string>& query, std::size_t doc,
                        double mu) {
    double total = 0.0;
    for (const auto& d : docs) {
        total += static_cast<double>(d.tokens.size());
    }
    const double dl = static_cast<double>(docs[doc].tokens.size());
    double score = 0.0;
    for (const auto& term : query) {
        double cf = 0.0;
        for (const auto& d : docs) {
            cf += count_in(d.tokens, term);
        }
        if (cf == 0.0) {
            continue;
        }
        const double tf = count_in(docs[doc].tokens, term);
        score += std::log((tf + mu * cf / total) / (dl + mu));
    }
    return score;
}

namespace {

double dcg(const std::vector<int>& grades, std::size_t k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
        sum += (std::pow(2.0, grades[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return sum;
}

}  // namespace

double oracle_ndcg(const std::vector<std::string>& ranking, const std::map<std::string, int>& judgments,
                   std::size_t k) {
    std::vector<int> ranked;
    for (const auto& id : ranking) {
        auto it = judgments.find(id);
        ranked.push_back(it == judgments.end() ? 0 : std::max(0, it->second));
    }
    std::vector<int> judged;
    for (const auto& [id, g] : judgments) {
        judged.push_back(std::max(0, g));
    }
    std::sort(judged.begin(), judged.end());
    double ideal = 0.0;
    do {
        ideal = std::max(ideal, dcg(judged, k));
    } while (std::next_permutation(judged.begin(), judged.end()));
    if (ideal == 0.0) {
        throw std::logic_error("oracle_ndcg needs a positive judgment");
    }
    return dcg(ranked, k) / ideal;
}

double oracle_bigram_score(const std::vector<std::string>& training, const std::string& context,
                           const std::string& continuation) {
    std::vector<std::vector<std::string>> texts;
    std::set<std::string> vocab;
    for (const auto& t : training) {
        texts.push_back(split_words(t));
        vocab.insert(texts.back().begin(), texts.back().end());
    }
    const double v_size = static_cast<double>(vocab.size());
    auto probability = [&](const std::string& prev, const std::string& next) {
        double c_prev = 0.0;
        double c_pair = 0.0;
        double ends = 0.0;
        for (const auto& text : texts) {
            for (std::size_t i = 0; i < text.size(); ++i) {
                if (text[i] != prev) {
                    continue;
                }
                c_prev += 1.0;
                if (i + 1 < text.size() && text[i + 1] == next) {
                    c_pair += 1.0;
                }
                if (i + 1 == text.size()) {
                    ends += 1.0;
                }
            }
        }
        const double numerator = vocab.count(next) != 0 ? c_pair + 1.0 : ends + 1.0;
        return numerator / (c_prev + v_size + 1.0);
    };
    const auto context_words = split_words(context);
    std::string prev = context_words.empty() ? "" : context_words.back();
    const auto words = split_words(continuation);
    double sum = 0.0;
    for (const auto& w : words) {
        sum += std::log(probability(prev, w));
        prev = w;
    }
    return sum / static_cast<double>(words.size());
}

TTestOracle oracle_paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = a[i] - b[i];
    }
    double mean = 0.0;
    for (double x : d) {
        mean += x;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : d) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(n - 1);
    TTestOracle out;
    if (var == 0.0) {
        out.p = mean == 0.0 ? 1.0 : 0.0;
        return out;
    }
    out.t = mean / std::sqrt(var / static_cast<double>(n));
    boost::math::students_t dist(static_cast<double>(n - 1));
    out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(out.t)));
    return out;
}

StubServer::StubServer(const std::string& path, Handler handler) {
    server_.Post(path, [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
        handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) {
        throw std::runtime_error("stub server could not bind a port");
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
}

StubServer::~StubServer() {
    server_.stop();
    if (thread_.joinable()) {
        thread_.join();
    }
}

std::string StubServer::url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
}

TempDir::TempDir(const std::string& prefix) {
    std::random_device rd;
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto candidate = std::filesystem::temp_directory_path() / (prefix + "-" + std::to_string(rd()));
        if (std::filesystem::create_directory(candidate)) {
            path_ = candidate;
            return;
        }
    }
    throw std::runtime_error("could not create a temp directory");
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

void write_corpus(const std::filesystem::path& path, const std::vector<Document>& docs) {
    std::ofstream out(path);
    for (const auto& d : docs) {
        out << nlohmann::json({{"_id", d.id}, {"title", d.title}, {"text", d.body}}).dump() << '\n';
    }
}

void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries) {
    std::ofstream out(path);
    for (const auto& q : queries) {
        out << nlohmann::json({{"_id", q.id}, {"text", q.text}}).dump() << '\n';
    }
}

void write_qrels(const std::filesystem::path& path, const QrelSet& qrels) {
    std::ofstream out(path);
    out << "query-id\tcorpus-id\tscore\n";
    for (const auto& [qid, judgments] : qrels.all()) {
        for (const auto& [doc, grade] : judgments) {
            out << qid << '\t' << doc << '\t' << grade << '\n';
        }
    }
}

ToyDataset write_toy_dataset(const std::filesystem::path& dir, std::uint64_t seed, std::size_t docs,
                             std::size_t queries) {
    std::mt19937_64 rng(seed);
    const auto vocab = make_vocabulary(60);
    const auto corpus = random_corpus(rng, docs, vocab, 20, 60);
    std::uniform_int_distribution<std::size_t> pick_doc(0, docs - 1);
    std::uniform_int_distribution<std::size_t> qlen(2, 4);
    std::uniform_int_distribution<int> grade(0, 1);
    std::vector<Query> qs;
    QrelSet qrels;
    for (std::size_t i = 0; i < queries; ++i) {
        const auto& source = corpus[pick_doc(rng)];
        const auto words = split_words(source.body);
        std::uniform_int_distribution<std::size_t> pick_word(0, words.size() - 1);
        std::string text;
        const std::size_t n = qlen(rng);
        for (std::size_t w = 0; w < n; ++w) {
            text += (w > 0 ? " " : "") + words[pick_word(rng)];
        }
        const std::string qid = "q" + std::to_string(i);
        qs.push_back({qid, text});
        for (int j = 0; j < 5; ++j) {
            qrels.set(qid, corpus[pick_doc(rng)].id, grade(rng));
        }
        qrels.set(qid, source.id, 2);
    }
    ToyDataset out{dir / "corpus.jsonl", dir / "queries.jsonl", dir / "qrels.tsv", dir / "catalog.json"};
    write_corpus(out.corpus, corpus);
    write_queries(out.queries, qs);
    write_qrels(out.qrels, qrels);
    nlohmann::json example = {{"document", "wa wb wc"}, {"good_question", "wa wb"}, {"bad_question", "wz"}};
    nlohmann::json catalog = nlohmann::json::array(
        {{{"model_family", "toy"}, {"dataset", "toy"}, {"body", "{doc}"}, {"suffix", ""},
          {"fewshot", nlohmann::json::array({example, example, example})}}});
    std::ofstream(out.catalog) << catalog.dump(2) << '\n';
    return out;
}

int run_command(const std::string& command) {
    const int status = std::system(command.c_str());
    if (status == -1 || !WIFEXITED(status)) {
        return -1;
    }
    return WEXITSTATUS(status);
}

}  // namespace qlm::testing
