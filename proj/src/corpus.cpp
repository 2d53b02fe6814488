#include "qlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "qlm/error.hpp"

namespace qlm {

namespace {

using json = nlohmann::json;

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
        }
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
        }
        if (i > start) {
            fields.push_back(line.substr(start, i - start));
        }
    }
    return fields;
}

// BEIR ids are strings, but a few converted datasets carry numeric ids.
std::string id_field(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw DataError(fmt::format("{}: missing \"{}\"", where, key));
    }
    if (it->is_string()) {
        return it->get<std::string>();
    }
    if (it->is_number_integer()) {
        return it->dump();
    }
    throw DataError(fmt::format("{}: \"{}\" must be a string", where, key));
}

std::string text_field(const json& obj, const char* key, const std::string& where, bool required) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) {
            throw DataError(fmt::format("{}: missing \"{}\"", where, key));
        }
        return {};
    }
    if (!it->is_string()) {
        throw DataError(fmt::format("{}: \"{}\" must be a string", where, key));
    }
    return it->get<std::string>();
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(fmt::format("cannot open {}", path.string()));
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) {
            continue;
        }
        std::string where = fmt::format("{}:{}", path.string(), line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(fmt::format("{}: malformed JSON ({})", where, e.what()));
        }
        if (!obj.is_object()) {
            throw DataError(fmt::format("{}: expected a JSON object", where));
        }
        fn(obj, where);
    }
}

}  // namespace

void QrelSet::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) {
        throw DataError(fmt::format("negative relevance grade {} for ({}, {})", grade, query_id, doc_id));
    }
    judgments_[query_id][doc_id] = grade;
}

std::optional<int> QrelSet::grade(std::string_view query_id, std::string_view doc_id) const {
    const auto* docs = judgments_for(query_id);
    if (docs == nullptr) {
        return std::nullopt;
    }
    auto it = docs->find(doc_id);
    if (it == docs->end()) {
        return std::nullopt;
    }
    return it->second;
}

const std::map<std::string, int, std::less<>>* QrelSet::judgments_for(std::string_view query_id) const {
    auto it = judgments_.find(query_id);
    return it == judgments_.end() ? nullptr : &it->second;
}

std::size_t QrelSet::size() const {
    std::size_t n = 0;
    for (const auto& [qid, docs] : judgments_) {
        n += docs.size();
    }
    return n;
}

bool ranks_before(const ScoredDoc& lhs, const ScoredDoc& rhs) {
    if (lhs.score != rhs.score) {
        return lhs.score > rhs.score;
    }
    return lhs.doc_id < rhs.doc_id;
}

void sort_ranking(Ranking& ranking) {
    std::sort(ranking.begin(), ranking.end(), ranks_before);
}

void Run::set(const std::string& query_id, Ranking ranking) {
    sort_ranking(ranking);
    std::unordered_set<std::string_view> seen;
    for (const auto& entry : ranking) {
        if (!seen.insert(entry.doc_id).second) {
            throw DataError(fmt::format("query {}: duplicate doc id {}", query_id, entry.doc_id));
        }
    }
    queries[query_id] = std::move(ranking);
}

const Ranking* Run::find(std::string_view query_id) const {
    auto it = queries.find(query_id);
    return it == queries.end() ? nullptr : &it->second;
}

void validate_run(const Run& run) {
    for (const auto& [qid, ranking] : run.queries) {
        std::unordered_set<std::string_view> seen;
        for (std::size_t i = 0; i < ranking.size(); ++i) {
            if (!seen.insert(ranking[i].doc_id).second) {
                throw DataError(fmt::format("query {}: duplicate doc id {}", qid, ranking[i].doc_id));
            }
            if (i > 0 && !ranks_before(ranking[i - 1], ranking[i])) {
                throw DataError(fmt::format("query {}: ranking out of order at position {}", qid, i + 1));
            }
        }
    }
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
    std::vector<Document> docs;
    std::unordered_set<std::string> ids;
    for_each_json_line(path, [&](const json& obj, const std::string& where) {
        Document doc;
        doc.id = id_field(obj, "_id", where);
        if (doc.id.empty()) {
            throw DataError(fmt::format("{}: empty \"_id\"", where));
        }
        doc.title = text_field(obj, "title", where, false);
        doc.body = text_field(obj, "text", where, true);
        if (!ids.insert(doc.id).second) {
            throw DataError(fmt::format("{}: duplicate document id {}", where, doc.id));
        }
        docs.push_back(std::move(doc));
    });
    return docs;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
    std::vector<Query> queries;
    std::unordered_set<std::string> ids;
    for_each_json_line(path, [&](const json& obj, const std::string& where) {
        Query query;
        query.id = id_field(obj, "_id", where);
        if (query.id.empty()) {
            throw DataError(fmt::format("{}: empty \"_id\"", where));
        }
        query.text = text_field(obj, "text", where, true);
        if (is_blank(query.text)) {
            throw DataError(fmt::format("{}: query {} has empty text", where, query.id));
        }
        if (!ids.insert(query.id).second) {
            throw DataError(fmt::format("{}: duplicate query id {}", where, query.id));
        }
        queries.push_back(std::move(query));
    });
    return queries;
}

QrelSet load_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(fmt::format("cannot open {}", path.string()));
    }
    QrelSet qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) {
            continue;
        }
        auto fields = split_whitespace(line);
        if (line_no == 1 && fields.size() == 3 && fields[0] == "query-id") {
            continue;
        }
        // TREC qrels carry an iteration column: qid 0 docid grade.
        if (fields.size() == 4) {
            fields.erase(fields.begin() + 1);
        }
        if (fields.size() != 3) {
            throw DataError(fmt::format("{}:{}: expected 3 columns, got {}", path.string(), line_no, fields.size()));
        }
        int grade = 0;
        auto grade_text = fields[2];
        auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
        if (ec != std::errc() || ptr != grade_text.data() + grade_text.size()) {
            throw DataError(fmt::format("{}:{}: non-integer grade '{}'", path.string(), line_no, grade_text));
        }
        if (grade < 0) {
            throw DataError(fmt::format("{}:{}: negative grade {}", path.string(), line_no, grade));
        }
        std::string qid(fields[0]);
        std::string did(fields[1]);
        if (auto prev = qrels.grade(qid, did)) {
            spdlog::warn("{}:{}: duplicate judgment ({}, {}), {} replaces {}", path.string(), line_no, qid, did, grade,
                         *prev);
        }
        qrels.set(qid, did, grade);
    }
    return qrels;
}

std::string format_score(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) {
        throw DataError("cannot format score");
    }
    return {buf, ptr};
}

std::string format_run(const Run& run) {
    const std::string tag = run.tag.empty() ? "qlm" : run.tag;
    if (std::any_of(tag.begin(), tag.end(), [](unsigned char c) { return std::isspace(c) != 0; })) {
        throw DataError(fmt::format("run tag '{}' contains whitespace", tag));
    }
    std::string out;
    for (const auto& [qid, ranking] : run.queries) {
        Ranking sorted = ranking;
        sort_ranking(sorted);
        std::size_t rank = 1;
        for (const auto& entry : sorted) {
            out += fmt::format("{} Q0 {} {} {} {}\n", qid, entry.doc_id, rank++, format_score(entry.score), tag);
        }
    }
    return out;
}

Run parse_run(std::string_view text, std::string_view source_name) {
    Run run;
    std::map<std::string, Ranking, std::less<>> lists;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (is_blank(line)) {
            continue;
        }
        auto fields = split_whitespace(line);
        if (fields.size() != 6) {
            throw DataError(fmt::format("{}:{}: expected 6 columns, got {}", source_name, line_no, fields.size()));
        }
        double score = 0.0;
        auto score_text = fields[4];
        auto [ptr, ec] = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
        if (ec != std::errc() || ptr != score_text.data() + score_text.size() || !std::isfinite(score)) {
            throw DataError(fmt::format("{}:{}: non-numeric score '{}'", source_name, line_no, score_text));
        }
        if (run.tag.empty()) {
            run.tag = std::string(fields[5]);
        }
        lists[std::string(fields[0])].push_back({std::string(fields[2]), score});
    }
    for (auto& [qid, ranking] : lists) {
        run.set(qid, std::move(ranking));
    }
    return run;
}

Run read_run(const std::filesystem::path& path) {
    return parse_run(read_file(path), path.string());
}

void write_run(const Run& run, const std::filesystem::path& path) {
    write_file_atomic(path, format_run(run));
}

DocLookup::DocLookup(const std::vector<Document>& docs) {
    by_id_.reserve(docs.size());
    for (const auto& doc : docs) {
        by_id_.emplace(doc.id, &doc);
    }
}

const Document* DocLookup::find(std::string_view id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : it->second;
}

const Document& DocLookup::at(std::string_view id) const {
    const auto* doc = find(id);
    if (doc == nullptr) {
        throw DataError(fmt::format("unknown document id {}", id));
    }
    return *doc;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError(fmt::format("cannot write {}", tmp.string()));
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            throw DataError(fmt::format("write failed for {}", tmp.string()));
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw DataError(fmt::format("cannot move {} into place: {}", path.string(), ec.message()));
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(fmt::format("cannot open {}", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace qlm
