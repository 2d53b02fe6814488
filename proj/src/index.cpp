#include "qlm/index.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>

#include <fmt/format.h>

#include "qlm/error.hpp"

namespace qlm {

namespace {

constexpr std::string_view kMagic = "QLMINDEX";
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "index files are little-endian");

class Writer {
  public:
    template <typename T>
    void put(T value) {
        char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        buf_.append(bytes, sizeof(T));
    }

    void put_string(std::string_view s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }

    void put_raw(std::string_view s) { buf_.append(s); }

    [[nodiscard]] const std::string& bytes() const { return buf_; }

  private:
    std::string buf_;
};

class Reader {
  public:
    Reader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string get_string() {
        auto len = get<std::uint32_t>();
        need(len);
        std::string s(data_.substr(pos_, len));
        pos_ += len;
        return s;
    }

    std::string_view get_raw(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    [[nodiscard]] bool at_end() const { return pos_ == data_.size(); }

  private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw DataError(fmt::format("{}: truncated index file", source_));
        }
    }

    std::string_view data_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

InvertedIndex InvertedIndex::build(const std::vector<Document>& docs, const Analyzer& analyzer) {
    if (docs.empty()) {
        throw DataError("cannot build an index over an empty collection");
    }
    InvertedIndex index;
    index.analyzer_options_ = analyzer.options();
    index.doc_ids_.reserve(docs.size());
    index.doc_lens_.reserve(docs.size());

    std::unordered_map<std::string, std::uint32_t> counts;
    for (std::uint32_t ordinal = 0; ordinal < docs.size(); ++ordinal) {
        const auto& doc = docs[ordinal];
        if (!index.ordinals_.emplace(doc.id, ordinal).second) {
            throw DataError(fmt::format("duplicate document id {}", doc.id));
        }
        index.doc_ids_.push_back(doc.id);

        auto tokens = analyzer.analyze(doc.title + " " + doc.body);
        index.doc_lens_.push_back(static_cast<std::uint32_t>(tokens.size()));
        index.total_terms_ += tokens.size();

        counts.clear();
        for (auto& tok : tokens) {
            ++counts[std::move(tok)];
        }
        for (auto& [term, tf] : counts) {
            auto& stats = index.terms_[term];
            stats.cf += tf;
            stats.postings.push_back({ordinal, tf});
        }
    }
    index.avgdl_ = static_cast<double>(index.total_terms_) / static_cast<double>(docs.size());
    return index;
}

std::optional<std::uint32_t> InvertedIndex::ordinal(std::string_view doc_id) const {
    auto it = ordinals_.find(doc_id);
    if (it == ordinals_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::uint32_t InvertedIndex::require_ordinal(std::string_view doc_id) const {
    auto ord = ordinal(doc_id);
    if (!ord) {
        throw DataError(fmt::format("document {} is not in the index", doc_id));
    }
    return *ord;
}

const TermStats* InvertedIndex::term(std::string_view term) const {
    auto it = terms_.find(term);
    return it == terms_.end() ? nullptr : &it->second;
}

std::uint64_t InvertedIndex::cf(std::string_view t) const {
    const auto* stats = term(t);
    return stats == nullptr ? 0 : stats->cf;
}

std::uint32_t InvertedIndex::df(std::string_view t) const {
    const auto* stats = term(t);
    return stats == nullptr ? 0 : static_cast<std::uint32_t>(stats->postings.size());
}

std::uint32_t InvertedIndex::tf(std::string_view t, std::uint32_t ordinal) const {
    const auto* stats = term(t);
    if (stats == nullptr) {
        return 0;
    }
    auto it = std::lower_bound(stats->postings.begin(), stats->postings.end(), ordinal,
                               [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    return (it != stats->postings.end() && it->doc == ordinal) ? it->tf : 0;
}

void InvertedIndex::check_invariants() const {
    if (doc_ids_.empty() || doc_ids_.size() != doc_lens_.size() || ordinals_.size() != doc_ids_.size()) {
        throw DataError("index document tables are inconsistent");
    }
    std::uint64_t len_sum = 0;
    for (auto len : doc_lens_) {
        len_sum += len;
    }
    if (len_sum != total_terms_) {
        throw DataError("sum of document lengths differs from total_terms");
    }
    std::vector<std::uint64_t> per_doc(doc_ids_.size(), 0);
    std::uint64_t cf_sum = 0;
    for (const auto& [t, stats] : terms_) {
        std::uint64_t tf_sum = 0;
        for (std::size_t i = 0; i < stats.postings.size(); ++i) {
            const auto& p = stats.postings[i];
            if (p.doc >= doc_ids_.size() || p.tf == 0 || (i > 0 && stats.postings[i - 1].doc >= p.doc)) {
                throw DataError(fmt::format("malformed postings for term '{}'", t));
            }
            tf_sum += p.tf;
            per_doc[p.doc] += p.tf;
        }
        if (tf_sum != stats.cf) {
            throw DataError(fmt::format("collection frequency mismatch for term '{}'", t));
        }
        cf_sum += stats.cf;
    }
    if (cf_sum != total_terms_) {
        throw DataError("sum of collection frequencies differs from total_terms");
    }
    for (std::size_t d = 0; d < per_doc.size(); ++d) {
        if (per_doc[d] != doc_lens_[d]) {
            throw DataError(fmt::format("postings disagree with the length of document {}", doc_ids_[d]));
        }
    }
    if (avgdl_ != static_cast<double>(total_terms_) / static_cast<double>(doc_ids_.size())) {
        throw DataError("avgdl differs from total_terms / N");
    }
}

void InvertedIndex::save(const std::filesystem::path& path) const {
    Writer w;
    w.put_raw(kMagic);
    w.put<std::uint32_t>(kFormatVersion);

    w.put<std::uint8_t>(analyzer_options_.lowercase ? 1 : 0);
    w.put<std::uint8_t>(analyzer_options_.stem ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(analyzer_options_.stopwords.size()));
    for (const auto& s : analyzer_options_.stopwords) {
        w.put_string(s);
    }

    w.put<std::uint32_t>(doc_count());
    for (std::uint32_t d = 0; d < doc_count(); ++d) {
        w.put_string(doc_ids_[d]);
        w.put<std::uint32_t>(doc_lens_[d]);
    }
    w.put<std::uint64_t>(total_terms_);
    w.put<double>(avgdl_);

    // Sorted so identical indexes serialize to identical bytes.
    std::vector<const decltype(terms_)::value_type*> sorted;
    sorted.reserve(terms_.size());
    for (const auto& entry : terms_) {
        sorted.push_back(&entry);
    }
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });

    w.put<std::uint32_t>(static_cast<std::uint32_t>(sorted.size()));
    for (const auto* entry : sorted) {
        w.put_string(entry->first);
        w.put<std::uint64_t>(entry->second.cf);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(entry->second.postings.size()));
        for (const auto& p : entry->second.postings) {
            w.put<std::uint32_t>(p.doc);
            w.put<std::uint32_t>(p.tf);
        }
    }
    write_file_atomic(path, w.bytes());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    Reader r(data, path.string());
    if (r.get_raw(kMagic.size()) != kMagic) {
        throw DataError(fmt::format("{}: not an index file", path.string()));
    }
    auto version = r.get<std::uint32_t>();
    if (version != kFormatVersion) {
        throw DataError(fmt::format("{}: unsupported index format version {}", path.string(), version));
    }

    InvertedIndex index;
    index.analyzer_options_.lowercase = r.get<std::uint8_t>() != 0;
    index.analyzer_options_.stem = r.get<std::uint8_t>() != 0;
    auto n_stop = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_stop; ++i) {
        index.analyzer_options_.stopwords.insert(r.get_string());
    }

    auto n_docs = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < n_docs; ++d) {
        auto id = r.get_string();
        if (!index.ordinals_.emplace(id, d).second) {
            throw DataError(fmt::format("{}: duplicate document id {}", path.string(), id));
        }
        index.doc_ids_.push_back(std::move(id));
        index.doc_lens_.push_back(r.get<std::uint32_t>());
    }
    index.total_terms_ = r.get<std::uint64_t>();
    index.avgdl_ = r.get<double>();

    auto n_terms = r.get<std::uint32_t>();
    index.terms_.reserve(n_terms);
    for (std::uint32_t i = 0; i < n_terms; ++i) {
        auto t = r.get_string();
        TermStats stats;
        stats.cf = r.get<std::uint64_t>();
        auto n_postings = r.get<std::uint32_t>();
        stats.postings.reserve(n_postings);
        for (std::uint32_t j = 0; j < n_postings; ++j) {
            Posting p;
            p.doc = r.get<std::uint32_t>();
            p.tf = r.get<std::uint32_t>();
            stats.postings.push_back(p);
        }
        index.terms_.emplace(std::move(t), std::move(stats));
    }
    if (!r.at_end()) {
        throw DataError(fmt::format("{}: trailing bytes after index data", path.string()));
    }
    index.check_invariants();
    return index;
}

}  // namespace qlm
