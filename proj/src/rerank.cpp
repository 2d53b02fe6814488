#include "qlm/rerank.hpp"

#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qlm/error.hpp"
#include "qlm/fusion.hpp"
#include "qlm/parallel.hpp"

namespace qlm {

ErrorPolicy parse_error_policy(std::string_view name) {
    if (name == "fail" || name == "fail-query") {
        return ErrorPolicy::fail_query;
    }
    if (name == "floor" || name == "skip") {
        return ErrorPolicy::floor;
    }
    throw UsageError(fmt::format("unknown error policy '{}' (expected fail or floor)", name));
}

std::string PromptSpec::render(const Document& doc, std::size_t doc_max_chars) const {
    return is_fewshot() ? render_fewshot(prompt, fewshot, doc, doc_max_chars)
                        : render_prompt(prompt, doc, doc_max_chars);
}

std::optional<double> LikelihoodCache::find(const Key& key) {
    std::lock_guard lock(mutex_);
    auto it = scores_.find(key);
    if (it == scores_.end()) {
        ++misses_;
        return std::nullopt;
    }
    ++hits_;
    return it->second;
}

void LikelihoodCache::insert(Key key, double score) {
    std::lock_guard lock(mutex_);
    scores_.emplace(std::move(key), score);
}

std::size_t LikelihoodCache::size() const {
    std::lock_guard lock(mutex_);
    return scores_.size();
}

std::map<LikelihoodCache::Key, double> LikelihoodCache::snapshot() const {
    std::lock_guard lock(mutex_);
    return scores_;
}

Reranker::Reranker(LikelihoodProvider& provider, PromptSpec prompt, RerankOptions options, LikelihoodCache* cache)
    : provider_(provider), prompt_(std::move(prompt)), options_(options), cache_(cache) {
    prompt_.prompt.validate();
    if (prompt_.is_fewshot()) {
        validate_fewshot(prompt_.fewshot);
    }
    if (options_.depth < 1) {
        throw UsageError("rerank depth must be at least 1");
    }
    if (options_.doc_max_chars < 1) {
        throw UsageError("doc_max_chars must be at least 1");
    }
    fingerprint_ = prompt_fingerprint(prompt_.prompt, prompt_.fewshot, options_.doc_max_chars);
}

std::vector<double> Reranker::score_jobs(const std::vector<Job>& jobs) {
    const std::size_t n = jobs.size();
    std::vector<double> scores(n, 0.0);
    std::vector<std::uint8_t> cached(n, 0);
    std::vector<std::uint8_t> failed(n, 0);
    std::vector<PromptRecord> records(prompt_log_ != nullptr ? n : 0);

    parallel_for(n, options_.concurrency, [&](std::size_t i) {
        const auto& query = *jobs[i].query;
        const auto& doc = *jobs[i].doc;
        LikelihoodCache::Key key{fingerprint_, doc.id, query.id};
        std::optional<double> hit;
        if (cache_ != nullptr) {
            hit = cache_->find(key);
        }
        if (hit && prompt_log_ == nullptr) {
            scores[i] = *hit;
            cached[i] = 1;
            return;
        }
        auto request = make_request(prompt_.render(doc, options_.doc_max_chars), query.text);
        if (prompt_log_ != nullptr) {
            records[i] = {query.id, doc.id, request};
        }
        if (hit) {
            scores[i] = *hit;
            cached[i] = 1;
            return;
        }
        try {
            auto result = provider_.loglikelihood(request);
            result.validate();
            scores[i] = score_query_likelihood(result);
        } catch (const std::exception& e) {
            const bool provider_side = dynamic_cast<const ProviderError*>(&e) != nullptr ||
                                       dynamic_cast<const DataError*>(&e) != nullptr;
            if (options_.on_error == ErrorPolicy::fail_query || !provider_side) {
                throw;
            }
            spdlog::warn("query {} doc {}: provider failed ({}); scoring {}", query.id, doc.id, e.what(),
                         options_.floor_score);
            scores[i] = options_.floor_score;
            failed[i] = 1;
            return;
        }
        if (cache_ != nullptr) {
            cache_->insert(std::move(key), scores[i]);
        }
    });

    for (std::size_t i = 0; i < n; ++i) {
        ++stats_.scored_pairs;
        if (cached[i] != 0) {
            ++stats_.cache_hits;
        } else {
            ++stats_.provider_requests;
        }
        stats_.failures += failed[i];
    }
    if (prompt_log_ != nullptr) {
        for (auto& r : records) {
            prompt_log_->push_back(std::move(r));
        }
    }
    return scores;
}

Ranking Reranker::rerank(const Query& query, const Ranking& candidates, const DocLookup& docs) {
    std::vector<Job> jobs;
    jobs.reserve(candidates.size());
    for (const auto& c : candidates) {
        jobs.push_back({&query, &docs.at(c.doc_id)});
    }
    auto scores = score_jobs(jobs);
    Ranking out;
    out.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out.push_back({candidates[i].doc_id, scores[i]});
    }
    sort_ranking(out);
    return out;
}

Run Reranker::rerank_run(const Run& first_stage, const std::vector<Query>& queries, const DocLookup& docs,
                         std::string tag) {
    std::unordered_map<std::string_view, const Query*> by_id;
    for (const auto& q : queries) {
        by_id.emplace(q.id, &q);
    }
    const Run candidates = truncate(first_stage, options_.depth);

    std::vector<Job> jobs;
    std::vector<std::pair<std::string_view, std::string_view>> slots;  // (query id, doc id)
    for (const auto& [qid, ranking] : candidates.queries) {
        auto it = by_id.find(qid);
        if (it == by_id.end()) {
            throw DataError(fmt::format("run query {} has no query text", qid));
        }
        for (const auto& c : ranking) {
            jobs.push_back({it->second, &docs.at(c.doc_id)});
            slots.emplace_back(qid, c.doc_id);
        }
    }
    auto scores = score_jobs(jobs);

    std::map<std::string, Ranking, std::less<>> lists;
    for (const auto& [qid, ranking] : candidates.queries) {
        lists[qid];
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        lists.find(slots[i].first)->second.push_back({std::string(slots[i].second), scores[i]});
    }
    Run out;
    out.tag = std::move(tag);
    for (auto& [qid, ranking] : lists) {
        out.set(qid, std::move(ranking));
    }
    return out;
}

}  // namespace qlm
