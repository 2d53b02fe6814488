#include "qlm/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qlm/error.hpp"
#include "qlm/index.hpp"
#include "qlm/prompts.hpp"
#include "qlm/reference_lm.hpp"

namespace qlm {

namespace {

using json = nlohmann::json;

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)), ms);
}

std::string fingerprint_hex(std::uint64_t fp) {
    return fmt::format("{:016x}", fp);
}

struct CacheFile {
    std::vector<std::string> foreign_lines;
};

// Loads the entries written for `provider` into `cache`; lines written for
// other providers are kept so that saving does not drop them.
CacheFile load_cache(const fs::path& path, const std::string& provider, LikelihoodCache& cache) {
    CacheFile file;
    if (!fs::exists(path)) {
        return file;
    }
    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto entry = json::parse(line);
            if (entry.at("provider").get<std::string>() != provider) {
                file.foreign_lines.push_back(line);
                continue;
            }
            const auto fp = std::stoull(entry.at("fingerprint").get<std::string>(), nullptr, 16);
            cache.insert({fp, entry.at("doc").get<std::string>(), entry.at("query").get<std::string>()},
                         entry.at("score").get<double>());
        } catch (const std::exception& e) {
            throw DataError(fmt::format("{}:{}: bad cache entry: {}", path.string(), line_no, e.what()));
        }
    }
    return file;
}

void save_cache(const fs::path& path, const std::string& provider, const LikelihoodCache& cache,
                const CacheFile& file) {
    std::string out;
    for (const auto& line : file.foreign_lines) {
        out += line;
        out += '\n';
    }
    for (const auto& [key, score] : cache.snapshot()) {
        json entry = {{"provider", provider},
                      {"fingerprint", fingerprint_hex(std::get<0>(key))},
                      {"doc", std::get<1>(key)},
                      {"query", std::get<2>(key)},
                      {"score", score}};
        out += entry.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::pair<std::string, fs::path> split_named_run(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
        fs::path path(spec);
        return {path.stem().string(), path};
    }
    if (eq == 0 || eq + 1 == spec.size()) {
        throw UsageError(fmt::format("run spec '{}' must be name=path or a path", spec));
    }
    return {spec.substr(0, eq), fs::path(spec.substr(eq + 1))};
}

std::string_view model_name(RetrievalModel model) {
    return model == RetrievalModel::bm25 ? "bm25" : "dirichlet";
}

// Config readers. Every accessor rejects keys it does not know.
class ConfigSection {
  public:
    ConfigSection(const json& node, std::string name) : node_(node), name_(std::move(name)) {
        if (!node_.is_object()) {
            throw UsageError(fmt::format("config section {} must be an object", name_));
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        known_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end()) {
            return;
        }
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw UsageError(fmt::format("config {}.{}: {}", name_, key, e.what()));
        }
    }

    void read_path(const char* key, fs::path& out, const fs::path& base) {
        std::string s;
        read(key, s);
        if (!s.empty()) {
            fs::path p(s);
            out = p.is_absolute() ? p : base / p;
        }
    }

    [[nodiscard]] std::optional<ConfigSection> section(const char* key) {
        known_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end()) {
            return std::nullopt;
        }
        return ConfigSection(*it, name_.empty() ? std::string(key) : name_ + "." + key);
    }

    void finish() const {
        for (const auto& [key, value] : node_.items()) {
            if (known_.count(key) == 0) {
                throw UsageError(fmt::format("unknown config key {}{}{}", name_, name_.empty() ? "" : ".", key));
            }
        }
    }

  private:
    const json& node_;
    std::string name_;
    std::set<std::string, std::less<>> known_;
};

void require_file(const fs::path& path, std::string_view what) {
    if (path.empty()) {
        throw UsageError(fmt::format("no {} given", what));
    }
    if (!fs::is_regular_file(path)) {
        throw UsageError(fmt::format("{} {} does not exist", what, path.string()));
    }
}

void require_alpha(double alpha, std::string_view what) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw UsageError(fmt::format("{} must lie in [0, 1], got {}", what, alpha));
    }
}

}  // namespace

void EventLog::write(std::string_view event, json fields) const {
    if (path_.empty()) {
        return;
    }
    json line = {{"ts", utc_timestamp()}, {"event", event}};
    line.update(fields);
    std::ofstream out(path_, std::ios::app);
    if (!out) {
        throw DataError(fmt::format("cannot append to log {}", path_.string()));
    }
    out << line.dump() << '\n';
}

ProviderKind parse_provider_kind(std::string_view name) {
    if (name == "remote") {
        return ProviderKind::remote;
    }
    if (name == "bigram") {
        return ProviderKind::bigram;
    }
    if (name == "constant") {
        return ProviderKind::constant;
    }
    throw UsageError(fmt::format("unknown provider '{}' (expected remote, bigram or constant)", name));
}

std::unique_ptr<LikelihoodProvider> make_provider(const ProviderConfig& config, const std::vector<Document>& corpus) {
    switch (config.kind) {
        case ProviderKind::remote:
            return std::make_unique<RemoteProvider>(config.remote);
        case ProviderKind::constant:
            if (!std::isfinite(config.constant_logprob) || config.constant_logprob > 0.0) {
                throw UsageError(
                    fmt::format("constant logprob must be finite and non-positive, got {}", config.constant_logprob));
            }
            return std::make_unique<ConstantProvider>(config.constant_logprob);
        case ProviderKind::bigram: {
            std::vector<Document> other;
            if (!config.bigram_corpus.empty()) {
                other = load_corpus(config.bigram_corpus);
            }
            const auto& training = config.bigram_corpus.empty() ? corpus : other;
            std::vector<std::string> texts;
            texts.reserve(training.size());
            for (const auto& doc : training) {
                texts.push_back(document_text(doc, std::numeric_limits<std::size_t>::max()));
            }
            return std::make_unique<BigramProvider>(ReferenceLm::train(texts));
        }
    }
    throw UsageError("unknown provider kind");
}

PromptSpec resolve_prompt(const PromptConfig& config) {
    if (config.family.empty() || config.dataset.empty()) {
        throw UsageError("a prompt needs a model family and a dataset");
    }
    PromptCatalog loaded;
    if (!config.catalog.empty()) {
        loaded = load_catalog(config.catalog);
    }
    const PromptCatalog& catalog = config.catalog.empty() ? default_catalog() : loaded;
    PromptSpec spec;
    spec.prompt = catalog.at(config.family, config.dataset);
    if (config.fewshot) {
        const auto* examples = catalog.fewshot(config.dataset);
        if (examples == nullptr) {
            throw DataError(fmt::format("prompt catalog has no few-shot examples for dataset {}", config.dataset));
        }
        spec.fewshot = *examples;
    }
    return spec;
}

void run_index(const IndexCommand& cmd, const EventLog& log) {
    const auto docs = load_corpus(cmd.corpus);
    const auto index = InvertedIndex::build(docs, Analyzer(cmd.analyzer));
    index.save(cmd.output);
    spdlog::info("indexed {} documents ({} terms) into {}", index.doc_count(), index.vocabulary_size(),
                 cmd.output.string());
    log.write("index", {{"documents", index.doc_count()},
                        {"vocabulary", index.vocabulary_size()},
                        {"total_terms", index.total_terms()},
                        {"output", cmd.output.string()}});
}

void run_search(const SearchCommand& cmd, const EventLog& log) {
    cmd.retrieval.bm25.validate();
    cmd.retrieval.dirichlet.validate();
    const auto index = InvertedIndex::load(cmd.index);
    const auto queries = load_queries(cmd.queries);
    const std::string tag = cmd.tag.empty() ? std::string(model_name(cmd.retrieval.model)) : cmd.tag;
    const Run run = retrieve(index, queries, cmd.retrieval, tag, cmd.threads);
    write_run(run, cmd.output);
    spdlog::info("searched {} queries with {} into {}", queries.size(), tag, cmd.output.string());
    log.write("search", {{"model", model_name(cmd.retrieval.model)},
                         {"queries", queries.size()},
                         {"k", cmd.retrieval.k},
                         {"output", cmd.output.string()}});
}

RerankStats run_rerank(const RerankCommand& cmd, const EventLog& log) {
    const auto docs = load_corpus(cmd.corpus);
    const auto queries = load_queries(cmd.queries);
    const Run first_stage = read_run(cmd.run);
    const DocLookup lookup(docs);
    auto provider = make_provider(cmd.provider, docs);
    const std::string provider_name = provider->describe();

    LikelihoodCache cache;
    CacheFile cache_file;
    if (!cmd.cache.empty()) {
        cache_file = load_cache(cmd.cache, provider_name, cache);
    }
    Reranker reranker(*provider, resolve_prompt(cmd.prompt), cmd.rerank, &cache);
    std::vector<PromptRecord> prompts;
    if (!cmd.prompt_log.empty()) {
        reranker.record_prompts(&prompts);
    }

    const Run reranked = reranker.rerank_run(first_stage, queries, lookup, cmd.tag);
    const auto& stats = reranker.stats();
    json fields = {{"provider", provider_name},
                   {"family", cmd.prompt.family},
                   {"dataset", cmd.prompt.dataset},
                   {"fewshot", cmd.prompt.fewshot},
                   {"depth", cmd.rerank.depth},
                   {"scored_pairs", stats.scored_pairs},
                   {"provider_requests", stats.provider_requests},
                   {"cache_hits", stats.cache_hits},
                   {"cache_hit_rate", stats.cache_hit_rate()},
                   {"failures", stats.failures},
                   {"output", cmd.output.string()}};
    if (const auto* remote = dynamic_cast<const RemoteProvider*>(provider.get())) {
        fields["http_attempts"] = remote->attempts();
        fields["http_retries"] = remote->retries();
    }

    write_run(reranked, cmd.output);
    if (!cmd.prompt_log.empty()) {
        std::string out;
        for (const auto& r : prompts) {
            out += json({{"query_id", r.query_id},
                         {"doc_id", r.doc_id},
                         {"context", r.request.context},
                         {"continuation", r.request.continuation}})
                       .dump();
            out += '\n';
        }
        write_file_atomic(cmd.prompt_log, out);
    }
    if (!cmd.cache.empty()) {
        save_cache(cmd.cache, provider_name, cache, cache_file);
    }
    spdlog::info("re-ranked {} pairs with {} ({} provider requests, {} cache hits, {} failures)", stats.scored_pairs,
                 provider_name, stats.provider_requests, stats.cache_hits, stats.failures);
    log.write("rerank", std::move(fields));
    return stats;
}

void run_fuse(const FuseCommand& cmd, const EventLog& log) {
    cmd.params.validate();
    const Run a = read_run(cmd.run_a);
    const Run b = read_run(cmd.run_b);
    Run fused = interpolate(a, b, cmd.params, cmd.tag);
    if (cmd.depth) {
        fused = truncate(fused, *cmd.depth);
    }
    write_run(fused, cmd.output);
    spdlog::info("fused {} and {} at alpha {} into {}", cmd.run_a.string(), cmd.run_b.string(), cmd.params.alpha,
                 cmd.output.string());
    log.write("fuse", {{"alpha", cmd.params.alpha}, {"queries", fused.queries.size()}, {"output", cmd.output.string()}});
}

EvalReport run_eval(const EvalCommand& cmd, const EventLog& log) {
    const Run run = read_run(cmd.run);
    const QrelSet qrels = load_qrels(cmd.qrels);
    auto report = ndcg_at_k(run, qrels, cmd.k);
    write_file_atomic(cmd.output, format_eval_report(report));
    spdlog::info("nDCG@{} = {:.4f} over {} queries", report.k, report.mean, report.evaluated_query_count);
    log.write("eval", {{"run", cmd.run.string()},
                       {"k", report.k},
                       {"queries", report.evaluated_query_count},
                       {"mean", report.mean},
                       {"output", cmd.output.string()}});
    return report;
}

SignificanceMatrix run_sigtest(const SigtestCommand& cmd, const EventLog& log) {
    std::vector<NamedRun> runs;
    for (const auto& spec : cmd.runs) {
        auto [name, path] = split_named_run(spec);
        runs.push_back({std::move(name), read_run(path)});
    }
    const QrelSet qrels = load_qrels(cmd.qrels);
    auto matrix = significance_matrix(runs, qrels, cmd.k, cmd.level, cmd.correction);
    write_file_atomic(cmd.output, render_significance_matrix(matrix));
    log.write("sigtest", {{"runs", matrix.names},
                          {"k", matrix.k},
                          {"level", matrix.level},
                          {"correction", correction_name(matrix.correction)},
                          {"output", cmd.output.string()}});
    return matrix;
}

std::vector<SweepRow> run_sweep(const SweepCommand& cmd, const EventLog& log) {
    const Run a = read_run(cmd.run_a);
    const Run b = read_run(cmd.run_b);
    const QrelSet qrels = load_qrels(cmd.qrels);
    auto rows = sweep_alpha(a, b, cmd.alphas, qrels, cmd.k);
    write_file_atomic(cmd.output, format_sweep(rows));
    log.write("sweep", {{"points", rows.size()}, {"k", cmd.k}, {"output", cmd.output.string()}});
    return rows;
}

void PipelineConfig::validate() const {
    require_file(corpus, "corpus");
    require_file(queries, "queries");
    require_file(qrels, "qrels");
    if (!hybrid_run.empty()) {
        require_file(hybrid_run, "hybrid run");
    }
    if (!prompt.catalog.empty()) {
        require_file(prompt.catalog, "prompt catalog");
    }
    if (provider.kind == ProviderKind::bigram && !provider.bigram_corpus.empty()) {
        require_file(provider.bigram_corpus, "bigram training corpus");
    }
    if (prompt.family.empty() || prompt.dataset.empty()) {
        throw UsageError("the pipeline needs prompt.family and prompt.dataset");
    }
    if (output_dir.empty()) {
        throw UsageError("no output directory given");
    }
    retrieval.bm25.validate();
    retrieval.dirichlet.validate();
    if (retrieval.k < 1 || rerank.depth < 1 || eval_k < 1) {
        throw UsageError("retrieval k, rerank depth and eval k must be at least 1");
    }
    require_alpha(hybrid_alpha, "hybrid alpha");
    require_alpha(fusion_alpha, "fusion alpha");
    for (double a : sweep_alphas) {
        require_alpha(a, "sweep alpha");
    }
    if (!(level > 0.0 && level <= 1.0)) {
        throw UsageError(fmt::format("significance level must lie in (0, 1], got {}", level));
    }
}

PipelineConfig parse_pipeline_config(const json& root, const fs::path& base_dir) {
    PipelineConfig config;
    ConfigSection top(root, "");
    top.read_path("corpus", config.corpus, base_dir);
    top.read_path("queries", config.queries, base_dir);
    top.read_path("qrels", config.qrels, base_dir);
    top.read_path("output_dir", config.output_dir, base_dir);
    top.read("threads", config.threads);
    top.read("log_prompts", config.log_prompts);

    if (auto s = top.section("analyzer")) {
        s->read("lowercase", config.analyzer.lowercase);
        s->read("stem", config.analyzer.stem);
        std::vector<std::string> stopwords;
        s->read("stopwords", stopwords);
        config.analyzer.stopwords.insert(stopwords.begin(), stopwords.end());
        s->finish();
    }
    if (auto s = top.section("retrieval")) {
        std::string model = std::string(model_name(config.retrieval.model));
        s->read("model", model);
        config.retrieval.model = parse_retrieval_model(model);
        s->read("k1", config.retrieval.bm25.k1);
        s->read("b", config.retrieval.bm25.b);
        s->read("mu", config.retrieval.dirichlet.mu);
        s->read("k", config.retrieval.k);
        s->finish();
    }
    if (auto s = top.section("hybrid")) {
        s->read_path("run", config.hybrid_run, base_dir);
        s->read("alpha", config.hybrid_alpha);
        s->finish();
    }
    if (auto s = top.section("provider")) {
        std::string kind = "remote";
        s->read("kind", kind);
        config.provider.kind = parse_provider_kind(kind);
        s->read("endpoint", config.provider.remote.endpoint);
        std::string format = "loglikelihood";
        s->read("format", format);
        config.provider.remote.format = parse_wire_format(format);
        s->read("model", config.provider.remote.model);
        s->read("max_attempts", config.provider.remote.retry.max_attempts);
        int timeout = static_cast<int>(config.provider.remote.timeout.count());
        s->read("timeout_seconds", timeout);
        config.provider.remote.timeout = std::chrono::seconds(timeout);
        s->read_path("bigram_corpus", config.provider.bigram_corpus, base_dir);
        s->read("constant_logprob", config.provider.constant_logprob);
        s->finish();
    }
    if (auto s = top.section("prompt")) {
        s->read_path("catalog", config.prompt.catalog, base_dir);
        s->read("family", config.prompt.family);
        s->read("dataset", config.prompt.dataset);
        s->read("fewshot", config.prompt.fewshot);
        s->finish();
    }
    if (auto s = top.section("rerank")) {
        s->read("depth", config.rerank.depth);
        s->read("doc_max_chars", config.rerank.doc_max_chars);
        s->read("concurrency", config.rerank.concurrency);
        std::string policy = "fail";
        s->read("on_error", policy);
        config.rerank.on_error = parse_error_policy(policy);
        s->read("floor_score", config.rerank.floor_score);
        s->finish();
    }
    if (auto s = top.section("fusion")) {
        s->read("alpha", config.fusion_alpha);
        s->finish();
    }
    if (auto s = top.section("eval")) {
        s->read("k", config.eval_k);
        s->read("level", config.level);
        std::string correction = "bonferroni";
        s->read("correction", correction);
        config.correction = parse_correction(correction);
        s->read("sweep_alphas", config.sweep_alphas);
        s->finish();
    }
    top.finish();
    return config;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    const std::string text = read_file(path);
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw UsageError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
    }
    return parse_pipeline_config(root, path.parent_path());
}

PipelineLayout::PipelineLayout(const fs::path& dir)
    : index(dir / "index.bin"),
      first_stage(dir / "first_stage.run"),
      hybrid(dir / "hybrid.run"),
      rerank(dir / "rerank.run"),
      fused(dir / "fused.run"),
      eval(dir / "eval.tsv"),
      significance(dir / "significance.txt"),
      sweep(dir / "sweep.tsv"),
      log(dir / "log.jsonl"),
      prompts(dir / "prompts.jsonl") {}

void run_pipeline(const PipelineConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);
    const PipelineLayout out(config.output_dir);
    const EventLog log(out.log);
    log.write("pipeline_start", {{"output_dir", config.output_dir.string()},
                                 {"family", config.prompt.family},
                                 {"dataset", config.prompt.dataset},
                                 {"fewshot", config.prompt.fewshot}});

    run_index({config.corpus, out.index, config.analyzer}, log);
    run_search({out.index, config.queries, out.first_stage, config.retrieval, "", config.threads}, log);

    fs::path candidates = out.first_stage;
    std::vector<std::string> runs = {out.first_stage.string()};
    if (!config.hybrid_run.empty()) {
        FuseCommand hybrid{out.first_stage, config.hybrid_run, out.hybrid, {config.hybrid_alpha}, "hybrid",
                           config.retrieval.k};
        run_fuse(hybrid, log);
        candidates = out.hybrid;
        runs.push_back(out.hybrid.string());
    }

    RerankCommand rerank;
    rerank.corpus = config.corpus;
    rerank.queries = config.queries;
    rerank.run = candidates;
    rerank.output = out.rerank;
    rerank.provider = config.provider;
    rerank.prompt = config.prompt;
    rerank.rerank = config.rerank;
    if (config.log_prompts) {
        rerank.prompt_log = out.prompts;
    }
    try {
        run_rerank(rerank, log);
    } catch (const std::exception& e) {
        log.write("pipeline_failed", {{"stage", "rerank"}, {"error", e.what()}});
        throw;
    }
    runs.push_back(out.rerank.string());

    run_fuse({candidates, out.rerank, out.fused, {config.fusion_alpha}, "fused", std::nullopt}, log);
    runs.push_back(out.fused.string());

    run_eval({out.fused, config.qrels, out.eval, config.eval_k}, log);
    run_sigtest({runs, config.qrels, out.significance, config.eval_k, config.level, config.correction}, log);
    run_sweep({candidates, out.rerank, config.qrels, out.sweep, config.sweep_alphas, config.eval_k}, log);
    log.write("pipeline_done");
}

}  // namespace qlm
