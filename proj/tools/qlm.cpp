#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "qlm/commands.hpp"
#include "qlm/error.hpp"

namespace {

using namespace qlm;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitProvider = 3;

unsigned default_threads() {
    return std::max(1u, std::thread::hardware_concurrency());
}

AnalyzerOptions analyzer_from_flags(bool no_lowercase, bool stem, const std::string& stopwords_file) {
    AnalyzerOptions options;
    options.lowercase = !no_lowercase;
    options.stem = stem;
    if (!stopwords_file.empty()) {
        for (const auto& w : word_tokens(read_file(stopwords_file))) {
            options.stopwords.insert(w);
        }
    }
    return options;
}

// Flags shared by `rerank` and `pipeline` that describe the provider.
struct ProviderFlags {
    std::optional<std::string> kind;
    std::optional<std::string> endpoint;
    std::optional<std::string> token;
    std::optional<std::string> format;
    std::optional<std::string> model;
    std::optional<int> max_attempts;
    std::optional<std::string> bigram_corpus;
    std::optional<double> constant_logprob;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--provider", kind, "remote, bigram or constant")
            ->check(CLI::IsMember({"remote", "bigram", "constant"}));
        cmd->add_option("--endpoint", endpoint, "Provider base URL (default $QLM_ENDPOINT)");
        cmd->add_option("--api-token", token, "Bearer token (default $QLM_API_TOKEN)");
        cmd->add_option("--wire-format", format, "loglikelihood or completions")
            ->check(CLI::IsMember({"loglikelihood", "completions"}));
        cmd->add_option("--model", model, "Model name sent with completions requests");
        cmd->add_option("--max-attempts", max_attempts, "HTTP attempts per request, including retries");
        cmd->add_option("--bigram-corpus", bigram_corpus, "Corpus JSONL to train the bigram provider on");
        cmd->add_option("--constant-logprob", constant_logprob, "Logprob returned by the constant provider");
    }

    void apply(ProviderConfig& config) const {
        if (kind) {
            config.kind = parse_provider_kind(*kind);
        }
        if (endpoint) {
            config.remote.endpoint = *endpoint;
        }
        if (token) {
            config.remote.auth_token = *token;
        }
        if (format) {
            config.remote.format = parse_wire_format(*format);
        }
        if (model) {
            config.remote.model = *model;
        }
        if (max_attempts) {
            config.remote.retry.max_attempts = *max_attempts;
        }
        if (bigram_corpus) {
            config.bigram_corpus = *bigram_corpus;
        }
        if (constant_logprob) {
            config.constant_logprob = *constant_logprob;
        }
    }
};

struct PromptFlags {
    std::optional<std::string> catalog;
    std::optional<std::string> family;
    std::optional<std::string> dataset;
    bool fewshot = false;
    std::optional<std::size_t> depth;
    std::optional<std::size_t> doc_max_chars;
    std::optional<unsigned> concurrency;
    std::optional<std::string> on_error;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--catalog", catalog, "Prompt catalog JSON (default: built-in)");
        cmd->add_option("--family", family, "Model family key in the catalog, e.g. llama");
        cmd->add_option("--dataset", dataset, "Dataset key in the catalog, e.g. trecc");
        cmd->add_flag("--fewshot", fewshot, "Prepend the three few-shot examples");
        cmd->add_option("--depth", depth, "Candidates re-ranked per query");
        cmd->add_option("--doc-max-chars", doc_max_chars, "Document truncation length in characters");
        cmd->add_option("--concurrency", concurrency, "Concurrent provider requests");
        cmd->add_option("--on-error", on_error, "fail or floor")->check(CLI::IsMember({"fail", "floor"}));
    }

    void apply(PromptConfig& prompt, RerankOptions& rerank) const {
        if (catalog) {
            prompt.catalog = *catalog;
        }
        if (family) {
            prompt.family = *family;
        }
        if (dataset) {
            prompt.dataset = *dataset;
        }
        if (fewshot) {
            prompt.fewshot = true;
        }
        if (depth) {
            rerank.depth = *depth;
        }
        if (doc_max_chars) {
            rerank.doc_max_chars = *doc_max_chars;
        }
        if (concurrency) {
            rerank.concurrency = *concurrency;
        }
        if (on_error) {
            rerank.on_error = parse_error_policy(*on_error);
        }
    }
};

int run(int argc, char** argv) {
    CLI::App app{"Zero-shot re-ranking with language-model query likelihood"};
    app.require_subcommand(1);
    std::string log_path;
    bool verbose = false;
    bool quiet = false;
    app.add_option("--log", log_path, "Append structured JSONL events to this file");
    app.add_flag("-v,--verbose", verbose, "Debug logging on stderr");
    app.add_flag("-q,--quiet", quiet, "Only warnings and errors on stderr");

    // index
    IndexCommand index_cmd;
    bool no_lowercase = false;
    std::string stopwords_file;
    auto* index = app.add_subcommand("index", "Build an inverted index from a corpus JSONL");
    index->add_option("--corpus", index_cmd.corpus, "Corpus JSONL (_id, title, text)")->required();
    index->add_option("-o,--output", index_cmd.output, "Index file to write")->required();
    index->add_flag("--no-lowercase", no_lowercase, "Keep case when analyzing");
    index->add_flag("--stem", index_cmd.analyzer.stem, "Apply the Porter stemmer");
    index->add_option("--stopwords", stopwords_file, "File of stopwords, whitespace separated");

    // search
    SearchCommand search_cmd;
    search_cmd.threads = default_threads();
    std::string search_model = "bm25";
    auto* search = app.add_subcommand("search", "Retrieve with BM25 or Dirichlet query likelihood");
    search->add_option("--index", search_cmd.index, "Index file")->required();
    search->add_option("--queries", search_cmd.queries, "Queries JSONL (_id, text)")->required();
    search->add_option("-o,--output", search_cmd.output, "Run file to write")->required();
    search->add_option("--model", search_model, "bm25 or dirichlet")
        ->check(CLI::IsMember({"bm25", "dirichlet", "qld"}));
    search->add_option("--k", search_cmd.retrieval.k, "Documents per query")->capture_default_str();
    search->add_option("--k1", search_cmd.retrieval.bm25.k1, "BM25 k1")->capture_default_str();
    search->add_option("--b", search_cmd.retrieval.bm25.b, "BM25 b")->capture_default_str();
    search->add_option("--mu", search_cmd.retrieval.dirichlet.mu, "Dirichlet mu")->capture_default_str();
    search->add_option("--tag", search_cmd.tag, "Run tag (default: model name)");
    search->add_option("--threads", search_cmd.threads, "Worker threads");

    // rerank
    RerankCommand rerank_cmd;
    ProviderFlags rerank_provider;
    PromptFlags rerank_prompt;
    auto* rerank = app.add_subcommand("rerank", "Re-rank a run by query likelihood under a language model");
    rerank->add_option("--corpus", rerank_cmd.corpus, "Corpus JSONL")->required();
    rerank->add_option("--queries", rerank_cmd.queries, "Queries JSONL")->required();
    rerank->add_option("--run", rerank_cmd.run, "First-stage run file")->required();
    rerank->add_option("-o,--output", rerank_cmd.output, "Run file to write")->required();
    rerank->add_option("--tag", rerank_cmd.tag, "Run tag")->capture_default_str();
    rerank->add_option("--prompt-log", rerank_cmd.prompt_log, "Write every rendered request to this JSONL");
    rerank->add_option("--cache", rerank_cmd.cache, "Persistent likelihood cache (JSONL)");
    rerank_provider.add_to(rerank);
    rerank_prompt.add_to(rerank);

    // fuse
    FuseCommand fuse_cmd;
    std::size_t fuse_depth = 0;
    auto* fuse = app.add_subcommand("fuse", "Min-max normalize two runs and interpolate them");
    fuse->add_option("run_a", fuse_cmd.run_a, "Run weighted by alpha")->required();
    fuse->add_option("run_b", fuse_cmd.run_b, "Run weighted by 1 - alpha")->required();
    fuse->add_option("-o,--output", fuse_cmd.output, "Run file to write")->required();
    fuse->add_option("--alpha", fuse_cmd.params.alpha, "Weight of run_a")->capture_default_str();
    fuse->add_option("--tag", fuse_cmd.tag, "Run tag")->capture_default_str();
    fuse->add_option("--depth", fuse_depth, "Keep the top N fused documents per query");

    // eval
    EvalCommand eval_cmd;
    auto* eval = app.add_subcommand("eval", "nDCG@k per query and mean");
    eval->add_option("--run", eval_cmd.run, "Run file")->required();
    eval->add_option("--qrels", eval_cmd.qrels, "Qrels (BEIR TSV or TREC)")->required();
    eval->add_option("-o,--output", eval_cmd.output, "TSV report to write")->required();
    eval->add_option("--k", eval_cmd.k, "Cutoff")->capture_default_str();

    // sigtest
    SigtestCommand sig_cmd;
    std::string correction = "bonferroni";
    auto* sig = app.add_subcommand("sigtest", "Paired t-tests between runs, rendered as a superscript table");
    sig->add_option("runs", sig_cmd.runs, "Runs as name=path or path (two or more)")->required()->expected(2, -1);
    sig->add_option("--qrels", sig_cmd.qrels, "Qrels")->required();
    sig->add_option("-o,--output", sig_cmd.output, "Table to write")->required();
    sig->add_option("--k", sig_cmd.k, "nDCG cutoff")->capture_default_str();
    sig->add_option("--level", sig_cmd.level, "Significance level")->capture_default_str();
    sig->add_option("--correction", correction, "none or bonferroni")
        ->check(CLI::IsMember({"none", "bonferroni"}))
        ->capture_default_str();

    // sweep
    SweepCommand sweep_cmd;
    auto* sweep = app.add_subcommand("sweep", "Mean nDCG@k of the fused run over a grid of alphas");
    sweep->add_option("run_a", sweep_cmd.run_a, "Run weighted by alpha")->required();
    sweep->add_option("run_b", sweep_cmd.run_b, "Run weighted by 1 - alpha")->required();
    sweep->add_option("--qrels", sweep_cmd.qrels, "Qrels")->required();
    sweep->add_option("-o,--output", sweep_cmd.output, "TSV to write")->required();
    sweep->add_option("--alphas", sweep_cmd.alphas, "Alphas (default 0, 0.1, ..., 1)");
    sweep->add_option("--k", sweep_cmd.k, "nDCG cutoff")->capture_default_str();

    // pipeline
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<double> fusion_alpha;
    std::optional<std::size_t> first_stage_k;
    std::optional<std::string> hybrid_run;
    std::optional<unsigned> pipeline_threads;
    bool log_prompts = false;
    ProviderFlags pipeline_provider;
    PromptFlags pipeline_prompt;
    auto* pipeline = app.add_subcommand("pipeline", "Run every stage from a JSON config; flags override it");
    pipeline->add_option("--config", config_path, "Pipeline config JSON")->required();
    pipeline->add_option("--output-dir", out_dir, "Directory for every output file");
    pipeline->add_option("--alpha", fusion_alpha, "Fusion weight of the first-stage run");
    pipeline->add_option("--k", first_stage_k, "First-stage depth");
    pipeline->add_option("--hybrid-run", hybrid_run, "External run fused with the lexical run first");
    pipeline->add_option("--threads", pipeline_threads, "Search worker threads");
    pipeline->add_flag("--log-prompts", log_prompts, "Write prompts.jsonl with every rendered request");
    pipeline_provider.add_to(pipeline);
    pipeline_prompt.add_to(pipeline);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    auto logger = spdlog::stderr_color_mt("qlm");
    spdlog::set_default_logger(logger);
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
    const EventLog log = log_path.empty() ? EventLog() : EventLog(log_path);

    if (index->parsed()) {
        index_cmd.analyzer = analyzer_from_flags(no_lowercase, index_cmd.analyzer.stem, stopwords_file);
        run_index(index_cmd, log);
    } else if (search->parsed()) {
        search_cmd.retrieval.model = parse_retrieval_model(search_model);
        run_search(search_cmd, log);
    } else if (rerank->parsed()) {
        rerank_provider.apply(rerank_cmd.provider);
        rerank_prompt.apply(rerank_cmd.prompt, rerank_cmd.rerank);
        run_rerank(rerank_cmd, log);
    } else if (fuse->parsed()) {
        if (fuse->count("--depth") > 0) {
            fuse_cmd.depth = fuse_depth;
        }
        run_fuse(fuse_cmd, log);
    } else if (eval->parsed()) {
        run_eval(eval_cmd, log);
    } else if (sig->parsed()) {
        sig_cmd.correction = parse_correction(correction);
        run_sigtest(sig_cmd, log);
    } else if (sweep->parsed()) {
        run_sweep(sweep_cmd, log);
    } else if (pipeline->parsed()) {
        PipelineConfig config = load_pipeline_config(config_path);
        if (out_dir) {
            config.output_dir = *out_dir;
        }
        if (fusion_alpha) {
            config.fusion_alpha = *fusion_alpha;
        }
        if (first_stage_k) {
            config.retrieval.k = *first_stage_k;
        }
        if (hybrid_run) {
            config.hybrid_run = *hybrid_run;
        }
        if (pipeline_threads) {
            config.threads = *pipeline_threads;
        }
        if (log_prompts) {
            config.log_prompts = true;
        }
        pipeline_provider.apply(config.provider);
        pipeline_prompt.apply(config.prompt, config.rerank);
        run_pipeline(config);
    }
    return EXIT_SUCCESS;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ProviderError& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return kExitProvider;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
