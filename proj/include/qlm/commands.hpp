#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qlm/analyzer.hpp"
#include "qlm/corpus.hpp"
#include "qlm/eval.hpp"
#include "qlm/fusion.hpp"
#include "qlm/likelihood.hpp"
#include "qlm/remote_provider.hpp"
#include "qlm/rerank.hpp"
#include "qlm/retrieval.hpp"

namespace qlm {

namespace fs = std::filesystem;

/// Appends one JSON object per line: {"ts": ..., "event": ..., fields...}.
/// A default-constructed log discards everything.
class EventLog {
  public:
    EventLog() = default;
    explicit EventLog(fs::path path) : path_(std::move(path)) {}

    void write(std::string_view event, nlohmann::json fields = nlohmann::json::object()) const;

  private:
    fs::path path_;
};

enum class ProviderKind { remote, bigram, constant };

ProviderKind parse_provider_kind(std::string_view name);

struct ProviderConfig {
    ProviderKind kind = ProviderKind::remote;
    /// Endpoint and token default to QLM_ENDPOINT / QLM_API_TOKEN.
    RemoteOptions remote = remote_options_from_env();
    /// Corpus JSONL the bigram model is trained on; the rerank corpus when empty.
    fs::path bigram_corpus;
    double constant_logprob = -1.0;
};

/// Builds the provider. `corpus` trains the bigram model unless
/// `config.bigram_corpus` names another collection.
std::unique_ptr<LikelihoodProvider> make_provider(const ProviderConfig& config, const std::vector<Document>& corpus);

struct PromptConfig {
    /// Catalog JSON; the built-in catalog when empty.
    fs::path catalog;
    std::string family;
    std::string dataset;
    bool fewshot = false;
};

PromptSpec resolve_prompt(const PromptConfig& config);

struct IndexCommand {
    fs::path corpus;
    fs::path output;
    AnalyzerOptions analyzer;
};

struct SearchCommand {
    fs::path index;
    fs::path queries;
    fs::path output;
    RetrievalConfig retrieval;
    /// Run tag; the model name when empty.
    std::string tag;
    unsigned threads = 1;
};

struct RerankCommand {
    fs::path corpus;
    fs::path queries;
    fs::path run;
    fs::path output;
    ProviderConfig provider;
    PromptConfig prompt;
    RerankOptions rerank;
    std::string tag = "qlm";
    /// Optional JSONL of every rendered (context, continuation) pair.
    fs::path prompt_log;
    /// Optional persistent likelihood cache, read before and rewritten after.
    fs::path cache;
};

struct FuseCommand {
    fs::path run_a;
    fs::path run_b;
    fs::path output;
    FusionParams params;
    std::string tag = "fused";
    /// Keep only the top `depth` documents of the fused run when set.
    std::optional<std::size_t> depth;
};

struct EvalCommand {
    fs::path run;
    fs::path qrels;
    fs::path output;
    std::size_t k = kDefaultEvalDepth;
};

struct SigtestCommand {
    /// Each entry is "name=path" or a bare path (named after its stem).
    std::vector<std::string> runs;
    fs::path qrels;
    fs::path output;
    std::size_t k = kDefaultEvalDepth;
    double level = kDefaultSignificanceLevel;
    Correction correction = Correction::bonferroni;
};

struct SweepCommand {
    fs::path run_a;
    fs::path run_b;
    fs::path qrels;
    fs::path output;
    std::vector<double> alphas = default_sweep_alphas();
    std::size_t k = kDefaultEvalDepth;
};

void run_index(const IndexCommand& cmd, const EventLog& log = {});
void run_search(const SearchCommand& cmd, const EventLog& log = {});
RerankStats run_rerank(const RerankCommand& cmd, const EventLog& log = {});
void run_fuse(const FuseCommand& cmd, const EventLog& log = {});
EvalReport run_eval(const EvalCommand& cmd, const EventLog& log = {});
SignificanceMatrix run_sigtest(const SigtestCommand& cmd, const EventLog& log = {});
std::vector<SweepRow> run_sweep(const SweepCommand& cmd, const EventLog& log = {});

/// Settings for the whole index -> search -> (hybrid) -> rerank -> fuse ->
/// eval -> sigtest -> sweep chain.
struct PipelineConfig {
    fs::path corpus;
    fs::path queries;
    fs::path qrels;
    AnalyzerOptions analyzer;
    RetrievalConfig retrieval;
    /// External first-stage run fused with the lexical run before re-ranking.
    fs::path hybrid_run;
    double hybrid_alpha = kHybridAlpha;
    ProviderConfig provider;
    PromptConfig prompt;
    RerankOptions rerank;
    double fusion_alpha = kRerankAlpha;
    std::size_t eval_k = kDefaultEvalDepth;
    double level = kDefaultSignificanceLevel;
    Correction correction = Correction::bonferroni;
    std::vector<double> sweep_alphas = default_sweep_alphas();
    bool log_prompts = false;
    fs::path output_dir;
    unsigned threads = 1;

    /// Throws UsageError for missing inputs or out-of-range parameters.
    void validate() const;
};

/// Reads a JSON pipeline config. Relative paths resolve against the config
/// file's directory. Unknown keys are rejected.
PipelineConfig load_pipeline_config(const fs::path& path);
PipelineConfig parse_pipeline_config(const nlohmann::json& root, const fs::path& base_dir);

/// Names of the files the pipeline writes into its output directory.
struct PipelineLayout {
    fs::path index;
    fs::path first_stage;
    fs::path hybrid;
    fs::path rerank;
    fs::path fused;
    fs::path eval;
    fs::path significance;
    fs::path sweep;
    fs::path log;
    fs::path prompts;

    explicit PipelineLayout(const fs::path& dir);
};

/// Runs every stage through the same entry points as the individual commands.
/// Each output is promoted into place as soon as its stage succeeds, so a
/// provider failure leaves the first-stage run behind.
void run_pipeline(const PipelineConfig& config);

}  // namespace qlm
