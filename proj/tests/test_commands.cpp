#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "qlm/commands.hpp"
#include "qlm/error.hpp"
#include "support/support.hpp"

using namespace qlm;
namespace qt = qlm::testing;
using nlohmann::json;

namespace {

const std::string kCli = QLM_CLI_PATH;

json toy_config(const qt::ToyDataset& data, const fs::path& out_dir) {
    return {{"corpus", data.corpus.string()},
            {"queries", data.queries.string()},
            {"qrels", data.qrels.string()},
            {"output_dir", out_dir.string()},
            {"retrieval", {{"model", "bm25"}, {"k", 20}}},
            {"provider", {{"kind", "bigram"}}},
            {"prompt", {{"catalog", data.catalog.string()}, {"family", "toy"}, {"dataset", "toy"}}},
            {"rerank", {{"depth", 20}, {"concurrency", 4}}},
            {"fusion", {{"alpha", 0.2}}},
            {"eval", {{"k", 10}}}};
}

fs::path write_config(const fs::path& path, const json& config) {
    std::ofstream(path) << config.dump(2);
    return path;
}

std::string quote(const fs::path& p) {
    return "'" + p.string() + "'";
}

int cli(const std::string& args) {
    return qt::run_command(kCli + " -q " + args + " >/dev/null 2>&1");
}

}  // namespace

TEST(Pipeline, MatchesManualCommandSequence) {
    qt::TempDir dir("qlm-pipeline");
    const auto data = qt::write_toy_dataset(dir.path(), 101, 60, 8);
    const auto config = parse_pipeline_config(toy_config(data, dir.path() / "auto"), dir.path());
    run_pipeline(config);

    const fs::path m = dir.path() / "manual";
    fs::create_directories(m);
    ASSERT_EQ(cli("index --corpus " + quote(data.corpus) + " -o " + quote(m / "index.bin")), 0);
    ASSERT_EQ(cli("search --index " + quote(m / "index.bin") + " --queries " + quote(data.queries) + " -o " +
                  quote(m / "first_stage.run") + " --k 20"),
              0);
    ASSERT_EQ(cli("rerank --corpus " + quote(data.corpus) + " --queries " + quote(data.queries) + " --run " +
                  quote(m / "first_stage.run") + " -o " + quote(m / "rerank.run") +
                  " --provider bigram --catalog " + quote(data.catalog) +
                  " --family toy --dataset toy --depth 20 --concurrency 3"),
              0);
    ASSERT_EQ(cli("fuse " + quote(m / "first_stage.run") + " " + quote(m / "rerank.run") + " -o " +
                  quote(m / "fused.run") + " --alpha 0.2"),
              0);
    ASSERT_EQ(cli("eval --run " + quote(m / "fused.run") + " --qrels " + quote(data.qrels) + " -o " +
                  quote(m / "eval.tsv") + " --k 10"),
              0);
    ASSERT_EQ(cli("sigtest " + quote(m / "first_stage.run") + " " + quote(m / "rerank.run") + " " +
                  quote(m / "fused.run") + " --qrels " + quote(data.qrels) + " -o " + quote(m / "significance.txt")),
              0);
    ASSERT_EQ(cli("sweep " + quote(m / "first_stage.run") + " " + quote(m / "rerank.run") + " --qrels " +
                  quote(data.qrels) + " -o " + quote(m / "sweep.tsv")),
              0);

    for (const char* name : {"index.bin", "first_stage.run", "rerank.run", "fused.run", "eval.tsv",
                             "significance.txt", "sweep.tsv"}) {
        EXPECT_EQ(read_file(dir.path() / "auto" / name), read_file(m / name)) << name;
    }
}

TEST(Pipeline, RunsTwiceToIdenticalOutputsWithoutTouchingInputs) {
    qt::TempDir dir("qlm-pipeline");
    const auto data = qt::write_toy_dataset(dir.path(), 102, 50, 6);
    const std::string corpus_before = read_file(data.corpus);
    const auto a = write_config(dir.path() / "a.json", toy_config(data, dir.path() / "a"));
    const auto b = write_config(dir.path() / "b.json", toy_config(data, dir.path() / "b"));
    ASSERT_EQ(cli("pipeline --config " + quote(a)), 0);
    ASSERT_EQ(cli("pipeline --config " + quote(b) + " --threads 3"), 0);
    for (const char* name : {"index.bin", "first_stage.run", "rerank.run", "fused.run", "eval.tsv",
                             "significance.txt", "sweep.tsv"}) {
        EXPECT_EQ(read_file(dir.path() / "a" / name), read_file(dir.path() / "b" / name)) << name;
    }
    EXPECT_EQ(read_file(data.corpus), corpus_before);
    EXPECT_FALSE(fs::exists(dir.path() / "a" / "prompts.jsonl"));
    // The log records provider request counts and the cache hit rate.
    std::ifstream log(dir.path() / "a" / "log.jsonl");
    bool saw_rerank = false;
    for (std::string line; std::getline(log, line);) {
        const auto event = json::parse(line);
        if (event.at("event") == "rerank") {
            saw_rerank = true;
            EXPECT_EQ(event.at("provider_requests"), event.at("scored_pairs"));
            EXPECT_EQ(event.at("cache_hit_rate"), 0.0);
        }
    }
    EXPECT_TRUE(saw_rerank);
}

TEST(Pipeline, ProviderDownExitsThreeAndKeepsFirstStage) {
    qt::TempDir dir("qlm-pipeline");
    const auto data = qt::write_toy_dataset(dir.path(), 103, 30, 4);
    int port = 0;
    {
        qt::StubServer probe("/v1/loglikelihood", [](const httplib::Request&, httplib::Response&) {});
        port = std::stoi(probe.url().substr(probe.url().rfind(':') + 1));
    }
    auto config = toy_config(data, dir.path() / "out");
    config["provider"] = {{"kind", "remote"}, {"endpoint", "http://127.0.0.1:" + std::to_string(port)},
                          {"max_attempts", 2}};
    const auto path = write_config(dir.path() / "c.json", config);
    EXPECT_EQ(cli("pipeline --config " + quote(path)), 3);
    EXPECT_TRUE(fs::exists(dir.path() / "out" / "first_stage.run"));
    EXPECT_FALSE(fs::exists(dir.path() / "out" / "rerank.run"));
    EXPECT_FALSE(fs::exists(dir.path() / "out" / "fused.run"));
    EXPECT_NE(read_file(dir.path() / "out" / "log.jsonl").find("pipeline_failed"), std::string::npos);
}

TEST(Pipeline, FewshotFlagRendersExamplesIntoPromptLog) {
    qt::TempDir dir("qlm-pipeline");
    const auto data = qt::write_toy_dataset(dir.path(), 104, 30, 3);
    const auto path = write_config(dir.path() / "c.json", toy_config(data, dir.path() / "out"));
    ASSERT_EQ(cli("pipeline --config " + quote(path) + " --fewshot --log-prompts"), 0);
    std::ifstream prompts(dir.path() / "out" / "prompts.jsonl");
    std::size_t lines = 0;
    for (std::string line; std::getline(prompts, line); ++lines) {
        const auto context = json::parse(line).at("context").get<std::string>();
        EXPECT_NE(context.find("Bad question: wz\n\n"), std::string::npos);
        EXPECT_EQ(context.substr(context.size() - 14), "Good question:");
    }
    EXPECT_GT(lines, 0u);
}

TEST(Pipeline, HybridRunIsFusedBeforeReranking) {
    qt::TempDir dir("qlm-pipeline");
    const auto data = qt::write_toy_dataset(dir.path(), 105, 40, 4);
    const auto first = parse_pipeline_config(toy_config(data, dir.path() / "plain"), dir.path());
    run_pipeline(first);
    auto config = toy_config(data, dir.path() / "hybrid");
    config["hybrid"] = {{"run", (dir.path() / "plain" / "rerank.run").string()}, {"alpha", 0.5}};
    run_pipeline(parse_pipeline_config(config, dir.path()));
    const auto hybrid = read_run(dir.path() / "hybrid" / "hybrid.run");
    const auto expected = truncate(interpolate(read_run(dir.path() / "plain" / "first_stage.run"),
                                               read_run(dir.path() / "plain" / "rerank.run"), {0.5}, "hybrid"),
                                   20);
    EXPECT_EQ(hybrid, expected);
    EXPECT_NE(read_file(dir.path() / "hybrid" / "significance.txt").find("hybrid"), std::string::npos);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    qt::TempDir dir("qlm-config");
    const auto data = qt::write_toy_dataset(dir.path(), 106, 10, 2);
    auto config = toy_config(data, dir.path() / "out");
    EXPECT_NO_THROW(parse_pipeline_config(config, dir.path()).validate());
    auto typo = config;
    typo["rerank"]["dpeth"] = 5;
    EXPECT_THROW(parse_pipeline_config(typo, dir.path()), UsageError);
    auto top = config;
    top["extra"] = 1;
    EXPECT_THROW(parse_pipeline_config(top, dir.path()), UsageError);
    auto alpha = config;
    alpha["fusion"]["alpha"] = 1.5;
    EXPECT_THROW(parse_pipeline_config(alpha, dir.path()).validate(), UsageError);
    auto missing = config;
    missing["corpus"] = "nope.jsonl";
    EXPECT_THROW(parse_pipeline_config(missing, dir.path()).validate(), UsageError);
    EXPECT_EQ(cli("pipeline --config " + quote(write_config(dir.path() / "t.json", typo))), 1);
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
    qt::TempDir dir("qlm-config");
    const auto data = qt::write_toy_dataset(dir.path(), 107, 10, 2);
    json config = toy_config(data, "out");
    config["corpus"] = "corpus.jsonl";
    const auto loaded = load_pipeline_config(write_config(dir.path() / "c.json", config));
    EXPECT_EQ(loaded.corpus, dir.path() / "corpus.jsonl");
    EXPECT_EQ(loaded.output_dir, dir.path() / "out");
}

TEST(Rerank, PersistentCacheSkipsProviderOnSecondRun) {
    qt::TempDir dir("qlm-cache");
    const auto data = qt::write_toy_dataset(dir.path(), 108, 30, 3);
    run_index({data.corpus, dir.path() / "index.bin", {}});
    SearchCommand search;
    search.index = dir.path() / "index.bin";
    search.queries = data.queries;
    search.output = dir.path() / "bm25.run";
    search.retrieval.k = 10;
    run_search(search);
    RerankCommand cmd;
    cmd.corpus = data.corpus;
    cmd.queries = data.queries;
    cmd.run = search.output;
    cmd.output = dir.path() / "r1.run";
    cmd.provider.kind = ProviderKind::bigram;
    cmd.prompt = {data.catalog, "toy", "toy", false};
    cmd.cache = dir.path() / "cache.jsonl";
    const auto first = run_rerank(cmd);
    EXPECT_EQ(first.provider_requests, 30u);
    cmd.output = dir.path() / "r2.run";
    const auto second = run_rerank(cmd);
    EXPECT_EQ(second.provider_requests, 0u);
    EXPECT_EQ(second.cache_hits, 30u);
    EXPECT_EQ(read_file(dir.path() / "r1.run"), read_file(dir.path() / "r2.run"));
}

TEST(Prompt, ResolveFromBuiltInCatalog) {
    const auto spec = resolve_prompt({"", "llama", "trecc", false});
    EXPECT_EQ(spec.prompt, default_catalog().at("llama", "trecc"));
    EXPECT_FALSE(spec.is_fewshot());
    EXPECT_TRUE(resolve_prompt({"", "llama", "trecc", true}).is_fewshot());
    EXPECT_THROW(resolve_prompt({"", "", "trecc", false}), UsageError);
    EXPECT_THROW(resolve_prompt({"", "gpt", "trecc", false}), DataError);
}

TEST(Cli, ExitCodes) {
    qt::TempDir dir("qlm-cli");
    EXPECT_EQ(cli("--help"), 0);
    EXPECT_EQ(cli("eval --help"), 0);
    EXPECT_EQ(cli(""), 1);
    EXPECT_EQ(cli("frobnicate"), 1);
    EXPECT_EQ(cli("eval --run x.run"), 1);
    EXPECT_EQ(cli("eval --run " + quote(dir.path() / "missing.run") + " --qrels q -o " + quote(dir.path() / "e")),
              2);
    std::ofstream(dir.path() / "a.run") << "q1 Q0 d1 1 0.5 t\n";
    EXPECT_EQ(cli("fuse " + quote(dir.path() / "a.run") + " " + quote(dir.path() / "a.run") + " -o " +
                  quote(dir.path() / "f.run") + " --alpha 2"),
              1);
    EXPECT_EQ(cli("fuse " + quote(dir.path() / "a.run") + " " + quote(dir.path() / "a.run") + " -o " +
                  quote(dir.path() / "f.run") + " --alpha 0.5"),
              0);
}

TEST(Cli, FuseHybridShape) {
    qt::TempDir dir("qlm-cli");
    qlm::Run a;
    a.tag = "bm25";
    a.set("q1", {{"d1", 3.0}, {"d2", 1.0}});
    qlm::Run b;
    b.tag = "dense";
    b.set("q1", {{"d2", 0.9}, {"d3", 0.1}});
    write_run(a, dir.path() / "a.run");
    write_run(b, dir.path() / "b.run");
    ASSERT_EQ(cli("fuse --alpha 0.5 --tag hybrid " + quote(dir.path() / "a.run") + " " + quote(dir.path() / "b.run") +
                  " -o " + quote(dir.path() / "h.run")),
              0);
    EXPECT_EQ(read_run(dir.path() / "h.run"), interpolate(a, b, {0.5}, "hybrid"));
}
