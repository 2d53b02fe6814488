#include "qlm/prompts.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "qlm/error.hpp"

namespace qlm {

namespace {

using json = nlohmann::json;

constexpr std::string_view kGoodLabel = "Good question:";
constexpr std::string_view kBadLabel = "Bad question:";

#include "default_catalog.inc"

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

std::string fill_body(std::string_view body, std::string_view doc_text) {
    const auto pos = body.find(kDocPlaceholder);
    std::string out;
    out.reserve(body.size() + doc_text.size());
    out.append(body.substr(0, pos));
    out.append(doc_text);
    out.append(body.substr(pos + kDocPlaceholder.size()));
    return out;
}

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) {
        return 1;
    }
    if ((lead >> 5) == 0x6) {
        return 2;
    }
    if ((lead >> 4) == 0xE) {
        return 3;
    }
    if ((lead >> 3) == 0x1E) {
        return 4;
    }
    return 1;
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string truncate_chars(std::string_view text, std::size_t max_chars) {
    std::size_t bytes = 0;
    std::size_t chars = 0;
    while (bytes < text.size() && chars < max_chars) {
        bytes = std::min(text.size(), bytes + utf8_length(static_cast<unsigned char>(text[bytes])));
        ++chars;
    }
    if (bytes >= text.size()) {
        return std::string(text);
    }
    std::size_t cut = bytes;
    if (!is_space(text[bytes])) {
        auto last_space = text.substr(0, bytes).find_last_of(" \t\n\r\f\v");
        if (last_space != std::string_view::npos && last_space > 0) {
            cut = last_space;
        }
    }
    while (cut > 0 && is_space(text[cut - 1])) {
        --cut;
    }
    if (cut == 0) {
        cut = bytes;
    }
    spdlog::debug("document text truncated from {} to {} bytes", text.size(), cut);
    return std::string(text.substr(0, cut));
}

std::string string_field(const json& obj, const char* key, const std::string& where, bool required) {
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

std::vector<FewShotExample> parse_fewshot(const json& arr, const std::string& where) {
    if (!arr.is_array()) {
        throw DataError(fmt::format("{}: \"fewshot\" must be an array", where));
    }
    std::vector<FewShotExample> examples;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        std::string at = fmt::format("{} fewshot[{}]", where, i);
        if (!arr[i].is_object()) {
            throw DataError(fmt::format("{}: expected an object", at));
        }
        examples.push_back({string_field(arr[i], "document", at, true), string_field(arr[i], "good_question", at, true),
                            string_field(arr[i], "bad_question", at, true)});
    }
    return examples;
}

json fewshot_json(const std::vector<FewShotExample>& examples) {
    json arr = json::array();
    for (const auto& ex : examples) {
        arr.push_back({{"document", ex.document}, {"good_question", ex.good_question}, {"bad_question", ex.bad_question}});
    }
    return arr;
}

void fnv1a(std::uint64_t& h, std::string_view s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    // Length-delimit fields so ("ab", "c") and ("a", "bc") differ.
    for (int i = 0; i < 8; ++i) {
        h ^= (s.size() >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ULL;
    }
}

}  // namespace

void PromptTemplate::validate() const {
    const auto n = count_occurrences(body, kDocPlaceholder);
    if (n != 1) {
        throw DataError(fmt::format("prompt body must contain {} exactly once (found {})", kDocPlaceholder, n));
    }
}

void validate_fewshot(std::span<const FewShotExample> examples) {
    if (examples.size() != kFewShotCount) {
        throw DataError(fmt::format("few-shot block needs exactly {} examples, got {}", kFewShotCount, examples.size()));
    }
    for (const auto& ex : examples) {
        if (ex.document.empty() || ex.good_question.empty() || ex.bad_question.empty()) {
            throw DataError("few-shot examples need a document, a good question and a bad question");
        }
    }
}

void PromptCatalog::add(std::string model_family, std::string dataset, PromptTemplate prompt) {
    prompt.validate();
    Key key{std::move(model_family), std::move(dataset)};
    if (entries_.count(key) != 0) {
        throw DataError(fmt::format("duplicate catalog entry ({}, {})", key.first, key.second));
    }
    entries_.emplace(std::move(key), std::move(prompt));
}

void PromptCatalog::set_fewshot(std::string dataset, std::vector<FewShotExample> examples) {
    validate_fewshot(examples);
    fewshot_[std::move(dataset)] = std::move(examples);
}

const PromptTemplate& PromptCatalog::at(std::string_view model_family, std::string_view dataset) const {
    auto it = entries_.find(Key{std::string(model_family), std::string(dataset)});
    if (it == entries_.end()) {
        throw DataError(fmt::format("no prompt for model family '{}' and dataset '{}'", model_family, dataset));
    }
    return it->second;
}

const std::vector<FewShotExample>* PromptCatalog::fewshot(std::string_view dataset) const {
    auto it = fewshot_.find(dataset);
    return it == fewshot_.end() ? nullptr : &it->second;
}

PromptCatalog parse_catalog(std::string_view json_text, std::string_view source_name) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(fmt::format("{}: malformed JSON ({})", source_name, e.what()));
    }
    const json* entries = &root;
    if (root.is_object()) {
        auto it = root.find("entries");
        if (it == root.end()) {
            throw DataError(fmt::format("{}: missing \"entries\"", source_name));
        }
        entries = &*it;
    }
    if (!entries->is_array()) {
        throw DataError(fmt::format("{}: catalog entries must be an array", source_name));
    }

    PromptCatalog catalog;
    std::map<std::string, std::vector<FewShotExample>> fewshot;
    auto merge_fewshot = [&](const std::string& dataset, std::vector<FewShotExample> examples,
                             const std::string& where) {
        validate_fewshot(examples);
        auto [it, inserted] = fewshot.emplace(dataset, examples);
        if (!inserted && it->second != examples) {
            throw DataError(fmt::format("{}: conflicting few-shot examples for dataset '{}'", where, dataset));
        }
    };

    for (std::size_t i = 0; i < entries->size(); ++i) {
        const auto& e = (*entries)[i];
        std::string where = fmt::format("{}: entry {}", source_name, i);
        if (!e.is_object()) {
            throw DataError(fmt::format("{}: expected an object", where));
        }
        PromptTemplate prompt{string_field(e, "system_prefix", where, false), string_field(e, "body", where, true),
                              string_field(e, "suffix", where, false)};
        auto family = string_field(e, "model_family", where, true);
        auto dataset = string_field(e, "dataset", where, true);
        try {
            catalog.add(family, dataset, std::move(prompt));
        } catch (const DataError& err) {
            throw DataError(fmt::format("{}: {}", where, err.what()));
        }
        if (auto it = e.find("fewshot"); it != e.end() && !it->is_null()) {
            merge_fewshot(dataset, parse_fewshot(*it, where), where);
        }
    }

    if (root.is_object()) {
        if (auto it = root.find("fewshot"); it != root.end() && !it->is_null()) {
            if (!it->is_object()) {
                throw DataError(fmt::format("{}: \"fewshot\" must map dataset names to arrays", source_name));
            }
            for (const auto& [dataset, arr] : it->items()) {
                std::string where = fmt::format("{}: fewshot.{}", source_name, dataset);
                merge_fewshot(dataset, parse_fewshot(arr, where), where);
            }
        }
    }
    for (auto& [dataset, examples] : fewshot) {
        catalog.set_fewshot(dataset, std::move(examples));
    }
    return catalog;
}

PromptCatalog load_catalog(const std::filesystem::path& path) {
    return parse_catalog(read_file(path), path.string());
}

std::string serialize_catalog(const PromptCatalog& catalog) {
    json entries = json::array();
    for (const auto& [key, prompt] : catalog.entries()) {
        entries.push_back({{"model_family", key.first},
                           {"dataset", key.second},
                           {"system_prefix", prompt.system_prefix},
                           {"body", prompt.body},
                           {"suffix", prompt.suffix}});
    }
    json fewshot = json::object();
    for (const auto& [dataset, examples] : catalog.fewshot_sets()) {
        fewshot[dataset] = fewshot_json(examples);
    }
    json root = {{"version", 1}, {"entries", std::move(entries)}, {"fewshot", std::move(fewshot)}};
    return root.dump(2) + "\n";
}

const PromptCatalog& default_catalog() {
    static const PromptCatalog catalog = parse_catalog(kDefaultCatalogJson, "<default catalog>");
    return catalog;
}

std::string document_text(const Document& doc, std::size_t max_chars) {
    if (max_chars < 1) {
        throw UsageError("doc_max_chars must be at least 1");
    }
    std::string text = doc.title.empty() ? doc.body : doc.title + "\n" + doc.body;
    return truncate_chars(text, max_chars);
}

std::string render_prompt(const PromptTemplate& prompt, const Document& doc, std::size_t doc_max_chars) {
    prompt.validate();
    return prompt.system_prefix + fill_body(prompt.body, document_text(doc, doc_max_chars)) + prompt.suffix;
}

std::string render_fewshot(const PromptTemplate& prompt, std::span<const FewShotExample> examples,
                           const Document& doc, std::size_t doc_max_chars) {
    prompt.validate();
    validate_fewshot(examples);
    std::string out = prompt.system_prefix;
    for (const auto& ex : examples) {
        out += fill_body(prompt.body, ex.document);
        out += fmt::format("\n{} {}\n{} {}\n\n", kGoodLabel, ex.good_question, kBadLabel, ex.bad_question);
    }
    out += fill_body(prompt.body, document_text(doc, doc_max_chars));
    out += '\n';
    out += kGoodLabel;
    return out;
}

std::uint64_t prompt_fingerprint(const PromptTemplate& prompt, std::span<const FewShotExample> examples,
                                 std::size_t doc_max_chars) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    fnv1a(h, prompt.system_prefix);
    fnv1a(h, prompt.body);
    fnv1a(h, prompt.suffix);
    fnv1a(h, examples.empty() ? "zero-shot" : "few-shot");
    for (const auto& ex : examples) {
        fnv1a(h, ex.document);
        fnv1a(h, ex.good_question);
        fnv1a(h, ex.bad_question);
    }
    fnv1a(h, std::to_string(doc_max_chars));
    return h;
}

}  // namespace qlm
