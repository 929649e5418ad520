#include "modeflow/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <thread>
#include <tuple>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "modeflow/errors.hpp"
#include "modeflow/io.hpp"
#include "modeflow/parallel.hpp"
#include "modeflow/prompts_embedded.inc"

namespace modeflow {

using nlohmann::json;

namespace {

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::size_t first_non_space(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    return i;
}

// Start offsets of the elements of a top-level JSON array. Only meaningful on
// text that already parsed successfully.
std::vector<std::size_t> array_element_offsets(std::string_view s) {
    std::vector<std::size_t> offsets;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    bool expect = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (depth == 1 && expect && !std::isspace(static_cast<unsigned char>(c)) && c != ']') {
            offsets.push_back(i);
            expect = false;
        }
        switch (c) {
            case '"': in_string = true; break;
            case '[':
            case '{':
                if (++depth == 1) expect = true;
                break;
            case ']':
            case '}': --depth; break;
            case ',':
                if (depth == 1) expect = true;
                break;
            default: break;
        }
    }
    return offsets;
}

struct DuplicateKey {
    std::size_t element = 0;
    std::string key;
};

// Parses `content`, rejecting duplicate object keys (which the JSON library
// would otherwise collapse silently). Errors carry offsets relative to
// `base`.
json strict_parse(std::string_view content, std::size_t base) {
    std::vector<std::set<std::string>> keys;
    std::size_t top_level_objects = 0;
    json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start:
                keys.emplace_back();
                if (depth == 1) ++top_level_objects;
                break;
            case json::parse_event_t::object_end:
                keys.pop_back();
                break;
            case json::parse_event_t::key: {
                auto name = parsed.get<std::string>();
                if (!keys.empty() && !keys.back().insert(name).second) {
                    throw DuplicateKey{top_level_objects == 0 ? 0 : top_level_objects - 1, name};
                }
                break;
            }
            default: break;
        }
        return true;
    };
    try {
        return json::parse(content.begin(), content.end(), cb);
    } catch (const json::parse_error& e) {
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        throw SchemaViolation(fmt::format("reply is not valid JSON: {}", e.what()),
                              base + std::min(at, content.size()));
    } catch (const DuplicateKey& dup) {
        // Re-scan without the callback to locate the element.
        std::size_t where = first_non_space(content);
        try {
            auto offsets = array_element_offsets(content);
            if (dup.element < offsets.size()) where = offsets[dup.element];
        } catch (...) {
        }
        throw SchemaViolation(fmt::format("duplicate key '{}'", dup.key), base + where);
    }
}

std::string render_filter_echo(const ChatRequest& request) {
    auto get = [&](std::string_view k) {
        auto it = request.slots.find(std::string(k));
        return it == request.slots.end() ? std::string{} : it->second;
    };
    json reply = {{"Modality_name", get(slot::kModalityName)},
                  {"Analysis_summary", get(slot::kRawData)},
                  {"Asset_code", get(slot::kAssetTicker)}};
    return reply.dump();
}

int echo_polarity(std::string_view text) {
    return lower(text).find("bearish") != std::string::npos ? -1 : 1;
}

std::string render_generate_echo(const ChatRequest& request) {
    json out = json::array();
    const std::pair<std::string_view, std::string_view> parts[] = {
        {slot::kFundamentalOutput, "Fundamental"},
        {slot::kTechnicalOutput, "Technical"},
        {slot::kNewsOutput, "News"},
    };
    std::string ticker;
    if (auto it = request.slots.find(std::string(slot::kAssetTicker)); it != request.slots.end()) {
        ticker = it->second;
    }
    for (const auto& [key, label] : parts) {
        auto it = request.slots.find(std::string(key));
        if (it == request.slots.end() || it->second.empty() || it->second == "N/A") continue;
        out.push_back({{"p", echo_polarity(it->second)},
                       {"a", fmt::format("{} view on {}", label, ticker)},
                       {"e", it->second}});
    }
    return out.dump();
}

constexpr std::string_view kMissingSummary = "N/A";

}  // namespace

void RawDataPoint::validate() const {
    if (ticker.empty()) throw ConfigError("raw data point has an empty ticker");
    if (body.empty()) {
        throw ConfigError(fmt::format("raw data point {} {} {} has an empty body", day.iso(),
                                      ticker, to_string(modality)));
    }
}

std::string EchoAgentBackend::complete(const ChatRequest& request) {
    switch (request.purpose) {
        case ChatPurpose::Filter: return render_filter_echo(request);
        case ChatPurpose::Generate: return render_generate_echo(request);
        case ChatPurpose::RawSign: {
            auto it = request.slots.find(std::string(slot::kRawDataShort));
            const int p = it == request.slots.end() ? 1 : echo_polarity(it->second);
            return json{{"p", p}}.dump();
        }
    }
    return "{}";
}

const PromptSet& PromptSet::builtin() {
    static const PromptSet prompts{k_prompt_filter_system, k_prompt_filter_user,
                                   k_prompt_generator_user, k_prompt_raw_sign_user};
    return prompts;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    auto read = [&](const char* name) {
        std::string text = read_text_file(dir / name);
        if (!text.empty() && text.back() == '\n') text.pop_back();
        return text;
    };
    return PromptSet{read("filter_system.txt"), read("filter_user.txt"),
                     read("generator_user.txt"), read("raw_sign_user.txt")};
}

std::string fill_slots(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
    std::string out(tmpl);
    for (const auto& [name, value] : slots) {
        const std::string needle = "[" + name + "]";
        std::size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

void RetryPolicy::pause(int attempt) const {
    double ms = static_cast<double>(initial_delay.count()) * std::pow(multiplier, attempt - 1);
    ms = std::min(ms, static_cast<double>(max_delay.count()));
    const auto delay = std::chrono::milliseconds(static_cast<long long>(ms));
    if (sleep) {
        sleep(delay);
    } else if (delay.count() > 0) {
        std::this_thread::sleep_for(delay);
    }
}

std::string complete_with_retry(AgentBackend& backend, const ChatRequest& request,
                                const RetryPolicy& policy) {
    const int attempts = std::max(1, policy.max_attempts);
    for (int attempt = 1;; ++attempt) {
        try {
            return backend.complete(request);
        } catch (const BackendUnavailable& e) {
            if (!e.retryable() || attempt >= attempts) throw;
            policy.pause(attempt);
        }
    }
}

Unfenced strip_code_fence(std::string_view text) {
    std::size_t begin = first_non_space(text);
    std::size_t end = text.size();
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    std::string_view body = text.substr(begin, end - begin);
    if (!body.starts_with("```")) return {text.substr(begin, end - begin), begin};

    std::size_t i = 3;
    while (i < body.size() &&
           (std::isalnum(static_cast<unsigned char>(body[i])) || body[i] == '_' || body[i] == '-')) {
        ++i;
    }
    std::size_t stop = body.size();
    if (stop < i + 3 || body.substr(stop - 3) != "```") {
        throw SchemaViolation("code fence is never closed", begin + body.size());
    }
    stop -= 3;
    return {body.substr(i, stop - i), begin + i};
}

std::vector<InvestmentArgument> parse_argument_json(std::string_view text, const Date& day,
                                                    const Ticker& ticker) {
    const Unfenced unfenced = strip_code_fence(text);
    const std::string_view content = unfenced.content;
    const std::size_t base = unfenced.offset;

    const json parsed = strict_parse(content, base);
    if (!parsed.is_array()) {
        throw SchemaViolation("reply must be a JSON array of argument objects",
                              base + first_non_space(content));
    }

    const auto offsets = array_element_offsets(content);
    auto at = [&](std::size_t i) { return base + (i < offsets.size() ? offsets[i] : 0); };

    std::vector<InvestmentArgument> out;
    out.reserve(parsed.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        const json& item = parsed[i];
        if (!item.is_object()) throw SchemaViolation(fmt::format("element {} is not an object", i), at(i));
        for (const auto& [key, value] : item.items()) {
            if (key != "p" && key != "a" && key != "e") {
                throw SchemaViolation(fmt::format("element {} has unexpected key '{}'", i, key), at(i));
            }
        }
        for (const char* key : {"p", "a", "e"}) {
            if (!item.contains(key)) {
                throw SchemaViolation(fmt::format("element {} lacks key '{}'", i, key), at(i));
            }
        }
        const json& p = item["p"];
        if (!p.is_number_integer()) {
            throw SchemaViolation(fmt::format("element {}: p must be the integer 1 or -1", i), at(i));
        }
        const auto polarity = p.get<long long>();
        if (polarity != 1 && polarity != -1) {
            throw SchemaViolation(fmt::format("element {}: polarity {} outside {{+1,-1}}", i, polarity),
                                  at(i));
        }
        for (const char* key : {"a", "e"}) {
            const json& v = item[key];
            if (!v.is_string() || is_blank(v.get_ref<const std::string&>())) {
                throw SchemaViolation(fmt::format("element {}: '{}' must be a non-empty string", i, key),
                                      at(i));
            }
        }
        out.push_back(InvestmentArgument::make(day, ticker, static_cast<int>(polarity),
                                               item["a"].get<std::string>(),
                                               item["e"].get<std::string>(),
                                               make_argument_id(day, ticker, i)));
    }
    return out;
}

std::string render_arguments_json(const std::vector<InvestmentArgument>& args) {
    json out = json::array();
    for (const auto& a : args) out.push_back({{"p", a.polarity}, {"a", a.rationale}, {"e", a.evidence}});
    return out.dump();
}

FilteredInfo parse_filter_reply(std::string_view text, const RawDataPoint& raw) {
    const Unfenced unfenced = strip_code_fence(text);
    const json parsed = strict_parse(unfenced.content, unfenced.offset);
    const std::size_t at = unfenced.offset + first_non_space(unfenced.content);
    if (!parsed.is_object()) throw SchemaViolation("filter reply must be a JSON object", at);
    for (const char* key : {"Modality_name", "Analysis_summary", "Asset_code"}) {
        if (!parsed.contains(key)) throw SchemaViolation(fmt::format("filter reply lacks '{}'", key), at);
        if (!parsed[key].is_string()) {
            throw SchemaViolation(fmt::format("filter reply field '{}' must be a string", key), at);
        }
    }
    const auto& summary = parsed["Analysis_summary"].get_ref<const std::string&>();
    if (is_blank(summary)) throw SchemaViolation("filter reply has an empty Analysis_summary", at);
    const auto& code = parsed["Asset_code"].get_ref<const std::string&>();
    if (code != raw.ticker) {
        throw SchemaViolation(
            fmt::format("filter reply Asset_code '{}' does not match ticker '{}'", code, raw.ticker), at);
    }
    return FilteredInfo{raw.day, raw.ticker, raw.modality, summary};
}

ChatRequest build_filter_request(const RawDataPoint& raw, const PromptSet& prompts) {
    ChatRequest req;
    req.purpose = ChatPurpose::Filter;
    req.system_prompt = prompts.system;
    req.slots = {
        {std::string(slot::kAssetName), raw.asset_name.empty() ? raw.ticker : raw.asset_name},
        {std::string(slot::kAssetTicker), raw.ticker},
        {std::string(slot::kAnalysisDate), raw.day.iso()},
        {std::string(slot::kModalityName), std::string(to_string(raw.modality))},
        {std::string(slot::kRawData), raw.body},
    };
    req.user_prompt = fill_slots(prompts.filter_user, req.slots);
    return req;
}

ChatRequest build_generator_request(const std::vector<FilteredInfo>& infos,
                                    std::string_view asset_name, const PromptSet& prompts) {
    if (infos.empty()) throw EmptyInput("argument generation needs at least one modality summary");
    const auto& head = infos.front();
    std::map<Modality, std::string> by_modality;
    for (const auto& info : infos) {
        if (info.day != head.day || info.ticker != head.ticker) {
            throw ShapeMismatch("generator inputs must share one (day, ticker)");
        }
        auto& text = by_modality[info.modality];
        if (!text.empty()) text += "\n";
        text += info.summary;
    }
    auto summary_of = [&](Modality m) {
        auto it = by_modality.find(m);
        return it == by_modality.end() ? std::string(kMissingSummary) : it->second;
    };

    ChatRequest req;
    req.purpose = ChatPurpose::Generate;
    req.system_prompt = prompts.system;
    req.slots = {
        {std::string(slot::kAssetName), asset_name.empty() ? head.ticker : std::string(asset_name)},
        {std::string(slot::kAssetTicker), head.ticker},
        {std::string(slot::kAnalysisDate), head.day.iso()},
        {std::string(slot::kFundamentalOutput), summary_of(Modality::Fundamental)},
        {std::string(slot::kTechnicalOutput), summary_of(Modality::Technical)},
        {std::string(slot::kNewsOutput), summary_of(Modality::News)},
    };
    req.user_prompt = fill_slots(prompts.generator_user, req.slots);
    return req;
}

FilteredInfo filter_information(const RawDataPoint& raw, AgentBackend& backend,
                                const PromptSet& prompts, const RetryPolicy& policy) {
    raw.validate();
    const ChatRequest req = build_filter_request(raw, prompts);
    const int prompts_allowed = 1 + std::max(0, policy.schema_reprompts);
    for (int attempt = 1;; ++attempt) {
        const std::string reply = complete_with_retry(backend, req, policy);
        try {
            return parse_filter_reply(reply, raw);
        } catch (const SchemaViolation&) {
            if (attempt >= prompts_allowed) throw;
        }
    }
}

GenerationResult generate_arguments(const std::vector<FilteredInfo>& infos, AgentBackend& backend,
                                    std::string_view asset_name, const PromptSet& prompts,
                                    const RetryPolicy& policy) {
    const ChatRequest req = build_generator_request(infos, asset_name, prompts);
    const auto& head = infos.front();
    const int prompts_allowed = 1 + std::max(0, policy.schema_reprompts);
    GenerationResult result;
    for (int attempt = 1; attempt <= prompts_allowed; ++attempt) {
        result.attempts = attempt;
        const std::string reply = complete_with_retry(backend, req, policy);
        try {
            result.arguments = parse_argument_json(reply, head.day, head.ticker);
            result.failure.reset();
            return result;
        } catch (const SchemaViolation& e) {
            result.failure = e.what();
        }
    }
    result.arguments.clear();
    return result;
}

Extractor::Extractor(std::shared_ptr<AgentBackend> backend, ExtractorOptions options,
                     PromptSet prompts)
    : backend_(std::move(backend)), options_(std::move(options)), prompts_(std::move(prompts)) {
    if (!backend_) throw ConfigError("extractor needs a backend");
}

namespace {

using GroupKey = std::tuple<Date, Ticker>;

struct FilterTask {
    RawDataPoint input;
    std::optional<FilteredInfo> output;
    std::optional<ExtractionFailure> failure;
};

// Groups by (day, ticker, modality) preserving document order inside a group.
std::map<std::tuple<Date, Ticker, Modality>, std::vector<const RawDataPoint*>>
group_documents(const std::vector<RawDataPoint>& raw) {
    std::map<std::tuple<Date, Ticker, Modality>, std::vector<const RawDataPoint*>> groups;
    for (const auto& r : raw) {
        r.validate();
        groups[{r.day, r.ticker, r.modality}].push_back(&r);
    }
    return groups;
}

}  // namespace

ExtractionResult Extractor::extract(const std::vector<RawDataPoint>& raw) const {
    std::vector<FilterTask> tasks;
    for (const auto& [key, docs] : group_documents(raw)) {
        if (options_.filter_per_document) {
            for (const auto* d : docs) tasks.push_back({*d, std::nullopt, std::nullopt});
        } else {
            RawDataPoint merged = *docs.front();
            for (std::size_t i = 1; i < docs.size(); ++i) {
                merged.body += options_.document_separator + docs[i]->body;
            }
            tasks.push_back({std::move(merged), std::nullopt, std::nullopt});
        }
    }

    parallel_for(tasks.size(), options_.parallelism, [&](std::size_t i) {
        auto& t = tasks[i];
        try {
            t.output = filter_information(t.input, *backend_, prompts_, options_.retry);
        } catch (const SchemaViolation& e) {
            t.failure = ExtractionFailure{t.input.day, t.input.ticker, t.input.modality, "filter",
                                          "SchemaViolation", e.what()};
        } catch (const BackendUnavailable& e) {
            t.failure = ExtractionFailure{t.input.day, t.input.ticker, t.input.modality, "filter",
                                          "BackendUnavailable", e.what()};
        }
    });

    ExtractionResult result;
    struct GenTask {
        std::vector<FilteredInfo> infos;
        std::string asset_name;
        GenerationResult output;
        std::optional<ExtractionFailure> failure;
    };
    std::map<GroupKey, GenTask> gen;
    for (auto& t : tasks) {
        if (t.failure) {
            result.failures.push_back(*t.failure);
            continue;
        }
        auto& g = gen[{t.input.day, t.input.ticker}];
        if (g.asset_name.empty()) g.asset_name = t.input.asset_name;
        g.infos.push_back(*t.output);
    }

    std::vector<GenTask*> gen_tasks;
    for (auto& [key, g] : gen) gen_tasks.push_back(&g);
    parallel_for(gen_tasks.size(), options_.parallelism, [&](std::size_t i) {
        auto& g = *gen_tasks[i];
        const auto& head = g.infos.front();
        try {
            g.output = generate_arguments(g.infos, *backend_, g.asset_name, prompts_, options_.retry);
            if (g.output.failure) {
                g.failure = ExtractionFailure{head.day, head.ticker, std::nullopt, "generate",
                                              "SchemaViolation", *g.output.failure};
            }
        } catch (const BackendUnavailable& e) {
            g.failure = ExtractionFailure{head.day, head.ticker, std::nullopt, "generate",
                                          "BackendUnavailable", e.what()};
        }
    });

    for (auto* g : gen_tasks) {
        if (g->failure) result.failures.push_back(*g->failure);
        for (auto& a : g->output.arguments) result.arguments.push_back(std::move(a));
    }
    return result;
}

ExtractionResult Extractor::extract_unstructured(const std::vector<RawDataPoint>& raw) const {
    struct SignTask {
        const RawDataPoint* input = nullptr;
        std::optional<int> polarity;
        std::optional<ExtractionFailure> failure;
    };
    std::vector<SignTask> tasks;
    for (const auto& [key, docs] : group_documents(raw)) {
        for (const auto* d : docs) tasks.push_back({d, std::nullopt, std::nullopt});
    }
    std::stable_sort(tasks.begin(), tasks.end(), [](const SignTask& a, const SignTask& b) {
        return std::tie(a.input->day, a.input->ticker) < std::tie(b.input->day, b.input->ticker);
    });

    parallel_for(tasks.size(), options_.parallelism, [&](std::size_t i) {
        auto& t = tasks[i];
        const RawDataPoint& r = *t.input;
        ChatRequest req;
        req.purpose = ChatPurpose::RawSign;
        req.system_prompt = prompts_.system;
        req.slots = {
            {std::string(slot::kAssetName), r.asset_name.empty() ? r.ticker : r.asset_name},
            {std::string(slot::kAssetTicker), r.ticker},
            {std::string(slot::kAnalysisDate), r.day.iso()},
            {std::string(slot::kModalityName), std::string(to_string(r.modality))},
            {std::string(slot::kRawDataShort), r.body},
        };
        req.user_prompt = fill_slots(prompts_.raw_sign_user, req.slots);
        const int prompts_allowed = 1 + std::max(0, options_.retry.schema_reprompts);
        for (int attempt = 1; attempt <= prompts_allowed; ++attempt) {
            try {
                const std::string reply = complete_with_retry(*backend_, req, options_.retry);
                const Unfenced u = strip_code_fence(reply);
                const json parsed = strict_parse(u.content, u.offset);
                if (!parsed.is_object() || parsed.size() != 1 || !parsed.contains("p") ||
                    !parsed["p"].is_number_integer() ||
                    (parsed["p"].get<long long>() != 1 && parsed["p"].get<long long>() != -1)) {
                    throw SchemaViolation("sign reply must be {\"p\": 1} or {\"p\": -1}", u.offset);
                }
                t.polarity = static_cast<int>(parsed["p"].get<long long>());
                t.failure.reset();
                return;
            } catch (const SchemaViolation& e) {
                t.failure = ExtractionFailure{r.day, r.ticker, r.modality, "sign", "SchemaViolation",
                                              e.what()};
            } catch (const BackendUnavailable& e) {
                t.failure = ExtractionFailure{r.day, r.ticker, r.modality, "sign",
                                              "BackendUnavailable", e.what()};
                return;
            }
        }
    });

    ExtractionResult result;
    std::map<GroupKey, std::size_t> counters;
    for (const auto& t : tasks) {
        if (t.failure) {
            result.failures.push_back(*t.failure);
            continue;
        }
        const RawDataPoint& r = *t.input;
        const std::size_t index = counters[{r.day, r.ticker}]++;
        result.arguments.push_back(InvestmentArgument::make(
            r.day, r.ticker, *t.polarity, r.body, std::string(to_string(r.modality)),
            make_argument_id(r.day, r.ticker, index)));
    }
    return result;
}

}  // namespace modeflow
