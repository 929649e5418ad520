#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <random>

#include "modeflow/errors.hpp"
#include "modeflow/extraction.hpp"
#include "modeflow/io.hpp"

using namespace modeflow;

namespace {

const Date kDay = Date::parse("2024-01-02");

/// Answers with a fixed script of replies, then repeats the last one.
class ScriptedBackend final : public AgentBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    std::string complete(const ChatRequest& request) override {
        std::lock_guard lock(mutex_);
        requests.push_back(request);
        const std::size_t i = std::min(calls++, replies_.size() - 1);
        return replies_[i];
    }
    std::size_t calls = 0;
    std::vector<ChatRequest> requests;

private:
    std::vector<std::string> replies_;
    std::mutex mutex_;
};

class FlakyBackend final : public AgentBackend {
public:
    FlakyBackend(int failures, bool retryable) : failures_(failures), retryable_(retryable) {}
    std::string complete(const ChatRequest&) override {
        if (calls++ < failures_) throw BackendUnavailable("connection reset", retryable_);
        return R"([{"p":1,"a":"x","e":"y"}])";
    }
    int calls = 0;

private:
    int failures_;
    bool retryable_;
};

RetryPolicy no_sleep() {
    RetryPolicy p;
    p.sleep = [](std::chrono::milliseconds) {};
    return p;
}

FilteredInfo info(Modality m, std::string summary, Ticker ticker = "AAA") {
    return FilteredInfo{kDay, std::move(ticker), m, std::move(summary)};
}

}  // namespace

TEST(ParseArguments, SingleBullishArgument) {
    const auto args = parse_argument_json(R"([{"p":1,"a":"undervalued","e":"P/E at 2.8th percentile"}])", kDay, "AAA");
    ASSERT_EQ(args.size(), 1u);
    EXPECT_EQ(args[0].polarity, 1);
    EXPECT_EQ(args[0].rationale, "undervalued");
    EXPECT_EQ(args[0].evidence, "P/E at 2.8th percentile");
    EXPECT_EQ(args[0].day, kDay);
    EXPECT_EQ(args[0].ticker, "AAA");
    EXPECT_EQ(args[0].argument_id, "2024-01-02/AAA/0");
}

TEST(ParseArguments, MinimalBearishArgument) {
    const auto args = parse_argument_json(R"([{"p":-1,"a":"x","e":"y"}])", kDay, "AAA");
    ASSERT_EQ(args.size(), 1u);
    EXPECT_EQ(args[0].polarity, -1);
}

TEST(ParseArguments, EmptyArrayIsLegal) {
    EXPECT_TRUE(parse_argument_json("[]", kDay, "AAA").empty());
    EXPECT_TRUE(parse_argument_json("  [ ]\n", kDay, "AAA").empty());
}

TEST(ParseArguments, StripsCodeFence) {
    EXPECT_TRUE(parse_argument_json("```json [] ```", kDay, "AAA").empty());
    EXPECT_EQ(parse_argument_json("```\n[{\"p\":1,\"a\":\"x\",\"e\":\"y\"}]\n```", kDay, "AAA").size(), 1u);
}

TEST(ParseArguments, RejectsZeroPolarity) {
    EXPECT_THROW(parse_argument_json(R"([{"p":0,"a":"x","e":"y"}])", kDay, "AAA"), SchemaViolation);
}

TEST(ParseArguments, RejectsTopLevelObject) {
    EXPECT_THROW(parse_argument_json(R"({"p":1,"a":"x","e":"y"})", kDay, "AAA"), SchemaViolation);
}

TEST(ParseArguments, ViolationCarriesOffsetOfOffendingElement) {
    const std::string text = R"([{"p":1,"a":"x","e":"y"}, {"p":3,"a":"x","e":"y"}])";
    try {
        parse_argument_json(text, kDay, "AAA");
        FAIL() << "expected SchemaViolation";
    } catch (const SchemaViolation& e) {
        EXPECT_EQ(e.offset(), text.find("{\"p\":3"));
    }
}

TEST(ParseArguments, EveryMalformedFixtureIsRejected) {
    const std::filesystem::path dir = std::filesystem::path(MODEFLOW_FIXTURE_DIR) / "malformed_replies";
    std::size_t seen = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        ++seen;
        const auto body = read_text_file(entry.path());
        EXPECT_THROW(parse_argument_json(body, kDay, "AAA"), SchemaViolation) << entry.path().filename();
    }
    EXPECT_EQ(seen, 30u);
}

TEST(ParseArguments, RenderRoundTrip) {
    std::mt19937_64 rng(5);
    const std::vector<std::string> words{"margin", "guidance", "\"quoted\"", "unicode é", "line\nbreak", "50%"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<InvestmentArgument> args;
        const std::size_t n = rng() % 6;
        for (std::size_t i = 0; i < n; ++i) {
            args.push_back(InvestmentArgument::make(kDay, "AAA", rng() % 2 ? 1 : -1, words[rng() % words.size()],
                                                    words[rng() % words.size()], make_argument_id(kDay, "AAA", i)));
        }
        EXPECT_EQ(parse_argument_json(render_arguments_json(args), kDay, "AAA"), args);
    }
}

TEST(FilterReply, AcceptsMatchingTicker) {
    RawDataPoint raw{kDay, "000001.SZ", Modality::News, "headline", ""};
    const auto out = parse_filter_reply(
        R"({"Modality_name":"News","Analysis_summary":"Deposits grew","Asset_code":"000001.SZ"})", raw);
    EXPECT_EQ(out.summary, "Deposits grew");
    EXPECT_EQ(out.ticker, "000001.SZ");
    EXPECT_EQ(out.modality, Modality::News);
}

TEST(FilterReply, RejectsMissingSummaryAndWrongTicker) {
    RawDataPoint raw{kDay, "000001.SZ", Modality::News, "headline", ""};
    EXPECT_THROW(parse_filter_reply(R"({"Modality_name":"News","Asset_code":"000001.SZ"})", raw), SchemaViolation);
    EXPECT_THROW(parse_filter_reply(R"({"Modality_name":"News","Analysis_summary":"s","Asset_code":"X"})", raw),
                 SchemaViolation);
}

TEST(FilterInformation, EchoBackendReturnsBody) {
    EchoAgentBackend echo;
    RawDataPoint raw{kDay, "AAA", Modality::Fundamental, "ROE 14%, P/B 0.6", "Alpha Bank"};
    EXPECT_EQ(filter_information(raw, echo).summary, raw.body);
}

TEST(Prompts, FillSlotsReplacesEveryOccurrence) {
    EXPECT_EQ(fill_slots("[A] and [A] but not [B]", {{"A", "x"}}), "x and x but not [B]");
}

TEST(Prompts, FilterRequestCarriesRawData) {
    RawDataPoint raw{kDay, "AAA", Modality::Technical, "RSI 71", ""};
    const auto req = build_filter_request(raw, PromptSet::builtin());
    EXPECT_EQ(req.purpose, ChatPurpose::Filter);
    EXPECT_EQ(req.system_prompt, PromptSet::builtin().system);
    EXPECT_NE(req.user_prompt.find("RSI 71"), std::string::npos);
    EXPECT_NE(req.user_prompt.find("2024-01-02"), std::string::npos);
    EXPECT_EQ(req.slots.at(std::string(slot::kAssetName)), "AAA");
}

TEST(Prompts, BuiltinTemplatesMatchPromptFiles) {
    const auto dir = std::filesystem::path(MODEFLOW_SOURCE_DIR) / "core" / "prompts";
    const auto loaded = PromptSet::load(dir);
    EXPECT_EQ(loaded.system, PromptSet::builtin().system);
    EXPECT_EQ(loaded.filter_user, PromptSet::builtin().filter_user);
    EXPECT_EQ(loaded.generator_user, PromptSet::builtin().generator_user);
    EXPECT_EQ(loaded.raw_sign_user, PromptSet::builtin().raw_sign_user);
}

TEST(Prompts, GeneratorRequestFillsMissingModalities) {
    const auto req = build_generator_request({info(Modality::News, "orders up")}, "", PromptSet::builtin());
    EXPECT_EQ(req.slots.at(std::string(slot::kNewsOutput)), "orders up");
    EXPECT_EQ(req.slots.at(std::string(slot::kFundamentalOutput)), "N/A");
    EXPECT_THROW(build_generator_request({}, "", PromptSet::builtin()), EmptyInput);
}

TEST(GenerateArguments, RepromptsThenSucceeds) {
    ScriptedBackend backend({"not json", R"({"p":1})", R"([{"p":1,"a":"x","e":"y"}])"});
    const auto result = generate_arguments({info(Modality::News, "s")}, backend, "", PromptSet::builtin(), no_sleep());
    EXPECT_EQ(result.attempts, 3);
    EXPECT_FALSE(result.failure);
    EXPECT_EQ(result.arguments.size(), 1u);
}

TEST(GenerateArguments, GivesUpAfterBoundedReprompts) {
    ScriptedBackend backend({"[{\"p\":0,\"a\":\"x\",\"e\":\"y\"}]"});
    const auto result = generate_arguments({info(Modality::News, "s")}, backend, "", PromptSet::builtin(), no_sleep());
    EXPECT_EQ(backend.calls, 3u);
    EXPECT_TRUE(result.failure);
    EXPECT_TRUE(result.arguments.empty());
}

TEST(Retry, RetriesTransientFailures) {
    FlakyBackend backend(2, true);
    std::vector<std::chrono::milliseconds> pauses;
    RetryPolicy policy;
    policy.sleep = [&](std::chrono::milliseconds d) { pauses.push_back(d); };
    EXPECT_EQ(complete_with_retry(backend, {}, policy), R"([{"p":1,"a":"x","e":"y"}])");
    EXPECT_EQ(backend.calls, 3);
    ASSERT_EQ(pauses.size(), 2u);
    EXPECT_EQ(pauses[0].count(), 200);
    EXPECT_EQ(pauses[1].count(), 400);
}

TEST(Retry, StopsOnPermanentFailureAndAfterMaxAttempts) {
    FlakyBackend permanent(1, false);
    EXPECT_THROW(complete_with_retry(permanent, {}, no_sleep()), BackendUnavailable);
    EXPECT_EQ(permanent.calls, 1);
    FlakyBackend down(100, true);
    EXPECT_THROW(complete_with_retry(down, {}, no_sleep()), BackendUnavailable);
    EXPECT_EQ(down.calls, 4);
}

TEST(Extractor, EchoPipelineIsDeterministic) {
    std::vector<RawDataPoint> raw{
        {kDay, "BBB", Modality::News, "bearish guidance cut", ""},
        {kDay, "AAA", Modality::Fundamental, "cheap on book value", ""},
        {kDay, "AAA", Modality::News, "new contract", ""},
        {kDay, "AAA", Modality::News, "capacity expansion", ""},
    };
    ExtractorOptions opts;
    opts.retry = no_sleep();
    Extractor extractor(std::make_shared<EchoAgentBackend>(), opts);
    const auto a = extractor.extract(raw);
    const auto b = extractor.extract(raw);
    EXPECT_EQ(a.arguments, b.arguments);
    EXPECT_TRUE(a.failures.empty());
    ASSERT_EQ(a.arguments.size(), 3u);
    EXPECT_EQ(a.arguments[0].ticker, "AAA");
    EXPECT_EQ(a.arguments[0].evidence, "cheap on book value");
    EXPECT_EQ(a.arguments[1].evidence, "new contract\n\ncapacity expansion");
    EXPECT_EQ(a.arguments[2].ticker, "BBB");
    EXPECT_EQ(a.arguments[2].polarity, -1);
}

TEST(Extractor, PerDocumentFilteringIssuesOneCallPerDocument) {
    std::vector<RawDataPoint> raw{{kDay, "AAA", Modality::News, "one", ""}, {kDay, "AAA", Modality::News, "two", ""}};
    auto backend = std::make_shared<ScriptedBackend>(std::vector<std::string>{
        R"({"Modality_name":"News","Analysis_summary":"s","Asset_code":"AAA"})"});
    ExtractorOptions opts;
    opts.filter_per_document = true;
    opts.parallelism = 1;
    opts.retry = no_sleep();
    Extractor(backend, opts).extract(raw);
    std::size_t filters = 0;
    for (const auto& r : backend->requests) filters += r.purpose == ChatPurpose::Filter;
    EXPECT_EQ(filters, 2u);
}

TEST(Extractor, SchemaFailureLeavesStockEmptyAndIsRecorded) {
    auto backend = std::make_shared<ScriptedBackend>(std::vector<std::string>{"garbage"});
    ExtractorOptions opts;
    opts.retry = no_sleep();
    const auto result = Extractor(backend, opts).extract({{kDay, "AAA", Modality::News, "x", ""}});
    EXPECT_TRUE(result.arguments.empty());
    ASSERT_EQ(result.failures.size(), 1u);
    EXPECT_EQ(result.failures[0].kind, "SchemaViolation");
    EXPECT_EQ(result.failures[0].stage, "filter");
}

TEST(Extractor, UnstructuredModeKeepsRawBodyAndSignsIt) {
    ExtractorOptions opts;
    opts.retry = no_sleep();
    Extractor extractor(std::make_shared<EchoAgentBackend>(), opts);
    const auto result = extractor.extract_unstructured(
        {{kDay, "AAA", Modality::News, "bearish outlook", ""}, {kDay, "AAA", Modality::News, "steady", ""}});
    ASSERT_EQ(result.arguments.size(), 2u);
    EXPECT_EQ(result.arguments[0].polarity, -1);
    EXPECT_EQ(result.arguments[1].polarity, 1);
    EXPECT_NE(result.arguments[0].rationale.find("bearish outlook"), std::string::npos);
}
