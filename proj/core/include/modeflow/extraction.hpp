#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modeflow/types.hpp"

namespace modeflow {

/// One pre-collected document for one stock, day and modality.
struct RawDataPoint {
    Date day;
    Ticker ticker;
    Modality modality = Modality::News;
    std::string body;
    std::string asset_name;  // falls back to the ticker when empty

    void validate() const;
};

/// Filter-agent output for one (day, ticker, modality).
struct FilteredInfo {
    Date day;
    Ticker ticker;
    Modality modality = Modality::News;
    std::string summary;

    friend bool operator==(const FilteredInfo&, const FilteredInfo&) = default;
};

enum class ChatPurpose { Filter, Generate, RawSign };

/// A rendered two-part prompt. `slots` holds the values that were substituted
/// into the user template, keyed by slot name without brackets; mock backends
/// answer from them instead of re-parsing the prompt.
struct ChatRequest {
    ChatPurpose purpose = ChatPurpose::Filter;
    std::string system_prompt;
    std::string user_prompt;
    std::map<std::string, std::string> slots;
};

class AgentBackend {
public:
    virtual ~AgentBackend() = default;
    /// Returns the raw reply text. Throws BackendUnavailable.
    virtual std::string complete(const ChatRequest& request) = 0;
};

/// Offline backend. Filter requests echo the raw body back as the summary;
/// generation requests turn each non-empty modality summary into one argument
/// (bearish when the summary mentions "bearish", bullish otherwise); sign
/// requests answer the same way.
class EchoAgentBackend final : public AgentBackend {
public:
    std::string complete(const ChatRequest& request) override;
};

/// Prompt templates with `[Slot Name]` placeholders.
struct PromptSet {
    std::string system;
    std::string filter_user;
    std::string generator_user;
    std::string raw_sign_user;

    /// Templates compiled into the library from core/prompts/.
    static const PromptSet& builtin();
    /// Reads filter_system.txt, filter_user.txt, generator_user.txt and
    /// raw_sign_user.txt from `dir`.
    static PromptSet load(const std::filesystem::path& dir);
};

/// Slot names used by the templates.
namespace slot {
inline constexpr std::string_view kAssetName = "Asset Name";
inline constexpr std::string_view kAssetTicker = "Asset Ticker";
inline constexpr std::string_view kAnalysisDate = "Analysis Date";
inline constexpr std::string_view kModalityName = "Modality Name";
inline constexpr std::string_view kRawData =
    "Raw Data for the specified modality, e.g., a table of fundamental ratios, a list of recent "
    "news headlines, or a time-series of technical indicators";
inline constexpr std::string_view kRawDataShort = "Raw Data";
inline constexpr std::string_view kFundamentalOutput = "fundamental_output";
inline constexpr std::string_view kTechnicalOutput = "technical_output";
inline constexpr std::string_view kNewsOutput = "news_output";
}  // namespace slot

/// Replaces every `[name]` occurrence for each entry of `slots`.
std::string fill_slots(std::string_view tmpl, const std::map<std::string, std::string>& slots);

/// Retry behaviour shared by the chat and encoder clients.
struct RetryPolicy {
    int max_attempts = 4;  // transport attempts per call
    std::chrono::milliseconds initial_delay{200};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{5000};
    int schema_reprompts = 2;  // extra prompts after a SchemaViolation
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for

    void pause(int attempt) const;
};

/// Calls `backend` with exponential backoff on retryable BackendUnavailable.
std::string complete_with_retry(AgentBackend& backend, const ChatRequest& request,
                                const RetryPolicy& policy);

/// Code-fence wrapper removal. `offset` is where `content` starts in the
/// original text.
struct Unfenced {
    std::string_view content;
    std::size_t offset = 0;
};
Unfenced strip_code_fence(std::string_view text);

/// Strict parse of a generator reply: a JSON array of objects with exactly the
/// keys p, a, e; p must be the integer 1 or -1, a and e non-empty strings.
/// Throws SchemaViolation carrying the byte offset of the first failure.
std::vector<InvestmentArgument> parse_argument_json(std::string_view text, const Date& day,
                                                    const Ticker& ticker);

/// Inverse of parse_argument_json (ids, day and ticker are not rendered).
std::string render_arguments_json(const std::vector<InvestmentArgument>& args);

/// Validates a filter-agent reply against `raw`.
FilteredInfo parse_filter_reply(std::string_view text, const RawDataPoint& raw);

ChatRequest build_filter_request(const RawDataPoint& raw, const PromptSet& prompts);
ChatRequest build_generator_request(const std::vector<FilteredInfo>& infos,
                                    std::string_view asset_name, const PromptSet& prompts);

FilteredInfo filter_information(const RawDataPoint& raw, AgentBackend& backend,
                                const PromptSet& prompts = PromptSet::builtin(),
                                const RetryPolicy& policy = {});

/// Outcome of the generator stage for one (day, ticker).
struct GenerationResult {
    std::vector<InvestmentArgument> arguments;
    int attempts = 0;
    std::optional<std::string> failure;  // set when re-prompts were exhausted
};

/// Runs the generator agent. A reply that keeps violating the schema after
/// `policy.schema_reprompts` re-prompts yields an empty list with `failure`
/// set. BackendUnavailable propagates once transport retries are spent.
GenerationResult generate_arguments(const std::vector<FilteredInfo>& infos, AgentBackend& backend,
                                    std::string_view asset_name = {},
                                    const PromptSet& prompts = PromptSet::builtin(),
                                    const RetryPolicy& policy = {});

struct ExtractionFailure {
    Date day;
    Ticker ticker;
    std::optional<Modality> modality;
    std::string stage;  // "filter", "generate" or "sign"
    std::string kind;   // "BackendUnavailable" or "SchemaViolation"
    std::string message;
};

struct ExtractionResult {
    std::vector<InvestmentArgument> arguments;  // ordered by (day, ticker, index)
    std::vector<ExtractionFailure> failures;
};

struct ExtractorOptions {
    std::size_t parallelism = 4;
    /// When false (default) the documents of one modality are concatenated
    /// into a single filter call; when true each document gets its own call.
    bool filter_per_document = false;
    std::string document_separator = "\n\n";
    RetryPolicy retry;
};

/// Two-stage multi-agent extraction over a batch of raw documents.
class Extractor {
public:
    Extractor(std::shared_ptr<AgentBackend> backend, ExtractorOptions options = {},
              PromptSet prompts = PromptSet::builtin());

    ExtractionResult extract(const std::vector<RawDataPoint>& raw) const;

    /// Structure-free extraction used when structured argument generation is
    /// ablated: one pseudo-argument per document whose text is the raw body and
    /// whose polarity comes from a sign prompt.
    ExtractionResult extract_unstructured(const std::vector<RawDataPoint>& raw) const;

private:
    std::shared_ptr<AgentBackend> backend_;
    ExtractorOptions options_;
    PromptSet prompts_;
};

}  // namespace modeflow
