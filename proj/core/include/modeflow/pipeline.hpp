#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "modeflow/alignment.hpp"
#include "modeflow/backtest.hpp"
#include "modeflow/embedding.hpp"
#include "modeflow/extraction.hpp"
#include "modeflow/lifecycle.hpp"
#include "modeflow/market.hpp"
#include "modeflow/mode_engine.hpp"
#include "modeflow/mode_eval.hpp"
#include "modeflow/signal.hpp"
#include "modeflow/synthetic.hpp"

namespace modeflow {

/// Component switches for ablation runs. All on is the full method.
struct AblationFlags {
    bool structured_arguments = true;  // SAG
    bool modes_of_thought = true;      // MOT
    bool probabilistic = true;         // PM
    bool temporal_alignment = true;    // TA

    friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

enum class ArgumentSourceKind { Live, Mock, File };
enum class EncoderSourceKind { Live, Mock };
enum class ProjectionMode { Auto, On, Off };

struct RunConfig {
    std::filesystem::path universe_file;
    std::filesystem::path price_file;
    ArgumentSourceKind argument_source = ArgumentSourceKind::Mock;
    std::filesystem::path arguments_file;  // File source
    std::filesystem::path raw_file;        // Live source
    EncoderSourceKind encoder_source = EncoderSourceKind::Mock;
    std::size_t mock_dim = 64;

    // Mock source: synthetic planted-theme market.
    int synthetic_days = 60;
    int synthetic_stocks = 30;

    std::size_t k_target = 20;
    double lambda = 0.5;
    double epsilon = 1e-5;
    double top_fraction = 0.2;
    double cost_rate = 1.5e-4;
    double periods_per_year = 252.0;
    double risk_free = 0.0;
    std::uint64_t seed = 0;
    Execution execution = Execution::OpenToOpen;

    ProjectionMode projection = ProjectionMode::Auto;
    std::size_t projection_dim = 64;
    std::size_t projection_burn_in_days = 20;
    std::size_t projection_auto_threshold = 256;

    GmmOptions gmm;
    AblationFlags ablation;

    std::filesystem::path regime_calendar;
    std::filesystem::path index_file;
    std::filesystem::path state_dir;
    std::filesystem::path cache_dir;
    std::size_t parallelism = 4;

    /// Throws ConfigError when an invariant fails (K >= 1, lambda in [0,1],
    /// epsilon > 0, top_fraction in (0,1], ...).
    void validate() const;

    static RunConfig from_json_text(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    std::string to_json_text() const;
};

/// How each stage is wired for a given set of ablation flags.
struct StageWiring {
    bool structured_arguments = true;  // false: raw-text pseudo-arguments
    bool singleton_modes = false;      // every argument is its own mode
    bool hard_assignment = false;      // argmax one-hot instead of soft weights
    bool temporal_alignment = true;    // false: identity when K matches, rebirth otherwise

    friend bool operator==(const StageWiring&, const StageWiring&) = default;
};

StageWiring apply_ablation(const AblationFlags& flags);

/// Everything the day loop carries from one trading day to the next.
struct DailyState {
    Date day;
    /// Day whose arguments produced `modes`; differs from `day` only when the
    /// day had no arguments and the previous modes were carried forward.
    std::optional<Date> modes_day;
    std::optional<DailyModeSet> modes;
    std::string responsibility_digest;
    /// Previous modes -> `modes`.
    std::optional<ModeAlignment> alignment;
    /// Performance of the previous modes after today's evaluation.
    std::optional<PerfState> perf;
    std::vector<StockSignal> signals;
    PortfolioWeights weights;
    std::size_t argument_count = 0;
    bool gap = false;

    std::string to_json_text() const;
    static DailyState from_json_text(const std::string& text);

    friend bool operator==(const DailyState&, const DailyState&) = default;
};

/// Per-day argument supply.
class ArgumentSource {
public:
    virtual ~ArgumentSource() = default;
    virtual std::vector<InvestmentArgument> arguments_for(const Date& day) = 0;
};

/// Arguments from a JSON-lines file.
class FileArgumentSource final : public ArgumentSource {
public:
    explicit FileArgumentSource(std::vector<InvestmentArgument> args);
    static std::shared_ptr<FileArgumentSource> load(const std::filesystem::path& path);
    std::vector<InvestmentArgument> arguments_for(const Date& day) override;

private:
    std::map<Date, std::vector<InvestmentArgument>> by_day_;
};

/// Arguments of a synthetic scenario. Without structured extraction each
/// argument is replaced by a pseudo-argument: its rationale and evidence merged
/// into one raw text and its polarity set by the sign of its theme's bias.
class SyntheticArgumentSource final : public ArgumentSource {
public:
    SyntheticArgumentSource(std::shared_ptr<const SyntheticScenario> scenario, bool structured);
    std::vector<InvestmentArgument> arguments_for(const Date& day) override;
    /// Theme of each argument id.
    int theme_of(const std::string& argument_id) const;

private:
    std::shared_ptr<const SyntheticScenario> scenario_;
    std::map<Date, std::vector<InvestmentArgument>> by_day_;
    std::map<std::string, int> themes_;
};

/// Runs the agent extraction on raw documents, one day at a time, memoizing
/// results. Failures are kept for inspection.
class ExtractingArgumentSource final : public ArgumentSource {
public:
    ExtractingArgumentSource(std::vector<RawDataPoint> raw, std::shared_ptr<Extractor> extractor,
                             bool structured);
    std::vector<InvestmentArgument> arguments_for(const Date& day) override;
    std::vector<ExtractionFailure> failures() const;

private:
    std::map<Date, std::vector<RawDataPoint>> raw_by_day_;
    std::shared_ptr<Extractor> extractor_;
    bool structured_;
    mutable std::mutex mutex_;
    std::map<Date, std::vector<InvestmentArgument>> done_;
    std::vector<ExtractionFailure> failures_;
};

/// One JSON document per day under a directory, written atomically.
class StateStore {
public:
    explicit StateStore(std::filesystem::path dir);

    void save(const DailyState& state) const;
    std::optional<DailyState> load(const Date& day) const;
    std::vector<Date> days() const;
    std::vector<DailyState> load_all() const;

    void save_projection(const Projection& projection) const;
    std::optional<Projection> load_projection() const;

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
};

/// Test seam: lets a caller inspect or relabel each day's fitted modes before
/// they enter the rest of the day.
struct PipelineHooks {
    std::function<void(const Date&, ModeFit&)> post_fit;
};

struct PipelineInputs {
    std::vector<Ticker> universe;
    PriceTable prices;
    std::shared_ptr<ArgumentSource> arguments;
    std::shared_ptr<Embedder> embedder;
    RegimeCalendar calendar;
    std::vector<std::pair<Date, double>> index_levels;
    /// Set for mock runs; lets reports recover theme labels.
    std::shared_ptr<const SyntheticScenario> scenario;
};

/// Builds inputs from the files, sources and backends named in `config`.
PipelineInputs make_inputs(const RunConfig& config);

struct RunResult {
    std::vector<DailyState> states;
    BacktestReport report;
    std::vector<DayPerf> perf_by_day;
    std::vector<ModeLifecycleRecord> lineages;
    std::vector<DayShares> shares;
    std::vector<CategoryShare> category_shares;

    /// report.json, report.txt, signals.csv, weights.csv, wealth.csv, ic.csv,
    /// lineages.csv, shares.csv.
    void write(const std::filesystem::path& dir) const;
};

class Pipeline {
public:
    Pipeline(RunConfig config, PipelineInputs inputs, PipelineHooks hooks = {});

    /// One step of the day loop. `prev` must be the state of the previous
    /// trading day (or null on the first day). Persists the state when a
    /// state directory is configured.
    DailyState run_day(const DailyState* prev, const Date& day);

    /// Sequential loop over the trading days in [first, last]. Days whose state
    /// already exists in the state directory are loaded rather than recomputed,
    /// and the loop resumes from the stored state of the day before `first`.
    /// Throws ConfigError on an empty range.
    RunResult run_range(const Date& first, const Date& last);
    RunResult run_all();

    const RunConfig& config() const noexcept { return config_; }
    const PipelineInputs& inputs() const noexcept { return inputs_; }
    const StageWiring& wiring() const noexcept { return wiring_; }

    /// Projected embeddings of a day's arguments (memoized).
    const Matrix& day_points(const Date& day);
    const std::vector<InvestmentArgument>& day_arguments(const Date& day);

private:
    struct DayData {
        std::vector<InvestmentArgument> args;
        std::vector<std::string> ids;
        Matrix raw_points;
        std::optional<Matrix> points;
    };

    DayData& day_data(const Date& day);
    bool projection_active() const;
    void ensure_projection(const Date& day);
    std::uint64_t day_seed(const Date& day) const;
    ResponsibilityMatrix evaluation_responsibilities(const DailyModeSet& modes, const Date& day);
    std::vector<double> argument_posterior(const DailyModeSet& modes, std::span<const double> x) const;

    RunConfig config_;
    PipelineInputs inputs_;
    PipelineHooks hooks_;
    StageWiring wiring_;
    std::optional<StateStore> store_;
    std::optional<Projection> projection_;
    std::map<Date, DayData> cache_;
};

/// Backtest, correlation and lifecycle analysis over a finished state stream.
RunResult analyze_states(std::vector<DailyState> states, const PipelineInputs& inputs,
                         const RunConfig& config);

}  // namespace modeflow
