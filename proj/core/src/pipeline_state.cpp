#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "modeflow/backends.hpp"
#include "modeflow/errors.hpp"
#include "modeflow/io.hpp"
#include "modeflow/pipeline.hpp"
#include "modeflow/serialization.hpp"

namespace modeflow {

namespace {

using nlohmann::json;

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? to_json(*v) : json(nullptr);
}

std::string_view to_string(ArgumentSourceKind k) {
    switch (k) {
        case ArgumentSourceKind::Live: return "live";
        case ArgumentSourceKind::Mock: return "mock";
        case ArgumentSourceKind::File: return "file";
    }
    return "mock";
}

std::string_view to_string(EncoderSourceKind k) { return k == EncoderSourceKind::Live ? "live" : "mock"; }

std::string_view to_string(ProjectionMode m) {
    switch (m) {
        case ProjectionMode::Auto: return "auto";
        case ProjectionMode::On: return "on";
        case ProjectionMode::Off: return "off";
    }
    return "auto";
}

std::string_view to_string(Execution e) { return e == Execution::OpenToOpen ? "open_to_open" : "close_to_close"; }

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> values, std::string_view field) {
    for (E v : values) {
        if (to_string(v) == s) return v;
    }
    throw ConfigError(fmt::format("{}: unknown value '{}'", field, s));
}

}  // namespace

// ---- RunConfig ----

void RunConfig::validate() const {
    if (k_target < 1) throw ConfigError("K must be at least 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ConfigError("top_fraction must lie in (0, 1]");
    if (!(cost_rate >= 0.0)) throw ConfigError("cost_rate must be non-negative");
    if (!(periods_per_year > 0.0)) throw ConfigError("periods_per_year must be positive");
    if (mock_dim == 0) throw ConfigError("mock_dim must be positive");
    if (projection_dim == 0) throw ConfigError("projection_dim must be positive");
    if (projection_burn_in_days == 0) throw ConfigError("projection_burn_in_days must be positive");
    if (argument_source == ArgumentSourceKind::Mock && (synthetic_days < 2 || synthetic_stocks < 1)) {
        throw ConfigError("synthetic market needs at least 2 days and 1 stock");
    }
    if (argument_source == ArgumentSourceKind::File && arguments_file.empty()) {
        throw ConfigError("file argument source needs arguments_file");
    }
    if (argument_source == ArgumentSourceKind::Live && raw_file.empty()) {
        throw ConfigError("live argument source needs raw_file");
    }
    if (argument_source != ArgumentSourceKind::Mock && (universe_file.empty() || price_file.empty())) {
        throw ConfigError("universe_file and price_file are required unless the source is mock");
    }
}

std::string RunConfig::to_json_text() const {
    json j = {
        {"universe_file", universe_file.string()},
        {"price_file", price_file.string()},
        {"argument_source", to_string(argument_source)},
        {"arguments_file", arguments_file.string()},
        {"raw_file", raw_file.string()},
        {"encoder_source", to_string(encoder_source)},
        {"mock_dim", mock_dim},
        {"synthetic_days", synthetic_days},
        {"synthetic_stocks", synthetic_stocks},
        {"k_target", k_target},
        {"lambda", lambda},
        {"epsilon", epsilon},
        {"top_fraction", top_fraction},
        {"cost_rate", cost_rate},
        {"periods_per_year", periods_per_year},
        {"risk_free", risk_free},
        {"seed", seed},
        {"execution", to_string(execution)},
        {"projection", to_string(projection)},
        {"projection_dim", projection_dim},
        {"projection_burn_in_days", projection_burn_in_days},
        {"projection_auto_threshold", projection_auto_threshold},
        {"gmm",
         {{"max_iterations", gmm.max_iterations},
          {"relative_tolerance", gmm.relative_tolerance},
          {"variance_floor", gmm.variance_floor},
          {"weight_floor", gmm.weight_floor},
          {"cold_start_restarts", gmm.cold_start_restarts}}},
        {"ablation",
         {{"sag", ablation.structured_arguments},
          {"mot", ablation.modes_of_thought},
          {"pm", ablation.probabilistic},
          {"ta", ablation.temporal_alignment}}},
        {"regime_calendar", regime_calendar.string()},
        {"index_file", index_file.string()},
        {"state_dir", state_dir.string()},
        {"cache_dir", cache_dir.string()},
        {"parallelism", parallelism},
    };
    return j.dump(2);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    RunConfig c;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "universe_file") c.universe_file = v.get<std::string>();
            else if (key == "price_file") c.price_file = v.get<std::string>();
            else if (key == "argument_source")
                c.argument_source = parse_enum(v.get<std::string>(), {ArgumentSourceKind::Live, ArgumentSourceKind::Mock,
                                                                     ArgumentSourceKind::File}, key);
            else if (key == "arguments_file") c.arguments_file = v.get<std::string>();
            else if (key == "raw_file") c.raw_file = v.get<std::string>();
            else if (key == "encoder_source")
                c.encoder_source = parse_enum(v.get<std::string>(), {EncoderSourceKind::Live, EncoderSourceKind::Mock}, key);
            else if (key == "mock_dim") c.mock_dim = v.get<std::size_t>();
            else if (key == "synthetic_days") c.synthetic_days = v.get<int>();
            else if (key == "synthetic_stocks") c.synthetic_stocks = v.get<int>();
            else if (key == "k_target") c.k_target = v.get<std::size_t>();
            else if (key == "lambda") c.lambda = v.get<double>();
            else if (key == "epsilon") c.epsilon = v.get<double>();
            else if (key == "top_fraction") c.top_fraction = v.get<double>();
            else if (key == "cost_rate") c.cost_rate = v.get<double>();
            else if (key == "periods_per_year") c.periods_per_year = v.get<double>();
            else if (key == "risk_free") c.risk_free = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "execution")
                c.execution = parse_enum(v.get<std::string>(), {Execution::OpenToOpen, Execution::CloseToClose}, key);
            else if (key == "projection")
                c.projection = parse_enum(v.get<std::string>(), {ProjectionMode::Auto, ProjectionMode::On,
                                                                ProjectionMode::Off}, key);
            else if (key == "projection_dim") c.projection_dim = v.get<std::size_t>();
            else if (key == "projection_burn_in_days") c.projection_burn_in_days = v.get<std::size_t>();
            else if (key == "projection_auto_threshold") c.projection_auto_threshold = v.get<std::size_t>();
            else if (key == "gmm") {
                for (const auto& [gk, gv] : v.items()) {
                    if (gk == "max_iterations") c.gmm.max_iterations = gv.get<int>();
                    else if (gk == "relative_tolerance") c.gmm.relative_tolerance = gv.get<double>();
                    else if (gk == "variance_floor") c.gmm.variance_floor = gv.get<double>();
                    else if (gk == "weight_floor") c.gmm.weight_floor = gv.get<double>();
                    else if (gk == "cold_start_restarts") c.gmm.cold_start_restarts = gv.get<int>();
                    else throw ConfigError(fmt::format("unknown gmm setting '{}'", gk));
                }
            } else if (key == "ablation") {
                for (const auto& [ak, av] : v.items()) {
                    if (ak == "sag") c.ablation.structured_arguments = av.get<bool>();
                    else if (ak == "mot") c.ablation.modes_of_thought = av.get<bool>();
                    else if (ak == "pm") c.ablation.probabilistic = av.get<bool>();
                    else if (ak == "ta") c.ablation.temporal_alignment = av.get<bool>();
                    else throw ConfigError(fmt::format("unknown ablation flag '{}'", ak));
                }
            } else if (key == "regime_calendar") c.regime_calendar = v.get<std::string>();
            else if (key == "index_file") c.index_file = v.get<std::string>();
            else if (key == "state_dir") c.state_dir = v.get<std::string>();
            else if (key == "cache_dir") c.cache_dir = v.get<std::string>();
            else if (key == "parallelism") c.parallelism = v.get<std::size_t>();
            else throw ConfigError(fmt::format("unknown config key '{}'", key));
        }
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("bad config value: {}", e.what()));
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    auto c = from_json_text(read_text_file(path));
    const auto base = path.parent_path();
    for (auto* p : {&c.universe_file, &c.price_file, &c.arguments_file, &c.raw_file, &c.regime_calendar,
                    &c.index_file, &c.state_dir, &c.cache_dir}) {
        if (!p->empty() && p->is_relative()) *p = base / *p;
    }
    return c;
}

// ---- DailyState ----

std::string DailyState::to_json_text() const {
    json signals_json = json::array();
    for (const auto& s : signals) signals_json.push_back({{"ticker", s.ticker}, {"value", s.value}});
    json j = {{"day", day.iso()},
              {"modes_day", modes_day ? json(modes_day->iso()) : json(nullptr)},
              {"modes", optional_json(modes)},
              {"responsibility_digest", responsibility_digest},
              {"alignment", optional_json(alignment)},
              {"perf", optional_json(perf)},
              {"signals", std::move(signals_json)},
              {"weights", to_json(weights)},
              {"argument_count", argument_count},
              {"gap", gap}};
    return j.dump(1);
}

DailyState DailyState::from_json_text(const std::string& text) {
    try {
        const auto j = json::parse(text);
        DailyState s;
        s.day = Date::parse(j.at("day").get<std::string>());
        if (!j.at("modes_day").is_null()) s.modes_day = Date::parse(j.at("modes_day").get<std::string>());
        if (!j.at("modes").is_null()) s.modes = mode_set_from_json(j.at("modes"));
        s.responsibility_digest = j.at("responsibility_digest").get<std::string>();
        if (!j.at("alignment").is_null()) s.alignment = alignment_from_json(j.at("alignment"));
        if (!j.at("perf").is_null()) s.perf = perf_state_from_json(j.at("perf"));
        for (const auto& sig : j.at("signals")) {
            s.signals.push_back({s.day, sig.at("ticker").get<std::string>(), sig.at("value").get<double>()});
        }
        s.weights = weights_from_json(j.at("weights"));
        s.argument_count = j.at("argument_count").get<std::size_t>();
        s.gap = j.at("gap").get<bool>();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("malformed daily state: {}", e.what()));
    }
}

// ---- StateStore ----

StateStore::StateStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

void StateStore::save(const DailyState& state) const {
    write_file_atomic(dir_ / (state.day.iso() + ".json"), state.to_json_text());
}

std::optional<DailyState> StateStore::load(const Date& day) const {
    const auto path = dir_ / (day.iso() + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    return DailyState::from_json_text(read_text_file(path));
}

std::vector<Date> StateStore::days() const {
    std::vector<Date> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        const auto name = entry.path().filename().string();
        if (name.size() != 15 || !name.ends_with(".json")) continue;
        try {
            out.push_back(Date::parse(name.substr(0, 10)));
        } catch (const ConfigError&) {
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<DailyState> StateStore::load_all() const {
    std::vector<DailyState> out;
    for (const auto& d : days()) out.push_back(*load(d));
    return out;
}

void StateStore::save_projection(const Projection& projection) const {
    write_file_atomic(dir_ / "projection.json", to_json(projection).dump());
}

std::optional<Projection> StateStore::load_projection() const {
    const auto path = dir_ / "projection.json";
    if (!std::filesystem::exists(path)) return std::nullopt;
    return projection_from_json(json::parse(read_text_file(path)));
}

// ---- argument sources ----

FileArgumentSource::FileArgumentSource(std::vector<InvestmentArgument> args) {
    for (auto& a : args) by_day_[a.day].push_back(std::move(a));
}

std::shared_ptr<FileArgumentSource> FileArgumentSource::load(const std::filesystem::path& path) {
    return std::make_shared<FileArgumentSource>(read_arguments_jsonl(path));
}

std::vector<InvestmentArgument> FileArgumentSource::arguments_for(const Date& day) {
    const auto it = by_day_.find(day);
    return it == by_day_.end() ? std::vector<InvestmentArgument>{} : it->second;
}

SyntheticArgumentSource::SyntheticArgumentSource(std::shared_ptr<const SyntheticScenario> scenario, bool structured)
    : scenario_(std::move(scenario)) {
    for (const auto& ta : scenario_->arguments) {
        const auto& a = ta.argument;
        themes_[a.argument_id] = ta.theme;
        if (structured) {
            by_day_[a.day].push_back(a);
            continue;
        }
        const double bias = scenario_->spec.themes.at(static_cast<std::size_t>(ta.theme)).bullish_probability;
        by_day_[a.day].push_back(InvestmentArgument::make(a.day, a.ticker, bias < 0.5 ? -1 : 1,
                                                          a.rationale + " " + a.evidence, "raw", a.argument_id));
    }
}

std::vector<InvestmentArgument> SyntheticArgumentSource::arguments_for(const Date& day) {
    const auto it = by_day_.find(day);
    return it == by_day_.end() ? std::vector<InvestmentArgument>{} : it->second;
}

int SyntheticArgumentSource::theme_of(const std::string& argument_id) const {
    const auto it = themes_.find(argument_id);
    if (it == themes_.end()) throw ConfigError(fmt::format("unknown synthetic argument '{}'", argument_id));
    return it->second;
}

ExtractingArgumentSource::ExtractingArgumentSource(std::vector<RawDataPoint> raw, std::shared_ptr<Extractor> extractor,
                                                   bool structured)
    : extractor_(std::move(extractor)), structured_(structured) {
    for (auto& r : raw) raw_by_day_[r.day].push_back(std::move(r));
}

std::vector<InvestmentArgument> ExtractingArgumentSource::arguments_for(const Date& day) {
    {
        std::lock_guard lock(mutex_);
        if (const auto it = done_.find(day); it != done_.end()) return it->second;
    }
    const auto it = raw_by_day_.find(day);
    if (it == raw_by_day_.end()) return {};
    auto result = structured_ ? extractor_->extract(it->second) : extractor_->extract_unstructured(it->second);
    std::lock_guard lock(mutex_);
    failures_.insert(failures_.end(), result.failures.begin(), result.failures.end());
    done_[day] = result.arguments;
    return result.arguments;
}

std::vector<ExtractionFailure> ExtractingArgumentSource::failures() const {
    std::lock_guard lock(mutex_);
    return failures_;
}

// ---- inputs and analysis ----

PipelineInputs make_inputs(const RunConfig& config) {
    config.validate();
    const auto wiring = apply_ablation(config.ablation);
    PipelineInputs in;
    switch (config.argument_source) {
        case ArgumentSourceKind::Mock: {
            auto scenario = std::make_shared<SyntheticScenario>(
                generate_scenario(SyntheticSpec::planted(config.synthetic_days, config.synthetic_stocks), config.seed));
            in.universe = scenario->spec.tickers;
            in.prices = scenario->prices;
            in.arguments = std::make_shared<SyntheticArgumentSource>(scenario, wiring.structured_arguments);
            in.scenario = std::move(scenario);
            break;
        }
        case ArgumentSourceKind::File:
            in.universe = load_universe(config.universe_file);
            in.prices = PriceTable::load_csv(config.price_file);
            in.arguments = FileArgumentSource::load(config.arguments_file);
            break;
        case ArgumentSourceKind::Live: {
            in.universe = load_universe(config.universe_file);
            in.prices = PriceTable::load_csv(config.price_file);
            std::shared_ptr<AgentBackend> backend = HttpChatBackend::from_environment();
            ExtractorOptions opts;
            opts.parallelism = config.parallelism;
            in.arguments = std::make_shared<ExtractingArgumentSource>(
                read_raw_jsonl(config.raw_file), std::make_shared<Extractor>(backend, opts),
                wiring.structured_arguments);
            break;
        }
    }
    std::shared_ptr<EncoderBackend> encoder;
    if (config.encoder_source == EncoderSourceKind::Mock) {
        encoder = std::make_shared<MockHashEncoder>(config.mock_dim);
    } else {
        encoder = HttpEncoder::from_environment();
    }
    auto cache = config.cache_dir.empty() ? std::make_shared<EmbeddingCache>()
                                          : std::make_shared<EmbeddingCache>(config.cache_dir);
    EmbedderOptions eopts;
    eopts.parallelism = config.parallelism;
    in.embedder = std::make_shared<Embedder>(std::move(encoder), std::move(cache), eopts);
    if (!config.regime_calendar.empty()) in.calendar = RegimeCalendar::load_csv(config.regime_calendar);
    if (!config.index_file.empty()) in.index_levels = load_index_levels(config.index_file);
    return in;
}

RunResult analyze_states(std::vector<DailyState> states, const PipelineInputs& inputs, const RunConfig& config) {
    RunResult res;
    std::sort(states.begin(), states.end(), [](const DailyState& a, const DailyState& b) { return a.day < b.day; });

    std::vector<PortfolioWeights> weights;
    std::vector<CorrelationDay> corr;
    for (const auto& s : states) {
        weights.push_back(s.weights);
        const auto next = inputs.prices.next_day(s.day);
        if (!next || s.signals.empty()) continue;
        CorrelationDay cd;
        cd.day = s.day;
        for (const auto& sig : s.signals) {
            const auto c0 = inputs.prices.close(s.day, sig.ticker);
            const auto c1 = inputs.prices.close(*next, sig.ticker);
            if (!c0 || !c1) continue;
            cd.signal.push_back(sig.value);
            cd.forward_return.push_back(*c1 / *c0 - 1.0);
        }
        corr.push_back(std::move(cd));
    }

    BacktestOptions bopts;
    bopts.cost_rate = config.cost_rate;
    bopts.periods_per_year = config.periods_per_year;
    bopts.risk_free = config.risk_free;
    bopts.execution = config.execution;
    bopts.index_levels = inputs.index_levels;
    try {
        res.report = run_backtest(weights, corr, inputs.prices, bopts);
    } catch (const EmptyInput&) {
        res.report = BacktestReport{};
        res.report.periods_per_year = config.periods_per_year;
        res.report.simulation.wealth = {1.0};
    }

    std::set<Date> seen;
    for (const auto& s : states) {
        if (!s.perf || !seen.insert(s.perf->day).second) continue;
        res.perf_by_day.push_back({s.perf->day, s.perf->lineage, s.perf->perf});
    }
    res.lineages = classify_modes(perf_history(res.perf_by_day), inputs.calendar);
    res.shares = daily_shares(res.perf_by_day);
    res.category_shares = category_shares(res.shares, res.lineages);
    res.states = std::move(states);
    return res;
}

void RunResult::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "report.json", report.to_json());
    write_file_atomic(dir / "report.txt", report.to_text());
    std::vector<StockSignal> signals;
    std::vector<PortfolioWeights> weights;
    for (const auto& s : states) {
        signals.insert(signals.end(), s.signals.begin(), s.signals.end());
        weights.push_back(s.weights);
    }
    write_signals_csv(dir / "signals.csv", signals);
    write_weights_csv(dir / "weights.csv", weights);
    report.write_series(dir);
    write_lineage_csv(dir / "lineages.csv", lineages);
    write_share_csv(dir / "shares.csv", category_shares);
}

}  // namespace modeflow
