#include <cstdio>
#include <iostream>
#include <map>
#include <random>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "modeflow/alignment.hpp"
#include "modeflow/backends.hpp"
#include "modeflow/backtest.hpp"
#include "modeflow/errors.hpp"
#include "modeflow/extraction.hpp"
#include "modeflow/io.hpp"
#include "modeflow/pipeline.hpp"
#include "modeflow/serialization.hpp"
#include "modeflow/synthetic.hpp"

using namespace modeflow;

namespace {

struct RunArgs {
    std::string config;
    std::string source;
    std::string encoder;
    std::string universe, prices, arguments, raw, state_dir, cache_dir, calendar, index;
    std::string from, to;
    std::string out = "modeflow-out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k;
    std::optional<double> lambda, epsilon, top, cost;
    std::optional<int> days, stocks;
    bool no_sag = false, no_mot = false, no_pm = false, no_ta = false;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
    cmd->add_option("-c,--config", a.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--source", a.source, "argument source")->check(CLI::IsMember({"mock", "file", "live"}));
    cmd->add_option("--encoder", a.encoder, "encoder source")->check(CLI::IsMember({"mock", "live"}));
    cmd->add_option("--universe", a.universe, "universe file, one ticker per line");
    cmd->add_option("--prices", a.prices, "price CSV day,ticker,open,close");
    cmd->add_option("--arguments", a.arguments, "argument JSONL for the file source");
    cmd->add_option("--raw", a.raw, "raw document JSONL for the live source");
    cmd->add_option("--state-dir", a.state_dir, "directory of per-day state files");
    cmd->add_option("--cache-dir", a.cache_dir, "embedding cache directory");
    cmd->add_option("--regimes", a.calendar, "regime calendar CSV start,end,label");
    cmd->add_option("--index", a.index, "index level CSV day,level");
    cmd->add_option("--seed", a.seed, "random seed");
    cmd->add_option("-k,--modes", a.k, "target number of modes");
    cmd->add_option("--lambda", a.lambda, "performance smoothing factor");
    cmd->add_option("--epsilon", a.epsilon, "signal denominator guard");
    cmd->add_option("--top", a.top, "fraction of the universe held");
    cmd->add_option("--cost", a.cost, "proportional transaction cost");
    cmd->add_option("--days", a.days, "synthetic market length");
    cmd->add_option("--stocks", a.stocks, "synthetic universe size");
    cmd->add_flag("--no-sag", a.no_sag, "raw-text pseudo-arguments instead of structured ones");
    cmd->add_flag("--no-mot", a.no_mot, "every argument is its own mode");
    cmd->add_flag("--no-pm", a.no_pm, "hard mode assignment");
    cmd->add_flag("--no-ta", a.no_ta, "no temporal alignment");
}

RunConfig resolve_config(const RunArgs& a) {
    RunConfig c = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
    if (!a.source.empty()) {
        c.argument_source = a.source == "mock" ? ArgumentSourceKind::Mock
                            : a.source == "file" ? ArgumentSourceKind::File
                                                 : ArgumentSourceKind::Live;
    }
    if (!a.encoder.empty()) c.encoder_source = a.encoder == "live" ? EncoderSourceKind::Live : EncoderSourceKind::Mock;
    auto set_path = [](std::filesystem::path& p, const std::string& v) {
        if (!v.empty()) p = v;
    };
    set_path(c.universe_file, a.universe);
    set_path(c.price_file, a.prices);
    set_path(c.arguments_file, a.arguments);
    set_path(c.raw_file, a.raw);
    set_path(c.state_dir, a.state_dir);
    set_path(c.cache_dir, a.cache_dir);
    set_path(c.regime_calendar, a.calendar);
    set_path(c.index_file, a.index);
    if (a.seed) c.seed = *a.seed;
    if (a.k) c.k_target = *a.k;
    if (a.lambda) c.lambda = *a.lambda;
    if (a.epsilon) c.epsilon = *a.epsilon;
    if (a.top) c.top_fraction = *a.top;
    if (a.cost) c.cost_rate = *a.cost;
    if (a.days) c.synthetic_days = *a.days;
    if (a.stocks) c.synthetic_stocks = *a.stocks;
    if (a.no_sag) c.ablation.structured_arguments = false;
    if (a.no_mot) c.ablation.modes_of_thought = false;
    if (a.no_pm) c.ablation.probabilistic = false;
    if (a.no_ta) c.ablation.temporal_alignment = false;
    c.validate();
    return c;
}

int cmd_run(const RunArgs& a) {
    const auto config = resolve_config(a);
    Pipeline pipeline(config, make_inputs(config));
    const auto& cal = pipeline.inputs().prices.calendar();
    if (cal.empty()) throw ConfigError("price history is empty");
    const Date first = a.from.empty() ? cal.front() : Date::parse(a.from);
    const Date last = a.to.empty() ? cal.back() : Date::parse(a.to);
    const auto result = pipeline.run_range(first, last);
    result.write(a.out);
    write_file_atomic(std::filesystem::path(a.out) / "config.json", config.to_json_text());
    std::cout << result.report.to_text();
    fmt::print("{} days, outputs in {}\n", result.states.size(), a.out);
    return 0;
}

int cmd_report(const RunArgs& a) {
    const auto config = resolve_config(a);
    if (config.state_dir.empty()) throw ConfigError("report needs --state-dir");
    const auto inputs = make_inputs(config);
    const auto result = analyze_states(StateStore(config.state_dir).load_all(), inputs, config);
    result.write(a.out);
    std::cout << result.report.to_text();
    fmt::print("{} lineages, outputs in {}\n", result.lineages.size(), a.out);
    return 0;
}

struct ExtractArgs {
    std::string raw, out;
    bool mock = false;
    bool unstructured = false;
    bool per_document = false;
    std::size_t parallelism = 4;
};

int cmd_extract(const ExtractArgs& a) {
    std::shared_ptr<AgentBackend> backend;
    if (a.mock) backend = std::make_shared<EchoAgentBackend>();
    else backend = HttpChatBackend::from_environment();
    ExtractorOptions opts;
    opts.parallelism = a.parallelism;
    opts.filter_per_document = a.per_document;
    Extractor extractor(backend, opts);
    const auto raw = read_raw_jsonl(a.raw);
    const auto result = a.unstructured ? extractor.extract_unstructured(raw) : extractor.extract(raw);
    write_arguments_jsonl(a.out, result.arguments);
    for (const auto& f : result.failures) {
        fmt::print(stderr, "{} {} {} {}: {}\n", f.day.iso(), f.ticker, f.stage, f.kind, f.message);
    }
    fmt::print("{} arguments from {} documents, {} failures\n", result.arguments.size(), raw.size(),
               result.failures.size());
    return 0;
}

struct BacktestArgs {
    std::string signals, prices, index, out = "modeflow-backtest";
    double top = 0.2;
    double cost = 1.5e-4;
    double periods = 252.0;
    bool close_to_close = false;
};

int cmd_backtest(const BacktestArgs& a) {
    const auto prices = PriceTable::load_csv(a.prices);
    std::map<Date, std::vector<StockSignal>> by_day;
    for (auto& s : read_signals_csv(a.signals)) by_day[s.day].push_back(std::move(s));
    std::vector<PortfolioWeights> weights;
    std::vector<CorrelationDay> corr;
    for (const auto& [day, sigs] : by_day) {
        weights.push_back(build_portfolio(sigs, a.top));
        const auto next = prices.next_day(day);
        if (!next) continue;
        CorrelationDay cd{day, {}, {}};
        for (const auto& s : sigs) {
            const auto c0 = prices.close(day, s.ticker);
            const auto c1 = prices.close(*next, s.ticker);
            if (!c0 || !c1) continue;
            cd.signal.push_back(s.value);
            cd.forward_return.push_back(*c1 / *c0 - 1.0);
        }
        corr.push_back(std::move(cd));
    }
    BacktestOptions opts;
    opts.cost_rate = a.cost;
    opts.periods_per_year = a.periods;
    opts.execution = a.close_to_close ? Execution::CloseToClose : Execution::OpenToOpen;
    if (!a.index.empty()) opts.index_levels = load_index_levels(a.index);
    const auto report = run_backtest(weights, corr, prices, opts);
    report.write_series(a.out);
    write_file_atomic(std::filesystem::path(a.out) / "report.json", report.to_json());
    write_weights_csv(std::filesystem::path(a.out) / "weights.csv", weights);
    std::cout << report.to_text();
    return 0;
}

struct AlignCheckArgs {
    std::size_t instances = 500;
    std::size_t min_k = 2;
    std::size_t max_k = 6;
    std::size_t dim = 8;
    std::uint64_t seed = 0;
};

int cmd_align_check(const AlignCheckArgs& a) {
    if (a.min_k < 1 || a.max_k < a.min_k) throw ConfigError("need 1 <= min-k <= max-k");
    std::mt19937_64 rng(a.seed);
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<std::size_t> kdist(a.min_k, a.max_k);
    std::size_t mismatches = 0;
    for (std::size_t n = 0; n < a.instances; ++n) {
        const std::size_t kp = kdist(rng), kc = kdist(rng);
        Matrix prev(kp, a.dim), curr(kc, a.dim);
        for (std::size_t i = 0; i < kp * a.dim; ++i) prev(i / a.dim, i % a.dim) = normal(rng);
        for (std::size_t i = 0; i < kc * a.dim; ++i) curr(i / a.dim, i % a.dim) = normal(rng);
        const auto fast = align_modes(prev, curr);
        const auto slow = brute_force_align(prev, curr);
        if (fast.total_cost != slow.total_cost || fast.pairs != slow.pairs) {
            ++mismatches;
            fmt::print("instance {} ({}x{}): solver cost {:.17g}, exhaustive cost {:.17g}\n", n, kp, kc,
                       fast.total_cost, slow.total_cost);
        }
    }
    fmt::print("{} instances, {} mismatches\n", a.instances, mismatches);
    return mismatches == 0 ? 0 : 1;
}

struct SynthArgs {
    std::string out = "synthetic";
    int days = 60;
    int stocks = 30;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
    const auto spec = SyntheticSpec::planted(a.days, a.stocks);
    const auto sc = generate_scenario(spec, a.seed);
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    save_universe(dir / "universe.txt", spec.tickers);
    sc.prices.save_csv(dir / "prices.csv");
    std::vector<InvestmentArgument> args;
    std::string themes = "id,theme\n";
    for (const auto& ta : sc.arguments) {
        args.push_back(ta.argument);
        themes += fmt::format("{},{}\n", ta.argument.argument_id, spec.themes[static_cast<std::size_t>(ta.theme)].name);
    }
    write_arguments_jsonl(dir / "arguments.jsonl", args);
    write_file_atomic(dir / "themes.csv", themes);
    write_file_atomic(dir / "spec.json", to_json(spec).dump(2));
    fmt::print("{} days, {} stocks, {} arguments written to {}\n", sc.days.size(), spec.tickers.size(), args.size(),
               a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"modeflow: argument-mode factor research engine"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "run the daily pipeline over a date range");
    add_run_options(run, run_args);
    run->add_option("--from", run_args.from, "first day (YYYY-MM-DD)");
    run->add_option("--to", run_args.to, "last day (YYYY-MM-DD)");
    run->add_option("-o,--out", run_args.out, "output directory");

    RunArgs report_args;
    auto* report = app.add_subcommand("report", "rebuild reports and lifecycle exports from stored states");
    add_run_options(report, report_args);
    report->add_option("-o,--out", report_args.out, "output directory");

    ExtractArgs extract_args;
    auto* extract = app.add_subcommand("extract", "turn raw documents into investment arguments");
    extract->add_option("--raw", extract_args.raw, "raw document JSONL")->required()->check(CLI::ExistingFile);
    extract->add_option("-o,--out", extract_args.out, "argument JSONL")->required();
    extract->add_flag("--mock", extract_args.mock, "use the offline echo backend");
    extract->add_flag("--unstructured", extract_args.unstructured, "one pseudo-argument per document");
    extract->add_flag("--per-document", extract_args.per_document, "one filter call per document");
    extract->add_option("-j,--parallelism", extract_args.parallelism, "concurrent backend calls");

    BacktestArgs bt_args;
    auto* backtest = app.add_subcommand("backtest", "backtest a signal file");
    backtest->add_option("--signals", bt_args.signals, "signal CSV day,ticker,signal")->required()->check(CLI::ExistingFile);
    backtest->add_option("--prices", bt_args.prices, "price CSV")->required()->check(CLI::ExistingFile);
    backtest->add_option("--top", bt_args.top, "fraction of the universe held");
    backtest->add_option("--cost", bt_args.cost, "proportional transaction cost");
    backtest->add_option("--index", bt_args.index, "index level CSV day,level")->check(CLI::ExistingFile);
    backtest->add_option("--periods", bt_args.periods, "periods per year");
    backtest->add_flag("--close-to-close", bt_args.close_to_close, "trade at closes instead of opens");
    backtest->add_option("-o,--out", bt_args.out, "output directory");

    AlignCheckArgs ac_args;
    auto* align_check = app.add_subcommand("align-check", "compare the assignment solver with exhaustive search");
    align_check->add_option("-n,--instances", ac_args.instances, "random instances");
    align_check->add_option("--min-k", ac_args.min_k, "smallest mode count");
    align_check->add_option("--max-k", ac_args.max_k, "largest mode count");
    align_check->add_option("--dim", ac_args.dim, "centroid dimension");
    align_check->add_option("--seed", ac_args.seed, "random seed");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "write a synthetic planted-theme market to files");
    synth->add_option("-o,--out", synth_args.out, "output directory");
    synth->add_option("--days", synth_args.days, "trading days");
    synth->add_option("--stocks", synth_args.stocks, "universe size");
    synth->add_option("--seed", synth_args.seed, "random seed");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(run_args);
        if (*report) return cmd_report(report_args);
        if (*extract) return cmd_extract(extract_args);
        if (*backtest) return cmd_backtest(bt_args);
        if (*align_check) return cmd_align_check(ac_args);
        if (*synth) return cmd_synth(synth_args);
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
