#include "modeflow/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "modeflow/errors.hpp"
#include "modeflow/io.hpp"
#include "modeflow/numeric.hpp"

namespace modeflow {

namespace {

std::optional<double> price_at(const PriceTable& prices, const Date& day, const Ticker& t, Execution ex) {
    return ex == Execution::OpenToOpen ? prices.open(day, t) : prices.close(day, t);
}

bool near_zero_spread(double sd, double m) { return sd <= 1e-14 * std::max(1.0, std::abs(m)); }

std::optional<double> ratio(std::span<const double> v) {
    const double m = mean(v);
    const double sd = population_stddev(v);
    if (near_zero_spread(sd, m)) return std::nullopt;
    return m / sd;
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json metrics_json(const PortfolioMetrics& m) {
    return {{"annualized_return", m.annualized_return},
            {"max_drawdown", m.max_drawdown},
            {"sharpe", optional_json(m.sharpe)}};
}

std::string fmt_optional(const std::optional<double>& v) {
    return v ? fmt::format("{:.4f}", *v) : std::string("undefined");
}

}  // namespace

SimulationResult simulate(const std::vector<PortfolioWeights>& weights, const PriceTable& prices,
                          double cost_rate, Execution execution) {
    if (cost_rate < 0.0 || !std::isfinite(cost_rate)) throw ConfigError("cost rate must be non-negative");
    std::vector<const PortfolioWeights*> ordered;
    for (const auto& w : weights) ordered.push_back(&w);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const PortfolioWeights* a, const PortfolioWeights* b) { return a->day < b->day; });

    SimulationResult res;
    res.wealth.push_back(1.0);
    std::map<Ticker, double> drifted;  // previous holdings after their realized returns
    for (const PortfolioWeights* w : ordered) {
        if (w->tickers.size() != w->weights.size()) throw ShapeMismatch("weights and tickers differ in length");
        const auto entry = prices.next_day(w->day);
        if (!entry) break;
        const auto exit = prices.next_day(*entry);
        if (!exit) break;

        std::map<Ticker, double> target;
        for (std::size_t i = 0; i < w->tickers.size(); ++i) {
            if (w->weights[i] != 0.0) target[w->tickers[i]] += w->weights[i];
        }
        double turnover = 0.0;
        for (const auto& [t, x] : target) {
            const auto it = drifted.find(t);
            turnover += std::abs(x - (it == drifted.end() ? 0.0 : it->second));
        }
        for (const auto& [t, x] : drifted) {
            if (!target.contains(t)) turnover += std::abs(x);
        }

        double gross = 0.0;
        double grown = 0.0;  // value of one unit after the window, cash included
        std::map<Ticker, double> after;
        double invested = 0.0;
        for (const auto& [t, x] : target) {
            invested += x;
            const auto p0 = price_at(prices, *entry, t, execution);
            if (!p0) {
                res.events.push_back({*entry, t, "no entry price; position held as cash"});
                grown += x;
                continue;
            }
            auto p1 = price_at(prices, *exit, t, execution);
            if (!p1) {
                const auto last = prices.last_bar_on_or_before(*exit, t);
                p1 = last ? last->close : *p0;
                res.events.push_back({*exit, t, fmt::format("no exit price; exited at last available price {}", *p1)});
            }
            const double r = *p1 / *p0 - 1.0;
            gross += x * r;
            grown += x * (1.0 + r);
            after[t] = x * (1.0 + r);
        }
        grown += std::max(0.0, 1.0 - invested);
        drifted.clear();
        if (grown > 0.0) {
            for (const auto& [t, v] : after) drifted[t] = v / grown;
        }

        double bench = 0.0;
        std::size_t bench_n = 0;
        for (const auto& t : w->tickers) {
            const auto p0 = price_at(prices, *entry, t, execution);
            const auto p1 = price_at(prices, *exit, t, execution);
            if (!p0 || !p1) continue;
            bench += *p1 / *p0 - 1.0;
            ++bench_n;
        }

        const double cost = cost_rate * turnover;
        const double net = gross - cost;
        res.decision_days.push_back(w->day);
        res.returns.push_back(net);
        res.turnover.push_back(turnover);
        res.costs.push_back(cost);
        res.wealth.push_back(res.wealth.back() * (1.0 + net));
        res.benchmark_returns.push_back(bench_n == 0 ? 0.0 : bench / static_cast<double>(bench_n));
    }
    return res;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeMismatch("correlation inputs differ in length");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw NumericalFailure("correlation of a constant series");
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    return pearson(average_ranks(x), average_ranks(y));
}

CorrelationMetrics correlation_metrics(std::span<const CorrelationDay> days) {
    CorrelationMetrics m;
    auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    };
    for (const auto& d : days) {
        if (d.signal.size() != d.forward_return.size()) {
            throw ShapeMismatch(fmt::format("{}: {} signals for {} returns", d.day.iso(), d.signal.size(),
                                            d.forward_return.size()));
        }
        if (d.signal.size() < 3 || constant(d.forward_return)) {
            ++m.skipped_degenerate;
            continue;
        }
        if (constant(d.signal)) {
            ++m.skipped_constant_signal;
            continue;
        }
        m.days.push_back(d.day);
        m.daily_ic.push_back(pearson(d.signal, d.forward_return));
        m.daily_rank_ic.push_back(spearman(d.signal, d.forward_return));
    }
    if (m.days.size() < 2) {
        throw EmptyInput(fmt::format("correlation metrics need two usable days, got {}", m.days.size()));
    }
    m.ic = mean(m.daily_ic);
    m.icir = ratio(m.daily_ic);
    m.rank_ic = mean(m.daily_rank_ic);
    m.rank_icir = ratio(m.daily_rank_ic);
    return m;
}

std::vector<double> compound(std::span<const double> returns, double initial) {
    std::vector<double> w{initial};
    for (double r : returns) w.push_back(w.back() * (1.0 + r));
    return w;
}

double max_drawdown(std::span<const double> wealth) {
    double peak = 0.0, mdd = 0.0;
    for (double w : wealth) {
        if (!(w > 0.0)) throw NumericalFailure("wealth must stay positive");
        peak = std::max(peak, w);
        mdd = std::max(mdd, 1.0 - w / peak);
    }
    return mdd;
}

PortfolioMetrics portfolio_metrics(std::span<const double> returns, double periods_per_year, double risk_free) {
    if (returns.empty()) throw EmptyInput("no returns to evaluate");
    if (!(periods_per_year > 0.0)) throw ConfigError("annualization factor must be positive");
    PortfolioMetrics m;
    m.annualized_return = periods_per_year * mean(returns);
    m.max_drawdown = max_drawdown(compound(returns));
    std::vector<double> excess(returns.begin(), returns.end());
    for (double& r : excess) r -= risk_free;
    if (const auto sr = ratio(excess)) m.sharpe = *sr * std::sqrt(periods_per_year);
    return m;
}

BacktestReport run_backtest(const std::vector<PortfolioWeights>& weights,
                            std::span<const CorrelationDay> correlation_days, const PriceTable& prices,
                            const BacktestOptions& options) {
    BacktestReport rep;
    rep.periods_per_year = options.periods_per_year;
    rep.simulation = simulate(weights, prices, options.cost_rate, options.execution);
    const auto& sim = rep.simulation;
    if (sim.returns.empty()) throw EmptyInput("no complete holding window in the price history");
    rep.portfolio = portfolio_metrics(sim.returns, options.periods_per_year, options.risk_free);
    rep.benchmark = portfolio_metrics(sim.benchmark_returns, options.periods_per_year, options.risk_free);
    std::vector<double> excess(sim.returns.size());
    for (std::size_t i = 0; i < excess.size(); ++i) excess[i] = sim.returns[i] - sim.benchmark_returns[i];
    rep.excess = portfolio_metrics(excess, options.periods_per_year, 0.0);

    if (!options.index_levels.empty()) {
        std::map<Date, double> level(options.index_levels.begin(), options.index_levels.end());
        std::vector<double> idx;
        for (const auto& d : sim.decision_days) {
            const auto entry = prices.next_day(d);
            const auto exit = entry ? prices.next_day(*entry) : std::nullopt;
            if (!exit || !level.contains(*entry) || !level.contains(*exit)) continue;
            idx.push_back(level[*exit] / level[*entry] - 1.0);
        }
        if (!idx.empty()) rep.index_benchmark = portfolio_metrics(idx, options.periods_per_year, options.risk_free);
    }
    try {
        rep.correlation = correlation_metrics(correlation_days);
    } catch (const EmptyInput&) {
        rep.correlation.reset();
    }
    return rep;
}

std::string BacktestReport::to_json() const {
    nlohmann::json j;
    j["periods_per_year"] = periods_per_year;
    j["days"] = simulation.returns.size();
    j["final_wealth"] = simulation.wealth.back();
    j["mean_turnover"] = simulation.turnover.empty() ? 0.0 : mean(simulation.turnover);
    j["portfolio"] = metrics_json(portfolio);
    j["benchmark_equal_weight"] = metrics_json(benchmark);
    j["excess_over_benchmark"] = metrics_json(excess);
    j["benchmark_index"] = index_benchmark ? metrics_json(*index_benchmark) : nlohmann::json(nullptr);
    if (correlation) {
        j["correlation"] = {{"ic", correlation->ic},
                            {"icir", optional_json(correlation->icir)},
                            {"rank_ic", correlation->rank_ic},
                            {"rank_icir", optional_json(correlation->rank_icir)},
                            {"days", correlation->days.size()},
                            {"skipped_constant_signal", correlation->skipped_constant_signal},
                            {"skipped_degenerate", correlation->skipped_degenerate}};
    } else {
        j["correlation"] = nullptr;
    }
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : simulation.events) {
        events.push_back({{"day", e.day.iso()}, {"ticker", e.ticker}, {"message", e.message}});
    }
    j["events"] = std::move(events);
    return j.dump(2);
}

std::string BacktestReport::to_text() const {
    std::string out;
    auto row = [&](std::string_view label, const std::string& value) {
        out += fmt::format("{:<28}{:>14}\n", label, value);
    };
    auto block = [&](std::string_view name, const PortfolioMetrics& m) {
        row(fmt::format("{} AR", name), fmt::format("{:.4f}", m.annualized_return));
        row(fmt::format("{} MDD", name), fmt::format("{:.4f}", m.max_drawdown));
        row(fmt::format("{} SR", name), fmt_optional(m.sharpe));
    };
    row("days", std::to_string(simulation.returns.size()));
    row("final wealth", fmt::format("{:.6f}", simulation.wealth.back()));
    row("mean turnover", fmt::format("{:.4f}", simulation.turnover.empty() ? 0.0 : mean(simulation.turnover)));
    if (correlation) {
        row("IC", fmt::format("{:.4f}", correlation->ic));
        row("ICIR", fmt_optional(correlation->icir));
        row("RIC", fmt::format("{:.4f}", correlation->rank_ic));
        row("RICIR", fmt_optional(correlation->rank_icir));
    } else {
        row("IC", "n/a");
    }
    block("portfolio", portfolio);
    block("benchmark", benchmark);
    block("excess", excess);
    if (index_benchmark) block("index", *index_benchmark);
    if (!simulation.events.empty()) row("price events", std::to_string(simulation.events.size()));
    return out;
}

void BacktestReport::write_series(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::string wealth = "day,return,wealth,turnover,benchmark_return\n";
    for (std::size_t i = 0; i < simulation.returns.size(); ++i) {
        wealth += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", simulation.decision_days[i].iso(),
                              simulation.returns[i], simulation.wealth[i + 1], simulation.turnover[i],
                              simulation.benchmark_returns[i]);
    }
    write_file_atomic(dir / "wealth.csv", wealth);
    std::string ic = "day,ic,rank_ic\n";
    if (correlation) {
        for (std::size_t i = 0; i < correlation->days.size(); ++i) {
            ic += fmt::format("{},{:.17g},{:.17g}\n", correlation->days[i].iso(), correlation->daily_ic[i],
                              correlation->daily_rank_ic[i]);
        }
    }
    write_file_atomic(dir / "ic.csv", ic);
}

}  // namespace modeflow
