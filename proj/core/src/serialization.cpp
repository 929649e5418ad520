#include "modeflow/serialization.hpp"

#include <fmt/format.h>

#include "modeflow/errors.hpp"

namespace modeflow {

namespace {

nlohmann::json matrix_json(const Matrix& m) { return m.to_rows(); }

Matrix matrix_from(const nlohmann::json& j, std::size_t rows, std::size_t cols, std::string_view what) {
    const auto data = j.get<std::vector<std::vector<double>>>();
    if (data.size() != rows) throw ShapeMismatch(fmt::format("{}: expected {} rows, got {}", what, rows, data.size()));
    for (const auto& r : data) {
        if (r.size() != cols) throw ShapeMismatch(fmt::format("{}: expected {} columns", what, cols));
    }
    return rows == 0 ? Matrix(0, cols) : Matrix::from_rows(data);
}

template <typename F>
auto guarded(std::string_view what, F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("malformed {}: {}", what, e.what()));
    }
}

}  // namespace

nlohmann::json to_json(const DailyModeSet& m) {
    return {{"day", m.day.iso()},
            {"k", m.k()},
            {"dim", m.dim()},
            {"weights", m.weights},
            {"means", matrix_json(m.means)},
            {"variances", matrix_json(m.variances)},
            {"loglik", m.log_likelihood}};
}

DailyModeSet mode_set_from_json(const nlohmann::json& j) {
    return guarded("mode set", [&] {
        DailyModeSet m;
        m.day = Date::parse(j.at("day").get<std::string>());
        const auto k = j.at("k").get<std::size_t>();
        const auto dim = j.at("dim").get<std::size_t>();
        m.weights = j.at("weights").get<std::vector<double>>();
        if (m.weights.size() != k) throw ShapeMismatch("mode set: weight count differs from k");
        m.means = matrix_from(j.at("means"), k, dim, "mode means");
        m.variances = matrix_from(j.at("variances"), k, dim, "mode variances");
        m.log_likelihood = j.at("loglik").get<double>();
        return m;
    });
}

nlohmann::json to_json(const ModeAlignment& a) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [i, j] : a.pairs) pairs.push_back({i, j});
    return {{"from_day", a.day_from.iso()}, {"to_day", a.day_to.iso()}, {"pairs", std::move(pairs)},
            {"retired", a.retired},         {"born", a.born},           {"cost", a.total_cost}};
}

ModeAlignment alignment_from_json(const nlohmann::json& j) {
    return guarded("alignment", [&] {
        ModeAlignment a;
        a.day_from = Date::parse(j.at("from_day").get<std::string>());
        a.day_to = Date::parse(j.at("to_day").get<std::string>());
        for (const auto& p : j.at("pairs")) a.pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
        a.retired = j.at("retired").get<std::vector<std::size_t>>();
        a.born = j.at("born").get<std::vector<std::size_t>>();
        a.total_cost = j.at("cost").get<double>();
        return a;
    });
}

nlohmann::json to_json(const PerfState& p) {
    nlohmann::json archived = nlohmann::json::object();
    for (const auto& [id, v] : p.archived) archived[std::to_string(id)] = v;
    return {{"day", p.day.iso()},
            {"perf", p.perf},
            {"lineage", p.lineage},
            {"archived", std::move(archived)},
            {"next_lineage", p.next_lineage}};
}

PerfState perf_state_from_json(const nlohmann::json& j) {
    return guarded("performance state", [&] {
        PerfState p;
        p.day = Date::parse(j.at("day").get<std::string>());
        p.perf = j.at("perf").get<std::vector<double>>();
        p.lineage = j.at("lineage").get<std::vector<std::uint64_t>>();
        if (p.lineage.size() != p.perf.size()) throw ShapeMismatch("performance state: lineage count differs");
        for (const auto& [id, v] : j.at("archived").items()) p.archived[std::stoull(id)] = v.get<double>();
        p.next_lineage = j.at("next_lineage").get<std::uint64_t>();
        return p;
    });
}

nlohmann::json to_json(const Projection& p) {
    return {{"input_dim", p.input_dim()},
            {"output_dim", p.output_dim()},
            {"identity", p.is_identity()},
            {"basis", p.is_identity() ? nlohmann::json::array() : matrix_json(p.basis())}};
}

Projection projection_from_json(const nlohmann::json& j) {
    return guarded("projection", [&] {
        const auto in = j.at("input_dim").get<std::size_t>();
        if (j.at("identity").get<bool>()) return Projection::identity(in);
        const auto out = j.at("output_dim").get<std::size_t>();
        return Projection::from_basis(matrix_from(j.at("basis"), out, in, "projection basis"));
    });
}

nlohmann::json to_json(const PortfolioWeights& w) {
    return {{"day", w.day.iso()}, {"tickers", w.tickers}, {"weights", w.weights}, {"holdings", w.holdings}};
}

PortfolioWeights weights_from_json(const nlohmann::json& j) {
    return guarded("portfolio weights", [&] {
        PortfolioWeights w;
        w.day = Date::parse(j.at("day").get<std::string>());
        w.tickers = j.at("tickers").get<std::vector<Ticker>>();
        w.weights = j.at("weights").get<std::vector<double>>();
        w.holdings = j.at("holdings").get<std::vector<Ticker>>();
        if (w.weights.size() != w.tickers.size()) throw ShapeMismatch("portfolio weights: length differs from tickers");
        return w;
    });
}

nlohmann::json to_json(const SyntheticSpec& s) {
    nlohmann::json themes = nlohmann::json::array();
    for (const auto& t : s.themes) {
        themes.push_back({{"name", t.name},
                          {"vocabulary", t.vocabulary},
                          {"bullish_probability", t.bullish_probability},
                          {"return_contribution", t.return_contribution}});
    }
    return {{"themes", std::move(themes)},
            {"tickers", s.tickers},
            {"start_day", s.start_day.iso()},
            {"days", s.days},
            {"min_arguments_per_stock", s.min_arguments_per_stock},
            {"max_arguments_per_stock", s.max_arguments_per_stock},
            {"theme_words_per_argument", s.theme_words_per_argument},
            {"filler_words_per_argument", s.filler_words_per_argument},
            {"idiosyncratic_vol", s.idiosyncratic_vol},
            {"market_vol", s.market_vol},
            {"initial_price", s.initial_price}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    return guarded("synthetic spec", [&] {
        SyntheticSpec s;
        for (const auto& t : j.at("themes")) {
            s.themes.push_back({t.at("name").get<std::string>(), t.at("vocabulary").get<std::vector<std::string>>(),
                                t.at("bullish_probability").get<double>(), t.at("return_contribution").get<double>()});
        }
        s.tickers = j.at("tickers").get<std::vector<Ticker>>();
        s.start_day = Date::parse(j.at("start_day").get<std::string>());
        s.days = j.at("days").get<int>();
        s.min_arguments_per_stock = j.value("min_arguments_per_stock", s.min_arguments_per_stock);
        s.max_arguments_per_stock = j.value("max_arguments_per_stock", s.max_arguments_per_stock);
        s.theme_words_per_argument = j.value("theme_words_per_argument", s.theme_words_per_argument);
        s.filler_words_per_argument = j.value("filler_words_per_argument", s.filler_words_per_argument);
        s.idiosyncratic_vol = j.value("idiosyncratic_vol", s.idiosyncratic_vol);
        s.market_vol = j.value("market_vol", s.market_vol);
        s.initial_price = j.value("initial_price", s.initial_price);
        s.validate();
        return s;
    });
}

}  // namespace modeflow
