#include "modeflow/io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "modeflow/errors.hpp"

namespace modeflow {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("{}: cannot open", path.string()));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto t = trim(line);
        if (t.empty()) continue;
        f(t, n);
    }
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("{}: cannot open for writing", tmp.string()));
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw IoError(fmt::format("{}: write failed", tmp.string()));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError(fmt::format("{}: rename failed: {}", path.string(), ec.message()));
}

std::vector<Ticker> load_universe(const std::filesystem::path& path) {
    std::vector<Ticker> out;
    for_each_line(path, [&](std::string_view line, std::size_t) {
        if (line.front() != '#') out.emplace_back(line);
    });
    if (out.empty()) throw EmptyUniverse(fmt::format("{}: no tickers", path.string()));
    return out;
}

void save_universe(const std::filesystem::path& path, const std::vector<Ticker>& tickers) {
    std::string out;
    for (const auto& t : tickers) out += t + "\n";
    write_file_atomic(path, out);
}

std::string argument_to_jsonl(const InvestmentArgument& arg) {
    nlohmann::json j = {{"day", arg.day.iso()}, {"ticker", arg.ticker}, {"p", arg.polarity},
                        {"a", arg.rationale},   {"e", arg.evidence},    {"id", arg.argument_id}};
    return j.dump();
}

InvestmentArgument argument_from_jsonl(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        return InvestmentArgument::make(Date::parse(j.at("day").get<std::string>()), j.at("ticker").get<std::string>(),
                                        j.at("p").get<int>(), j.at("a").get<std::string>(),
                                        j.at("e").get<std::string>(), j.at("id").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("bad argument record: {}", e.what()));
    }
}

void write_arguments_jsonl(const std::filesystem::path& path, const std::vector<InvestmentArgument>& args) {
    std::string out;
    for (const auto& a : args) out += argument_to_jsonl(a) + "\n";
    write_file_atomic(path, out);
}

std::vector<InvestmentArgument> read_arguments_jsonl(const std::filesystem::path& path) {
    std::vector<InvestmentArgument> out;
    for_each_line(path, [&](std::string_view line, std::size_t n) {
        try {
            out.push_back(argument_from_jsonl(line));
        } catch (const Error& e) {
            throw ConfigError(fmt::format("{}:{}: {}", path.string(), n, e.what()));
        }
    });
    return out;
}

std::vector<RawDataPoint> read_raw_jsonl(const std::filesystem::path& path) {
    std::vector<RawDataPoint> out;
    for_each_line(path, [&](std::string_view line, std::size_t n) {
        try {
            const auto j = nlohmann::json::parse(line);
            RawDataPoint r;
            r.day = Date::parse(j.at("day").get<std::string>());
            r.ticker = j.at("ticker").get<std::string>();
            r.modality = parse_modality(j.at("modality").get<std::string>());
            r.body = j.at("body").get<std::string>();
            r.asset_name = j.value("name", std::string{});
            r.validate();
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(fmt::format("{}:{}: {}", path.string(), n, e.what()));
        }
    });
    return out;
}

void write_raw_jsonl(const std::filesystem::path& path, const std::vector<RawDataPoint>& raw) {
    std::string out;
    for (const auto& r : raw) {
        nlohmann::json j = {{"day", r.day.iso()}, {"ticker", r.ticker}, {"modality", to_string(r.modality)},
                            {"body", r.body}};
        if (!r.asset_name.empty()) j["name"] = r.asset_name;
        out += j.dump() + "\n";
    }
    write_file_atomic(path, out);
}

void write_signals_csv(const std::filesystem::path& path, const std::vector<StockSignal>& signals) {
    std::string out = "day,ticker,signal\n";
    for (const auto& s : signals) out += fmt::format("{},{},{:.17g}\n", s.day.iso(), s.ticker, s.value);
    write_file_atomic(path, out);
}

std::vector<StockSignal> read_signals_csv(const std::filesystem::path& path) {
    std::vector<StockSignal> out;
    bool header = true;
    for_each_line(path, [&](std::string_view line, std::size_t n) {
        const auto cells = split_csv_line(line);
        if (header) {
            header = false;
            if (cells.size() == 3 && cells[0] == "day") return;
        }
        if (cells.size() != 3) throw ConfigError(fmt::format("{}:{}: expected day,ticker,signal", path.string(), n));
        try {
            out.push_back({Date::parse(cells[0]), cells[1], std::stod(cells[2])});
        } catch (const std::logic_error&) {
            throw ConfigError(fmt::format("{}:{}: bad signal value", path.string(), n));
        }
    });
    return out;
}

void write_weights_csv(const std::filesystem::path& path, const std::vector<PortfolioWeights>& weights) {
    std::string out = "day,ticker,weight\n";
    for (const auto& w : weights) {
        for (std::size_t i = 0; i < w.tickers.size(); ++i) {
            out += fmt::format("{},{},{:.17g}\n", w.day.iso(), w.tickers[i], w.weights[i]);
        }
    }
    write_file_atomic(path, out);
}

std::vector<std::pair<Date, double>> load_index_levels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("{}: cannot open index file", path.string()));
    std::vector<std::pair<Date, double>> out;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (header) {
            header = false;
            if (!cells.empty() && cells[0] == "day") continue;
        }
        if (cells.size() != 2) throw ConfigError(fmt::format("{}: expected day,level rows", path.string()));
        try {
            out.emplace_back(Date::parse(cells[0]), std::stod(cells[1]));
        } catch (const std::logic_error&) {
            throw ConfigError(fmt::format("{}: bad index level '{}'", path.string(), cells[1]));
        }
    }
    return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace modeflow
