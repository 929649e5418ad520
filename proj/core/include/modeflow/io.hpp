#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modeflow/extraction.hpp"
#include "modeflow/signal.hpp"
#include "modeflow/types.hpp"

namespace modeflow {

std::string read_text_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// One ticker per line; blank lines and lines starting with '#' are skipped.
std::vector<Ticker> load_universe(const std::filesystem::path& path);
void save_universe(const std::filesystem::path& path, const std::vector<Ticker>& tickers);

/// JSON-lines records {"day","ticker","p","a","e","id"}.
std::string argument_to_jsonl(const InvestmentArgument& arg);
InvestmentArgument argument_from_jsonl(std::string_view line);
void write_arguments_jsonl(const std::filesystem::path& path,
                           const std::vector<InvestmentArgument>& args);
std::vector<InvestmentArgument> read_arguments_jsonl(const std::filesystem::path& path);

/// Raw documents: {"day","ticker","modality","body"[,"name"]} per line.
std::vector<RawDataPoint> read_raw_jsonl(const std::filesystem::path& path);
void write_raw_jsonl(const std::filesystem::path& path, const std::vector<RawDataPoint>& raw);

/// day,ticker,signal
void write_signals_csv(const std::filesystem::path& path, const std::vector<StockSignal>& signals);
std::vector<StockSignal> read_signals_csv(const std::filesystem::path& path);
/// day,ticker,weight
void write_weights_csv(const std::filesystem::path& path,
                       const std::vector<PortfolioWeights>& weights);

/// Index series CSV with rows day,level (header optional).
std::vector<std::pair<Date, double>> load_index_levels(const std::filesystem::path& path);

/// Minimal CSV splitting (no quoting); trims surrounding whitespace.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace modeflow
