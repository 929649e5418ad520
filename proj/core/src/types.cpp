#include "modeflow/types.hpp"

#include <charconv>

#include <fmt/format.h>

#include "modeflow/errors.hpp"

namespace modeflow {

namespace chr = std::chrono;

Date::Date(chr::year_month_day ymd) : days_(chr::sys_days{ymd}) {}

Date Date::parse(std::string_view iso) {
    auto fail = [&] { return ConfigError(fmt::format("invalid ISO-8601 date '{}'", iso)); };
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw fail();
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    auto field = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [ptr, ec] = std::from_chars(iso.data() + pos, iso.data() + pos + len, out);
        if (ec != std::errc{} || ptr != iso.data() + pos + len) throw fail();
    };
    field(0, 4, y);
    field(5, 2, m);
    field(8, 2, d);
    chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
    if (!ymd.ok()) throw fail();
    return Date{ymd};
}

std::string Date::iso() const {
    auto ymd = this->ymd();
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

Date Date::next_weekday() const {
    Date out = *this;
    do {
        out.days_ += chr::days{1};
    } while (chr::weekday{out.days_} == chr::Saturday || chr::weekday{out.days_} == chr::Sunday);
    return out;
}

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::Fundamental: return "Fundamental";
        case Modality::News: return "News";
        case Modality::Technical: return "Technical";
    }
    return "Unknown";
}

Modality parse_modality(std::string_view name) {
    if (name == "Fundamental") return Modality::Fundamental;
    if (name == "News") return Modality::News;
    if (name == "Technical") return Modality::Technical;
    throw ConfigError(fmt::format("unknown modality '{}'", name));
}

InvestmentArgument InvestmentArgument::make(Date day, Ticker ticker, int polarity,
                                            std::string rationale, std::string evidence,
                                            std::string argument_id) {
    if (polarity != 1 && polarity != -1) {
        throw ConfigError(fmt::format("argument polarity must be +1 or -1, got {}", polarity));
    }
    if (rationale.empty() || evidence.empty()) {
        throw ConfigError("argument rationale and evidence must be non-empty");
    }
    return InvestmentArgument{day,       std::move(ticker),   polarity, std::move(rationale),
                              std::move(evidence), std::move(argument_id)};
}

std::string make_argument_id(const Date& day, std::string_view ticker, std::size_t index) {
    return fmt::format("{}/{}/{}", day.iso(), ticker, index);
}

}  // namespace modeflow
