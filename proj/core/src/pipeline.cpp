#include "modeflow/pipeline.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "modeflow/errors.hpp"

namespace modeflow {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <typename F>
auto stage(const Date& day, std::string_view name, F&& f) -> decltype(f()) {
    const auto context = [&](const std::exception& e) { return fmt::format("{} [{}]: {}", day.iso(), name, e.what()); };
    try {
        return f();
    } catch (const BackendUnavailable& e) {
        throw BackendUnavailable(context(e), e.retryable());
    } catch (const SchemaViolation&) {
        throw;
    } catch (const DimensionMismatch& e) {
        throw DimensionMismatch(context(e));
    } catch (const ShapeMismatch& e) {
        throw ShapeMismatch(context(e));
    } catch (const EmptyInput& e) {
        throw EmptyInput(context(e));
    } catch (const NumericalFailure& e) {
        throw NumericalFailure(context(e));
    } catch (const MissingPrice& e) {
        throw MissingPrice(context(e));
    } catch (const EmptyUniverse& e) {
        throw EmptyUniverse(context(e));
    } catch (const ConfigError& e) {
        throw ConfigError(context(e));
    } catch (const IoError& e) {
        throw IoError(context(e));
    }
}

Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(m.row(rows[r]).begin(), m.row(rows[r]).end(), out.row(r).begin());
    return out;
}

}  // namespace

StageWiring apply_ablation(const AblationFlags& flags) {
    StageWiring w;
    w.structured_arguments = flags.structured_arguments;
    w.singleton_modes = !flags.modes_of_thought;
    w.hard_assignment = !flags.probabilistic;
    w.temporal_alignment = flags.temporal_alignment;
    return w;
}

Pipeline::Pipeline(RunConfig config, PipelineInputs inputs, PipelineHooks hooks)
    : config_(std::move(config)), inputs_(std::move(inputs)), hooks_(std::move(hooks)),
      wiring_(apply_ablation(config_.ablation)) {
    config_.validate();
    if (!inputs_.arguments) throw ConfigError("pipeline needs an argument source");
    if (!inputs_.embedder) throw ConfigError("pipeline needs an embedder");
    if (inputs_.universe.empty()) throw EmptyUniverse("pipeline universe is empty");
    if (!config_.state_dir.empty()) {
        store_.emplace(config_.state_dir);
        projection_ = store_->load_projection();
    }
}

Pipeline::DayData& Pipeline::day_data(const Date& day) {
    if (auto it = cache_.find(day); it != cache_.end()) return it->second;
    DayData d;
    d.args = stage(day, "extract", [&] { return inputs_.arguments->arguments_for(day); });
    for (const auto& a : d.args) {
        if (a.day != day) throw ShapeMismatch(fmt::format("argument {} is dated {}, expected {}", a.argument_id, a.day.iso(), day.iso()));
        d.ids.push_back(a.argument_id);
    }
    if (!d.args.empty()) {
        const auto emb = stage(day, "embed", [&] { return inputs_.embedder->embed_day(d.args); });
        std::vector<std::vector<double>> rows;
        rows.reserve(emb.size());
        for (const auto& e : emb) rows.push_back(e.vector);
        d.raw_points = Matrix::from_rows(rows);
    }
    return cache_.emplace(day, std::move(d)).first->second;
}

const std::vector<InvestmentArgument>& Pipeline::day_arguments(const Date& day) { return day_data(day).args; }

bool Pipeline::projection_active() const {
    switch (config_.projection) {
        case ProjectionMode::On: return true;
        case ProjectionMode::Off: return false;
        case ProjectionMode::Auto: {
            const auto dim = inputs_.embedder->dimension();
            return dim && *dim > config_.projection_auto_threshold;
        }
    }
    return false;
}

void Pipeline::ensure_projection(const Date& day) {
    if (projection_ || !projection_active()) return;
    const auto& cal = inputs_.prices.calendar();
    const std::size_t w = std::min(config_.projection_burn_in_days, cal.size());
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < w && !(day < cal[i]); ++i) {
        const auto& pts = day_data(cal[i]).raw_points;
        for (std::size_t r = 0; r < pts.rows(); ++r) rows.emplace_back(pts.row(r).begin(), pts.row(r).end());
    }
    if (rows.empty()) throw EmptyInput(fmt::format("{}: projection burn-in has no arguments", day.iso()));
    projection_ = stage(day, "project", [&] { return Projection::fit(Matrix::from_rows(rows), config_.projection_dim); });
    if (store_) store_->save_projection(*projection_);
}

const Matrix& Pipeline::day_points(const Date& day) {
    auto& d = day_data(day);
    if (!d.points) {
        if (projection_active()) {
            ensure_projection(day);
            d.points = d.raw_points.rows() == 0 ? Matrix(0, projection_->output_dim()) : projection_->apply(d.raw_points);
        } else {
            d.points = d.raw_points;
        }
    }
    return *d.points;
}

std::uint64_t Pipeline::day_seed(const Date& day) const {
    return mix64(config_.seed ^ mix64(static_cast<std::uint64_t>(day.sys_days().time_since_epoch().count())));
}

ResponsibilityMatrix Pipeline::evaluation_responsibilities(const DailyModeSet& modes, const Date& day) {
    const auto& d = day_data(day);
    const Matrix& pts = day_points(day);
    ResponsibilityMatrix r;
    if (wiring_.singleton_modes) {
        r.argument_ids = d.ids;
        r.values = Matrix(pts.rows(), pts.rows());
        for (std::size_t i = 0; i < pts.rows(); ++i) r.values(i, i) = 1.0;
        if (modes.k() != pts.rows()) throw ShapeMismatch("singleton modes do not match their day's arguments");
        return r;
    }
    r = responsibilities_under(modes, pts, d.ids);
    return wiring_.hard_assignment ? harden(r) : r;
}

std::vector<double> Pipeline::argument_posterior(const DailyModeSet& modes, std::span<const double> x) const {
    auto post = posterior_under(modes, x);
    return wiring_.hard_assignment ? harden(post) : post;
}

DailyState Pipeline::run_day(const DailyState* prev, const Date& day) {
    if (prev && !(prev->day < day)) throw ConfigError(fmt::format("{}: previous state is not earlier", day.iso()));
    const std::size_t index = inputs_.prices.day_index(day);
    auto& today = day_data(day);

    DailyState st;
    st.day = day;
    st.argument_count = today.args.size();
    auto zero_signals = [&] {
        std::vector<StockSignal> s;
        for (const auto& t : inputs_.universe) s.push_back({day, t, 0.0});
        return s;
    };

    const bool burn_in = projection_active() && index + 1 < config_.projection_burn_in_days;
    if (burn_in) {
        st.signals = zero_signals();
        st.weights = equal_weight_portfolio(day, inputs_.universe);
    } else if (today.args.empty()) {
        st.gap = true;
        if (prev) {
            st.modes_day = prev->modes_day;
            st.modes = prev->modes;
            st.responsibility_digest = prev->responsibility_digest;
            st.alignment = prev->alignment;
            st.perf = prev->perf;
            st.signals = prev->signals;
            for (auto& s : st.signals) s.day = day;
            st.weights = prev->weights;
            st.weights.day = day;
        } else {
            st.signals = zero_signals();
            st.weights = equal_weight_portfolio(day, inputs_.universe);
        }
    } else {
        const Matrix& points = day_points(day);
        const DailyModeSet* prev_modes = prev && prev->modes ? &*prev->modes : nullptr;
        ModeFit fit = stage(day, "fit", [&] {
            return wiring_.singleton_modes
                       ? singleton_modes(points, today.ids, day, config_.gmm)
                       : fit_daily_modes(points, today.ids, day, config_.k_target, prev_modes, day_seed(day), config_.gmm);
        });
        if (hooks_.post_fit) hooks_.post_fit(day, fit);

        if (prev_modes) {
            const Date modes_day = *prev->modes_day;
            st.alignment = stage(day, "align", [&] {
                return wiring_.temporal_alignment ? align_modes(prev_modes->means, fit.modes.means)
                                                  : identity_alignment(prev_modes->means, fit.modes.means);
            });
            st.alignment->day_from = modes_day;
            st.alignment->day_to = day;

            const auto eval_day = inputs_.prices.next_day(modes_day);
            if (!eval_day) throw ConfigError(fmt::format("{}: no trading day after {}", day.iso(), modes_day.iso()));
            st.perf = stage(day, "evaluate", [&] {
                const auto& prev_data = day_data(modes_day);
                const auto resp = evaluation_responsibilities(*prev_modes, modes_day);
                const auto cs = realized_excess_returns(inputs_.prices, inputs_.universe, modes_day, *eval_day);
                std::vector<std::size_t> kept;
                std::vector<double> scores;
                for (std::size_t i = 0; i < prev_data.args.size(); ++i) {
                    const auto r = cs.of(prev_data.args[i].ticker);
                    if (!r) continue;
                    kept.push_back(i);
                    scores.push_back(realized_score(prev_data.args[i].polarity, *r));
                }
                const auto agg = aggregate_mode_scores(select_rows(resp.values, kept), scores);
                return update_perf(prev->perf ? &*prev->perf : nullptr, prev->alignment ? &*prev->alignment : nullptr,
                                   agg, config_.lambda, modes_day);
            });

            st.signals = stage(day, "signal", [&] {
                std::map<Ticker, std::vector<ScoredArgument>> by_ticker;
                for (std::size_t i = 0; i < today.args.size(); ++i) {
                    const auto post = argument_posterior(*prev_modes, points.row(i));
                    by_ticker[today.args[i].ticker].push_back(
                        {today.args[i].polarity, predict_argument_score(post, st.perf->perf)});
                }
                std::vector<StockSignal> out;
                for (const auto& t : inputs_.universe) {
                    const auto it = by_ticker.find(t);
                    const double v = it == by_ticker.end() ? 0.0 : stock_signal(it->second, config_.epsilon);
                    out.push_back({day, t, v});
                }
                return out;
            });
            st.weights = stage(day, "portfolio", [&] { return build_portfolio(st.signals, config_.top_fraction); });
        } else {
            st.signals = zero_signals();
            st.weights = equal_weight_portfolio(day, inputs_.universe);
        }

        st.responsibility_digest =
            (wiring_.hard_assignment ? harden(fit.responsibilities) : fit.responsibilities).digest();
        st.modes = std::move(fit.modes);
        st.modes_day = day;
    }

    if (store_) stage(day, "persist", [&] { store_->save(st); });
    return st;
}

RunResult Pipeline::run_range(const Date& first, const Date& last) {
    const auto& cal = inputs_.prices.calendar();
    std::vector<Date> days;
    for (const auto& d : cal) {
        if (!(d < first) && !(last < d)) days.push_back(d);
    }
    if (days.empty()) {
        throw ConfigError(fmt::format("no trading days between {} and {}", first.iso(), last.iso()));
    }

    // Walk back to the latest stored state before the range and replay from there.
    std::size_t start = inputs_.prices.day_index(days.front());
    std::optional<DailyState> prev;
    while (start > 0) {
        if (store_) {
            if (auto s = store_->load(cal[start - 1])) {
                prev = std::move(s);
                break;
            }
        }
        --start;
    }

    std::vector<DailyState> states;
    const std::size_t end = inputs_.prices.day_index(days.back());
    for (std::size_t i = start; i <= end; ++i) {
        std::optional<DailyState> stored = store_ ? store_->load(cal[i]) : std::nullopt;
        DailyState st = stored ? std::move(*stored) : run_day(prev ? &*prev : nullptr, cal[i]);
        if (!(cal[i] < first)) states.push_back(st);
        prev = std::move(st);
    }
    return analyze_states(std::move(states), inputs_, config_);
}

RunResult Pipeline::run_all() {
    const auto& cal = inputs_.prices.calendar();
    if (cal.empty()) throw ConfigError("price history is empty");
    return run_range(cal.front(), cal.back());
}

}  // namespace modeflow
