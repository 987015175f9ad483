#include "cascade/harness.hpp"

#include "cascade/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace cascade {

namespace {

std::optional<double> pct(std::size_t hits, std::size_t total) {
    if (total == 0) return std::nullopt;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

void add(IslandAccuracy& into, const IslandAccuracy& a) {
    into.high_attempts += a.high_attempts;
    into.high_correct += a.high_correct;
    into.low_attempts += a.low_attempts;
    into.low_correct += a.low_correct;
    into.unobserved += a.unobserved;
}

void add(LineStats& into, const LineStats& s) {
    into.true_outages += s.true_outages;
    into.missed += s.missed;
    into.healthy += s.healthy;
    into.false_alarms += s.false_alarms;
}

}  // namespace

std::optional<double> IslandAccuracy::high_pct() const { return pct(high_correct, high_attempts); }
std::optional<double> IslandAccuracy::low_pct() const { return pct(low_correct, low_attempts); }
std::optional<double> IslandAccuracy::total_pct() const {
    return pct(high_correct + low_correct, high_attempts + low_attempts);
}

double LineStats::miss_pct() const { return pct(missed, true_outages).value_or(0.0); }
double LineStats::false_alarm_pct() const { return pct(false_alarms, healthy).value_or(0.0); }

IslandAccuracy compute_island_accuracy(const std::vector<std::vector<std::size_t>>& true_islands,
                                       const std::vector<std::vector<std::size_t>>& estimated,
                                       const std::vector<bool>& observable, const std::vector<bool>& gen_seen,
                                       const std::vector<bool>& load_seen) {
    std::vector<std::size_t> owner(observable.size(), SIZE_MAX);
    for (std::size_t i = 0; i < estimated.size(); ++i)
        for (auto b : estimated[i]) owner[b] = i;
    IslandAccuracy acc;
    for (const auto& island : true_islands) {
        std::size_t seen = 0;
        std::optional<std::size_t> anchor;
        bool gen = false, load = false;
        for (auto b : island) {
            if (!observable[b]) continue;
            ++seen;
            if (!anchor) anchor = b;
            gen = gen || gen_seen[b];
            load = load || load_seen[b];
        }
        if (!gen || !load) {
            ++acc.unobserved;
            continue;
        }
        const bool high = 2 * seen >= island.size();
        const auto o = owner[*anchor];
        auto guess = o == SIZE_MAX ? std::vector<std::size_t>{} : estimated[o];
        std::sort(guess.begin(), guess.end());
        auto truth = island;
        std::sort(truth.begin(), truth.end());
        const bool exact = guess == truth;
        (high ? acc.high_attempts : acc.low_attempts) += 1;
        if (exact) (high ? acc.high_correct : acc.low_correct) += 1;
    }
    return acc;
}

LineStats compute_line_stats(const std::vector<std::size_t>& true_out, const std::vector<std::size_t>& detected_out,
                             const std::vector<std::size_t>& unobserved_lines) {
    auto has = [](const std::vector<std::size_t>& v, std::size_t x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    LineStats s;
    for (auto l : unobserved_lines) {
        const bool out = has(true_out, l), flagged = has(detected_out, l);
        if (out) {
            ++s.true_outages;
            if (!flagged) ++s.missed;
        } else {
            ++s.healthy;
            if (flagged) ++s.false_alarms;
        }
    }
    return s;
}

RunContext RunContext::from_config(const ExperimentConfig& config) {
    GridOptions go;
    go.rating_fallback_factor = config.rating_fallback_factor;
    RunContext c;
    c.base = prepare_base_case(to_grid(load_case(config.case_path), go));
    c.scada = build_scada(c.base, config.type1_link_count);
    return c;
}

std::vector<TrialResult> run_trials(const ExperimentConfig& config, const RunContext& context, ControlMode mode,
                                    bool keep_snapshots) {
    auto options = CascadeOptions::from_config(config);
    options.mode = mode;
    options.keep_snapshots = keep_snapshots;
    std::vector<TrialResult> results(config.n_trials);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < results.size();) {
            auto& r = results[t];
            r.trial = t;
            r.mode = mode;
            try {
                auto rng = trial_rng(config.rng_seed, t);
                r.metrics = run_cascade(context.base, context.scada, config.initial_outage_fraction, options, rng);
            } catch (const std::exception& e) {
                r.failed = true;
                r.error = e.what();
            }
        }
    };
    std::size_t threads = config.threads ? config.threads : std::max(1U, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(results.size(), 1));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    return results;
}

std::vector<MetricsRow> metrics_rows(const std::vector<TrialResult>& results) {
    std::vector<MetricsRow> rows;
    for (const auto& r : results) {
        if (r.failed) continue;
        for (const auto& t : r.metrics.tiers) {
            MetricsRow row;
            row.trial = r.trial;
            row.tier = t.tier;
            row.islands_true = t.islands_true;
            row.islands_detected = t.islands_detected;
            row.island_accuracy = t.accuracy_pct();
            row.false_alarm_pct = t.false_alarm_pct();
            row.miss_pct = t.miss_pct();
            row.load_served_pu = t.load_served;
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<PooledTier> pool_by_tier(const std::vector<TrialResult>& results) {
    std::vector<PooledTier> out;
    for (const auto& r : results) {
        if (r.failed) continue;
        for (std::size_t k = 0; k < r.metrics.tiers.size(); ++k) {
            if (out.size() <= k) {
                out.emplace_back();
                out.back().tier = k + 1;
            }
            const auto& t = r.metrics.tiers[k];
            ++out[k].trials;
            add(out[k].accuracy, t.accuracy);
            add(out[k].lines, t.lines);
            out[k].mean_load_served += t.load_served;
        }
    }
    for (auto& p : out) p.mean_load_served /= static_cast<double>(p.trials);
    return out;
}

PooledTier pool_final_tier(const std::vector<TrialResult>& results) {
    PooledTier p;
    for (const auto& r : results) {
        if (r.failed || r.metrics.tiers.empty()) continue;
        const auto& t = r.metrics.tiers.back();
        ++p.trials;
        p.tier = std::max(p.tier, t.tier);
        add(p.accuracy, t.accuracy);
        add(p.lines, t.lines);
        p.mean_load_served += t.load_served;
    }
    if (p.trials) p.mean_load_served /= static_cast<double>(p.trials);
    return p;
}

double quantile_type7(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = static_cast<double>(values.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Quartiles quartiles_type7(const std::vector<double>& values) {
    return {quantile_type7(values, 0.0), quantile_type7(values, 0.25), quantile_type7(values, 0.5),
            quantile_type7(values, 0.75), quantile_type7(values, 1.0)};
}

ModeSummary summarize(const std::string& mode, const std::vector<TrialResult>& results) {
    ModeSummary s;
    s.mode = mode;
    for (const auto& r : results)
        if (!r.failed) s.load_served.push_back(r.final_load_served());
    if (!s.load_served.empty()) s.quartiles = quartiles_type7(s.load_served);
    return s;
}

ModeSummary summarize_rows(const std::string& mode, const std::vector<MetricsRow>& rows) {
    ModeSummary s;
    s.mode = mode;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (i + 1 == rows.size() || rows[i + 1].trial != rows[i].trial) s.load_served.push_back(rows[i].load_served_pu);
    if (!s.load_served.empty()) s.quartiles = quartiles_type7(s.load_served);
    return s;
}

std::string metrics_file_name(ControlMode mode) { return std::string("metrics_") + to_string(mode) + ".csv"; }

std::string mode_from_file_name(const std::filesystem::path& path) {
    const auto stem = path.stem().string();
    constexpr std::string_view prefix = "metrics_";
    if (stem.rfind(prefix, 0) == 0 && stem.size() > prefix.size()) return stem.substr(prefix.size());
    return stem;
}

}  // namespace cascade
