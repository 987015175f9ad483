#ifndef CASCADE_METRICS_HPP
#define CASCADE_METRICS_HPP

// Island accuracy and line outage statistics for one tier.

#include <optional>
#include <vector>

namespace cascade {

/// Island accuracy split by observability class. High: at least half the
/// buses observable plus an observed generator and nonzero load. Low: the
/// generator and load are seen but fewer buses. Everything else is
/// unobserved and left out of the denominators.
struct IslandAccuracy {
    std::size_t high_attempts = 0, high_correct = 0;
    std::size_t low_attempts = 0, low_correct = 0;
    std::size_t unobserved = 0;

    std::optional<double> high_pct() const;
    std::optional<double> low_pct() const;
    /// Pooled: (high_correct + low_correct) / (high_attempts + low_attempts).
    std::optional<double> total_pct() const;
};

/// An attempt is correct when the estimated island holding the true
/// island's observable buses equals it exactly. `estimated` partitions all
/// buses; the per-bus flags come from the measurement snapshot.
IslandAccuracy compute_island_accuracy(const std::vector<std::vector<std::size_t>>& true_islands,
                                       const std::vector<std::vector<std::size_t>>& estimated,
                                       const std::vector<bool>& observable, const std::vector<bool>& gen_seen,
                                       const std::vector<bool>& load_seen);

struct LineStats {
    std::size_t true_outages = 0, missed = 0;
    std::size_t healthy = 0, false_alarms = 0;

    /// |true \ detected| / |true| * 100, zero without true outages.
    double miss_pct() const;
    /// |detected \ true| / |healthy unobserved| * 100.
    double false_alarm_pct() const;
};

/// Counts restricted to `unobserved_lines`; all three lists hold line ids.
LineStats compute_line_stats(const std::vector<std::size_t>& true_out, const std::vector<std::size_t>& detected_out,
                             const std::vector<std::size_t>& unobserved_lines);

}  // namespace cascade

#endif
