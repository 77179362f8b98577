#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace covertqcd {

/// A solved belief-grid policy: per grid point a (stop, beta) action, plus the
/// converged value function and the multipliers it was solved under.
struct BeliefGridPolicy {
    std::vector<double> grid;      // sorted belief points, grid.front()=0, grid.back()=1
    std::vector<std::uint8_t> stop;
    std::vector<double> beta;
    std::vector<double> value;
    std::vector<double> action_set;  // finite sensing probabilities, includes 0
    double lambda = 0.0;             // multiplier on the covertness cost
    double lambda_f = 0.0;           // terminal false-alarm weight
    double stop_threshold = 1.0;     // stop whenever belief >= this; <= 1-alpha never
    double residual = 0.0;           // final value-iteration residual
    std::int64_t sweeps = 0;

    std::size_t nearest_index(double p) const {
        if (grid.empty()) throw std::logic_error("BeliefGridPolicy: empty grid");
        if (p <= grid.front()) return 0;
        if (p >= grid.back()) return grid.size() - 1;
        // uniform grids dominate; binary search keeps it general
        std::size_t lo = 0, hi = grid.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            (grid[mid] <= p ? lo : hi) = mid;
        }
        return (p - grid[lo] <= grid[hi] - p) ? lo : hi;
    }

    double beta_at(double p) const { return beta[nearest_index(p)]; }
    bool should_stop(double p) const { return p >= stop_threshold; }
};

}  // namespace covertqcd
