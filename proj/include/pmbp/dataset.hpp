#pragma once

// Building datasets from event histories: interval censoring of chosen dimensions.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "errors.hpp"
#include "model.hpp"

namespace pmbp {

inline std::vector<double> window_boundaries(double T, double width) {
    if (!(width > 0.0)) throw std::invalid_argument("censor width must be positive");
    std::vector<double> b{0.0};
    for (long k = 1;; ++k) {
        const double o = static_cast<double>(k) * width;
        if (!(o < T * (1.0 - 1e-12))) break;
        b.push_back(o);
    }
    b.push_back(T);
    return b;
}

// half-open counting: an event at o_k belongs to [o_k, o_{k+1})
inline std::vector<long> count_in_windows(const std::vector<double>& events, const std::vector<double>& b) {
    std::vector<long> c(b.size() - 1, 0);
    for (double t : events) {
        auto it = std::upper_bound(b.begin(), b.end(), t);
        const auto k = static_cast<std::size_t>(it - b.begin()) - 1;
        if (it == b.begin() || k >= c.size()) throw std::invalid_argument("event outside observation window");
        ++c[k];
    }
    return c;
}

// Replace the chosen dimensions by window counts. The censored set must be a
// prefix {0..e-1} (the E block); the rest stay as timestamps.
inline Dataset censor(const EventHistory& events, const std::set<int>& dims, double width) {
    events.validate();
    const int e = static_cast<int>(dims.size());
    int expect = 0;
    for (int j : dims) {
        if (j != expect++) throw DimensionError("censored dimensions must be 0..e-1");
    }
    if (e > events.dims()) throw DimensionError("more censored dimensions than dimensions");
    Dataset out;
    out.horizon = events.horizon;
    out.histories = EventHistory(events.dims(), events.horizon);
    const auto b = window_boundaries(events.horizon, width);
    for (int j = 0; j < events.dims(); ++j) {
        const auto& v = events.times[static_cast<std::size_t>(j)];
        if (j < e)
            out.counts.push_back({j, b, count_in_windows(v, b)});
        else
            out.histories.times[static_cast<std::size_t>(j)] = v;
    }
    return out;
}

// no censoring: all dimensions as timestamps (e = 0)
inline Dataset as_point_data(const EventHistory& events) { return censor(events, {}, events.horizon); }

}  // namespace pmbp
