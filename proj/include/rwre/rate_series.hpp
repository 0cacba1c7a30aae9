#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace rwre {

/// Least-squares line through (log scale, log value).
struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double band = 0.0;      // 1.96 * standard error of the slope
    double residual = 0.0;  // rms of the log residuals
    std::size_t points = 0;

    bool within(double lo, double hi) const { return slope >= lo && slope <= hi; }
    nlohmann::json to_json() const;
};

/// Needs at least three points; every scale and value must be positive.
RateFit fit_rate(std::span<const double> scales, std::span<const double> values);

struct RatePoint {
    double scale = 0.0;
    double value = 0.0;  // the fitted statistic, usually a median over samples
    double mean = 0.0;
    double error = 0.0;
    std::vector<double> samples;
};

/// (scale, statistic) pairs with a fitted slope and the exponent it is
/// compared against.
struct RateSeries {
    std::string statistic;
    std::vector<RatePoint> points;
    RateFit fit;
    std::optional<RateFit> mean_fit;
    double reference_exponent = 0.0;

    void add(double scale, std::vector<double> samples);
    /// Fits value (and mean, when all means are positive) against scale.
    void refit();

    std::vector<double> scales() const;
    std::vector<double> values() const;
    bool strictly_decreasing() const;

    nlohmann::json to_json() const;
    /// scale,sample,value rows, one per sample.
    void write_csv(std::ostream& os, const std::string& scale_name = "scale") const;
};

}  // namespace rwre
