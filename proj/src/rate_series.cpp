#include "rwre/rate_series.hpp"

#include <cmath>
#include <iomanip>
#include <stdexcept>

#include "rwre/stats.hpp"

namespace rwre {

nlohmann::json RateFit::to_json() const {
    return {{"slope", slope}, {"intercept", intercept}, {"band", band}, {"residual", residual}, {"points", points}};
}

RateFit fit_rate(std::span<const double> scales, std::span<const double> values) {
    if (scales.size() != values.size()) throw std::invalid_argument("fit_rate: size mismatch");
    const std::size_t n = scales.size();
    if (n < 3) throw std::invalid_argument("fit_rate: need at least three points");
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(scales[i] > 0.0) || !(values[i] > 0.0))
            throw std::invalid_argument("fit_rate: scales and values must be positive");
        lx[i] = std::log(scales[i]);
        ly[i] = std::log(values[i]);
    }
    const double mx = mean(lx), my = mean(ly);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_rate: scales must not all coincide");
    RateFit f;
    f.points = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - f.intercept - f.slope * lx[i];
        ssr += r * r;
    }
    f.residual = std::sqrt(ssr / static_cast<double>(n));
    f.band = 1.96 * std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    return f;
}

void RateSeries::add(double scale, std::vector<double> samples) {
    RatePoint p;
    p.scale = scale;
    p.value = median(samples);
    p.mean = mean(samples);
    p.error = samples.size() > 1 ? standard_error(samples) : 0.0;
    p.samples = std::move(samples);
    points.push_back(std::move(p));
}

void RateSeries::refit() {
    const auto s = scales();
    fit = fit_rate(s, values());
    std::vector<double> m;
    for (const auto& p : points) m.push_back(p.mean);
    bool positive = true;
    for (double v : m) positive = positive && v > 0.0;
    if (positive) mean_fit = fit_rate(s, m);
    else mean_fit.reset();
}

std::vector<double> RateSeries::scales() const {
    std::vector<double> s;
    for (const auto& p : points) s.push_back(p.scale);
    return s;
}

std::vector<double> RateSeries::values() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.value);
    return v;
}

bool RateSeries::strictly_decreasing() const {
    for (std::size_t i = 1; i < points.size(); ++i)
        if (!(points[i].value < points[i - 1].value)) return false;
    return true;
}

nlohmann::json RateSeries::to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points)
        pts.push_back({{"scale", p.scale}, {"value", p.value}, {"mean", p.mean}, {"error", p.error},
                       {"samples", p.samples.size()}});
    nlohmann::json j{{"statistic", statistic}, {"points", pts}, {"reference_exponent", reference_exponent}};
    if (fit.points) j["fit"] = fit.to_json();
    if (mean_fit) j["mean_fit"] = mean_fit->to_json();
    return j;
}

void RateSeries::write_csv(std::ostream& os, const std::string& scale_name) const {
    os << scale_name << ",sample," << (statistic.empty() ? "value" : statistic) << '\n';
    os << std::setprecision(17);
    for (const auto& p : points)
        for (std::size_t i = 0; i < p.samples.size(); ++i) os << p.scale << ',' << i << ',' << p.samples[i] << '\n';
}

}  // namespace rwre
