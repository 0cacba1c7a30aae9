#include "rwre/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rwre/random.hpp"

namespace rwre {

namespace {

constexpr double kBalanceTol = 1e-12;

void check_dim(int d) {
    if (d < 2 || d > kMaxDim) {
        throw LawError("environment dimension must be in [2, " + std::to_string(kMaxDim) + "], got " +
                       std::to_string(d));
    }
}

/// Renormalizes so the entries sum to one exactly up to one rounding: the
/// last entry absorbs the remainder.
Weights close_simplex(Weights w, int d) {
    double head = 0.0;
    for (int i = 0; i + 1 < d; ++i) head += w[i];
    w[d - 1] = 1.0 - head;
    return w;
}

void check_admissible(const Weights& w, int d, double kappa, const char* what) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        if (!(w[i] >= 2.0 * kappa - 1e-15)) {
            std::ostringstream os;
            os << what << ": entry " << i << " = " << w[i] << " violates a_i >= 2 kappa = " << 2.0 * kappa;
            throw LawError(os.str());
        }
        s += w[i];
    }
    for (int i = d; i < kMaxDim; ++i) {
        if (w[i] != 0.0) throw LawError(std::string(what) + ": entries beyond the dimension must be zero");
    }
    if (std::abs(s - 1.0) > kBalanceTol) {
        std::ostringstream os;
        os << what << ": entries sum to " << s << ", expected 1";
        throw LawError(os.str());
    }
}

double min_entry(const Weights& w, int d) {
    double m = w[0];
    for (int i = 1; i < d; ++i) m = std::min(m, w[i]);
    return m;
}

Weights weights_from_json(const nlohmann::json& j, int d) {
    if (!j.is_array() || static_cast<int>(j.size()) != d) {
        throw LawError("weight vector must be an array of length d = " + std::to_string(d));
    }
    Weights w;
    for (int i = 0; i < d; ++i) w[i] = j.at(static_cast<std::size_t>(i)).get<double>();
    return w;
}

nlohmann::json weights_to_json(const Weights& w, int d) {
    auto j = nlohmann::json::array();
    for (int i = 0; i < d; ++i) j.push_back(w[i]);
    return j;
}

// Marsaglia-Tsang gamma sampler driven by a counter stream. `k` is the
// running counter; each call consumes a data-dependent number of draws.
double gamma_draw(const CounterStream& s, std::uint64_t& k, double shape) {
    if (shape < 1.0) {
        double g = gamma_draw(s, k, shape + 1.0);
        return g * std::pow(s.open_uniform(k++), 1.0 / shape);
    }
    const double dd = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * dd);
    for (;;) {
        double u1 = s.open_uniform(k++);
        double u2 = s.uniform(k++);
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        double v = 1.0 + c * z;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = s.open_uniform(k++);
        if (std::log(u) < 0.5 * z * z + dd - dd * v + dd * std::log(v)) return dd * v;
    }
}

}  // namespace

std::string to_string(LawFamily f) {
    switch (f) {
        case LawFamily::KappaPaddedDirichlet: return "kappa-padded-dirichlet";
        case LawFamily::TwoPoint: return "two-point";
        case LawFamily::DegenerateConstant: return "degenerate-constant";
    }
    return "unknown";
}

LawFamily law_family_from_string(const std::string& s) {
    if (s == "kappa-padded-dirichlet") return LawFamily::KappaPaddedDirichlet;
    if (s == "two-point") return LawFamily::TwoPoint;
    if (s == "degenerate-constant") return LawFamily::DegenerateConstant;
    throw LawError("unknown environment law family '" + s + "'");
}

EnvironmentLaw EnvironmentLaw::kappa_padded_dirichlet(int d, double kappa, double alpha) {
    check_dim(d);
    if (!(kappa > 0.0) || kappa > 1.0 / (2.0 * d) + 1e-15) {
        std::ostringstream os;
        os << "kappa must lie in (0, 1/(2d)] = (0, " << 1.0 / (2.0 * d) << "], got " << kappa;
        throw LawError(os.str());
    }
    if (!(alpha > 0.0)) throw LawError("Dirichlet concentration must be positive");
    EnvironmentLaw law;
    law.d_ = d;
    law.kappa_ = kappa;
    law.family_ = LawFamily::KappaPaddedDirichlet;
    law.alpha_ = alpha;
    return law;
}

EnvironmentLaw EnvironmentLaw::two_point(int d, const Weights& first, const Weights& second, double p) {
    check_dim(d);
    if (!(p >= 0.0 && p <= 1.0)) throw LawError("two-point probability must lie in [0,1]");
    Weights a = close_simplex(first, d);
    Weights b = close_simplex(second, d);
    double kappa = 0.5 * std::min(min_entry(first, d), min_entry(second, d));
    if (!(kappa > 0.0)) throw LawError("two-point atoms must have positive entries");
    check_admissible(first, d, kappa, "two-point first atom");
    check_admissible(second, d, kappa, "two-point second atom");
    EnvironmentLaw law;
    law.d_ = d;
    law.kappa_ = kappa;
    law.family_ = LawFamily::TwoPoint;
    law.p_ = p;
    law.first_ = a;
    law.second_ = b;
    return law;
}

EnvironmentLaw EnvironmentLaw::degenerate_constant(int d, std::optional<Weights> value) {
    check_dim(d);
    Weights w;
    if (value) {
        w = *value;
    } else {
        for (int i = 0; i < d; ++i) w[i] = 1.0 / d;
    }
    double kappa = 0.5 * min_entry(w, d);
    if (!(kappa > 0.0)) throw LawError("constant weights must be positive");
    check_admissible(w, d, kappa, "constant weights");
    EnvironmentLaw law;
    law.d_ = d;
    law.kappa_ = kappa;
    law.family_ = LawFamily::DegenerateConstant;
    law.first_ = close_simplex(w, d);
    return law;
}

EnvironmentLaw EnvironmentLaw::from_json(const nlohmann::json& j) {
    const int d = j.at("d").get<int>();
    const auto family = law_family_from_string(j.at("family").get<std::string>());
    const nlohmann::json params = j.contains("params") ? j.at("params") : nlohmann::json::object();
    switch (family) {
        case LawFamily::KappaPaddedDirichlet:
            return kappa_padded_dirichlet(d, j.at("kappa").get<double>(), params.value("alpha", 1.0));
        case LawFamily::TwoPoint:
            return two_point(d, weights_from_json(params.at("first"), d), weights_from_json(params.at("second"), d),
                             params.at("p").get<double>());
        case LawFamily::DegenerateConstant:
            if (params.contains("a")) return degenerate_constant(d, weights_from_json(params.at("a"), d));
            return degenerate_constant(d);
    }
    throw LawError("unreachable law family");
}

nlohmann::json EnvironmentLaw::to_json() const {
    nlohmann::json params = nlohmann::json::object();
    switch (family_) {
        case LawFamily::KappaPaddedDirichlet: params["alpha"] = alpha_; break;
        case LawFamily::TwoPoint:
            params["first"] = weights_to_json(first_, d_);
            params["second"] = weights_to_json(second_, d_);
            params["p"] = p_;
            break;
        case LawFamily::DegenerateConstant: params["a"] = weights_to_json(first_, d_); break;
    }
    return {{"d", d_}, {"kappa", kappa_}, {"family", to_string(family_)}, {"params", params}};
}

Weights EnvironmentLaw::draw(std::uint64_t key) const {
    const CounterStream s(key);
    switch (family_) {
        case LawFamily::DegenerateConstant: return first_;
        case LawFamily::TwoPoint: return s.uniform(0) < p_ ? first_ : second_;
        case LawFamily::KappaPaddedDirichlet: {
            std::array<double, kMaxDim> g{};
            double total = 0.0;
            std::uint64_t k = 0;
            for (int i = 0; i < d_; ++i) {
                g[static_cast<std::size_t>(i)] =
                    alpha_ == 1.0 ? -std::log(s.open_uniform(k++)) : gamma_draw(s, k, alpha_);
                total += g[static_cast<std::size_t>(i)];
            }
            const double spread = 1.0 - 2.0 * d_ * kappa_;
            Weights w;
            for (int i = 0; i < d_; ++i) w[i] = 2.0 * kappa_ + spread * (g[static_cast<std::size_t>(i)] / total);
            return close_simplex(w, d_);
        }
    }
    return first_;
}

bool EnvironmentLaw::exchangeable() const {
    switch (family_) {
        case LawFamily::KappaPaddedDirichlet: return true;
        case LawFamily::DegenerateConstant: {
            for (int i = 1; i < d_; ++i)
                if (first_[i] != first_[0]) return false;
            return true;
        }
        case LawFamily::TwoPoint: {
            auto constant = [&](const Weights& w) {
                for (int i = 1; i < d_; ++i)
                    if (w[i] != w[0]) return false;
                return true;
            };
            return constant(first_) && constant(second_);
        }
    }
    return false;
}

Environment::Environment(EnvironmentLaw law, std::uint64_t seed, std::optional<int> period)
    : law_(std::move(law)), seed_(seed), period_(period) {
    if (period_ && *period_ < 1) throw LawError("torus period must be positive");
}

Environment Environment::from_json(const nlohmann::json& j) {
    std::optional<int> period;
    if (j.contains("period") && !j.at("period").is_null()) period = j.at("period").get<int>();
    return Environment(EnvironmentLaw::from_json(j), j.at("seed").get<std::uint64_t>(), period);
}

nlohmann::json Environment::descriptor() const {
    nlohmann::json j = law_.to_json();
    j["seed"] = seed_;
    j["period"] = period_ ? nlohmann::json(*period_) : nlohmann::json(nullptr);
    return j;
}

Point Environment::canonical(const Point& x) const {
    Point p = x + offset_;
    if (period_) {
        const int L = *period_;
        for (int i = 0; i < law_.dim(); ++i) {
            int r = p[i] % L;
            p[i] = r < 0 ? r + L : r;
        }
    }
    return p;
}

Weights Environment::at(const Point& x) const {
    const Point key = canonical(x);
    for (const auto& [site, value] : overrides_) {
        if (site == key) return value;
    }
    return law_.draw(site_key(seed_, key, 0));
}

Environment Environment::shifted(const Point& z) const {
    Environment e = *this;
    e.offset_ += z;
    return e;
}

Environment Environment::with_override(const Point& y, const Weights& value) const {
    Environment e = *this;
    const Point key = canonical(y);
    for (auto& [site, v] : e.overrides_) {
        if (site == key) {
            v = value;
            return e;
        }
    }
    e.overrides_.emplace_back(key, value);
    return e;
}

Weights Environment::replacement_value(const Point& y, std::uint64_t draw) const {
    return law_.draw(site_key(seed_ ^ 0x7265736d706c6521ULL, canonical(y), 1 + draw));
}

ResampledEnvironment::ResampledEnvironment(const Environment& base, const Point& site, std::uint64_t draw)
    : base_(base),
      modified_(base),
      site_(site),
      old_(base.at(site)),
      new_(base.replacement_value(site, draw)) {
    modified_ = base_.with_override(site_, new_);
}

Weights sample_site(const Environment& env, const Point& x) { return env.at(x); }

Environment shift(const Environment& env, const Point& z) { return env.shifted(z); }

ResampledEnvironment resample(const Environment& env, const Point& y, std::uint64_t draw) {
    return ResampledEnvironment(env, y, draw);
}

}  // namespace rwre
