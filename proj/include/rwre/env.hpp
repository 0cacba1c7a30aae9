#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/point.hpp"

namespace rwre {

/// Diagonal of the normalized coefficient matrix a(x) = omega(x)/tr omega(x).
/// Only the first d entries are meaningful; they are positive and sum to 1.
struct Weights {
    std::array<double, kMaxDim> a{};

    double operator[](int i) const { return a[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return a[static_cast<std::size_t>(i)]; }
    friend bool operator==(const Weights&, const Weights&) = default;
};

/// Transition probability omega(x, x +- e_i) of a site.
inline double jump_probability(const Weights& w, int i) { return 0.5 * w[i]; }

enum class LawFamily { KappaPaddedDirichlet, TwoPoint, DegenerateConstant };

std::string to_string(LawFamily f);
LawFamily law_family_from_string(const std::string& s);

class LawError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Sampling law of the i.i.d. balanced environment. Every sample is diagonal
/// with entries >= 2*kappa summing to one.
class EnvironmentLaw {
public:
    /// a_i = 2 kappa + (1 - 2 d kappa) w_i with w ~ Dirichlet(alpha, ..., alpha).
    /// alpha = 1 is the uniform law on the simplex.
    static EnvironmentLaw kappa_padded_dirichlet(int d, double kappa, double alpha = 1.0);

    /// a = first with probability p, second otherwise.
    static EnvironmentLaw two_point(int d, const Weights& first, const Weights& second, double p);

    /// The same weights at every site; defaults to the simple random walk.
    static EnvironmentLaw degenerate_constant(int d, std::optional<Weights> value = {});

    static EnvironmentLaw from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    int dim() const { return d_; }
    double kappa() const { return kappa_; }
    LawFamily family() const { return family_; }
    double alpha() const { return alpha_; }
    double p() const { return p_; }
    const Weights& first() const { return first_; }
    const Weights& second() const { return second_; }

    /// Sample drawn from the counter stream identified by `key`.
    Weights draw(std::uint64_t key) const;

    /// True when the marginal is invariant under permutations of the
    /// coordinates; the effective matrix is then I/d.
    bool exchangeable() const;

    /// True when every sample is identical.
    bool deterministic() const { return family_ == LawFamily::DegenerateConstant; }

private:
    EnvironmentLaw() = default;

    int d_ = 2;
    double kappa_ = 0.25;
    LawFamily family_ = LawFamily::DegenerateConstant;
    double alpha_ = 1.0;
    double p_ = 0.5;
    Weights first_{};
    Weights second_{};
};

/// A realization of the environment on Z^d (or on a torus of period L).
/// Site values are a pure function of (law, seed, site); nothing is stored
/// except a handful of resampled overrides and a shift.
class Environment {
public:
    Environment(EnvironmentLaw law, std::uint64_t seed, std::optional<int> period = {});

    static Environment from_json(const nlohmann::json& j);
    nlohmann::json descriptor() const;

    const EnvironmentLaw& law() const { return law_; }
    int dim() const { return law_.dim(); }
    std::uint64_t seed() const { return seed_; }
    std::optional<int> period() const { return period_; }
    const Point& offset() const { return offset_; }

    /// a(x) of this environment.
    Weights at(const Point& x) const;

    /// Representative of x in the base field (shift applied, torus reduced).
    Point canonical(const Point& x) const;

    /// theta_z: the environment seen from z.
    Environment shifted(const Point& z) const;

    /// Copy with a(y) replaced by `value`.
    Environment with_override(const Point& y, const Weights& value) const;

    /// Fresh law draw for site y, independent of the base field. `draw`
    /// selects among independent replacement keys.
    Weights replacement_value(const Point& y, std::uint64_t draw) const;

private:
    EnvironmentLaw law_;
    std::uint64_t seed_;
    std::optional<int> period_;
    Point offset_{};
    std::vector<std::pair<Point, Weights>> overrides_;
};

/// omega'_y: the environment modified at a single site.
class ResampledEnvironment {
public:
    ResampledEnvironment(const Environment& base, const Point& site, std::uint64_t draw);

    const Environment& base() const { return base_; }
    const Environment& environment() const { return modified_; }
    const Point& site() const { return site_; }
    const Weights& old_value() const { return old_; }
    const Weights& new_value() const { return new_; }

private:
    Environment base_;
    Environment modified_;
    Point site_;
    Weights old_;
    Weights new_;
};

Weights sample_site(const Environment& env, const Point& x);
Environment shift(const Environment& env, const Point& z);
ResampledEnvironment resample(const Environment& env, const Point& y, std::uint64_t draw = 0);

}  // namespace rwre
