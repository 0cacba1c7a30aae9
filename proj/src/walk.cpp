#include "rwre/walk.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rwre/cutoff.hpp"
#include "rwre/parallel.hpp"
#include "rwre/stats.hpp"

namespace rwre {

namespace {

// Keeps window caches below ~100 MB.
constexpr std::size_t kMaxWindowSites = 3'000'000;

std::string point_string(const Point& p) {
    std::ostringstream os;
    os << p;
    return os.str();
}

void step_cap(std::uint64_t n, const char* what) {
    if (n > kMaxPathSteps) {
        std::ostringstream os;
        os << what << ": path exceeded " << kMaxPathSteps << " steps; check the killing field";
        throw WalkError(os.str());
    }
}

}  // namespace

EnvWindow::EnvWindow(const Environment& env, const Point& center, int radius) : env_(env), d_(env.dim()) {
    int r = std::max(radius, 0);
    auto volume = [&](int rr) {
        std::size_t v = 1;
        for (int i = 0; i < d_; ++i) v *= static_cast<std::size_t>(2 * rr + 1);
        return v;
    };
    while (r > 0 && volume(r) > kMaxWindowSites) --r;
    side_ = 2 * r + 1;
    lo_ = center;
    for (int i = 0; i < d_; ++i) lo_[i] -= r;
    cache_.resize(volume(r));
    for (std::size_t s = 0; s < cache_.size(); ++s) {
        Point p = lo_;
        std::size_t q = s;
        for (int i = d_ - 1; i >= 0; --i) {
            p[i] += static_cast<int>(q % static_cast<std::size_t>(side_));
            q /= static_cast<std::size_t>(side_);
        }
        cache_[s] = env.at(p);
    }
}

Weights EnvWindow::at(const Point& x) const {
    std::size_t s = 0;
    for (int i = 0; i < d_; ++i) {
        const int c = x[i] - lo_[i];
        if (c < 0 || c >= side_) return env_.at(x);
        s = s * static_cast<std::size_t>(side_) + static_cast<std::size_t>(c);
    }
    return cache_[s];
}

int choose_jump(const Weights& a, int d, double u) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
        const double p = 0.5 * a[i];
        acc += p;
        if (u < acc) return 2 * i;
        acc += p;
        if (u < acc) return 2 * i + 1;
    }
    return 2 * d - 1;  // u within rounding of 1
}

Point jump_vector(int k) { return unit(k / 2, k % 2 == 0 ? 1 : -1); }

std::vector<Point> WalkPath::positions() const {
    std::vector<Point> out{start};
    Point x = start;
    for (auto k : steps) {
        x += jump_vector(k);
        out.push_back(x);
    }
    return out;
}

Point WalkPath::end() const {
    Point x = start;
    for (auto k : steps) x += jump_vector(k);
    return x;
}

nlohmann::json MCEstimate::to_json() const {
    return {{"quantity", quantity}, {"x", point_string(x)}, {"mean", mean}, {"stderr", std_error}, {"n_paths", n_paths},
            {"seed", seed}};
}

KillClock KillClock::everywhere(double R) {
    KillClock c;
    c.eta = [](const Point&) { return 1.0; };
    c.R = R;
    c.uniform = true;
    return c;
}

KillClock KillClock::cutoff(double R) {
    KillClock c;
    c.eta = [R](const Point& x) { return eta_R(x, R); };
    c.R = R;
    return c;
}

double KillClock::tilde(const Point& x) const {
    const double e = uniform ? 1.0 : eta(x);
    return e / (R * R + e);
}

MCEstimate estimate_paths(const std::string& quantity, const Point& x, std::uint64_t seed, std::size_t N, int workers,
                          const std::function<double(PathRng&)>& sample) {
    if (N == 0) throw std::invalid_argument("path count must be positive");
    std::vector<double> v(N);
    constexpr std::size_t chunk = 256;
    const std::size_t nchunks = (N + chunk - 1) / chunk;
    parallel_for(nchunks, workers, [&](std::size_t c) {
        for (std::size_t i = c * chunk; i < std::min(N, (c + 1) * chunk); ++i) {
            PathRng rng(seed, i);
            v[i] = sample(rng);
        }
    });
    MCEstimate e;
    e.quantity = quantity;
    e.x = x;
    e.mean = mean(v);
    e.std_error = standard_error(v);
    e.n_paths = N;
    e.seed = seed;
    return e;
}

MCEstimate estimate_until(const std::string& quantity, const Point& x, std::uint64_t seed, double target_se,
                          std::size_t min_paths, std::size_t max_paths, int workers,
                          const std::function<double(PathRng&)>& sample) {
    std::vector<double> v;
    std::size_t N = std::max<std::size_t>(min_paths, 2);
    MCEstimate e;
    e.quantity = quantity;
    e.x = x;
    e.seed = seed;
    for (;;) {
        const std::size_t have = v.size();
        v.resize(N);
        constexpr std::size_t chunk = 256;
        const std::size_t todo = N - have;
        parallel_for((todo + chunk - 1) / chunk, workers, [&](std::size_t c) {
            for (std::size_t i = have + c * chunk; i < std::min(N, have + (c + 1) * chunk); ++i) {
                PathRng rng(seed, i);
                v[i] = sample(rng);
            }
        });
        e.mean = mean(v);
        e.std_error = standard_error(v);
        e.n_paths = N;
        if (e.std_error <= target_se || N >= max_paths) return e;
        // aim directly at the target, at most 4x per round
        const double ratio = e.std_error / target_se;
        const auto want = static_cast<std::size_t>(static_cast<double>(N) * std::min(4.0, 1.1 * ratio * ratio));
        N = std::min(max_paths, std::max(N + 1, want));
    }
}

WalkPath run_discrete(const Environment& env, const Point& start, std::uint64_t n, std::uint64_t seed,
                      std::uint64_t path_index, bool continuous) {
    step_cap(n, "run_discrete");
    WalkPath p;
    p.start = start;
    p.seed = seed;
    p.path_index = path_index;
    p.steps.reserve(n);
    PathRng rng(seed, path_index);
    Point x = start;
    const int d = env.dim();
    for (std::uint64_t k = 0; k < n; ++k) {
        if (continuous) p.holding.push_back(rng.exponential());
        const int j = choose_jump(env.at(x), d, rng.uniform());
        p.steps.push_back(static_cast<std::uint8_t>(j));
        x += jump_vector(j);
    }
    return p;
}

ExitTimeResult exit_time(const Environment& env, const Point& start, double R, const Point& center, std::size_t N,
                         std::uint64_t seed, int workers) {
    const double R2 = R * R;
    if (!(static_cast<double>(norm_sq(start - center)) < R2)) throw std::invalid_argument("start must lie in the ball");
    EnvWindow w(env, center, static_cast<int>(std::ceil(R)) + 1);
    const int d = env.dim();
    const double x0 = static_cast<double>(norm_sq(start - center));
    std::vector<double> tau(N), disp(N);
    parallel_for((N + 255) / 256, workers, [&](std::size_t c) {
        for (std::size_t i = c * 256; i < std::min(N, (c + 1) * 256); ++i) {
            PathRng rng(seed, i);
            Point x = start;
            std::uint64_t n = 0;
            while (static_cast<double>(norm_sq(x - center)) < R2) {
                x += jump_vector(choose_jump(w.at(x), d, rng.uniform()));
                step_cap(++n, "exit_time");
            }
            tau[i] = static_cast<double>(n);
            disp[i] = static_cast<double>(norm_sq(x - center)) - x0;
        }
    });
    auto make = [&](const std::string& q, const std::vector<double>& v) {
        MCEstimate e;
        e.quantity = q;
        e.x = start;
        e.mean = mean(v);
        e.std_error = standard_error(v);
        e.n_paths = N;
        e.seed = seed;
        return e;
    };
    std::vector<double> gap(N);
    for (std::size_t i = 0; i < N; ++i) gap[i] = tau[i] - disp[i];
    return {make("exit_time", tau), make("exit_displacement", disp), make("optional_stopping_gap", gap)};
}

KilledTimeResult killed_time(const Environment& env, const KillClock& clock, const Point& start, std::size_t N,
                             std::uint64_t seed, const std::vector<int>& ks, int workers) {
    const int d = env.dim();
    const int kmax = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
    EnvWindow w(env, start, static_cast<int>(std::ceil(std::max(4.0, static_cast<double>(kmax)) * clock.R)) + 1);
    std::vector<double> T(N);
    std::vector<std::vector<double>> surv(ks.size(), std::vector<double>(N));
    parallel_for((N + 255) / 256, workers, [&](std::size_t c) {
        for (std::size_t i = c * 256; i < std::min(N, (c + 1) * 256); ++i) {
            PathRng rng(seed, i);
            Point x = start;
            long long maxr2 = 0;  // max |X_n - start|^2 over n < T
            std::uint64_t n = 0;
            std::uint64_t geometric = 0;
            if (clock.uniform) {
                const double q = 1.0 / (clock.R * clock.R + 1.0);
                geometric = static_cast<std::uint64_t>(std::floor(std::log(rng.open_uniform()) / std::log1p(-q)));
                step_cap(geometric, "killed_time");
            }
            for (;;) {
                if (clock.uniform) {
                    if (n == geometric) break;
                } else {
                    const double p = clock.tilde(x);
                    if (p > 0.0 && rng.uniform() < p) break;
                }
                maxr2 = std::max(maxr2, norm_sq(x - start));
                x += jump_vector(choose_jump(w.at(x), d, rng.uniform()));
                step_cap(++n, "killed_time");
            }
            T[i] = static_cast<double>(n);
            for (std::size_t j = 0; j < ks.size(); ++j) {
                const double r = ks[j] * clock.R;
                surv[j][i] = static_cast<double>(maxr2) >= r * r ? 1.0 : 0.0;
            }
        }
    });
    KilledTimeResult res;
    auto make = [&](const std::string& q, const std::vector<double>& v) {
        MCEstimate e;
        e.quantity = q;
        e.x = start;
        e.mean = mean(v);
        e.std_error = standard_error(v);
        e.n_paths = N;
        e.seed = seed;
        return e;
    };
    res.T = make("killed_time", T);
    res.ks = ks;
    for (std::size_t j = 0; j < ks.size(); ++j) res.survival.push_back(make("P(T>tau_" + std::to_string(ks[j]) + ")", surv[j]));
    return res;
}

double sample_local_corrector(const EnvWindow& w, const KillClock& clock, const LocalFn& psi, double psibar,
                              const Point& x0, PathRng& rng) {
    const int d = w.environment().dim();
    Point x = x0;
    double s = 0.0;
    for (std::uint64_t n = 0;; ++n) {
        step_cap(n, "mc_local_corrector");
        const Weights a = w.at(x);
        const double p = clock.tilde(x);
        s += (1.0 - p) * (psi(a) - psibar);
        if (p > 0.0 && rng.uniform() < p) break;
        x += jump_vector(choose_jump(a, d, rng.uniform()));
    }
    return -s;
}

double sample_approx_corrector(const EnvWindow& w, double R, const LocalFn& psi, double psibar, const Point& x0,
                               PathRng& rng) {
    const int d = w.environment().dim();
    const double q = 1.0 / (R * R + 1.0);
    // number of jumps before an Exp(1/R^2) clock: P(K = k) = (1-q)^k q
    const auto K = static_cast<std::uint64_t>(std::floor(std::log(rng.open_uniform()) / std::log1p(-q)));
    step_cap(K, "mc_approx_corrector");
    Point x = x0;
    for (std::uint64_t n = 0; n < K; ++n) x += jump_vector(choose_jump(w.at(x), d, rng.uniform()));
    return -R * R * (psi(w.at(x)) - psibar);
}

MCEstimate mc_local_corrector(const Environment& env, const KillClock& clock, const LocalFn& psi, double psibar,
                              const Point& x, std::size_t N, std::uint64_t seed, int workers) {
    EnvWindow w(env, x, static_cast<int>(std::ceil(6.0 * clock.R)) + static_cast<int>(norm(x)));
    return estimate_paths("phi_loc", x, seed, N, workers,
                          [&](PathRng& rng) { return sample_local_corrector(w, clock, psi, psibar, x, rng); });
}

MCEstimate mc_approx_corrector(const Environment& env, double R, const LocalFn& psi, double psibar, const Point& x,
                               std::size_t N, std::uint64_t seed, int workers) {
    EnvWindow w(env, x, static_cast<int>(std::ceil(6.0 * R)));
    return estimate_paths("phi_ap", x, seed, N, workers,
                          [&](PathRng& rng) { return sample_approx_corrector(w, R, psi, psibar, x, rng); });
}

}  // namespace rwre
