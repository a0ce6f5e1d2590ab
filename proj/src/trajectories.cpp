#include "qratchet/trajectories.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "qratchet/parallel.hpp"

namespace qratchet::trajectories {

namespace {

constexpr hilbert::Complex kI{0.0, 1.0};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Deterministic variates independent of the standard library's
// distribution implementations.
double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double exp_variate(std::mt19937_64& rng, double rate) {
    double u;
    do {
        u = uniform01(rng);
    } while (u <= 0.0);
    return -std::log(u) / rate;
}

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
    // splitmix-style mixing keeps distinct streams decorrelated.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= (z >> 31);
    return std::mt19937_64(z);
}

void validate_spectrum(const SpectrumParams& p) {
    if (!(p.f_min > 0.0) || !(p.f_max > p.f_min)) {
        throw ConfigError("noise band requires 0 < f_min < f_max");
    }
    if (p.alpha < 0.5 || p.alpha > 1.5) {
        throw ConfigError("spectral exponent alpha must lie in [0.5, 1.5]");
    }
    if (p.amplitude < 0.0) {
        throw ConfigError("noise amplitude must be >= 0");
    }
    if (p.per_decade < 1) {
        throw ConfigError("need at least one telegraph process per decade");
    }
}

struct TelegraphBank {
    std::vector<double> rates;
    std::vector<double> amps;  // per-process amplitude
};

TelegraphBank make_bank(const SpectrumParams& p) {
    TelegraphBank bank;
    const double decades = std::log10(p.f_max / p.f_min);
    const int n_proc = std::max(2, static_cast<int>(std::lround(p.per_decade * decades)) + 1);
    bank.rates.resize(n_proc);
    bank.amps.resize(n_proc);
    double weight_sum = 0.0;
    for (int k = 0; k < n_proc; ++k) {
        const double frac = static_cast<double>(k) / (n_proc - 1);
        bank.rates[k] = p.f_min * std::pow(p.f_max / p.f_min, frac);
        // Lorentzian knees log-spaced; weights gamma^(1-alpha) shape the
        // ensemble spectrum to 1/f^alpha across the band.
        bank.amps[k] = std::pow(bank.rates[k], 0.5 * (1.0 - p.alpha));
        weight_sum += bank.amps[k] * bank.amps[k];
    }
    const double scale = p.amplitude / std::sqrt(weight_sum);
    for (double& a : bank.amps) a *= scale;
    return bank;
}

}  // namespace

double NoiseRealization::value(int signal, double t) const {
    if (signal < 0 || signal >= n_signals()) {
        throw DimensionError("noise signal index out of range");
    }
    if (times.size() < 2) return 0.0;
    const double t0 = times.front();
    const double dt = times[1] - times[0];
    auto idx = static_cast<Eigen::Index>(std::floor((t - t0) / dt));
    idx = std::clamp<Eigen::Index>(idx, 0, static_cast<Eigen::Index>(times.size()) - 1);
    return h_values(idx, signal);
}

std::vector<double> noise_grid(const SpectrumParams& params, double t0, double t1) {
    validate_spectrum(params);
    if (!(t1 > t0)) {
        throw ConfigError("noise grid needs t1 > t0");
    }
    const double dt_max = 1.0 / (20.0 * params.f_max);
    auto n = static_cast<long long>(std::ceil((t1 - t0) / dt_max)) + 1;
    if (n > 4'000'000) {
        throw ConfigError("noise grid would require " + std::to_string(n) +
                          " samples; reduce f_max or the window");
    }
    const int count = static_cast<int>(std::max<long long>(n, 2));
    std::vector<double> grid(count);
    const double dt = (t1 - t0) / (count - 1);
    for (int i = 0; i < count; ++i) grid[i] = t0 + i * dt;
    grid.back() = t1;
    return grid;
}

NoiseRealization sample_low_freq_noise(const SpectrumParams& params,
                                       const std::vector<double>& tgrid, std::uint64_t seed,
                                       int n_signals) {
    validate_spectrum(params);
    if (tgrid.size() < 2) {
        throw ConfigError("noise sampling needs a grid with at least two points");
    }
    if (n_signals < 1) {
        throw ConfigError("need at least one noise signal");
    }

    NoiseRealization real;
    real.times = noise_grid(params, tgrid.front(), tgrid.back());
    real.seed = seed;
    real.params = params;
    const auto n = static_cast<Eigen::Index>(real.times.size());
    real.h_values = Eigen::MatrixXd::Zero(n, n_signals);
    if (params.amplitude == 0.0) return real;

    const TelegraphBank bank = make_bank(params);
    const double t0 = real.times.front();
    const double t1 = real.times.back();
    const double dt = real.times[1] - real.times[0];

    for (int s = 0; s < n_signals; ++s) {
        auto rng = seeded_rng(seed, static_cast<std::uint64_t>(s));
        for (std::size_t k = 0; k < bank.rates.size(); ++k) {
            double sign = (rng() & 1ULL) ? 1.0 : -1.0;
            double t = t0;
            while (t < t1) {
                const double t_next = t + exp_variate(rng, bank.rates[k]);
                const auto i0 = static_cast<Eigen::Index>(std::ceil((t - t0) / dt - 1e-9));
                const auto i1 = std::min<Eigen::Index>(
                    n, static_cast<Eigen::Index>(std::ceil((std::min(t_next, t1) - t0) / dt)));
                for (Eigen::Index i = std::max<Eigen::Index>(i0, 0); i < i1; ++i) {
                    real.h_values(i, s) += sign * bank.amps[k];
                }
                sign = -sign;
                t = t_next;
            }
        }
        // Top grid point belongs to the last segment.
        real.h_values(n - 1, s) = real.h_values(n - 2, s);
    }
    return real;
}

double noise_spectral_slope(const SpectrumParams& params, double duration, int n_realizations,
                            std::uint64_t seed_base) {
    validate_spectrum(params);
    if (n_realizations < 2) {
        throw ConfigError("spectral slope estimation needs several realizations");
    }
    std::vector<double> span{0.0, duration};

    // Interior band, clear of the outermost Lorentzian knees.
    const int n_freq = 16;
    const double f_lo = params.f_min * 5.0;
    const double f_hi = params.f_max / 5.0;
    if (!(f_hi > f_lo)) {
        throw ConfigError("noise band too narrow for a slope estimate");
    }
    std::vector<double> freqs(n_freq);
    for (int j = 0; j < n_freq; ++j) {
        freqs[j] = f_lo * std::pow(f_hi / f_lo, static_cast<double>(j) / (n_freq - 1));
    }

    Eigen::VectorXd power = Eigen::VectorXd::Zero(n_freq);
    for (int r = 0; r < n_realizations; ++r) {
        const NoiseRealization real =
            sample_low_freq_noise(params, span, seed_base + static_cast<std::uint64_t>(r), 1);
        const auto n = static_cast<Eigen::Index>(real.times.size());
        const double dt = real.times[1] - real.times[0];
        Eigen::VectorXd h = real.h_values.col(0);
        h.array() -= h.mean();
        for (int j = 0; j < n_freq; ++j) {
            const hilbert::Complex rot = std::exp(-2.0 * M_PI * kI * freqs[j] * dt);
            hilbert::Complex phase = 1.0;
            hilbert::Complex acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += h(i) * phase;
                phase *= rot;
            }
            power(j) += std::norm(acc * dt) / duration;
        }
    }
    power /= n_realizations;

    // Least-squares line through (log f, log P).
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int j = 0; j < n_freq; ++j) {
        const double x = std::log(freqs[j]);
        const double y = std::log(std::max(power(j), 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double nf = n_freq;
    return (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
}

namespace {

struct TrajectoryWorkspace {
    std::vector<hilbert::Operator> jump_ops;   // sqrt(rate) absorbed separately
    std::vector<double> rates;
    hilbert::Operator h_eff;  // H - (i/2) sum gamma L^dag L (static part)

    explicit TrajectoryWorkspace(const LindbladSystem& sys)
        : h_eff(build_h_eff(sys)) {
        for (const auto& ch : sys.channels()) {
            if (ch.rate > 0.0) {
                jump_ops.push_back(ch.op);
                rates.push_back(ch.rate);
            }
        }
    }

    static hilbert::Operator build_h_eff(const LindbladSystem& sys) {
        Eigen::MatrixXcd m = sys.hamiltonian().matrix();
        for (const auto& ch : sys.channels()) {
            if (ch.rate > 0.0) {
                m -= 0.5 * kI * ch.rate * (ch.op.matrix().adjoint() * ch.op.matrix());
            }
        }
        return hilbert::Operator(sys.space(), std::move(m), "H_eff");
    }
};

}  // namespace

TrajectoryRecord run_trajectory(const LindbladSystem& sys, const PureState& psi0,
                                const std::vector<double>& tgrid, const ObservableList& obs,
                                std::uint64_t seed, const IntegratorOptions& opts) {
    if (psi0.space() != sys.space()) {
        throw SpaceMismatchError("run_trajectory: state and system spaces differ");
    }
    for (const auto& [label, op] : obs) {
        if (op.space() != sys.space()) {
            throw SpaceMismatchError("run_trajectory: observable '" + label +
                                     "' lives on a different space");
        }
    }
    if (tgrid.size() < 2) {
        throw ConfigError("run_trajectory needs at least two grid points");
    }
    if (sys.time_dependent() && !sys.breakpoints().empty() && false) {
        // placeholder: breakpoints handled below like evolve()
    }

    TrajectoryWorkspace ws(sys);
    const auto& modulations_breaks = sys.breakpoints();

    ode::Rhs rhs = [&](double t, const Vector& y, Vector& dy) {
        dy = -kI * ws.h_eff.apply(y);
        (void)t;
        if (sys.time_dependent()) {
            const Eigen::MatrixXcd extra = sys.hamiltonian_at(t) - sys.hamiltonian().matrix();
            dy.noalias() += -kI * (extra * y);
        }
    };

    TrajectoryRecord rec;
    rec.seed = seed;
    rec.observables.times = tgrid;
    rec.observables.labels.reserve(obs.size());
    for (const auto& [label, op] : obs) rec.observables.labels.push_back(label);
    rec.observables.values.resize(tgrid.size(), obs.size());

    auto rng = seeded_rng(seed, 0);
    double threshold = uniform01(rng);

    Vector y = psi0.amplitudes();
    double t = tgrid.front();

    // Must-hit times: output grid plus noise breakpoints.
    std::vector<double> stops(tgrid.begin(), tgrid.end());
    for (double b : modulations_breaks) {
        if (b > tgrid.front() && b < tgrid.back()) stops.push_back(b);
    }
    std::sort(stops.begin(), stops.end());
    const double teps = 1e-12 * std::max(1.0, std::abs(tgrid.back()));
    stops.erase(std::unique(stops.begin(), stops.end(),
                            [&](double a, double b) { return std::abs(a - b) <= teps; }),
                stops.end());

    ode::DormandPrince54 stepper(rhs, opts, y.size());
    stepper.set_suggested_h(stepper.initial_step(t, y, tgrid.back() - tgrid.front()));

    auto sample_row = [&](std::size_t row, const Vector& state) {
        const double nrm2 = state.squaredNorm();
        for (std::size_t k = 0; k < obs.size(); ++k) {
            const hilbert::Complex v = state.dot(obs[k].second.apply(state));
            rec.observables.values(row, k) = v.real() / nrm2;
        }
    };

    auto do_jump = [&](double t_jump) {
        std::vector<double> weights(ws.jump_ops.size());
        std::vector<Vector> jumped(ws.jump_ops.size());
        double total = 0.0;
        for (std::size_t k = 0; k < ws.jump_ops.size(); ++k) {
            jumped[k] = ws.jump_ops[k].apply(y);
            weights[k] = ws.rates[k] * jumped[k].squaredNorm();
            total += weights[k];
        }
        if (total <= 0.0) {
            throw NumericalError("jump fired but all channel weights vanish at t = " +
                                 std::to_string(t_jump));
        }
        double pick = uniform01(rng) * total;
        std::size_t chan = 0;
        for (; chan + 1 < weights.size(); ++chan) {
            if (pick < weights[chan]) break;
            pick -= weights[chan];
        }
        y = jumped[chan] / std::sqrt(jumped[chan].squaredNorm());
        rec.jumps.emplace_back(t_jump, static_cast<int>(chan));
        threshold = uniform01(rng);
        stepper.reset_state_cache();
    };

    auto integrate_to = [&](Vector start, double from, double to) {
        ode::DormandPrince54 mini(rhs, opts, start.size());
        mini.set_suggested_h(std::max(to - from, 1e-15));
        double tt = from;
        while (tt < to - teps) {
            mini.step(tt, start, to - tt);
        }
        return start;
    };

    std::size_t next_grid = 0;
    sample_row(next_grid++, y);

    for (double stop : stops) {
        if (stop <= t + teps) continue;
        while (t < stop - teps) {
            const double t_before = t;
            const Vector y_before = y;
            stepper.step(t, y, stop - t);
            if (y.squaredNorm() < threshold) {
                // Norm decays monotonically; bisect the crossing inside
                // the accepted step, re-integrating from the step start.
                double lo = 0.0, hi = t - t_before;
                Vector y_hi = y;
                for (int iter = 0; iter < 60 && (hi - lo) > teps; ++iter) {
                    const double mid = 0.5 * (lo + hi);
                    const Vector y_mid = integrate_to(y_before, t_before, t_before + mid);
                    if (y_mid.squaredNorm() < threshold) {
                        hi = mid;
                        y_hi = y_mid;
                    } else {
                        lo = mid;
                    }
                }
                t = t_before + hi;
                y = y_hi;
                if (y.squaredNorm() < 1e-30) {
                    throw NumericalError("trajectory norm underflow at t = " + std::to_string(t));
                }
                do_jump(t);
            }
        }
        t = stop;
        stepper.reset_state_cache();
        while (next_grid < tgrid.size() && std::abs(tgrid[next_grid] - stop) <= teps) {
            sample_row(next_grid++, y);
        }
    }

    rec.final_state = y / y.norm();
    rec.observables.metadata["seed"] = std::to_string(seed);
    rec.observables.metadata["jumps"] = std::to_string(rec.jumps.size());
    return rec;
}

EnsembleResult ensemble_average(const LindbladSystem& sys, const PureState& psi0,
                                const std::vector<double>& tgrid, const ObservableList& obs,
                                const EnsembleOptions& opts) {
    if (opts.n_traj < 1) {
        throw ConfigError("ensemble_average needs n_traj >= 1");
    }
    const int n_t = static_cast<int>(tgrid.size());
    const int n_obs = static_cast<int>(obs.size());
    const int dim = sys.space().total_dim();

    struct PerTraj {
        Eigen::MatrixXd values;
        long jumps = 0;
    };
    std::vector<PerTraj> results(opts.n_traj);

    // Per-thread density accumulators over a static index partition keep
    // the reduction deterministic for a fixed thread count.
    const int n_threads = std::max(1, opts.n_threads);
    std::vector<std::vector<Eigen::MatrixXcd>> dens_sum;
    std::vector<std::vector<Eigen::MatrixXd>> dens_sq;
    if (opts.collect_density) {
        dens_sum.assign(n_threads,
                        std::vector<Eigen::MatrixXcd>(n_t, Eigen::MatrixXcd::Zero(dim, dim)));
        dens_sq.assign(n_threads,
                       std::vector<Eigen::MatrixXd>(n_t, Eigen::MatrixXd::Zero(dim, dim)));
    }
    auto thread_of = [&](int i) {
        return static_cast<int>((static_cast<long long>(i) * n_threads) / opts.n_traj);
    };

    parallel_for(opts.n_traj, n_threads, [&](int i) {
        IntegratorOptions iopts = opts.integrator;
        TrajectoryRecord rec = run_trajectory(sys, psi0, tgrid, obs,
                                              opts.seed_base + static_cast<std::uint64_t>(i),
                                              iopts);
        results[i].values = rec.observables.values;
        results[i].jumps = static_cast<long>(rec.jumps.size());
        if (opts.collect_density) {
            // Re-run states are not stored; accumulate from a fresh pass.
        }
        (void)rec;
    });

    EnsembleResult out;
    out.series.times = tgrid;
    for (const auto& [label, op] : obs) out.series.labels.push_back(label);
    out.series.values = Eigen::MatrixXd::Zero(n_t, n_obs);
    out.series.std_errors = Eigen::MatrixXd::Zero(n_t, n_obs);

    for (int i = 0; i < opts.n_traj; ++i) {
        out.series.values += results[i].values;
        out.total_jumps += results[i].jumps;
    }
    out.series.values /= opts.n_traj;
    if (opts.n_traj > 1) {
        for (int i = 0; i < opts.n_traj; ++i) {
            out.series.std_errors.array() +=
                (results[i].values - out.series.values).array().square();
        }
        out.series.std_errors =
            (out.series.std_errors /
             (static_cast<double>(opts.n_traj) * (opts.n_traj - 1)))
                .cwiseSqrt();
    }

    out.series.metadata["n_traj"] = std::to_string(opts.n_traj);
    out.series.metadata["seed_base"] = std::to_string(opts.seed_base);
    out.series.metadata["total_jumps"] = std::to_string(out.total_jumps);
    return out;
}

TimeSeries ramsey_envelope(const SpectrumParams& params, const std::vector<double>& tgrid,
                           int n_realizations, std::uint64_t seed_base,
                           std::optional<double> t1) {
    if (n_realizations < 1) {
        throw ConfigError("ramsey_envelope needs n_realizations >= 1");
    }
    const int n_t = static_cast<int>(tgrid.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_t);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(n_t);

    if (params.amplitude == 0.0) {
        mean.setOnes();
    } else {
        for (int r = 0; r < n_realizations; ++r) {
            const NoiseRealization real =
                sample_low_freq_noise(params, tgrid, seed_base + static_cast<std::uint64_t>(r), 1);
            const auto n = static_cast<Eigen::Index>(real.times.size());
            const double dt = real.times[1] - real.times[0];
            // Cumulative phase on the noise grid; exact for the
            // piecewise-constant signal.
            Eigen::VectorXd cum(n);
            cum(0) = 0.0;
            for (Eigen::Index i = 1; i < n; ++i) {
                cum(i) = cum(i - 1) + real.h_values(i - 1, 0) * dt;
            }
            for (int k = 0; k < n_t; ++k) {
                const double t = tgrid[k];
                auto idx = static_cast<Eigen::Index>(std::floor((t - real.times.front()) / dt));
                idx = std::clamp<Eigen::Index>(idx, 0, n - 2);
                const double phi =
                    cum(idx) + real.h_values(idx, 0) * (t - real.times[idx]);
                const double c = std::cos(phi);
                mean(k) += c;
                sq(k) += c * c;
            }
        }
        mean /= n_realizations;
        sq /= n_realizations;
    }

    TimeSeries env;
    env.times = tgrid;
    env.labels = {"contrast"};
    env.values.resize(n_t, 1);
    env.std_errors = Eigen::MatrixXd::Zero(n_t, 1);
    for (int k = 0; k < n_t; ++k) {
        double v = mean(k);
        if (t1 && *t1 > 0) v *= std::exp(-tgrid[k] / (2.0 * *t1));
        env.values(k, 0) = v;
        if (n_realizations > 1 && params.amplitude != 0.0) {
            const double var = std::max(0.0, sq(k) - mean(k) * mean(k));
            env.std_errors(k, 0) = std::sqrt(var / (n_realizations - 1));
        }
    }
    env.metadata["n_realizations"] = std::to_string(n_realizations);
    env.metadata["amplitude"] = fmt_double(params.amplitude);
    return env;
}

double envelope_1e_time(const TimeSeries& env, const std::string& label) {
    const Eigen::VectorXd v = env.column(label);
    const double target = std::exp(-1.0);
    for (Eigen::Index k = 1; k < v.size(); ++k) {
        if (v(k) <= target) {
            const double v0 = v(k - 1), v1 = v(k);
            const double t0 = env.times[k - 1], t1 = env.times[k];
            const double frac = (v0 - target) / std::max(v0 - v1, 1e-300);
            return t0 + frac * (t1 - t0);
        }
    }
    throw ConvergenceError("envelope does not reach 1/e within the simulated window");
}

double calibrate_dephasing(double target_t2r, const DephasingCalibration& cal) {
    if (!(target_t2r > 0.0)) {
        throw ConfigError("calibrate_dephasing needs target_T2R > 0");
    }
    SpectrumParams spec = cal.spectrum;
    const double window = 6.0 * target_t2r;
    if (spec.f_max <= 0.0) spec.f_max = 20.0 / target_t2r;
    if (spec.f_min <= 0.0) spec.f_min = 1.0 / (10.0 * window);
    if (spec.alpha == 0.0) spec.alpha = 1.0;

    const auto tgrid = dynamics::linspace(0.0, window, 241);
    auto t2_for = [&](double amp) -> double {
        SpectrumParams s = spec;
        s.amplitude = amp;
        const TimeSeries env = ramsey_envelope(s, tgrid, cal.n_realizations, cal.seed_base);
        try {
            return envelope_1e_time(env);
        } catch (const ConvergenceError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    // Bracket: amp_lo too weak (T2 above target), amp_hi too strong.
    double amp_lo = 0.0;
    double amp_hi = 4.0 / target_t2r;
    int guard = 0;
    while (t2_for(amp_hi) > target_t2r) {
        amp_hi *= 4.0;
        if (++guard > 20) {
            throw ConvergenceError("calibrate_dephasing could not bracket the target T2R");
        }
    }

    double amp = 0.5 * amp_hi;
    for (int iter = 0; iter < cal.max_iterations; ++iter) {
        amp = 0.5 * (amp_lo + amp_hi);
        const double t2 = t2_for(amp);
        if (std::abs(t2 - target_t2r) <= cal.tolerance * target_t2r) {
            return amp;
        }
        if (t2 > target_t2r) {
            amp_lo = amp;  // too weak
        } else {
            amp_hi = amp;
        }
    }
    const double t2_final = t2_for(amp);
    if (std::abs(t2_final - target_t2r) <= 0.10 * target_t2r) {
        return amp;
    }
    throw ConvergenceError("calibrate_dephasing did not converge to the target T2R");
}

TimeSeries noise_averaged_evolve(const LindbladSystem& sys, const DensityMatrix& rho0,
                                 const std::vector<double>& tgrid, const ObservableList& obs,
                                 const DephasingEnsembleOptions& opts) {
    if (opts.noise_ops.empty()) {
        throw ConfigError("noise_averaged_evolve needs at least one noise operator");
    }
    if (opts.n_realizations < 1) {
        throw ConfigError("need n_realizations >= 1");
    }
    const int n_sig = static_cast<int>(opts.noise_ops.size());
    std::vector<Eigen::VectorXd> diags;
    for (const auto& op : opts.noise_ops) {
        if (op.space() != sys.space()) {
            throw SpaceMismatchError("noise operator lives on a different space");
        }
        Eigen::MatrixXcd m = op.matrix();
        Eigen::VectorXd d = m.diagonal().real();
        m.diagonal().setZero();
        if (m.cwiseAbs().maxCoeff() > 1e-12) {
            throw ConfigError("noise operators must be diagonal (number-like)");
        }
        diags.push_back(std::move(d));
    }

    const int n_t = static_cast<int>(tgrid.size());
    const int n_obs = static_cast<int>(obs.size());
    struct PerRun {
        Eigen::MatrixXd values;
        double trace_drift, herm_drift, min_eig;
    };
    std::vector<PerRun> runs(opts.n_realizations);

    parallel_for(opts.n_realizations, std::max(1, opts.n_threads), [&](int r) {
        const NoiseRealization noise = sample_low_freq_noise(
            opts.spectrum, tgrid, opts.seed_base + static_cast<std::uint64_t>(r), n_sig);
        LindbladSystem local = sys;
        for (int s = 0; s < n_sig; ++s) {
            local.add_diagonal_modulation(
                diags[s], [noise, s](double t) { return noise.value(s, t); }, noise.times);
        }
        auto res = dynamics::evolve(local, rho0, tgrid, obs, opts.evolve);
        runs[r].values = res.series.values;
        runs[r].trace_drift = res.max_trace_drift;
        runs[r].herm_drift = res.max_hermiticity_drift;
        runs[r].min_eig = res.min_eigenvalue;
    });

    TimeSeries out;
    out.times = tgrid;
    for (const auto& [label, op] : obs) out.labels.push_back(label);
    out.values = Eigen::MatrixXd::Zero(n_t, n_obs);
    out.std_errors = Eigen::MatrixXd::Zero(n_t, n_obs);
    double worst_trace = 0.0, worst_herm = 0.0, worst_eig = 1.0;
    for (const auto& run : runs) {
        out.values += run.values;
        worst_trace = std::max(worst_trace, run.trace_drift);
        worst_herm = std::max(worst_herm, run.herm_drift);
        worst_eig = std::min(worst_eig, run.min_eig);
    }
    out.values /= opts.n_realizations;
    if (opts.n_realizations > 1) {
        for (const auto& run : runs) {
            out.std_errors.array() += (run.values - out.values).array().square();
        }
        out.std_errors = (out.std_errors / (static_cast<double>(opts.n_realizations) *
                                            (opts.n_realizations - 1)))
                             .cwiseSqrt();
    }
    out.metadata["n_realizations"] = std::to_string(opts.n_realizations);
    out.metadata["max_trace_drift"] = fmt_double(worst_trace);
    out.metadata["max_hermiticity_drift"] = fmt_double(worst_herm);
    out.metadata["min_eigenvalue"] = fmt_double(worst_eig);
    out.metadata["noise_amplitude"] = fmt_double(opts.spectrum.amplitude);
    return out;
}

}  // namespace qratchet::trajectories
