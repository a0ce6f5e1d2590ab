#ifndef QRATCHET_TRAJECTORIES_HPP
#define QRATCHET_TRAJECTORIES_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "qratchet/dynamics.hpp"

namespace qratchet::trajectories {

using dynamics::DensityMatrix;
using dynamics::EvolveOptions;
using dynamics::LindbladSystem;
using dynamics::ObservableList;
using dynamics::TimeSeries;
using hilbert::Operator;
using hilbert::PureState;
using hilbert::Vector;
using ode::IntegratorOptions;

// 1/f^alpha dephasing synthesized as a sum of random telegraph processes
// with switching rates log-spaced across [f_min, f_max] and per-octave
// weights chosen so the ensemble spectrum follows the target exponent.
struct SpectrumParams {
    double alpha = 1.0;        // spectral exponent, S(f) ~ 1/f^alpha
    double f_min = 0.0;
    double f_max = 0.0;
    double amplitude = 0.0;    // rms of h(t)
    int per_decade = 3;        // telegraph processes per frequency decade
};

// One sampled dephasing signal set: h(t) per qubit, piecewise constant on
// `times`. Bit-for-bit reproducible from (seed, params, grid).
struct NoiseRealization {
    std::vector<double> times;
    Eigen::MatrixXd h_values;  // rows: times, cols: signals
    std::uint64_t seed = 0;
    SpectrumParams params;

    int n_signals() const { return static_cast<int>(h_values.cols()); }
    double value(int signal, double t) const;
};

// Piecewise-constant grid covering [t0, t1] at resolution <= 1/(20 f_max).
std::vector<double> noise_grid(const SpectrumParams& params, double t0, double t1);

NoiseRealization sample_low_freq_noise(const SpectrumParams& params,
                                       const std::vector<double>& tgrid, std::uint64_t seed,
                                       int n_signals = 1);

// Ensemble-averaged periodogram log-log slope over the interior of the
// configured band. For a healthy generator this sits near -alpha.
double noise_spectral_slope(const SpectrumParams& params, double duration, int n_realizations,
                            std::uint64_t seed_base);

struct TrajectoryRecord {
    std::vector<std::pair<double, int>> jumps;  // (time, channel index)
    TimeSeries observables;
    Vector final_state;  // normalized
    std::uint64_t seed = 0;
};

// Quantum-jump unraveling: deterministic non-Hermitian drift
// H_eff = H - (i/2) sum_k gamma_k L_k^dag L_k, with a jump fired when the
// squared norm crosses a pre-drawn uniform threshold. Fully deterministic
// given the seed.
TrajectoryRecord run_trajectory(const LindbladSystem& sys, const PureState& psi0,
                                const std::vector<double>& tgrid, const ObservableList& obs,
                                std::uint64_t seed, const IntegratorOptions& opts = {});

struct EnsembleOptions {
    int n_traj = 1;
    std::uint64_t seed_base = 0;
    int n_threads = 1;
    bool collect_density = false;  // accumulate outer products per grid point
    IntegratorOptions integrator;
};

struct EnsembleResult {
    TimeSeries series;  // means, with std_errors filled
    std::vector<Eigen::MatrixXcd> mean_density;        // when collect_density
    std::vector<Eigen::MatrixXd> density_std_error;    // element-wise, |.|
    long total_jumps = 0;
};

// Seeds are seed_base + trajectory index; the reduction is performed in
// index order so results do not depend on the thread schedule.
EnsembleResult ensemble_average(const LindbladSystem& sys, const PureState& psi0,
                                const std::vector<double>& tgrid, const ObservableList& obs,
                                const EnsembleOptions& opts);

// Free-induction-decay contrast <cos phi(t)> under the sampled dephasing,
// averaged over n_realizations; the classical-phase shortcut for a single
// qubit with H = h(t) sigma_z / 2.
TimeSeries ramsey_envelope(const SpectrumParams& params, const std::vector<double>& tgrid,
                           int n_realizations, std::uint64_t seed_base,
                           std::optional<double> t1 = std::nullopt);

struct DephasingCalibration {
    SpectrumParams spectrum;     // amplitude field ignored
    int n_realizations = 400;
    std::uint64_t seed_base = 977;
    int max_iterations = 60;
    double tolerance = 0.05;     // relative, on the achieved T2R
};

// Noise amplitude whose simulated Ramsey envelope reaches 1/e contrast at
// target_t2r, found by bisection. The spectrum band defaults to
// [1/(10 window), 20/target] when unset.
double calibrate_dephasing(double target_t2r, const DephasingCalibration& cal);

// 1/e crossing time of an envelope column, linearly interpolated.
// Throws ConvergenceError when the envelope never reaches 1/e.
double envelope_1e_time(const TimeSeries& env, const std::string& label = "contrast");

struct DephasingEnsembleOptions {
    SpectrumParams spectrum;
    std::vector<Operator> noise_ops;  // diagonal number-like operators, one signal each
    int n_realizations = 400;
    std::uint64_t seed_base = 0;
    int n_threads = 1;
    EvolveOptions evolve;
};

// Lindblad evolution averaged over independent dephasing realizations:
// each run adds h_k(t) * noise_ops[k] to the Hamiltonian. Means and
// standard errors per observable; worst-case state-hygiene metrics from
// the per-realization runs land in the metadata.
TimeSeries noise_averaged_evolve(const LindbladSystem& sys, const DensityMatrix& rho0,
                                 const std::vector<double>& tgrid, const ObservableList& obs,
                                 const DephasingEnsembleOptions& opts);

}  // namespace qratchet::trajectories

#endif
