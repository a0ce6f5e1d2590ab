#include "qratchet/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace qratchet::ode {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// 4th-order embedded weights.
constexpr double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695, e4 = 393.0 / 640,
                 e5 = -92097.0 / 339200, e6 = 187.0 / 2100, e7 = 1.0 / 40;

}  // namespace

DormandPrince54::DormandPrince54(Rhs rhs, IntegratorOptions opts, Eigen::Index n)
    : rhs_(std::move(rhs)), opts_(opts) {
    for (auto& k : k_) k.resize(n);
    y_tmp_.resize(n);
    y_new_.resize(n);
    y_err_.resize(n);
}

double DormandPrince54::error_norm(const Eigen::VectorXcd& y, const Eigen::VectorXcd& y_new,
                                   const Eigen::VectorXcd& err) const {
    const Eigen::Index n = y.size();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double scale =
            opts_.abs_tol + opts_.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        const double e = std::abs(err[i]) / scale;
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

double DormandPrince54::initial_step(double t0, const Eigen::VectorXcd& y0, double span) {
    rhs_(t0, y0, k_[0]);
    have_k1_ = true;
    const double d0 = y0.norm();
    const double d1 = k_[0].norm();
    double h = (d1 > 1e-12 * std::max(d0, 1e-12)) ? 0.01 * std::max(d0, opts_.abs_tol) / d1
                                                  : span * 1e-4;
    h = std::min(h, span);
    return std::max(h, span * 1e-12);
}

double DormandPrince54::step(double& t, Eigen::VectorXcd& y, double h_cap) {
    double h = h_next_ > 0 ? h_next_ : h_cap;
    const bool capped = h > h_cap;
    h = std::min(h, h_cap);
    const double h_floor = opts_.h_min > 0 ? opts_.h_min : 1e-14 * std::max(std::abs(t), 1.0);

    if (opts_.fixed_step) {
        if (opts_.fixed_dt <= 0) {
            throw ConfigError("fixed-step integration requires fixed_dt > 0");
        }
        h = std::min(opts_.fixed_dt, h_cap);
    }

    if (!have_k1_) {
        rhs_(t, y, k_[0]);
        have_k1_ = true;
    }

    for (;;) {
        if (++n_steps_ > opts_.max_steps) {
            throw ConvergenceError("integrator exceeded the step budget");
        }
        y_tmp_ = y + h * (a21 * k_[0]);
        rhs_(t + c2 * h, y_tmp_, k_[1]);
        y_tmp_ = y + h * (a31 * k_[0] + a32 * k_[1]);
        rhs_(t + c3 * h, y_tmp_, k_[2]);
        y_tmp_ = y + h * (a41 * k_[0] + a42 * k_[1] + a43 * k_[2]);
        rhs_(t + c4 * h, y_tmp_, k_[3]);
        y_tmp_ = y + h * (a51 * k_[0] + a52 * k_[1] + a53 * k_[2] + a54 * k_[3]);
        rhs_(t + c5 * h, y_tmp_, k_[4]);
        y_tmp_ = y + h * (a61 * k_[0] + a62 * k_[1] + a63 * k_[2] + a64 * k_[3] + a65 * k_[4]);
        rhs_(t + h, y_tmp_, k_[5]);
        y_new_ = y + h * (b1 * k_[0] + b3 * k_[2] + b4 * k_[3] + b5 * k_[4] + b6 * k_[5]);
        rhs_(t + h, y_new_, k_[6]);
        y_err_ = y + h * (e1 * k_[0] + e3 * k_[2] + e4 * k_[3] + e5 * k_[4] + e6 * k_[5] +
                          e7 * k_[6]) -
                 y_new_;

        if (opts_.fixed_step) {
            t += h;
            y.swap(y_new_);
            k_[0].swap(k_[6]);  // FSAL
            return h;
        }

        const double err = error_norm(y, y_new_, y_err_);
        if (err <= 1.0) {
            err_accum_ += y_err_.norm();
            t += h;
            y.swap(y_new_);
            k_[0].swap(k_[6]);  // FSAL
            double factor = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
            factor = std::clamp(factor, 0.2, 5.0);
            // A cap-limited step must not shrink the running suggestion.
            h_next_ = capped ? std::max(h_next_, h * factor) : h * factor;
            if (opts_.h_max > 0) h_next_ = std::min(h_next_, opts_.h_max);
            return h;
        }
        ++n_rejected_;
        double factor = 0.9 * std::pow(err, -0.2);
        h *= std::clamp(factor, 0.1, 0.9);
        if (h < h_floor) {
            throw ConvergenceError("integrator step underflow at t = " + std::to_string(t));
        }
    }
}

void integrate_adaptive(const Rhs& rhs, const Eigen::VectorXcd& y0,
                        const std::vector<double>& tgrid,
                        const std::vector<double>& breakpoints,
                        const IntegratorOptions& opts,
                        const std::function<void(double, const Eigen::VectorXcd&)>& on_sample,
                        double* error_estimate) {
    if (tgrid.size() < 1) {
        throw ConfigError("time grid must contain at least one point");
    }
    for (std::size_t i = 1; i < tgrid.size(); ++i) {
        if (!(tgrid[i] > tgrid[i - 1])) {
            throw ConfigError("time grid must be strictly increasing");
        }
    }

    // Merge grid points and rhs discontinuities into one must-hit list.
    std::vector<double> stops(tgrid.begin(), tgrid.end());
    for (double b : breakpoints) {
        if (b > tgrid.front() && b < tgrid.back()) stops.push_back(b);
    }
    std::sort(stops.begin(), stops.end());
    stops.erase(std::unique(stops.begin(), stops.end(),
                            [&](double a, double b) {
                                return std::abs(a - b) <=
                                       1e-12 * std::max(1.0, std::abs(tgrid.back()));
                            }),
                stops.end());

    Eigen::VectorXcd y = y0;
    double t = tgrid.front();
    on_sample(t, y);
    if (tgrid.size() == 1) return;

    DormandPrince54 stepper(rhs, opts, y0.size());
    const double span = tgrid.back() - tgrid.front();
    stepper.set_suggested_h(opts.h_init > 0 ? opts.h_init : stepper.initial_step(t, y, span));

    std::size_t next_grid = 1;
    for (double stop : stops) {
        if (stop <= t) continue;
        while (t < stop - 1e-12 * std::max(1.0, std::abs(stop))) {
            stepper.step(t, y, stop - t);
        }
        t = stop;
        // Discontinuities invalidate the cached derivative.
        stepper.reset_state_cache();
        while (next_grid < tgrid.size() &&
               std::abs(tgrid[next_grid] - stop) <= 1e-12 * std::max(1.0, std::abs(stop))) {
            on_sample(tgrid[next_grid], y);
            ++next_grid;
        }
    }
    if (error_estimate) *error_estimate = stepper.accumulated_error();
}

}  // namespace qratchet::ode
