#ifndef QRATCHET_INTEGRATOR_HPP
#define QRATCHET_INTEGRATOR_HPP

#include <cstddef>
#include <functional>

#include <Eigen/Dense>

#include "qratchet/errors.hpp"

namespace qratchet::ode {

struct IntegratorOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double h_init = 0.0;    // 0 = choose automatically
    double h_min = 0.0;     // 0 = derived from the span
    double h_max = 0.0;     // 0 = span
    std::size_t max_steps = 200'000'000;
    bool fixed_step = false;
    double fixed_dt = 0.0;  // required when fixed_step
};

using Rhs = std::function<void(double, const Eigen::VectorXcd&, Eigen::VectorXcd&)>;

// Dormand-Prince 5(4) stepper with PI-free standard step control. The
// caller owns the time loop so that trajectory unravelings can watch the
// norm between steps; evolve() drives it through integrate_adaptive().
class DormandPrince54 {
public:
    DormandPrince54(Rhs rhs, IntegratorOptions opts, Eigen::Index n);

    // Advances (t, y) by one accepted step of size at most h_cap.
    // Returns the step size actually taken; updates the suggestion for
    // the next step internally.
    double step(double& t, Eigen::VectorXcd& y, double h_cap);

    double suggested_h() const { return h_next_; }
    void set_suggested_h(double h) { h_next_ = h; }
    // Invalidate the FSAL cache after the caller edits y (e.g. a jump).
    void reset_state_cache() { have_k1_ = false; }

    std::size_t steps_taken() const { return n_steps_; }
    std::size_t steps_rejected() const { return n_rejected_; }
    // Crude global error bound: sum of accepted local error norms.
    double accumulated_error() const { return err_accum_; }

    double initial_step(double t0, const Eigen::VectorXcd& y0, double span);

private:
    double error_norm(const Eigen::VectorXcd& y, const Eigen::VectorXcd& y_new,
                      const Eigen::VectorXcd& err) const;

    Rhs rhs_;
    IntegratorOptions opts_;
    double h_next_ = 0.0;
    bool have_k1_ = false;
    std::size_t n_steps_ = 0;
    std::size_t n_rejected_ = 0;
    double err_accum_ = 0.0;
    Eigen::VectorXcd k_[7];
    Eigen::VectorXcd y_tmp_, y_new_, y_err_;
};

// Integrates from tgrid.front() to tgrid.back(), invoking on_sample(t, y)
// exactly at every grid point (including the first). `breakpoints` are
// additional times the integrator must not step across (discontinuous
// right-hand sides, e.g. piecewise-constant noise).
void integrate_adaptive(const Rhs& rhs, const Eigen::VectorXcd& y0,
                        const std::vector<double>& tgrid,
                        const std::vector<double>& breakpoints,
                        const IntegratorOptions& opts,
                        const std::function<void(double, const Eigen::VectorXcd&)>& on_sample,
                        double* error_estimate = nullptr);

}  // namespace qratchet::ode

#endif
