#ifndef QRATCHET_DYNAMICS_HPP
#define QRATCHET_DYNAMICS_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qratchet/hilbert.hpp"
#include "qratchet/integrator.hpp"

namespace qratchet::dynamics {

using hilbert::Complex;
using hilbert::DensityMatrix;
using hilbert::HilbertSpace;
using hilbert::Matrix;
using hilbert::Operator;
using hilbert::PureState;
using hilbert::SparseMatrix;
using hilbert::Vector;
using ode::IntegratorOptions;

struct CollapseChannel {
    Operator op;
    double rate;
};

// Sampled observables on a time grid plus run metadata. Values are the
// real parts of the expectations; observables are expected Hermitian.
struct TimeSeries {
    std::vector<double> times;
    std::vector<std::string> labels;
    Eigen::MatrixXd values;       // rows: times, cols: labels
    Eigen::MatrixXd std_errors;   // same shape; empty for deterministic runs
    std::map<std::string, std::string> metadata;

    int column_index(const std::string& label) const;
    Eigen::VectorXd column(const std::string& label) const;
    bool has_std_errors() const { return std_errors.size() > 0; }
};

// Hamiltonian plus weighted collapse operators; the complete dynamical
// specification. Immutable once configured: configure on one thread,
// then share freely.
class LindbladSystem {
public:
    LindbladSystem(Operator hamiltonian, std::vector<CollapseChannel> channels);

    // Adds h(t) * diag to the Hamiltonian, where h is piecewise-smooth
    // between the listed breakpoints (used for classical dephasing noise).
    void add_diagonal_modulation(Eigen::VectorXd diag, std::function<double(double)> coeff,
                                 std::vector<double> breakpoints = {});

    // Full replacement H(t); the static Hamiltonian is then ignored.
    void set_hamiltonian_function(std::function<Matrix(double)> h_of_t);

    const HilbertSpace& space() const { return space_; }
    const Operator& hamiltonian() const { return h_; }
    const std::vector<CollapseChannel>& channels() const { return channels_; }
    bool time_dependent() const { return !modulations_.empty() || h_fn_ != nullptr; }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    Matrix hamiltonian_at(double t) const;

    // d(vec rho)/dt, the hot path used by the integrator.
    void apply_generator(double t, const Vector& vec_rho, Vector& out) const;
    // Adds -i * sum_k c_k(t) diag_k to a state derivative (pure-state
    // unravelings share the modulation machinery).
    void apply_state_modulations(double t, const Vector& psi, Vector& dpsi) const;
    bool has_hamiltonian_function() const { return h_fn_ != nullptr; }
    // Dense static generator (time-independent systems only).
    Matrix dense_generator() const;
    bool generator_is_sparse() const { return static_sparse_ != nullptr; }

private:
    struct Modulation {
        Eigen::VectorXd diag;
        std::function<double(double)> coeff;
        // Precomputed d_i - d_j over vec indices (column-major).
        Eigen::VectorXcd level_gaps;
    };

    void build_static_generator();

    HilbertSpace space_;
    Operator h_;
    std::vector<CollapseChannel> channels_;
    std::vector<Modulation> modulations_;
    std::function<Matrix(double)> h_fn_;
    std::vector<double> breakpoints_;
    bool h_in_static_ = true;

    std::shared_ptr<const SparseMatrix> static_sparse_;
    std::shared_ptr<const Matrix> static_dense_;
};

// -i[H, rho] + sum_k gamma_k (L rho L^dag - 1/2 {L^dag L, rho}), computed
// directly in matrix form; reference implementation for the flattened
// generator used by evolve().
Matrix lindblad_rhs(const LindbladSystem& sys, const Matrix& rho, double t = 0.0);
Matrix lindblad_rhs(const LindbladSystem& sys, const DensityMatrix& rho, double t = 0.0);

using ObservableList = std::vector<std::pair<std::string, Operator>>;

struct EvolveOptions {
    IntegratorOptions integrator;
    bool validate_states = true;
    double positivity_floor = -1e-6;  // abort threshold
    bool keep_states = false;
};

struct EvolveResult {
    TimeSeries series;
    std::vector<DensityMatrix> states;  // filled when keep_states
    double max_trace_drift = 0.0;
    double max_hermiticity_drift = 0.0;
    double min_eigenvalue = 0.0;
    double error_estimate = 0.0;
    std::size_t steps = 0;
};

EvolveResult evolve(const LindbladSystem& sys, const DensityMatrix& rho0,
                    const std::vector<double>& tgrid, const ObservableList& observables,
                    const EvolveOptions& opts = {});

std::vector<double> linspace(double t0, double t1, int n);

enum class SteadyStateMethod { Auto, NullSpace, LongTime };

struct SteadyStateResult {
    DensityMatrix rho;
    bool degenerate = false;
    int null_dimension = 1;
    double residual_norm = 0.0;
    std::string method;
};

// Stationary state of a time-independent system. Degenerate manifolds
// (singular values below 1e-10 of the largest) return the projection of
// rho0 when given, and throw MultiplicityError otherwise.
SteadyStateResult steady_state(const LindbladSystem& sys,
                               SteadyStateMethod method = SteadyStateMethod::Auto,
                               const DensityMatrix* rho0 = nullptr, double tol = 1e-9);

// tr(A B) in O(n^2).
Complex trace_product(const Matrix& a, const Matrix& b);

}  // namespace qratchet::dynamics

#endif
