#include "qratchet/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace qratchet::dynamics {

namespace {

constexpr Complex kI{0.0, 1.0};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

using Triplets = std::vector<Eigen::Triplet<Complex>>;

// vec(A rho B) = (B^T kron A) vec(rho), column-major vec.
void add_kron(Triplets& out, const Matrix& bt, const Matrix& a, Complex weight) {
    const int n = static_cast<int>(a.rows());
    for (int jb = 0; jb < n; ++jb) {
        for (int ib = 0; ib < n; ++ib) {
            const Complex vb = bt(ib, jb);
            if (vb == Complex(0.0, 0.0)) continue;
            for (int ja = 0; ja < n; ++ja) {
                for (int ia = 0; ia < n; ++ia) {
                    const Complex va = a(ia, ja);
                    if (va == Complex(0.0, 0.0)) continue;
                    out.emplace_back(ib * n + ia, jb * n + ja, weight * vb * va);
                }
            }
        }
    }
}

void add_left_mult(Triplets& out, const Matrix& a, Complex weight) {
    // vec(A rho): block-diagonal copies of A.
    const int n = static_cast<int>(a.rows());
    for (int ja = 0; ja < n; ++ja) {
        for (int ia = 0; ia < n; ++ia) {
            const Complex v = a(ia, ja);
            if (v == Complex(0.0, 0.0)) continue;
            for (int b = 0; b < n; ++b) {
                out.emplace_back(b * n + ia, b * n + ja, weight * v);
            }
        }
    }
}

void add_right_mult(Triplets& out, const Matrix& b, Complex weight) {
    // vec(rho B): B^T kron I.
    const int n = static_cast<int>(b.rows());
    for (int jb = 0; jb < n; ++jb) {
        for (int ib = 0; ib < n; ++ib) {
            const Complex v = b(jb, ib);  // transpose
            if (v == Complex(0.0, 0.0)) continue;
            for (int a = 0; a < n; ++a) {
                out.emplace_back(ib * n + a, jb * n + a, weight * v);
            }
        }
    }
}

}  // namespace

int TimeSeries::column_index(const std::string& label) const {
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] == label) return static_cast<int>(k);
    }
    throw ConfigError("time series has no observable named '" + label + "'");
}

Eigen::VectorXd TimeSeries::column(const std::string& label) const {
    return values.col(column_index(label));
}

LindbladSystem::LindbladSystem(Operator hamiltonian, std::vector<CollapseChannel> channels)
    : space_(hamiltonian.space()), h_(std::move(hamiltonian)), channels_(std::move(channels)) {
    if (!h_.is_hermitian(1e-10)) {
        throw NumericalError("Hamiltonian is not Hermitian within 1e-10");
    }
    for (const auto& ch : channels_) {
        if (ch.op.space() != space_) {
            throw SpaceMismatchError("collapse operator lives on a different space");
        }
        if (!(ch.rate >= 0.0)) {
            throw ConfigError("collapse rates must be >= 0");
        }
    }
    build_static_generator();
}

void LindbladSystem::build_static_generator() {
    const int n = space_.total_dim();
    const long long n2 = static_cast<long long>(n) * n;
    Triplets trip;

    if (h_in_static_) {
        // -i (H rho - rho H)
        add_left_mult(trip, h_.matrix(), -kI);
        add_right_mult(trip, h_.matrix(), kI);
    }
    for (const auto& ch : channels_) {
        if (ch.rate == 0.0) continue;
        const Matrix& l = ch.op.matrix();
        const Matrix ldl = (l.adjoint() * l).eval();
        add_kron(trip, l.conjugate(), l, Complex(ch.rate, 0.0));  // (L^dag)^T kron L
        add_left_mult(trip, ldl, Complex(-0.5 * ch.rate, 0.0));
        add_right_mult(trip, ldl, Complex(-0.5 * ch.rate, 0.0));
    }

    SparseMatrix s(n2, n2);
    s.setFromTriplets(trip.begin(), trip.end());
    s.makeCompressed();
    const double fill =
        static_cast<double>(s.nonZeros()) / (static_cast<double>(n2) * static_cast<double>(n2));
    if (fill >= Operator::kSparseFillThreshold && n2 <= 4096) {
        static_dense_ = std::make_shared<Matrix>(Matrix(s));
        static_sparse_.reset();
    } else {
        static_sparse_ = std::make_shared<SparseMatrix>(std::move(s));
        static_dense_.reset();
    }
}

void LindbladSystem::add_diagonal_modulation(Eigen::VectorXd diag,
                                             std::function<double(double)> coeff,
                                             std::vector<double> breakpoints) {
    const int n = space_.total_dim();
    if (diag.size() != n) {
        throw DimensionError("modulation diagonal length does not match space dimension");
    }
    Modulation mod;
    mod.diag = std::move(diag);
    mod.coeff = std::move(coeff);
    mod.level_gaps.resize(static_cast<Eigen::Index>(n) * n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            mod.level_gaps[static_cast<Eigen::Index>(j) * n + i] = mod.diag[i] - mod.diag[j];
        }
    }
    modulations_.push_back(std::move(mod));
    breakpoints_.insert(breakpoints_.end(), breakpoints.begin(), breakpoints.end());
    std::sort(breakpoints_.begin(), breakpoints_.end());
    breakpoints_.erase(std::unique(breakpoints_.begin(), breakpoints_.end()),
                       breakpoints_.end());
}

void LindbladSystem::set_hamiltonian_function(std::function<Matrix(double)> h_of_t) {
    h_fn_ = std::move(h_of_t);
    h_in_static_ = false;
    build_static_generator();
}

Matrix LindbladSystem::hamiltonian_at(double t) const {
    Matrix h = h_fn_ ? h_fn_(t) : h_.matrix();
    for (const auto& mod : modulations_) {
        h += mod.coeff(t) * mod.diag.asDiagonal().toDenseMatrix().cast<Complex>();
    }
    return h;
}

void LindbladSystem::apply_generator(double t, const Vector& vec_rho, Vector& out) const {
    if (static_sparse_) {
        out.noalias() = (*static_sparse_) * vec_rho;
    } else {
        out.noalias() = (*static_dense_) * vec_rho;
    }
    for (const auto& mod : modulations_) {
        const double c = mod.coeff(t);
        if (c == 0.0) continue;
        out.array() += (-kI * c) * mod.level_gaps.array() * vec_rho.array();
    }
    if (h_fn_) {
        const int n = space_.total_dim();
        const Matrix h = h_fn_(t);
        Eigen::Map<const Matrix> rho(vec_rho.data(), n, n);
        Eigen::Map<Matrix> d(out.data(), n, n);
        d.noalias() += -kI * (h * rho);
        d.noalias() += kI * (rho * h);
    }
}

void LindbladSystem::apply_state_modulations(double t, const Vector& psi, Vector& dpsi) const {
    for (const auto& mod : modulations_) {
        const double c = mod.coeff(t);
        if (c == 0.0) continue;
        dpsi.array() += (-kI * c) * mod.diag.cast<Complex>().array() * psi.array();
    }
}

Matrix LindbladSystem::dense_generator() const {
    if (time_dependent()) {
        throw ConfigError("dense generator is only defined for time-independent systems");
    }
    if (static_dense_) return *static_dense_;
    return Matrix(*static_sparse_);
}

Matrix lindblad_rhs(const LindbladSystem& sys, const Matrix& rho, double t) {
    const int n = sys.space().total_dim();
    if (rho.rows() != n || rho.cols() != n) {
        throw DimensionError("density matrix dimension does not match the system space");
    }
    const Matrix h = sys.hamiltonian_at(t);
    Matrix out = -kI * (h * rho - rho * h);
    for (const auto& ch : sys.channels()) {
        if (ch.rate == 0.0) continue;
        const Matrix& l = ch.op.matrix();
        const Matrix lr = l * rho;
        const Matrix ldl = l.adjoint() * l;
        out += ch.rate * (lr * l.adjoint() - 0.5 * (ldl * rho + rho * ldl));
    }
    return out;
}

Matrix lindblad_rhs(const LindbladSystem& sys, const DensityMatrix& rho, double t) {
    if (rho.space() != sys.space()) {
        throw SpaceMismatchError("lindblad_rhs: state and system spaces differ");
    }
    return lindblad_rhs(sys, rho.matrix(), t);
}

std::vector<double> linspace(double t0, double t1, int n) {
    if (n < 2 || !(t1 > t0)) {
        throw ConfigError("linspace needs n >= 2 and t1 > t0");
    }
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        out[i] = t0 + (t1 - t0) * static_cast<double>(i) / (n - 1);
    }
    out.back() = t1;
    return out;
}

Complex trace_product(const Matrix& a, const Matrix& b) {
    return (a.transpose().cwiseProduct(b)).sum();
}

EvolveResult evolve(const LindbladSystem& sys, const DensityMatrix& rho0,
                    const std::vector<double>& tgrid, const ObservableList& observables,
                    const EvolveOptions& opts) {
    if (rho0.space() != sys.space()) {
        throw SpaceMismatchError("evolve: initial state lives on a different space");
    }
    for (const auto& [label, op] : observables) {
        if (op.space() != sys.space()) {
            throw SpaceMismatchError("evolve: observable '" + label +
                                     "' lives on a different space");
        }
    }
    const int n = sys.space().total_dim();

    EvolveResult res;
    res.series.times = tgrid;
    res.series.labels.reserve(observables.size());
    for (const auto& [label, op] : observables) res.series.labels.push_back(label);
    res.series.values.resize(tgrid.size(), observables.size());
    res.min_eigenvalue = 1.0;

    Vector y0(Eigen::Map<const Vector>(rho0.matrix().data(), static_cast<Eigen::Index>(n) * n));

    std::size_t row = 0;
    auto on_sample = [&](double t, const Vector& y) {
        Eigen::Map<const Matrix> rho(y.data(), n, n);
        for (std::size_t k = 0; k < observables.size(); ++k) {
            res.series.values(row, k) = trace_product(observables[k].second.matrix(), rho).real();
        }
        if (opts.validate_states || opts.keep_states) {
            const double tr_drift = std::abs(rho.trace() - Complex(1.0, 0.0));
            const Matrix sym = 0.5 * (Matrix(rho) + Matrix(rho.adjoint()));
            const double herm_drift = (Matrix(rho) - Matrix(rho.adjoint())).cwiseAbs().maxCoeff();
            Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
            const double min_eig = es.eigenvalues().minCoeff();
            res.max_trace_drift = std::max(res.max_trace_drift, tr_drift);
            res.max_hermiticity_drift = std::max(res.max_hermiticity_drift, herm_drift);
            res.min_eigenvalue = std::min(res.min_eigenvalue, min_eig);
            if (min_eig < opts.positivity_floor) {
                throw NumericalError("evolve: positivity violated at t = " + std::to_string(t) +
                                     " (min eigenvalue " + std::to_string(min_eig) +
                                     "); tighten tolerances");
            }
            if (tr_drift > 1e-6) {
                throw NumericalError("evolve: trace drifted by " + std::to_string(tr_drift) +
                                     " at t = " + std::to_string(t));
            }
            if (opts.keep_states) {
                Matrix cleaned = sym / sym.trace().real();
                res.states.emplace_back(sys.space(), std::move(cleaned));
            }
        }
        ++row;
    };

    ode::Rhs rhs = [&sys](double t, const Vector& y, Vector& dy) {
        sys.apply_generator(t, y, dy);
    };

    std::vector<double> breaks = sys.breakpoints();
    ode::integrate_adaptive(rhs, y0, tgrid, breaks, opts.integrator, on_sample,
                            &res.error_estimate);

    res.series.metadata["rel_tol"] = fmt_double(opts.integrator.rel_tol);
    res.series.metadata["abs_tol"] = fmt_double(opts.integrator.abs_tol);
    res.series.metadata["max_trace_drift"] = fmt_double(res.max_trace_drift);
    res.series.metadata["max_hermiticity_drift"] = fmt_double(res.max_hermiticity_drift);
    res.series.metadata["min_eigenvalue"] = fmt_double(res.min_eigenvalue);
    res.series.metadata["error_estimate"] = fmt_double(res.error_estimate);
    return res;
}

namespace {

// Hermitize, clip the tiniest negative weight, renormalize.
DensityMatrix canonical_density(const HilbertSpace& space, Matrix m) {
    m = 0.5 * (m + m.adjoint()).eval();
    const double tr = m.trace().real();
    if (std::abs(tr) < 1e-12) {
        throw NumericalError("steady-state candidate has vanishing trace");
    }
    m /= tr;
    return DensityMatrix(space, std::move(m));
}

SteadyStateResult steady_null_space(const LindbladSystem& sys, const DensityMatrix* rho0,
                                    double tol) {
    const int n = sys.space().total_dim();
    const Eigen::Index n2 = static_cast<Eigen::Index>(n) * n;
    const Matrix g = sys.dense_generator();

    Eigen::BDCSVD<Matrix> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    int null_dim = 0;
    for (Eigen::Index i = sv.size() - 1; i >= 0; --i) {
        if (sv(i) <= 1e-10 * smax) ++null_dim;
        else break;
    }
    if (null_dim == 0) null_dim = 1;  // generator always annihilates something

    SteadyStateResult out{DensityMatrix::maximally_mixed(sys.space()), false, null_dim, 0.0,
                          "null_space"};

    if (null_dim == 1) {
        Vector v = svd.matrixV().col(n2 - 1);
        Eigen::Map<const Matrix> rho(v.data(), n, n);
        out.rho = canonical_density(sys.space(), rho);
    } else {
        out.degenerate = true;
        if (!rho0) {
            throw MultiplicityError("steady-state manifold is " + std::to_string(null_dim) +
                                        "-dimensional; supply an initial condition to project",
                                    null_dim);
        }
        // Asymptotic projector: rho_ss = sum_ij R_j (M^-1)_ji <U_i, rho0>
        // with R right null vectors, U left null vectors, M_ij = <U_i, R_j>.
        Matrix r(n2, null_dim), u(n2, null_dim);
        for (int k = 0; k < null_dim; ++k) {
            r.col(k) = svd.matrixV().col(n2 - 1 - k);
            u.col(k) = svd.matrixU().col(n2 - 1 - k);
        }
        const Matrix m = u.adjoint() * r;
        Vector rho0_vec(
            Eigen::Map<const Vector>(rho0->matrix().data(), static_cast<Eigen::Index>(n) * n));
        const Vector overlaps = u.adjoint() * rho0_vec;
        const Vector coeffs = m.fullPivLu().solve(overlaps);
        Vector v = r * coeffs;
        Eigen::Map<const Matrix> rho(v.data(), n, n);
        out.rho = canonical_density(sys.space(), rho);
    }
    out.residual_norm = lindblad_rhs(sys, out.rho).norm();
    if (out.residual_norm > std::max(tol, 1e-9) * 100) {
        throw ConvergenceError("null-space steady state residual " +
                               std::to_string(out.residual_norm) + " too large");
    }
    return out;
}

SteadyStateResult steady_long_time(const LindbladSystem& sys, const DensityMatrix* rho0,
                                   double tol) {
    DensityMatrix rho = rho0 ? *rho0 : DensityMatrix::maximally_mixed(sys.space());

    // Pick the window from the fastest rate in the system.
    double gmax = 0.0;
    for (const auto& ch : sys.channels()) {
        if (ch.rate > 0) {
            gmax = std::max(gmax, ch.rate * ch.op.matrix().squaredNorm());
        }
    }
    if (gmax <= 0) {
        throw ConvergenceError("long-time steady state needs at least one dissipative channel");
    }
    double window = 1.0 / gmax;

    EvolveOptions eopts;
    eopts.keep_states = true;
    eopts.integrator.rel_tol = 1e-9;
    eopts.integrator.abs_tol = 1e-12;

    double t = 0.0;
    double residual = lindblad_rhs(sys, rho).norm();
    for (int iter = 0; iter < 64 && residual > tol; ++iter) {
        auto res = evolve(sys, rho, {t, t + window}, {}, eopts);
        rho = res.states.back();
        t += window;
        window *= 2.0;
        residual = lindblad_rhs(sys, rho).norm();
        if (window > 1e14) break;
    }
    if (residual > tol) {
        throw ConvergenceError("long-time steady state did not converge (residual " +
                               std::to_string(residual) + "); the manifold may be degenerate");
    }
    return {rho, false, 1, residual, "long_time"};
}

}  // namespace

SteadyStateResult steady_state(const LindbladSystem& sys, SteadyStateMethod method,
                               const DensityMatrix* rho0, double tol) {
    if (sys.time_dependent()) {
        throw ConfigError("steady_state requires a time-independent system");
    }
    if (method == SteadyStateMethod::Auto) {
        method = sys.space().total_dim() <= 24 ? SteadyStateMethod::NullSpace
                                               : SteadyStateMethod::LongTime;
    }
    if (method == SteadyStateMethod::NullSpace) {
        return steady_null_space(sys, rho0, tol);
    }
    return steady_long_time(sys, rho0, tol);
}

}  // namespace qratchet::dynamics
