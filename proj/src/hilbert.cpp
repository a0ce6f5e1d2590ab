#include "qratchet/hilbert.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace qratchet::hilbert {

namespace {

constexpr Complex kI{0.0, 1.0};

void require_same_space(const HilbertSpace& a, const HilbertSpace& b, const char* what) {
    if (a != b) {
        throw SpaceMismatchError(std::string(what) + ": spaces differ (" + a.describe() +
                                 " vs " + b.describe() + ")");
    }
}

}  // namespace

HilbertSpace::HilbertSpace(std::vector<int> subsystem_dims) : dims_(std::move(subsystem_dims)) {
    if (dims_.empty()) {
        throw DimensionError("HilbertSpace needs at least one subsystem");
    }
    long long total = 1;
    for (int d : dims_) {
        if (d < 2) {
            throw DimensionError("subsystem dimension must be >= 2, got " + std::to_string(d));
        }
        total *= d;
        if (total > (1 << 20)) {
            throw DimensionError("total dimension too large for dense simulation");
        }
    }
    total_dim_ = static_cast<int>(total);
}

int HilbertSpace::dim(int site) const {
    if (site < 0 || site >= num_subsystems()) {
        throw DimensionError("subsystem index " + std::to_string(site) + " out of range");
    }
    return dims_[site];
}

int HilbertSpace::flatten(const std::vector<int>& levels) const {
    if (static_cast<int>(levels.size()) != num_subsystems()) {
        throw DimensionError("level list length does not match subsystem count");
    }
    int idx = 0;
    for (int k = 0; k < num_subsystems(); ++k) {
        if (levels[k] < 0 || levels[k] >= dims_[k]) {
            throw DimensionError("level out of range for subsystem " + std::to_string(k));
        }
        idx = idx * dims_[k] + levels[k];
    }
    return idx;
}

std::vector<int> HilbertSpace::unflatten(int index) const {
    if (index < 0 || index >= total_dim_) {
        throw DimensionError("basis index out of range");
    }
    std::vector<int> levels(dims_.size());
    for (int k = num_subsystems() - 1; k >= 0; --k) {
        levels[k] = index % dims_[k];
        index /= dims_[k];
    }
    return levels;
}

std::string HilbertSpace::describe() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        os << dims_[k] << (k + 1 < dims_.size() ? "," : "");
    }
    os << "]";
    return os.str();
}

Operator::Operator(HilbertSpace space, Matrix matrix, std::string label)
    : space_(std::move(space)), m_(std::move(matrix)), label_(std::move(label)) {
    if (m_.rows() != m_.cols() || m_.rows() != space_.total_dim()) {
        throw DimensionError("operator matrix is " + std::to_string(m_.rows()) + "x" +
                             std::to_string(m_.cols()) + " but the space has dimension " +
                             std::to_string(space_.total_dim()));
    }
    if (m_.rows() >= 8 && fill_ratio() < kSparseFillThreshold) {
        auto sp = std::make_shared<SparseMatrix>(m_.sparseView(1.0, 1e-300));
        sp->makeCompressed();
        sparse_ = std::move(sp);
    }
}

bool Operator::is_hermitian(double tol) const {
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

double Operator::fill_ratio() const {
    const auto n = m_.size();
    if (n == 0) return 0.0;
    Eigen::Index nnz = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (m_.data()[i] != Complex(0.0, 0.0)) ++nnz;
    }
    return static_cast<double>(nnz) / static_cast<double>(n);
}

Operator Operator::adjoint() const {
    return Operator(space_, m_.adjoint(), label_.empty() ? "" : label_ + "^dag");
}

Vector Operator::apply(const Vector& v) const {
    if (v.size() != m_.rows()) {
        throw DimensionError("vector length does not match operator dimension");
    }
    if (sparse_) return (*sparse_) * v;
    return m_ * v;
}

Operator Operator::operator+(const Operator& rhs) const {
    require_same_space(space_, rhs.space_, "operator sum");
    return Operator(space_, m_ + rhs.m_);
}

Operator Operator::operator-(const Operator& rhs) const {
    require_same_space(space_, rhs.space_, "operator difference");
    return Operator(space_, m_ - rhs.m_);
}

Operator Operator::operator*(const Operator& rhs) const {
    require_same_space(space_, rhs.space_, "operator product");
    return Operator(space_, m_ * rhs.m_);
}

Operator Operator::operator*(Complex scale) const {
    return Operator(space_, m_ * scale, label_);
}

Operator Operator::identity(const HilbertSpace& space, std::string label) {
    return Operator(space, Matrix::Identity(space.total_dim(), space.total_dim()),
                    std::move(label));
}

Operator commutator(const Operator& a, const Operator& b) {
    require_same_space(a.space(), b.space(), "commutator");
    return Operator(a.space(), a.matrix() * b.matrix() - b.matrix() * a.matrix());
}

Operator anticommutator(const Operator& a, const Operator& b) {
    require_same_space(a.space(), b.space(), "anticommutator");
    return Operator(a.space(), a.matrix() * b.matrix() + b.matrix() * a.matrix());
}

PureState::PureState(HilbertSpace space, Vector amplitudes)
    : space_(std::move(space)), amp_(std::move(amplitudes)) {
    if (amp_.size() != space_.total_dim()) {
        throw DimensionError("state vector length does not match space dimension");
    }
    const double norm = amp_.norm();
    if (norm < 1e-14) {
        throw NumericalError("cannot normalize a zero state vector");
    }
    if (std::abs(norm - 1.0) > 1e-12) {
        amp_ /= norm;
    }
}

DensityMatrix::DensityMatrix(HilbertSpace space, Matrix matrix)
    : space_(std::move(space)), m_(std::move(matrix)) {
    if (m_.rows() != m_.cols() || m_.rows() != space_.total_dim()) {
        throw DimensionError("density matrix dimensions do not match the space");
    }
    const double tr_err = std::abs(m_.trace() - Complex(1.0, 0.0));
    if (tr_err > kTraceTol) {
        throw NumericalError("density matrix trace deviates from 1 by " + std::to_string(tr_err));
    }
    const double herm_err = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
    if (herm_err > kHermTol) {
        throw NumericalError("density matrix is not Hermitian (max deviation " +
                             std::to_string(herm_err) + ")");
    }
    const double min_eig = min_eigenvalue();
    if (min_eig < kPositivityFloor) {
        throw NumericalError("density matrix has negative eigenvalue " + std::to_string(min_eig));
    }
}

DensityMatrix DensityMatrix::from_pure(const PureState& psi) {
    return DensityMatrix(psi.space(), psi.amplitudes() * psi.amplitudes().adjoint());
}

DensityMatrix DensityMatrix::maximally_mixed(const HilbertSpace& space) {
    const int n = space.total_dim();
    return DensityMatrix(space, Matrix::Identity(n, n) / static_cast<double>(n));
}

double DensityMatrix::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m_ + m_.adjoint()),
                                             Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double DensityMatrix::purity() const { return (m_ * m_).trace().real(); }

Operator ladder(int dim) {
    if (dim < 2) {
        throw DimensionError("ladder operator needs dim >= 2, got " + std::to_string(dim));
    }
    Matrix a = Matrix::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) {
        a(n - 1, n) = std::sqrt(static_cast<double>(n));
    }
    return Operator(HilbertSpace({dim}), std::move(a), "a");
}

Operator number_op(int dim) {
    if (dim < 2) {
        throw DimensionError("number operator needs dim >= 2");
    }
    Matrix n = Matrix::Zero(dim, dim);
    for (int k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
    return Operator(HilbertSpace({dim}), std::move(n), "n");
}

Operator transition(int dim, int to, int from) {
    if (dim < 2 || to < 0 || from < 0 || to >= dim || from >= dim) {
        throw DimensionError("transition levels out of range");
    }
    Matrix m = Matrix::Zero(dim, dim);
    m(to, from) = 1.0;
    return Operator(HilbertSpace({dim}), std::move(m));
}

Operator projector(int dim, int level) {
    if (dim < 2 || level < 0 || level >= dim) {
        throw DimensionError("projector level out of range");
    }
    Matrix m = Matrix::Zero(dim, dim);
    m(level, level) = 1.0;
    return Operator(HilbertSpace({dim}), std::move(m), "P" + std::to_string(level));
}

Operator pauli_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return Operator(HilbertSpace({2}), std::move(m), "sx");
}

Operator pauli_y() {
    Matrix m(2, 2);
    m << 0, -kI, kI, 0;
    return Operator(HilbertSpace({2}), std::move(m), "sy");
}

Operator pauli_z() {
    Matrix m(2, 2);
    m << 1, 0, 0, -1;
    return Operator(HilbertSpace({2}), std::move(m), "sz");
}

Operator sigma_minus() {
    Matrix m(2, 2);
    m << 0, 1, 0, 0;
    return Operator(HilbertSpace({2}), std::move(m), "s-");
}

Operator sigma_plus() {
    Matrix m(2, 2);
    m << 0, 0, 1, 0;
    return Operator(HilbertSpace({2}), std::move(m), "s+");
}

Operator parity_op(int dim) {
    if (dim < 2) {
        throw DimensionError("parity operator needs dim >= 2");
    }
    Matrix m = Matrix::Zero(dim, dim);
    for (int n = 0; n < dim; ++n) m(n, n) = (n % 2 == 0) ? 1.0 : -1.0;
    return Operator(HilbertSpace({dim}), std::move(m), "parity");
}

Operator embed(const Operator& op, int site, const HilbertSpace& space) {
    if (site < 0 || site >= space.num_subsystems()) {
        throw DimensionError("embed: site " + std::to_string(site) + " out of range for " +
                             space.describe());
    }
    const int d = space.dim(site);
    if (op.dim() != d) {
        throw DimensionError("embed: operator dimension " + std::to_string(op.dim()) +
                             " does not match subsystem dimension " + std::to_string(d));
    }
    int left = 1, right = 1;
    for (int k = 0; k < site; ++k) left *= space.dim(k);
    for (int k = site + 1; k < space.num_subsystems(); ++k) right *= space.dim(k);

    const int n = space.total_dim();
    Matrix out = Matrix::Zero(n, n);
    const Matrix& local = op.matrix();
    for (int l = 0; l < left; ++l) {
        for (int a = 0; a < d; ++a) {
            for (int b = 0; b < d; ++b) {
                const Complex v = local(a, b);
                if (v == Complex(0.0, 0.0)) continue;
                const int row0 = (l * d + a) * right;
                const int col0 = (l * d + b) * right;
                for (int r = 0; r < right; ++r) {
                    out(row0 + r, col0 + r) = v;
                }
            }
        }
    }
    std::string label = op.label();
    if (!label.empty()) label += "@" + std::to_string(site);
    return Operator(space, std::move(out), std::move(label));
}

int coherent_truncation(double abs_alpha) {
    return static_cast<int>(std::ceil(abs_alpha * abs_alpha + 5.0 * abs_alpha + 10.0));
}

PureState coherent_state(Complex alpha, int dim) {
    if (dim < 2) {
        throw DimensionError("coherent state needs dim >= 2");
    }
    // c_n = e^{-|a|^2/2} a^n / sqrt(n!), built recursively.
    Vector amp(dim);
    Complex c = std::exp(-0.5 * std::norm(alpha));
    amp(0) = c;
    for (int n = 1; n < dim; ++n) {
        c *= alpha / std::sqrt(static_cast<double>(n));
        amp(n) = c;
    }
    const double kept = amp.squaredNorm();
    const double tail = std::max(0.0, 1.0 - kept);
    if (tail > 1e-10) {
        throw TruncationError("coherent state truncated too hard: tail weight " +
                              std::to_string(tail) + " at dim " + std::to_string(dim),
                              tail);
    }
    return PureState(HilbertSpace({dim}), std::move(amp));
}

PureState basis_state(const HilbertSpace& space, const std::vector<int>& levels) {
    Vector amp = Vector::Zero(space.total_dim());
    amp(space.flatten(levels)) = 1.0;
    return PureState(space, std::move(amp));
}

PureState product_state(const HilbertSpace& space, const std::vector<Vector>& factors) {
    if (static_cast<int>(factors.size()) != space.num_subsystems()) {
        throw DimensionError("product_state: factor count does not match subsystem count");
    }
    Vector amp = Vector::Ones(1);
    for (int k = 0; k < space.num_subsystems(); ++k) {
        if (factors[k].size() != space.dim(k)) {
            throw DimensionError("product_state: factor " + std::to_string(k) +
                                 " has wrong dimension");
        }
        Vector next(amp.size() * factors[k].size());
        for (Eigen::Index i = 0; i < amp.size(); ++i) {
            next.segment(i * factors[k].size(), factors[k].size()) = amp(i) * factors[k];
        }
        amp = std::move(next);
    }
    return PureState(space, std::move(amp));
}

Complex expectation(const Operator& op, const PureState& psi) {
    require_same_space(op.space(), psi.space(), "expectation");
    return psi.amplitudes().dot(op.apply(psi.amplitudes()));
}

Complex expectation(const Operator& op, const DensityMatrix& rho) {
    require_same_space(op.space(), rho.space(), "expectation");
    return (op.matrix() * rho.matrix()).trace();
}

Complex inner(const PureState& a, const PureState& b) {
    require_same_space(a.space(), b.space(), "inner product");
    return a.amplitudes().dot(b.amplitudes());
}

}  // namespace qratchet::hilbert
