#ifndef QRATCHET_HILBERT_HPP
#define QRATCHET_HILBERT_HPP

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "qratchet/errors.hpp"

namespace qratchet::hilbert {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<Complex>;

// Composite tensor-product space of truncated modes. Ordering convention:
// the leftmost subsystem is the slowest-varying index of the flattened
// basis, i.e. flat = ((l_0 * d_1 + l_1) * d_2 + l_2) ...
class HilbertSpace {
public:
    explicit HilbertSpace(std::vector<int> subsystem_dims);

    int total_dim() const { return total_dim_; }
    const std::vector<int>& subsystem_dims() const { return dims_; }
    int num_subsystems() const { return static_cast<int>(dims_.size()); }
    int dim(int site) const;

    int flatten(const std::vector<int>& levels) const;
    std::vector<int> unflatten(int index) const;

    bool operator==(const HilbertSpace& other) const { return dims_ == other.dims_; }
    bool operator!=(const HilbertSpace& other) const { return !(*this == other); }

    std::string describe() const;

private:
    std::vector<int> dims_;
    int total_dim_;
};

// Complex matrix tagged with its space. Dense storage is the ground truth;
// a CSC copy is kept for apply() when the fill ratio is below the
// threshold, which is the only place the storage choice matters.
class Operator {
public:
    static constexpr double kSparseFillThreshold = 0.25;

    Operator(HilbertSpace space, Matrix matrix, std::string label = "");

    const HilbertSpace& space() const { return space_; }
    const Matrix& matrix() const { return m_; }
    const std::string& label() const { return label_; }

    int dim() const { return static_cast<int>(m_.rows()); }
    bool is_hermitian(double tol = 1e-10) const;
    double fill_ratio() const;
    bool uses_sparse() const { return sparse_ != nullptr; }
    const SparseMatrix* sparse() const { return sparse_.get(); }

    Operator adjoint() const;
    Vector apply(const Vector& v) const;

    Operator operator+(const Operator& rhs) const;
    Operator operator-(const Operator& rhs) const;
    Operator operator*(const Operator& rhs) const;
    Operator operator*(Complex scale) const;
    friend Operator operator*(Complex scale, const Operator& op) { return op * scale; }

    static Operator identity(const HilbertSpace& space, std::string label = "I");

private:
    HilbertSpace space_;
    Matrix m_;
    std::string label_;
    std::shared_ptr<const SparseMatrix> sparse_;
};

Operator commutator(const Operator& a, const Operator& b);
Operator anticommutator(const Operator& a, const Operator& b);

class PureState {
public:
    PureState(HilbertSpace space, Vector amplitudes);

    const HilbertSpace& space() const { return space_; }
    const Vector& amplitudes() const { return amp_; }
    int dim() const { return static_cast<int>(amp_.size()); }

private:
    HilbertSpace space_;
    Vector amp_;
};

class DensityMatrix {
public:
    // Validates trace (1e-9), Hermiticity (1e-10) and positivity (-1e-7).
    DensityMatrix(HilbertSpace space, Matrix matrix);

    static DensityMatrix from_pure(const PureState& psi);
    static DensityMatrix maximally_mixed(const HilbertSpace& space);

    const HilbertSpace& space() const { return space_; }
    const Matrix& matrix() const { return m_; }
    int dim() const { return static_cast<int>(m_.rows()); }

    double min_eigenvalue() const;
    double purity() const;

    static constexpr double kTraceTol = 1e-9;
    static constexpr double kHermTol = 1e-10;
    static constexpr double kPositivityFloor = -1e-7;

private:
    HilbertSpace space_;
    Matrix m_;
};

// Truncated annihilation operator: <n-1|a|n> = sqrt(n).
Operator ladder(int dim);
Operator number_op(int dim);
// |b><a| on a dim-level mode.
Operator transition(int dim, int to, int from);
Operator projector(int dim, int level);
Operator pauli_x();
Operator pauli_y();
Operator pauli_z();
Operator sigma_minus();
Operator sigma_plus();

// Diagonal (-1)^n photon-number parity.
Operator parity_op(int dim);

// op acting on factor `site`, identity elsewhere.
Operator embed(const Operator& op, int site, const HilbertSpace& space);

// Default boson truncation for coherent-state work.
int coherent_truncation(double abs_alpha);

// Truncated coherent state, renormalized; fails if the truncated tail
// weight exceeds 1e-10.
PureState coherent_state(Complex alpha, int dim);

PureState basis_state(const HilbertSpace& space, const std::vector<int>& levels);
// Product of per-subsystem amplitude vectors, kron'd in subsystem order.
PureState product_state(const HilbertSpace& space, const std::vector<Vector>& factors);

Complex expectation(const Operator& op, const PureState& psi);
Complex expectation(const Operator& op, const DensityMatrix& rho);
Complex inner(const PureState& a, const PureState& b);

}  // namespace qratchet::hilbert

#endif
