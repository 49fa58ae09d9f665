#pragma once

// Small dense numeric kernels shared by the plant, controller and analysis
// code: fixed-step RK4, little matrices, Lyapunov solves, polynomial roots.
// Every function here is pure and thread-safe.

#include <complex>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace mgsim::numerics {

using Complex = std::complex<double>;
using Vector = std::vector<double>;

/// Dense row-major matrix. Sized for the 2x2..9x9 problems in this library.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> entries);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool is_square() const noexcept { return rows_ == cols_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    [[nodiscard]] Matrix transpose() const;
    [[nodiscard]] double frobenius_norm() const;
    [[nodiscard]] double max_abs() const;
    /// Largest |w_ij - w_ji|; 0 for exactly symmetric input.
    [[nodiscard]] double asymmetry() const;
    [[nodiscard]] bool all_finite() const;

    Matrix& operator+=(const Matrix& rhs);
    Matrix& operator-=(const Matrix& rhs);
    Matrix& operator*=(double s);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix lhs, const Matrix& rhs);
Matrix operator-(Matrix lhs, const Matrix& rhs);
Matrix operator*(Matrix lhs, double s);
Matrix operator*(double s, Matrix rhs);
Matrix operator*(const Matrix& lhs, const Matrix& rhs);
Vector operator*(const Matrix& lhs, std::span<const double> v);

/// Solves A x = b by Gaussian elimination with partial pivoting.
/// Throws NoSolution when A is numerically singular.
Vector solve_linear(Matrix a, Vector b);

/// Real polynomial, coefficients in ascending degree. Trailing zero
/// coefficients are trimmed so the leading coefficient is nonzero.
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(std::vector<double> ascending);
    Polynomial(std::initializer_list<double> ascending);

    /// Builds prod (s - r_i) from real roots.
    static Polynomial from_roots(std::span<const double> roots);

    [[nodiscard]] const std::vector<double>& coefficients() const noexcept { return c_; }
    [[nodiscard]] bool is_zero() const noexcept { return c_.empty(); }
    /// Degree; -1 for the zero polynomial.
    [[nodiscard]] int degree() const noexcept { return static_cast<int>(c_.size()) - 1; }
    [[nodiscard]] double coefficient(std::size_t k) const noexcept { return k < c_.size() ? c_[k] : 0.0; }
    [[nodiscard]] double leading() const noexcept { return c_.empty() ? 0.0 : c_.back(); }

    [[nodiscard]] double operator()(double s) const;
    [[nodiscard]] Complex operator()(Complex s) const;
    [[nodiscard]] Polynomial derivative() const;

    friend Polynomial operator+(const Polynomial& a, const Polynomial& b);
    friend Polynomial operator-(const Polynomial& a, const Polynomial& b);
    friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
    friend Polynomial operator*(double k, const Polynomial& p);
    friend bool operator==(const Polynomial&, const Polynomial&) = default;

private:
    void trim();
    std::vector<double> c_;
};

/// dx/dt = f(t, x). The derivative writes into dx, which has `dimension` entries.
struct OdeSystem {
    std::size_t dimension = 0;
    std::function<void(double t, std::span<const double> x, std::span<double> dx)> derivative;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
};

/// Scratch buffers for rk4_step so the inner loop never allocates.
class Rk4Workspace {
public:
    explicit Rk4Workspace(std::size_t dimension = 0) { resize(dimension); }
    void resize(std::size_t dimension);

private:
    friend void rk4_step(const OdeSystem&, double, std::span<double>, double, Rk4Workspace&);
    Vector k1_, k2_, k3_, k4_, tmp_;
};

/// One classical RK4 step in place. Throws IntegrationDiverged when any stage
/// derivative is non-finite.
void rk4_step(const OdeSystem& sys, double t, std::span<double> x, double dt, Rk4Workspace& ws);

/// Fixed-step RK4 from t0 to t1 sampled every dt; the final step is shortened
/// to land on t1.
Trajectory rk4_integrate(const OdeSystem& sys, Vector x0, double t0, double t1, double dt);

/// Eigenvalues of a general real square matrix (unordered).
std::vector<Complex> eigenvalues(const Matrix& a);

/// True iff every eigenvalue has a strictly negative real part.
bool is_hurwitz(const Matrix& a);

/// Solves A^T W + W A = -Q for symmetric Q. A must be Hurwitz.
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

/// Solves A^T W + W A = -I.
Matrix solve_lyapunov(const Matrix& a);

/// Ascending eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
Vector sym_eigs(const Matrix& w);

/// Routh-Hurwitz test for the monic cubic s^3 + a2 s^2 + a1 s + a0.
bool routh_hurwitz_cubic(double a2, double a1, double a0) noexcept;

/// All complex roots of p, sorted by (real, imag). Degree must be >= 1.
std::vector<Complex> poly_roots(const Polynomial& p);

}  // namespace mgsim::numerics
