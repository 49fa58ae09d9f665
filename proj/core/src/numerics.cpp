#include "mgsim/numerics.hpp"

#include "mgsim/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace mgsim::numerics {

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    if (data_.size() != rows_ * cols_) {
        throw ContractViolation("Matrix: entry count does not match rows*cols");
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
        if (row.size() != cols_) {
            throw ContractViolation("Matrix: ragged initializer");
        }
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> entries) {
    Matrix m(entries.size(), entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) m(i, i) = entries[i];
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

double Matrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Matrix::asymmetry() const {
    if (!is_square()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = r + 1; c < cols_; ++c)
            m = std::max(m, std::abs((*this)(r, c) - (*this)(c, r)));
    return m;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& rhs) {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw ContractViolation("Matrix +: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& rhs) {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw ContractViolation("Matrix -: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
Matrix operator*(Matrix lhs, double s) { return lhs *= s; }
Matrix operator*(double s, Matrix rhs) { return rhs *= s; }

Matrix operator*(const Matrix& lhs, const Matrix& rhs) {
    if (lhs.cols() != rhs.rows()) throw ContractViolation("Matrix *: shape mismatch");
    Matrix out(lhs.rows(), rhs.cols());
    for (std::size_t i = 0; i < lhs.rows(); ++i)
        for (std::size_t k = 0; k < lhs.cols(); ++k) {
            const double a = lhs(i, k);
            for (std::size_t j = 0; j < rhs.cols(); ++j) out(i, j) += a * rhs(k, j);
        }
    return out;
}

Vector operator*(const Matrix& lhs, std::span<const double> v) {
    if (lhs.cols() != v.size()) throw ContractViolation("Matrix*vector: shape mismatch");
    Vector out(lhs.rows(), 0.0);
    for (std::size_t i = 0; i < lhs.rows(); ++i)
        for (std::size_t j = 0; j < lhs.cols(); ++j) out[i] += lhs(i, j) * v[j];
    return out;
}

Vector solve_linear(Matrix a, Vector b) {
    const std::size_t n = a.rows();
    if (!a.is_square() || b.size() != n) throw ContractViolation("solve_linear: shape mismatch");
    const double scale = std::max(a.max_abs(), std::numeric_limits<double>::min());
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (std::abs(a(pivot, col)) <= 1e-14 * scale) throw NoSolution("solve_linear: singular matrix");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(pivot, c));
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    Vector x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a(i, c) * x[c];
        x[i] = s / a(i, i);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Polynomial
// ---------------------------------------------------------------------------

Polynomial::Polynomial(std::vector<double> ascending) : c_(std::move(ascending)) { trim(); }
Polynomial::Polynomial(std::initializer_list<double> ascending) : c_(ascending) { trim(); }

void Polynomial::trim() {
    while (!c_.empty() && c_.back() == 0.0) c_.pop_back();
}

Polynomial Polynomial::from_roots(std::span<const double> roots) {
    Polynomial p{1.0};
    for (double r : roots) p = p * Polynomial{-r, 1.0};
    return p;
}

double Polynomial::operator()(double s) const {
    double acc = 0.0;
    for (std::size_t k = c_.size(); k-- > 0;) acc = acc * s + c_[k];
    return acc;
}

Complex Polynomial::operator()(Complex s) const {
    Complex acc = 0.0;
    for (std::size_t k = c_.size(); k-- > 0;) acc = acc * s + c_[k];
    return acc;
}

Polynomial Polynomial::derivative() const {
    if (c_.size() <= 1) return Polynomial{};
    std::vector<double> d(c_.size() - 1);
    for (std::size_t k = 1; k < c_.size(); ++k) d[k - 1] = static_cast<double>(k) * c_[k];
    return Polynomial(std::move(d));
}

Polynomial operator+(const Polynomial& a, const Polynomial& b) {
    std::vector<double> c(std::max(a.c_.size(), b.c_.size()), 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = a.coefficient(k) + b.coefficient(k);
    return Polynomial(std::move(c));
}

Polynomial operator-(const Polynomial& a, const Polynomial& b) {
    std::vector<double> c(std::max(a.c_.size(), b.c_.size()), 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = a.coefficient(k) - b.coefficient(k);
    return Polynomial(std::move(c));
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.is_zero() || b.is_zero()) return Polynomial{};
    std::vector<double> c(a.c_.size() + b.c_.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.c_.size(); ++i)
        for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    return Polynomial(std::move(c));
}

Polynomial operator*(double k, const Polynomial& p) {
    std::vector<double> c = p.c_;
    for (double& v : c) v *= k;
    return Polynomial(std::move(c));
}

// ---------------------------------------------------------------------------
// RK4
// ---------------------------------------------------------------------------

void Rk4Workspace::resize(std::size_t dimension) {
    k1_.assign(dimension, 0.0);
    k2_.assign(dimension, 0.0);
    k3_.assign(dimension, 0.0);
    k4_.assign(dimension, 0.0);
    tmp_.assign(dimension, 0.0);
}

namespace {

void check_stage(std::span<const double> k, double t) {
    for (double v : k) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "integration diverged: non-finite derivative at t=" << t;
            throw IntegrationDiverged(os.str(), t);
        }
    }
}

}  // namespace

void rk4_step(const OdeSystem& sys, double t, std::span<double> x, double dt, Rk4Workspace& ws) {
    const std::size_t n = sys.dimension;
    if (x.size() != n) throw ContractViolation("rk4_step: state dimension mismatch");
    if (ws.k1_.size() != n) ws.resize(n);

    sys.derivative(t, x, ws.k1_);
    check_stage(ws.k1_, t);
    for (std::size_t i = 0; i < n; ++i) ws.tmp_[i] = x[i] + 0.5 * dt * ws.k1_[i];
    sys.derivative(t + 0.5 * dt, ws.tmp_, ws.k2_);
    check_stage(ws.k2_, t + 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) ws.tmp_[i] = x[i] + 0.5 * dt * ws.k2_[i];
    sys.derivative(t + 0.5 * dt, ws.tmp_, ws.k3_);
    check_stage(ws.k3_, t + 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) ws.tmp_[i] = x[i] + dt * ws.k3_[i];
    sys.derivative(t + dt, ws.tmp_, ws.k4_);
    check_stage(ws.k4_, t + dt);
    for (std::size_t i = 0; i < n; ++i)
        x[i] += dt / 6.0 * (ws.k1_[i] + 2.0 * ws.k2_[i] + 2.0 * ws.k3_[i] + ws.k4_[i]);
}

Trajectory rk4_integrate(const OdeSystem& sys, Vector x0, double t0, double t1, double dt) {
    if (!(dt > 0.0)) throw ContractViolation("rk4_integrate: dt must be positive");
    if (!(t1 > t0)) throw ContractViolation("rk4_integrate: t1 must exceed t0");
    if (x0.size() != sys.dimension) throw ContractViolation("rk4_integrate: x0 dimension mismatch");

    const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / dt - 1e-9));
    Trajectory out;
    out.times.reserve(steps + 1);
    out.states.reserve(steps + 1);
    out.times.push_back(t0);
    out.states.push_back(x0);

    Rk4Workspace ws(sys.dimension);
    Vector x = std::move(x0);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = t0 + static_cast<double>(k) * dt;
        const double h = (k + 1 == steps) ? t1 - t : dt;
        rk4_step(sys, t, x, h, ws);
        out.times.push_back(k + 1 == steps ? t1 : t + h);
        out.states.push_back(x);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Eigenvalues and Lyapunov
// ---------------------------------------------------------------------------

std::vector<Complex> eigenvalues(const Matrix& a) {
    if (!a.is_square()) throw ContractViolation("eigenvalues: matrix must be square");
    const auto n = static_cast<Eigen::Index>(a.rows());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c)
            m(r, c) = a(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
    if (solver.info() != Eigen::Success) throw NoSolution("eigenvalues: QR iteration failed");
    std::vector<Complex> out;
    out.reserve(a.rows());
    for (Eigen::Index i = 0; i < n; ++i) out.emplace_back(solver.eigenvalues()[i]);
    return out;
}

bool is_hurwitz(const Matrix& a) {
    const auto ev = eigenvalues(a);
    return std::all_of(ev.begin(), ev.end(), [](Complex z) { return z.real() < 0.0; });
}

namespace {

// Residual R = -Q - (A^T W + W A).
Matrix lyapunov_residual(const Matrix& a, const Matrix& w, const Matrix& q) {
    const Matrix at = a.transpose();
    Matrix r = at * w + w * a;
    r += q;
    r *= -1.0;
    return r;
}

Matrix solve_kronecker(const Matrix& a, const Matrix& rhs) {
    // Row-major vec: W(i,j) -> i*n + j. Unknown operator is W -> A^T W + W A.
    const std::size_t n = a.rows();
    Matrix k(n * n, n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t m = 0; m < n; ++m) {
                k(i * n + j, m * n + j) += a(m, i);
                k(i * n + j, i * n + m) += a(m, j);
            }
    Vector b(rhs.data().begin(), rhs.data().end());
    return Matrix(n, n, solve_linear(std::move(k), std::move(b)));
}

}  // namespace

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
    if (!a.is_square() || q.rows() != a.rows() || !q.is_square()) {
        throw ContractViolation("solve_lyapunov: A and Q must be square and the same size");
    }
    if (!a.all_finite()) throw ContractViolation("solve_lyapunov: non-finite entries in A");
    if (!is_hurwitz(a)) throw NoSolution("solve_lyapunov: A is not Hurwitz");

    Matrix neg_q = q * -1.0;
    Matrix w = solve_kronecker(a, neg_q);
    // Two rounds of iterative refinement keep the residual near round-off even
    // for the badly scaled companion matrices used by the certificate.
    for (int round = 0; round < 2; ++round) {
        const Matrix r = lyapunov_residual(a, w, q);
        w += solve_kronecker(a, r);
    }
    const Matrix wt = w.transpose();
    w += wt;
    w *= 0.5;
    return w;
}

Matrix solve_lyapunov(const Matrix& a) { return solve_lyapunov(a, Matrix::identity(a.rows())); }

Vector sym_eigs(const Matrix& w) {
    if (!w.is_square()) throw ContractViolation("sym_eigs: matrix must be square");
    const double scale = std::max(1.0, w.max_abs());
    if (w.asymmetry() > 1e-12 * scale) throw ContractViolation("sym_eigs: matrix is not symmetric");

    const std::size_t n = w.rows();
    Matrix a = w;
    const double target = 1e-12 * std::max(a.frobenius_norm(), std::numeric_limits<double>::min());
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t r = p + 1; r < n; ++r) s += 2.0 * a(p, r) * a(p, r);
        return std::sqrt(s);
    };

    for (int sweep = 0; sweep < 100 && off_norm() > target; ++sweep) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t r = p + 1; r < n; ++r) {
                const double apr = a(p, r);
                if (apr == 0.0) continue;
                const double theta = (a(r, r) - a(p, p)) / (2.0 * apr);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
                const double c = 1.0 / std::hypot(t, 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akr = a(k, r);
                    a(k, p) = c * akp - s * akr;
                    a(k, r) = s * akp + c * akr;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double ark = a(r, k);
                    a(p, k) = c * apk - s * ark;
                    a(r, k) = s * apk + c * ark;
                }
            }
        }
    }
    Vector ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

// ---------------------------------------------------------------------------
// Stability tests and polynomial roots
// ---------------------------------------------------------------------------

bool routh_hurwitz_cubic(double a2, double a1, double a0) noexcept {
    return a2 > 0.0 && a0 > 0.0 && a2 * a1 > a0;
}

namespace {

// Double-double arithmetic for the Horner evaluation inside the Aberth
// iteration. Plain double evaluation stalls near multiple roots at ~eps^(1/m).
struct DoubleDouble {
    double hi = 0.0;
    double lo = 0.0;
};

DoubleDouble two_sum(double a, double b) {
    const double s = a + b;
    const double bb = s - a;
    return {s, (a - (s - bb)) + (b - bb)};
}

DoubleDouble quick_two_sum(double a, double b) {
    const double s = a + b;
    return {s, b - (s - a)};
}

DoubleDouble add(DoubleDouble a, DoubleDouble b) {
    DoubleDouble s = two_sum(a.hi, b.hi);
    const DoubleDouble t = two_sum(a.lo, b.lo);
    s.lo += t.hi;
    s = quick_two_sum(s.hi, s.lo);
    s.lo += t.lo;
    return quick_two_sum(s.hi, s.lo);
}

DoubleDouble mul(DoubleDouble a, double b) {
    const double p = a.hi * b;
    double e = std::fma(a.hi, b, -p);
    e += a.lo * b;
    return quick_two_sum(p, e);
}

DoubleDouble negate(DoubleDouble a) { return {-a.hi, -a.lo}; }

struct DdComplex {
    DoubleDouble re;
    DoubleDouble im;
};

DdComplex mul(DdComplex a, Complex z) {
    return {add(mul(a.re, z.real()), negate(mul(a.im, z.imag()))),
            add(mul(a.re, z.imag()), mul(a.im, z.real()))};
}

DdComplex add(DdComplex a, DdComplex b) { return {add(a.re, b.re), add(a.im, b.im)}; }

Complex to_complex(DdComplex a) { return {a.re.hi + a.re.lo, a.im.hi + a.im.lo}; }

// p(z) and p'(z) for ascending coefficients c.
void horner_with_derivative(const std::vector<double>& c, Complex z, Complex& p, Complex& dp) {
    DdComplex acc{{c.back(), 0.0}, {0.0, 0.0}};
    DdComplex dacc{};
    for (std::size_t k = c.size() - 1; k-- > 0;) {
        dacc = add(mul(dacc, z), acc);
        acc = add(mul(acc, z), DdComplex{{c[k], 0.0}, {0.0, 0.0}});
    }
    p = to_complex(acc);
    dp = to_complex(dacc);
}

}  // namespace

std::vector<Complex> poly_roots(const Polynomial& p) {
    if (p.is_zero()) throw ContractViolation("poly_roots: zero polynomial has no finite root set");
    if (p.degree() < 1) throw ContractViolation("poly_roots: degree must be at least 1");

    std::vector<double> c = p.coefficients();
    std::vector<Complex> roots;
    // Exact roots at the origin.
    std::size_t zeros = 0;
    while (zeros < c.size() && c[zeros] == 0.0) ++zeros;
    roots.assign(zeros, Complex{0.0, 0.0});
    c.erase(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(zeros));

    const std::size_t n = c.size() - 1;
    if (n > 0) {
        const double lead = c.back();
        for (double& v : c) v /= lead;

        const double radius = std::pow(std::abs(c.front()), 1.0 / static_cast<double>(n));
        std::vector<Complex> z(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n) + 0.4;
            z[k] = std::polar(radius, ang);
        }

        const double eps = std::numeric_limits<double>::epsilon();
        for (int iter = 0; iter < 2000; ++iter) {
            bool converged = true;
            for (std::size_t i = 0; i < n; ++i) {
                Complex pv;
                Complex dpv;
                horner_with_derivative(c, z[i], pv, dpv);
                if (pv == Complex{0.0, 0.0}) continue;
                const Complex ratio = pv / dpv;
                Complex sum = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i) sum += 1.0 / (z[i] - z[j]);
                const Complex w = ratio / (1.0 - ratio * sum);
                if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) continue;
                z[i] -= w;
                if (std::abs(w) > 4.0 * eps * std::max(1.0, std::abs(z[i]))) converged = false;
            }
            if (converged) break;
        }
        roots.insert(roots.end(), z.begin(), z.end());
    }

    std::sort(roots.begin(), roots.end(), [](Complex a, Complex b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return roots;
}

}  // namespace mgsim::numerics
