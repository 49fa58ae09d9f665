#include "mgsim/errors.hpp"
#include "mgsim/numerics.hpp"

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace mgsim;
using namespace mgsim::numerics;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
    return e;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
    Matrix m(e.rows(), e.cols());
    for (Eigen::Index r = 0; r < e.rows(); ++r)
        for (Eigen::Index c = 0; c < e.cols(); ++c) m(r, c) = e(r, c);
    return m;
}

// Random matrix shifted left of its rightmost eigenvalue.
Matrix random_hurwitz(std::mt19937_64& rng, std::size_t n, double min_margin = 0.1) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(min_margin, 2.0);
    Eigen::MatrixXd m(n, n);
    for (auto& v : m.reshaped()) v = g(rng);
    const double right = m.eigenvalues().real().maxCoeff();
    m -= (right + u(rng)) * Eigen::MatrixXd::Identity(n, n);
    return from_eigen(m);
}

// Kronecker form (I (x) A^T + A^T (x) I) vec W = -vec Q.
Eigen::MatrixXd lyapunov_kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
    const auto n = a.rows();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n * n, n * n);
    const Eigen::MatrixXd at = a.transpose();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            k.block(i * n, j * n, n, n) += (i == j ? 1.0 : 0.0) * at;
            k.block(i * n, j * n, n, n).diagonal().array() += at(i, j);
        }
    const Eigen::VectorXd w = k.lu().solve(-q.reshaped());
    return w.reshaped(n, n);
}

}  // namespace

TEST_CASE("rk4 converges at fourth order", "[numerics][rk4]") {
    // x'' = -x, x(0) = 1, x'(0) = 0
    const OdeSystem osc{2, [](double, std::span<const double> x, std::span<double> dx) {
                            dx[0] = x[1];
                            dx[1] = -x[0];
                        }};
    const double t1 = 5.0;
    auto error = [&](double dt) {
        const Trajectory tr = rk4_integrate(osc, {1.0, 0.0}, 0.0, t1, dt);
        return std::hypot(tr.states.back()[0] - std::cos(t1), tr.states.back()[1] + std::sin(t1));
    };
    for (double dt : {0.1, 0.05, 0.02}) {
        const double ratio = error(dt) / error(dt / 2.0);
        INFO("dt = " << dt << " ratio = " << ratio);
        CHECK(ratio >= 12.0);
        CHECK(ratio <= 20.0);
    }
}

TEST_CASE("rk4 handles time-dependent forcing and lands on t1", "[numerics][rk4]") {
    // x' = -x + sin t, x(0) = 0 -> x = (sin t - cos t + e^-t)/2
    const OdeSystem sys{1, [](double t, std::span<const double> x, std::span<double> dx) { dx[0] = -x[0] + std::sin(t); }};
    const Trajectory tr = rk4_integrate(sys, {0.0}, 0.0, 2.05, 0.1);
    CHECK_THAT(tr.times.back(), WithinAbs(2.05, 1e-14));
    const double t = 2.05;
    CHECK_THAT(tr.states.back()[0], WithinAbs(0.5 * (std::sin(t) - std::cos(t) + std::exp(-t)), 1e-6));
}

TEST_CASE("rk4 reports non-finite derivatives", "[numerics][rk4]") {
    const OdeSystem bad{1, [](double, std::span<const double>, std::span<double> dx) { dx[0] = std::nan(""); }};
    Rk4Workspace ws(1);
    std::vector<double> x{1.0};
    CHECK_THROWS_AS(rk4_step(bad, 0.0, x, 0.1, ws), IntegrationDiverged);
}

TEST_CASE("eigenvalues agree with Eigen", "[numerics][eig]") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + trial % 5;
        Matrix a(n, n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) a(r, c) = g(rng);
        auto mine = eigenvalues(a);
        Eigen::VectorXcd ref = to_eigen(a).eigenvalues();
        std::vector<Complex> theirs(ref.begin(), ref.end());
        auto order = [](Complex x, Complex y) {
            return std::abs(x.real() - y.real()) > 1e-9 ? x.real() < y.real() : x.imag() < y.imag();
        };
        std::sort(mine.begin(), mine.end(), order);
        std::sort(theirs.begin(), theirs.end(), order);
        REQUIRE(mine.size() == theirs.size());
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(mine[i] - theirs[i]) < 1e-8 * (1.0 + std::abs(theirs[i])));
        CHECK(is_hurwitz(a) == (ref.real().maxCoeff() < 0.0));
    }
}

TEST_CASE("lyapunov residual on random Hurwitz matrices", "[numerics][lyapunov]") {
    std::mt19937_64 rng(20240601);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 8);
        const Matrix a = random_hurwitz(rng, n);
        const Matrix w = solve_lyapunov(a);
        const Matrix residual = a.transpose() * w + w * a + Matrix::identity(n);
        INFO("trial " << trial << " n " << n);
        CHECK(residual.max_abs() < 1e-10 * static_cast<double>(n));
        CHECK(w.asymmetry() < 1e-12 * std::max(1.0, w.max_abs()));
    }
}

TEST_CASE("lyapunov solution matches the Kronecker form with general Q", "[numerics][lyapunov]") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 5);
        const Matrix a = random_hurwitz(rng, n);
        Eigen::MatrixXd r(n, n);
        for (auto& v : r.reshaped()) v = g(rng);
        const Eigen::MatrixXd q = r * r.transpose() + Eigen::MatrixXd::Identity(n, n);
        const Matrix w = solve_lyapunov(a, from_eigen(q));
        const Eigen::MatrixXd ref = lyapunov_kron(to_eigen(a), q);
        CHECK((to_eigen(w) - ref).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("lyapunov solution equals the Gramian integral on 3x3 cases", "[numerics][lyapunov]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = random_hurwitz(rng, 3, 0.5);
        const Eigen::MatrixXd ae = to_eigen(a);
        // W = int_0^inf e^{A^T t} e^{A t} dt by Simpson with exact propagation e^{Ah}
        const double h = 2e-3;
        const double decay = -ae.eigenvalues().real().maxCoeff();
        const int steps = 2 * static_cast<int>(std::ceil(40.0 / decay / h / 2.0));
        const Eigen::Matrix3d step = (ae * h).exp();
        Eigen::Matrix3d phi = Eigen::Matrix3d::Identity();
        Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
        for (int k = 0; k <= steps; ++k) {
            const double weight = (k == 0 || k == steps) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
            acc += weight * phi.transpose() * phi;
            phi = phi * step;
        }
        acc *= h / 3.0;
        const Matrix w = solve_lyapunov(a);
        INFO("trial " << trial);
        CHECK((to_eigen(w) - acc).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, acc.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("lyapunov rejects non-Hurwitz input", "[numerics][lyapunov]") {
    const Matrix a{{0.5, 1.0}, {0.0, -1.0}};
    CHECK_THROWS_AS(solve_lyapunov(a), NoSolution);
}

TEST_CASE("symmetric eigenvalues match the trigonometric cubic formula", "[numerics][sym]") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double a11 = g(rng), a22 = g(rng), a33 = g(rng), a12 = g(rng), a13 = g(rng), a23 = g(rng);
        const Matrix m{{a11, a12, a13}, {a12, a22, a23}, {a13, a23, a33}};
        // closed form for real symmetric 3x3
        const double p1 = a12 * a12 + a13 * a13 + a23 * a23;
        const double q = (a11 + a22 + a33) / 3.0;
        const double p2 = (a11 - q) * (a11 - q) + (a22 - q) * (a22 - q) + (a33 - q) * (a33 - q) + 2.0 * p1;
        const double p = std::sqrt(p2 / 6.0);
        const double b11 = (a11 - q) / p, b22 = (a22 - q) / p, b33 = (a33 - q) / p;
        const double b12 = a12 / p, b13 = a13 / p, b23 = a23 / p;
        const double det_b = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13) + b13 * (b12 * b23 - b22 * b13);
        const double r = std::clamp(det_b / 2.0, -1.0, 1.0);
        const double phi = std::acos(r) / 3.0;
        std::vector<double> ref{q + 2.0 * p * std::cos(phi), q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0),
                                0.0};
        ref[2] = 3.0 * q - ref[0] - ref[1];
        std::sort(ref.begin(), ref.end());
        const Vector mine = sym_eigs(m);
        for (int i = 0; i < 3; ++i) CHECK_THAT(mine[i], WithinAbs(ref[i], 1e-9 * (1.0 + std::abs(ref[i]))));
    }
}

TEST_CASE("routh-hurwitz verdict agrees with computed poles", "[numerics][routh]") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> expo(-3.0, 5.0);
    std::bernoulli_distribution negative(0.15);
    int disagreements = 0;
    int stable = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto draw = [&] { return (negative(rng) ? -1.0 : 1.0) * std::pow(10.0, expo(rng)); };
        const double a2 = draw(), a1 = draw(), a0 = draw();
        const auto roots = poly_roots(Polynomial{a0, a1, a2, 1.0});
        const bool by_roots = std::all_of(roots.begin(), roots.end(), [](Complex z) { return z.real() < 0.0; });
        if (by_roots) ++stable;
        if (by_roots != routh_hurwitz_cubic(a2, a1, a0)) ++disagreements;
    }
    CHECK(disagreements == 0);
    CHECK(stable > 100);
    CHECK(stable < 900);
}

TEST_CASE("poly_roots matches companion eigenvalues", "[numerics][roots]") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int deg = 1 + trial % 6;
        std::vector<double> c(deg + 1);
        for (double& v : c) v = g(rng);
        c.back() = 1.0 + std::abs(c.back());
        const auto mine = poly_roots(Polynomial{c});
        REQUIRE(static_cast<int>(mine.size()) == deg);
        for (Complex z : mine) {
            const Complex val = Polynomial{c}(z);
            double scale = 0.0;
            for (int k = 0; k <= deg; ++k) scale += std::abs(c[k]) * std::pow(std::abs(z), k);
            CHECK(std::abs(val) < 1e-9 * scale);
        }
    }
    const double r[] = {-1.0, 2.0, -3.0};
    const auto roots = poly_roots(Polynomial::from_roots(r));
    CHECK_THAT(roots[0].real(), WithinAbs(-3.0, 1e-12));
    CHECK_THAT(roots[1].real(), WithinAbs(-1.0, 1e-12));
    CHECK_THAT(roots[2].real(), WithinAbs(2.0, 1e-12));
}

TEST_CASE("linear solve and basic matrix algebra", "[numerics][matrix]") {
    const Matrix a{{4.0, 1.0}, {2.0, 3.0}};
    const Vector x = solve_linear(a, {1.0, 2.0});
    CHECK_THAT(x[0], WithinRel(0.1, 1e-14));
    CHECK_THAT(x[1], WithinRel(0.6, 1e-14));
    CHECK_THROWS_AS(solve_linear(Matrix{{1.0, 2.0}, {2.0, 4.0}}, {1.0, 1.0}), NoSolution);
    CHECK((a * Matrix::identity(2)) == a);
    CHECK(a.transpose()(0, 1) == 2.0);
}
