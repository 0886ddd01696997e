#include "iimlp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace iimlp {

Matrix Matrix::scaled_identity(std::size_t n, double scale) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = scale;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Vector matvec(const Matrix& m, const Vector& v) {
    if (m.cols() != v.size())
        throw UsageError("matvec: dimension mismatch (" + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " times length " +
                         std::to_string(v.size()) + ")");
    Vector out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* r = m.row(i);
        double acc = 0.0;
        for (std::size_t k = 0; k < m.cols(); ++k) acc += r[k] * v[k];
        out[i] = acc;
    }
    return out;
}

double hard_tanh_scalar(double x) { return x > 1.0 ? 1.0 : (x < -1.0 ? -1.0 : x); }

Vector hard_tanh(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = hard_tanh_scalar(v[i]);
    return out;
}

double hard_tanh_deriv_scalar(double x) { return (x > -1.0 && x < 1.0) ? 1.0 : 0.0; }

Vector hard_tanh_deriv(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = hard_tanh_deriv_scalar(v[i]);
    return out;
}

double relu_scalar(double x) { return x > 0.0 ? x : 0.0; }
double relu_deriv_scalar(double x) { return x > 0.0 ? 1.0 : 0.0; }

// ---------------------------------------------------------------------------
// erf via rational Chebyshev approximations, W. J. Cody, Math. Comp. 23 (1969).
// Three ranges: |x| <= 0.46875 direct, |x| <= 4 via erfc, beyond via the
// asymptotic erfc form. Coefficients are the classic SPECFUN set.
// ---------------------------------------------------------------------------
namespace {

constexpr double kErfA[5] = {3.16112374387056560e00, 1.13864154151050156e02,
                             3.77485237685302021e02, 3.20937758913846947e03,
                             1.85777706184603153e-1};
constexpr double kErfB[4] = {2.36012909523441209e01, 2.44024637934444173e02,
                             1.28261652607737228e03, 2.84423683343917062e03};
constexpr double kErfC[9] = {5.64188496988670089e-1, 8.88314979438837594e00,
                             6.61191906371416295e01, 2.98635138197400131e02,
                             8.81952221241769090e02, 1.71204761263407058e03,
                             2.05107837782607147e03, 1.23033935479799725e03,
                             2.15311535474403846e-8};
constexpr double kErfD[8] = {1.57449261107098347e01, 1.17693950891312499e02,
                             5.37181101862009858e02, 1.62138957456669019e03,
                             3.29079923573345963e03, 4.36261909014324716e03,
                             3.43936767414372164e03, 1.23033935480374942e03};
constexpr double kErfP[6] = {3.05326634961232344e-1, 3.60344899949804439e-1,
                             1.25781726111229246e-1, 1.60837851487422766e-2,
                             6.58749161529837803e-4, 1.63153871373020978e-2};
constexpr double kErfQ[5] = {2.56852019228982242e00, 1.87295284992346047e00,
                             5.27905102951428412e-1, 6.05183413124413191e-2,
                             2.33520497626869185e-3};
constexpr double kInvSqrtPi = 5.6418958354775628695e-1;

// exp(-x*x) split so the squared argument is computed from a 1/16-grid point,
// which keeps the product exact where the straight form would lose digits
double exp_neg_sq(double y) {
    double ysq = std::floor(y * 16.0) / 16.0;
    double del = (y - ysq) * (y + ysq);
    return std::exp(-ysq * ysq) * std::exp(-del);
}

double erfc_big(double y) {
    // 0.46875 < y
    if (y <= 4.0) {
        double xnum = kErfC[8] * y;
        double xden = y;
        for (int i = 0; i < 7; ++i) {
            xnum = (xnum + kErfC[i]) * y;
            xden = (xden + kErfD[i]) * y;
        }
        return exp_neg_sq(y) * (xnum + kErfC[7]) / (xden + kErfD[7]);
    }
    if (y >= 26.543) return 0.0;
    double z = 1.0 / (y * y);
    double xnum = kErfP[5] * z;
    double xden = z;
    for (int i = 0; i < 4; ++i) {
        xnum = (xnum + kErfP[i]) * z;
        xden = (xden + kErfQ[i]) * z;
    }
    double r = z * (xnum + kErfP[4]) / (xden + kErfQ[4]);
    return exp_neg_sq(y) * (kInvSqrtPi - r) / y;
}

}  // namespace

double erf(double x) {
    double y = std::fabs(x);
    if (y <= 0.46875) {
        double z = y * y;
        double xnum = kErfA[4] * z;
        double xden = z;
        for (int i = 0; i < 3; ++i) {
            xnum = (xnum + kErfA[i]) * z;
            xden = (xden + kErfB[i]) * z;
        }
        return x * (xnum + kErfA[3]) / (xden + kErfB[3]);
    }
    double erfc = erfc_big(y);
    return x >= 0.0 ? 1.0 - erfc : erfc - 1.0;
}

Vector softmax(const Vector& v) {
    Vector out(v.size());
    if (v.empty()) return out;
    double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    // keep entries strictly positive even when exp underflows; the floor is
    // far below the 1e-12 sum tolerance
    const double floor = std::numeric_limits<double>::denorm_min();
    for (double& e : out) e = std::max(e / sum, floor);
    return out;
}

Vector gauss(SeededRng& rng, double mean, double variance, std::size_t n) {
    if (variance < 0.0)
        throw UsageError("gauss: negative variance " + std::to_string(variance));
    const double sd = std::sqrt(variance);
    Vector out(n);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < n; i += 2) {
        double u1 = rng.next_unit_open();
        double u2 = rng.next_unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        out[i] = mean + sd * (r * std::cos(kTwoPi * u2));
        if (i + 1 < n) out[i + 1] = mean + sd * (r * std::sin(kTwoPi * u2));
    }
    return out;
}

double dot(const Vector& a, const Vector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace iimlp
