#pragma once

// Independent reference computations for the tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

inline double g_entropy(double nu)
{
    const double x = (nu - 1.0) / 2.0;
    if (x <= 1e-15) return 0.0;
    return (x + 1.0) * std::log2(x + 1.0) - x * std::log2(x);
}

inline Eigen::MatrixXd omega(int modes)
{
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * modes, 2 * modes);
    for (int k = 0; k < modes; ++k) {
        w(2 * k, 2 * k + 1) = 1.0;
        w(2 * k + 1, 2 * k) = -1.0;
    }
    return w;
}

// Symplectic eigenvalues from the spectrum of i*Omega*gamma.
inline std::vector<double> symplectic_eigenvalues(const Eigen::MatrixXd& gamma)
{
    const int modes = static_cast<int>(gamma.rows() / 2);
    Eigen::EigenSolver<Eigen::MatrixXd> es(omega(modes) * gamma);
    std::vector<double> v;
    for (int i = 0; i < gamma.rows(); ++i) v.push_back(std::abs(es.eigenvalues()[i].imag()));
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); i += 2) out.push_back(0.5 * (v[i] + v[i + 1]));
    return out;
}

inline double von_neumann(const Eigen::MatrixXd& gamma)
{
    double s = 0.0;
    for (double nu : symplectic_eigenvalues(gamma)) s += g_entropy(nu);
    return s;
}

inline Eigen::Matrix2d I2() { return Eigen::Matrix2d::Identity(); }
inline Eigen::Matrix2d Z2() { return Eigen::Vector2d(1.0, -1.0).asDiagonal(); }

// Holevo information between Eve and Bob's homodyne outcome for the
// entanglement-based picture with a trusted noisy detector:
// A-B1 two-mode state after the channel, detector modelled as a beam splitter
// of transmission eta mixing B1 with one half of an EPR pair (F0, G).
inline double holevo(double v_a, double t, double xi, double eta, double v_el)
{
    const double v = v_a + 1.0;
    const double chi_line = 1.0 / t - 1.0 + xi;

    Eigen::Matrix4d ab;
    ab.block<2, 2>(0, 0) = v * I2();
    ab.block<2, 2>(0, 2) = std::sqrt(t * (v * v - 1.0)) * Z2();
    ab.block<2, 2>(2, 0) = std::sqrt(t * (v * v - 1.0)) * Z2();
    ab.block<2, 2>(2, 2) = t * (v + chi_line) * I2();
    const double s_ab = von_neumann(ab);

    // Modes ordered A, B1, F0, G. At eta = 1 the electronic noise alone is
    // purified: a splitter eta' with ancilla variance w adds (1 - eta') w / eta' = v_el.
    double w = 1.0;
    if (eta < 1.0) {
        w = 1.0 + v_el / (1.0 - eta);
    } else {
        w = 1.0 + v_el;
        eta = w / (w + v_el);
    }
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(8, 8);
    full.block<4, 4>(0, 0) = ab;
    full.block<2, 2>(4, 4) = w * I2();
    full.block<2, 2>(6, 6) = w * I2();
    full.block<2, 2>(4, 6) = std::sqrt(w * w - 1.0) * Z2();
    full.block<2, 2>(6, 4) = std::sqrt(w * w - 1.0) * Z2();

    // Beam splitter on (B1, F0) -> (B2, F).
    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(8, 8);
    const double st = std::sqrt(eta);
    const double sr = std::sqrt(1.0 - eta);
    s.block<2, 2>(2, 2) = st * I2();
    s.block<2, 2>(2, 4) = sr * I2();
    s.block<2, 2>(4, 2) = -sr * I2();
    s.block<2, 2>(4, 4) = st * I2();
    const Eigen::MatrixXd out = s * full * s.transpose();

    // Reorder to (A, F, G | B2) and condition on the x quadrature of B2.
    const int idx[8] = {0, 1, 4, 5, 6, 7, 2, 3};
    Eigen::MatrixXd p(8, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) p(i, j) = out(idx[i], idx[j]);
    const Eigen::MatrixXd ga = p.block(0, 0, 6, 6);
    const Eigen::MatrixXd c = p.block(0, 6, 6, 2);
    const double vbx = p(6, 6);
    Eigen::MatrixXd cond = ga - c.col(0) * c.col(0).transpose() / vbx;
    const double s_cond = von_neumann(cond);
    return s_ab - s_cond;
}

// Shannon information of an entangling-cloner attacker on Bob's homodyne value,
// by Gaussian conditioning on the cloner's output modes; trusted detector noise.
inline double individual(double v_a, double t, double xi, double eta, double v_el)
{
    const double v = v_a + 1.0;
    const double w = 1.0 + t * xi / (1.0 - t);
    // Modes A, B0 (EPR of variance v), E (EPR of variance w with E'), E'.
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(8, 8);
    g.block<2, 2>(0, 0) = v * I2();
    g.block<2, 2>(2, 2) = v * I2();
    g.block<2, 2>(0, 2) = std::sqrt(v * v - 1.0) * Z2();
    g.block<2, 2>(2, 0) = std::sqrt(v * v - 1.0) * Z2();
    g.block<2, 2>(4, 4) = w * I2();
    g.block<2, 2>(6, 6) = w * I2();
    g.block<2, 2>(4, 6) = std::sqrt(w * w - 1.0) * Z2();
    g.block<2, 2>(6, 4) = std::sqrt(w * w - 1.0) * Z2();
    // Beam splitter of transmission t on (B0, E') -> (B1, E'').
    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(8, 8);
    const double st = std::sqrt(t);
    const double sr = std::sqrt(1.0 - t);
    s.block<2, 2>(2, 2) = st * I2();
    s.block<2, 2>(2, 6) = sr * I2();
    s.block<2, 2>(6, 2) = -sr * I2();
    s.block<2, 2>(6, 6) = st * I2();
    const Eigen::MatrixXd o = s * g * s.transpose();
    // x quadratures of B1 (index 2), E (4), E'' (6).
    const double vb = o(2, 2);
    Eigen::Matrix2d ee;
    ee << o(4, 4), o(4, 6), o(6, 4), o(6, 6);
    Eigen::Vector2d be(o(2, 4), o(2, 6));
    const double vb_e = vb - be.dot(ee.ldlt().solve(be));
    const double chi_hom = (1.0 + v_el) / eta - 1.0;
    return 0.5 * std::log2((vb + chi_hom) / (vb_e + chi_hom));
}

inline double log_choose(double n, double k)
{
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Probability that k positions sampled without replacement from n miss all e errors.
inline double hypergeometric_miss(std::uint64_t n, std::uint64_t e, std::uint64_t k)
{
    if (e + k > n) return 0.0;
    return std::exp(log_choose(double(n - e), double(k)) - log_choose(double(n), double(k)));
}

// Reference GF(2^w) product with an explicit modulus (w <= 32).
inline std::uint64_t gf_mul_reference(std::uint64_t a, std::uint64_t b, unsigned w, std::uint64_t modulus)
{
    unsigned __int128 prod = 0;
    for (unsigned i = 0; i < w; ++i)
        if ((b >> i) & 1U) prod ^= static_cast<unsigned __int128>(a) << i;
    for (int bit = 2 * static_cast<int>(w) - 2; bit >= static_cast<int>(w); --bit)
        if ((prod >> bit) & 1U) prod ^= static_cast<unsigned __int128>(modulus) << (bit - static_cast<int>(w));
    return static_cast<std::uint64_t>(prod);
}

}  // namespace oracle
