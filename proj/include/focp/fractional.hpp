#ifndef FOCP_FRACTIONAL_HPP
#define FOCP_FRACTIONAL_HPP

#include <cmath>
#include <stdexcept>

#include "focp/mesh.hpp"
#include "focp/quadrature.hpp"

namespace focp {

// |C(d,alpha)| = 2^a Gamma(a/2 + d/2) / (pi^{d/2} |Gamma(-a/2)|).
// Gamma(-a/2) is negative for a in (0,2); the absolute value keeps the
// bilinear form coercive.
inline double normalization_constant(int d, double alpha) {
    if (!(alpha > 0.0 && alpha < 2.0))
        throw std::invalid_argument("normalization_constant: alpha in (0,2) required");
    if (d < 1) throw std::invalid_argument("normalization_constant: d >= 1 required");
    const double num = std::pow(2.0, alpha) * std::tgamma(0.5 * (alpha + d));
    const double den = std::pow(M_PI, 0.5 * d) * std::abs(std::tgamma(-0.5 * alpha));
    return num / den;
}

struct FracKernelParams {
    int d = 2;
    double alpha = 0.5;
    double c_norm = 0.0;

    static FracKernelParams make(double alpha, int d = 2) {
        FracKernelParams p;
        p.d = d;
        p.alpha = alpha;
        p.c_norm = normalization_constant(d, alpha);
        return p;
    }
};

namespace detail {

// int_{psi1}^{psi2} r(psi)^{-alpha} dpsi by composite Gauss on the given panels
template <class F>
double angular_integral(const F& r_of_psi, double alpha, double psi1, double psi2,
                        int gauss_order) {
    const auto& g = gauss_legendre_01(gauss_order);
    double sum = 0.0;
    const double len = psi2 - psi1;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        const double psi = psi1 + len * g.x[i];
        sum += g.w[i] * std::pow(r_of_psi(psi), -alpha);
    }
    return sum * len;
}

}  // namespace detail

// rho(x) = int_{Omega^c} |x-y|^{-2-alpha} dy for the ideal domain (unit disk
// or square). The radial part is exact: for x with the domain star-shaped
// about it, rho(x) = (1/alpha) * int_0^{2pi} r_exit(phi)^{-alpha} dphi.
inline double complement_weight(const DomainSpec& domain, const Vec2& x,
                                const FracKernelParams& params, const QuadratureConfig& quad) {
    quad.validate();
    const double alpha = params.alpha;
    const int gauss_order = 4 + quad.rho_grading;

    if (domain.kind == DomainKind::UnitDisk) {
        const double s = x.norm();
        if (s >= 1.0 - 1e-14)
            throw std::invalid_argument("complement_weight: point not strictly inside the disk");
        // psi measured from the outward direction through x; r minimal at psi=0
        const auto r_exit = [&](double psi) {
            const double sp = s * std::sin(psi);
            return -s * std::cos(psi) + std::sqrt(1.0 - sp * sp);
        };
        const double dist = 1.0 - s;
        double total = 0.0;
        // panels graded toward psi = 0 where the integrand peaks
        double a = 0.0;
        double w = std::clamp(std::sqrt(2.0 * dist), 1e-4, M_PI / 8.0);
        while (a < M_PI) {
            const double b = std::min(M_PI, a + w);
            total += detail::angular_integral(r_exit, alpha, a, b, gauss_order);
            a = b;
            w *= 2.0;
        }
        return 2.0 * total / alpha;  // symmetry in psi
    }

    // square (-1,1)^2
    if (std::max(std::abs(x.x), std::abs(x.y)) >= 1.0 - 1e-14)
        throw std::invalid_argument("complement_weight: point not strictly inside the square");
    const Vec2 corners[4] = {{1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}, {-1.0, -1.0}};
    const double normal_angle[4] = {0.0, M_PI / 2.0, M_PI, -M_PI / 2.0};
    const double edge_dist[4] = {1.0 - x.x, 1.0 - x.y, 1.0 + x.x, 1.0 + x.y};

    double total = 0.0;
    for (int e = 0; e < 4; ++e) {
        const Vec2 a = corners[e] - x;
        const Vec2 b = corners[(e + 1) % 4] - x;
        const double phi_n = normal_angle[e];
        const double d = edge_dist[e];
        // angles of the two corners relative to the edge normal, in (-pi/2, pi/2)
        auto rel = [&](const Vec2& v) {
            double t = std::atan2(v.y, v.x) - phi_n;
            while (t > M_PI) t -= 2.0 * M_PI;
            while (t < -M_PI) t += 2.0 * M_PI;
            return t;
        };
        const double psi1 = rel(a);
        const double psi2 = rel(b);
        const auto r_line = [&](double psi) { return d / std::cos(psi); };
        // two panels per sector; the integrand d^-a cos^a is smooth
        const double mid = 0.5 * (psi1 + psi2);
        total += detail::angular_integral(r_line, alpha, psi1, mid, gauss_order);
        total += detail::angular_integral(r_line, alpha, mid, psi2, gauss_order);
    }
    return total / alpha;
}

}  // namespace focp

#endif
