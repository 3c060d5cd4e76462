#ifndef FOCP_ESTIMATOR_HPP
#define FOCP_ESTIMATOR_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "focp/frac_eval.hpp"
#include "focp/optimality.hpp"

namespace focp {

// Interior weight h~(x)^alpha of the residual estimator. For alpha <= 1 it is
// the plain element size power; for alpha > 1 the weight grades toward the
// mesh skeleton with exponent sigma = alpha/2 - 1/2 (continuous at alpha = 1).
struct WeightSpec {
    double alpha = 0.5;
    double sigma = 0.0;

    static WeightSpec make(double alpha) {
        if (!(alpha > 0.0 && alpha < 2.0))
            throw std::invalid_argument("WeightSpec: alpha in (0,2) required");
        WeightSpec w;
        w.alpha = alpha;
        w.sigma = alpha > 1.0 ? 0.5 * alpha - 0.5 : 0.0;
        return w;
    }

    // h~^alpha at a point with element size h and skeleton distance omega
    double pow_alpha(double h, double omega) const {
        if (alpha <= 1.0) return std::pow(h, alpha);
        return h * std::pow(omega, alpha - 1.0);
    }
};

struct EstimatorField {
    std::vector<double> eta_y_sq;  // per element
    std::vector<double> eta_p_sq;

    std::vector<double> total_sq() const {
        std::vector<double> t(eta_y_sq.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = eta_y_sq[i] + eta_p_sq[i];
        return t;
    }
    double sum_y_sq() const {
        double s = 0.0;
        for (double v : eta_y_sq) s += v;
        return s;
    }
    double sum_p_sq() const {
        double s = 0.0;
        for (double v : eta_p_sq) s += v;
        return s;
    }
    double e_y() const { return std::sqrt(sum_y_sq()); }
    double e_p() const { return std::sqrt(sum_p_sq()); }
    double e_ocp() const { return std::sqrt(sum_y_sq() + sum_p_sq()); }
};

// Weighted residual estimator for the coupled optimality system. The control
// entering the state residual is the projection of the discrete adjoint,
// evaluated pointwise at the estimator quadrature points.
inline EstimatorField estimate_all(const TriMesh& mesh, const P1Field& y, const P1Field& p,
                                   const ProblemData& data, const OcpParams& prm,
                                   const FracKernelParams& kernel, const QuadratureConfig& quad,
                                   int order = 7) {
    if (y.mesh != &mesh || p.mesh != &mesh)
        throw std::invalid_argument("estimate_all: fields on a different mesh");
    const WeightSpec ws = WeightSpec::make(kernel.alpha);
    const auto& rule = triangle_rule(order);

    FracEvaluator ev(mesh, kernel, quad);
    ev.set_fields({&y, &p});

    const int nel = mesh.n_elements();
    EstimatorField out;
    out.eta_y_sq.assign(nel, 0.0);
    out.eta_p_sq.assign(nel, 0.0);

    for (int k = 0; k < nel; ++k) {
        const Tri t = mesh.tri(k);
        const double h = element_size(mesh, k);
        const double jac = 2.0 * t.area();
        const auto& vid = mesh.elements[k].vertex_ids;
        double ey = 0.0, ep = 0.0;
        for (int q = 0; q < rule.size(); ++q) {
            const Vec2 x = t.map(rule.r[q], rule.s[q]);
            double lap[2];
            ev.evaluate(k, x, lap);
            const double b0 = 1.0 - rule.r[q] - rule.s[q];
            const double yv = b0 * y.nodal[vid[0]] + rule.r[q] * y.nodal[vid[1]] +
                              rule.s[q] * y.nodal[vid[2]];
            const double pv = b0 * p.nodal[vid[0]] + rule.r[q] * p.nodal[vid[1]] +
                              rule.s[q] * p.nodal[vid[2]];
            const double u = control_of_p(pv, prm);
            const double ry = data.f(x) + u - lap[0];
            const double rp = yv - data.y_d(x) - lap[1];
            const double omega = ws.alpha > 1.0 ? dist_point_tri_boundary(x, t) : 1.0;
            const double w = jac * rule.w[q] * ws.pow_alpha(h, omega);
            ey += w * ry * ry;
            ep += w * rp * rp;
        }
        out.eta_y_sq[k] = ey;
        out.eta_p_sq[k] = ep;
    }
    return out;
}

// Per-element state indicator with caller-supplied control samples at the
// estimator quadrature points of element k.
inline double eta_y_element(const TriMesh& mesh, int k, const P1Field& y,
                            const std::vector<double>& u_at_quad,
                            const std::function<double(const Vec2&)>& f,
                            const FracKernelParams& kernel, const QuadratureConfig& quad,
                            int order = 7) {
    const WeightSpec ws = WeightSpec::make(kernel.alpha);
    const auto& rule = triangle_rule(order);
    if (static_cast<int>(u_at_quad.size()) != rule.size())
        throw std::invalid_argument("eta_y_element: control sample count mismatch");
    FracEvaluator ev(mesh, kernel, quad);
    ev.set_fields({&y});
    const Tri t = mesh.tri(k);
    const double h = element_size(mesh, k);
    const double jac = 2.0 * t.area();
    double ey = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
        const Vec2 x = t.map(rule.r[q], rule.s[q]);
        double lap;
        ev.evaluate(k, x, &lap);
        const double ry = f(x) + u_at_quad[q] - lap;
        const double omega = ws.alpha > 1.0 ? dist_point_tri_boundary(x, t) : 1.0;
        ey += jac * rule.w[q] * ws.pow_alpha(h, omega) * ry * ry;
    }
    return ey;
}

// Per-element adjoint indicator.
inline double eta_p_element(const TriMesh& mesh, int k, const P1Field& y, const P1Field& p,
                            const std::function<double(const Vec2&)>& y_d,
                            const FracKernelParams& kernel, const QuadratureConfig& quad,
                            int order = 7) {
    const WeightSpec ws = WeightSpec::make(kernel.alpha);
    const auto& rule = triangle_rule(order);
    FracEvaluator ev(mesh, kernel, quad);
    ev.set_fields({&y, &p});
    const Tri t = mesh.tri(k);
    const double h = element_size(mesh, k);
    const double jac = 2.0 * t.area();
    const auto& vid = mesh.elements[k].vertex_ids;
    double ep = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
        const Vec2 x = t.map(rule.r[q], rule.s[q]);
        double lap[2];
        ev.evaluate(k, x, lap);
        const double b0 = 1.0 - rule.r[q] - rule.s[q];
        const double yv =
            b0 * y.nodal[vid[0]] + rule.r[q] * y.nodal[vid[1]] + rule.s[q] * y.nodal[vid[2]];
        const double rp = yv - y_d(x) - lap[1];
        const double omega = ws.alpha > 1.0 ? dist_point_tri_boundary(x, t) : 1.0;
        ep += jac * rule.w[q] * ws.pow_alpha(h, omega) * rp * rp;
    }
    return ep;
}

// Combined indicator with unit stability constants.
inline double total_estimator(double eta_y_sq, double eta_p_sq) {
    return eta_y_sq + eta_p_sq;
}

}  // namespace focp

#endif
