#ifndef FOCP_OPTIMALITY_HPP
#define FOCP_OPTIMALITY_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "focp/assembly.hpp"
#include "focp/frac_eval.hpp"
#include "focp/mesh.hpp"

namespace focp {

struct OcpParams {
    double alpha = 0.5;   // fractional order
    double gamma = 0.1;   // quadratic control cost
    double beta = 0.0;    // sparsity (L1) cost
    double a_lo = -0.5;   // control bounds
    double b_hi = 0.5;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 2.0))
            throw std::invalid_argument("OcpParams: alpha in (0,2) required");
        if (!(gamma > 0.0)) throw std::invalid_argument("OcpParams: gamma > 0 required");
        if (beta < 0.0) throw std::invalid_argument("OcpParams: beta >= 0 required");
        if (!(a_lo < 0.0 && 0.0 < b_hi))
            throw std::invalid_argument("OcpParams: a < 0 < b required");
    }
};

struct ProblemData {
    std::function<double(const Vec2&)> f;    // source
    std::function<double(const Vec2&)> y_d;  // desired state
};

inline double clamp(double v, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
    return std::min(hi, std::max(lo, v));
}

// lambda(x) in the subdifferential of the L1 term, from the adjoint
inline double subgradient_of_p(double p, const OcpParams& prm) {
    if (prm.beta <= 0.0) return 0.0;
    return clamp(-p / prm.beta, -1.0, 1.0);
}

// projection formula for the optimal control given the adjoint value
inline double control_of_p(double p, const OcpParams& prm) {
    const double lam = subgradient_of_p(p, prm);
    return clamp(-(p + prm.beta * lam) / prm.gamma, prm.a_lo, prm.b_hi);
}

// ---------------------------------------------------------------------------
// Linear solvers
// ---------------------------------------------------------------------------

// Dense Cholesky that owns its matrix and factors in place; exposes products
// and energy norms through the factor so the unfactored matrix is not kept.
class SpdSolver {
public:
    explicit SpdSolver(SpdOperator op) : n_(op.n), a_(std::move(op.entries)), llt_(a_) {
        if (llt_.info() != Eigen::Success)
            throw std::runtime_error("SpdSolver: Cholesky factorization failed (matrix not SPD)");
    }

    int size() const { return n_; }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        if (b.size() != n_) throw std::invalid_argument("SpdSolver: rhs size mismatch");
        return llt_.solve(b);
    }

    // v' A v = |L^T v|^2 through the factor
    double energy(const Eigen::VectorXd& v) const {
        return (llt_.matrixU() * v).squaredNorm();
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
        return llt_.matrixL() * (llt_.matrixU() * v);
    }

private:
    int n_;
    Eigen::MatrixXd a_;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt_;
};

inline Eigen::VectorXd solve_spd(const SpdOperator& op, const Eigen::VectorXd& b) {
    Eigen::LLT<Eigen::MatrixXd> llt(op.entries);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("solve_spd: Cholesky factorization failed (matrix not SPD)");
    return llt.solve(b);
}

// Conjugate gradients, kept as an operator-only fallback.
inline Eigen::VectorXd cg_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& A,
                                const Eigen::VectorXd& b, double tol = 1e-12,
                                int max_iter = 10000) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd r = b;
    Eigen::VectorXd p = r;
    double rr = r.squaredNorm();
    const double stop = tol * tol * std::max(rr, 1e-300);
    for (int it = 0; it < max_iter && rr > stop; ++it) {
        const Eigen::VectorXd Ap = A(p);
        const double al = rr / p.dot(Ap);
        x += al * p;
        r -= al * Ap;
        const double rr2 = r.squaredNorm();
        p = r + (rr2 / rr) * p;
        rr = rr2;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Load quadrature shared by the fixed point and the harness
// ---------------------------------------------------------------------------

struct LoadQuadrature {
    const TriMesh* mesh = nullptr;
    int n_per_element = 0;
    std::vector<Vec2> points;    // element-major
    std::vector<double> weights; // physical weights (include 2|K|)
    std::vector<double> hat;     // 3 hat values per point
    std::vector<int> dofs;       // 3 dof ids per point's element (-1 on boundary)

    static LoadQuadrature build(const TriMesh& mesh, int order = 7) {
        const auto& rule = triangle_rule(order);
        const auto& dof = mesh.dof_index();
        LoadQuadrature lq;
        lq.mesh = &mesh;
        lq.n_per_element = rule.size();
        const int nel = mesh.n_elements();
        lq.points.resize(nel * rule.size());
        lq.weights.resize(nel * rule.size());
        lq.hat.resize(3 * nel * rule.size());
        lq.dofs.resize(3 * nel);
        for (int k = 0; k < nel; ++k) {
            const Tri t = mesh.tri(k);
            const double jac = 2.0 * t.area();
            const auto& vid = mesh.elements[k].vertex_ids;
            for (int i = 0; i < 3; ++i) lq.dofs[3 * k + i] = dof[vid[i]];
            for (int q = 0; q < rule.size(); ++q) {
                const int idx = k * rule.size() + q;
                lq.points[idx] = t.map(rule.r[q], rule.s[q]);
                lq.weights[idx] = jac * rule.w[q];
                lq.hat[3 * idx + 0] = 1.0 - rule.r[q] - rule.s[q];
                lq.hat[3 * idx + 1] = rule.r[q];
                lq.hat[3 * idx + 2] = rule.s[q];
            }
        }
        return lq;
    }

    int n_points() const { return static_cast<int>(points.size()); }

    Eigen::VectorXd load_from_samples(const std::vector<double>& samples) const {
        if (static_cast<int>(samples.size()) != n_points())
            throw std::invalid_argument("LoadQuadrature: sample size mismatch");
        Eigen::VectorXd b = Eigen::VectorXd::Zero(mesh->n_dofs());
        for (int idx = 0; idx < n_points(); ++idx) {
            const int k = idx / n_per_element;
            const double wg = weights[idx] * samples[idx];
            for (int i = 0; i < 3; ++i) {
                const int d = dofs[3 * k + i];
                if (d >= 0) b[d] += wg * hat[3 * idx + i];
            }
        }
        return b;
    }

    // values of a coefficient vector at all quadrature points
    std::vector<double> sample_coeffs(const Eigen::VectorXd& c) const {
        std::vector<double> out(n_points(), 0.0);
        for (int idx = 0; idx < n_points(); ++idx) {
            const int k = idx / n_per_element;
            double v = 0.0;
            for (int i = 0; i < 3; ++i) {
                const int d = dofs[3 * k + i];
                if (d >= 0) v += hat[3 * idx + i] * c[d];
            }
            out[idx] = v;
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Projection fixed point for the first-order optimality system
// ---------------------------------------------------------------------------

struct OcpSolution {
    P1Field y;                   // state
    P1Field p;                   // adjoint
    std::vector<double> u_quad;  // control at the load quadrature points
    int iterations = 0;
    double final_residual = 0.0;
    double relax_used = 1.0;
};

struct FixedPointOptions {
    double tol = 1e-8;
    int max_iter = 500;
    double relax = 1.0;
};

// Solves y = S(f + u), p = S*(y - y_d), u = Pi(p) by damped fixed point.
// On convergence (relax * sup-residual <= tol) the stored state and adjoint
// were computed from the stored control, so the discrete system is consistent.
inline OcpSolution fixed_point_solve(const TriMesh& mesh, const SpdSolver& solver,
                                     const LoadQuadrature& lq, const OcpParams& prm,
                                     const ProblemData& data,
                                     const FixedPointOptions& opts = {}) {
    prm.validate();
    if (!(opts.tol > 0.0) || opts.max_iter < 1 || !(opts.relax > 0.0 && opts.relax <= 1.0))
        throw std::invalid_argument("fixed_point_solve: invalid options");

    const int np = lq.n_points();
    std::vector<double> f_vals(np), yd_vals(np);
    for (int i = 0; i < np; ++i) {
        f_vals[i] = data.f(lq.points[i]);
        yd_vals[i] = data.y_d(lq.points[i]);
        if (!std::isfinite(f_vals[i]) || !std::isfinite(yd_vals[i]))
            throw std::runtime_error("fixed_point_solve: non-finite problem data");
    }

    std::vector<double> u(np, 0.0), g(np), u_new(np);
    double relax = opts.relax;
    double best_err = std::numeric_limits<double>::max();
    int since_improve = 0;

    Eigen::VectorXd y, p;
    for (int it = 1; it <= opts.max_iter; ++it) {
        for (int i = 0; i < np; ++i) g[i] = f_vals[i] + u[i];
        y = solver.solve(lq.load_from_samples(g));
        const auto y_at = lq.sample_coeffs(y);
        for (int i = 0; i < np; ++i) g[i] = y_at[i] - yd_vals[i];
        p = solver.solve(lq.load_from_samples(g));
        const auto p_at = lq.sample_coeffs(p);

        double err = 0.0;
        for (int i = 0; i < np; ++i) {
            u_new[i] = control_of_p(p_at[i], prm);
            err = std::max(err, std::abs(u_new[i] - u[i]));
        }

        if (relax * err <= opts.tol) {
            OcpSolution sol;
            sol.y = P1Field::from_coeffs(mesh, std::move(y));
            sol.p = P1Field::from_coeffs(mesh, std::move(p));
            sol.u_quad = std::move(u);
            sol.iterations = it;
            sol.final_residual = err;
            sol.relax_used = relax;
            return sol;
        }

        if (err < best_err) {
            best_err = err;
            since_improve = 0;
        } else if (++since_improve >= 20 && err > 10.0 * best_err) {
            relax *= 0.5;
            since_improve = 0;
            best_err = err;
            if (relax < 1.0 / 64.0)
                throw std::runtime_error(
                    "fixed_point_solve: diverging even with minimal relaxation");
        }
        for (int i = 0; i < np; ++i) u[i] += relax * (u_new[i] - u[i]);
    }
    throw std::runtime_error("fixed_point_solve: no convergence within max_iter (residual " +
                             std::to_string(best_err) + ")");
}

}  // namespace focp

#endif
