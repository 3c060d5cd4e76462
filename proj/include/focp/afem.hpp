#ifndef FOCP_AFEM_HPP
#define FOCP_AFEM_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "focp/assembly.hpp"
#include "focp/estimator.hpp"
#include "focp/mesh.hpp"
#include "focp/optimality.hpp"

namespace focp {

enum class Marking { Dorfler, Uniform };

struct AfemConfig {
    double theta = 0.5;      // Dorfler bulk parameter
    int max_dofs = 2000;     // stop once the solved mesh reaches this many dofs
    int max_iters = 100;     // iteration cap (0 = solve initial mesh only)
    Marking marking = Marking::Dorfler;
    FixedPointOptions fixed_point{};
    QuadratureConfig quad{};
    int load_order = 7;
    int estimator_order = 7;

    void validate() const {
        if (!(theta > 0.0 && theta <= 1.0))
            throw std::invalid_argument("AfemConfig: theta in (0,1] required");
        if (max_dofs < 1 || max_iters < 0)
            throw std::invalid_argument("AfemConfig: invalid stopping parameters");
        quad.validate();
    }
};

struct ConvergenceRecord {
    int iteration = 0;
    int n_dofs = 0;
    double e_y = 0.0;
    double e_p = 0.0;
    double e_ocp = 0.0;
    double err_y = std::nan("");  // exact energy errors when an evaluator is given
    double err_p = std::nan("");
    double effectivity = std::nan("");
    int solver_iterations = 0;
    double wall_ms = 0.0;
};

// Minimal-cardinality bulk marking: greedy by descending indicator, ties
// broken toward lower element id.
inline std::vector<int> dorfler_mark(const std::vector<double>& eta_sq, double theta) {
    if (!(theta > 0.0 && theta <= 1.0))
        throw std::invalid_argument("dorfler_mark: theta in (0,1] required");
    double total = 0.0;
    for (double v : eta_sq) {
        if (!(v >= 0.0)) throw std::invalid_argument("dorfler_mark: negative indicator");
        total += v;
    }
    if (total <= 0.0) throw std::invalid_argument("dorfler_mark: all indicators are zero");

    std::vector<int> order(eta_sq.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (eta_sq[a] != eta_sq[b]) return eta_sq[a] > eta_sq[b];
        return a < b;
    });
    std::vector<int> marked;
    double acc = 0.0;
    for (int k : order) {
        if (acc >= theta * total) break;
        marked.push_back(k);
        acc += eta_sq[k];
    }
    std::sort(marked.begin(), marked.end());
    return marked;
}

struct IterationInfo {
    int iteration = 0;
    const TriMesh* mesh = nullptr;
    const OcpSolution* solution = nullptr;
    const EstimatorField* estimator = nullptr;
    const ConvergenceRecord* record = nullptr;
    const std::vector<int>* marked = nullptr;  // null on the final iteration
};

struct AfemResult {
    std::vector<ConvergenceRecord> records;
    TriMesh mesh;            // final mesh
    OcpSolution solution;    // on the final mesh
    EstimatorField estimator;
};

// Optional exact-error hook: returns (err_y, err_p) in the energy norm.
using ErrorEvaluator =
    std::function<std::pair<double, double>(const TriMesh&, const SpdSolver&, const OcpSolution&)>;
using IterationObserver = std::function<void(const IterationInfo&)>;

// SOLVE -> ESTIMATE -> MARK -> REFINE loop. Uniform marking bisects every
// element twice per sweep so areas quarter between records.
inline AfemResult afem_loop(const DomainSpec& domain, const OcpParams& prm,
                            const ProblemData& data, const AfemConfig& cfg,
                            const ErrorEvaluator& exact_errors = {},
                            const IterationObserver& observer = {}) {
    cfg.validate();
    prm.validate();
    const FracKernelParams kernel = FracKernelParams::make(prm.alpha);

    AfemResult res;
    res.mesh = make_initial_mesh(domain);

    for (int iter = 0;; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        TriMesh& mesh = res.mesh;

        SpdSolver solver(assemble_stiffness(mesh, kernel, cfg.quad, cfg.load_order));
        const LoadQuadrature lq = LoadQuadrature::build(mesh, cfg.load_order);
        res.solution = fixed_point_solve(mesh, solver, lq, prm, data, cfg.fixed_point);
        res.estimator = estimate_all(mesh, res.solution.y, res.solution.p, data, prm, kernel,
                                     cfg.quad, cfg.estimator_order);

        ConvergenceRecord rec;
        rec.iteration = iter;
        rec.n_dofs = mesh.n_dofs();
        rec.e_y = res.estimator.e_y();
        rec.e_p = res.estimator.e_p();
        rec.e_ocp = res.estimator.e_ocp();
        rec.solver_iterations = res.solution.iterations;
        if (exact_errors) {
            const auto [ey, ep] = exact_errors(mesh, solver, res.solution);
            rec.err_y = ey;
            rec.err_p = ep;
            const double tot = std::sqrt(ey * ey + ep * ep);
            if (tot > 0.0) rec.effectivity = rec.e_ocp / tot;
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                          .count();

        const bool last = mesh.n_dofs() >= cfg.max_dofs || iter >= cfg.max_iters;

        std::vector<int> marked;
        if (!last) {
            if (cfg.marking == Marking::Dorfler) {
                marked = dorfler_mark(res.estimator.total_sq(), cfg.theta);
            } else {
                marked.resize(mesh.n_elements());
                std::iota(marked.begin(), marked.end(), 0);
            }
        }

        res.records.push_back(rec);
        if (observer) {
            IterationInfo info;
            info.iteration = iter;
            info.mesh = &mesh;
            info.solution = &res.solution;
            info.estimator = &res.estimator;
            info.record = &res.records.back();
            info.marked = last ? nullptr : &marked;
            observer(info);
        }
        if (last) break;

        mesh = bisect_marked(mesh, marked);
        if (cfg.marking == Marking::Uniform) {
            std::vector<int> all(mesh.n_elements());
            std::iota(all.begin(), all.end(), 0);
            mesh = bisect_marked(mesh, all);
        }
    }
    return res;
}

}  // namespace focp

#endif
