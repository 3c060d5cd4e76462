#ifndef FOCP_HARNESS_HPP
#define FOCP_HARNESS_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "focp/afem.hpp"

namespace focp {

// ---------------------------------------------------------------------------
// Exact solutions and experiment data
// ---------------------------------------------------------------------------

// y(x) = 2^{-a} (1 - |x|^2)^{a/2} / Gamma(1 + a/2)^2 on the unit disk;
// its fractional Laplacian of order a is identically 1.
inline double exact_getoor(double alpha, const Vec2& x) {
    const double r2 = x.norm2();
    if (r2 > 1.0 + 1e-12) throw std::invalid_argument("exact_getoor: |x| > 1");
    const double g = std::tgamma(1.0 + 0.5 * alpha);
    return std::pow(2.0, -alpha) * std::pow(std::max(0.0, 1.0 - r2), 0.5 * alpha) / (g * g);
}

struct Example1 {
    ProblemData data;
    OcpParams params;
    double c_adjoint = 3.0;
    std::function<double(const Vec2&)> y_exact, p_exact, u_exact, lambda_exact;
};

// Manufactured problem on the unit disk: p = c y, u and lambda from the
// projection formulas, f chosen so that the state equation closes.
inline Example1 example1_data(double alpha, const OcpParams& prm, double c_adjoint = 3.0) {
    prm.validate();
    Example1 ex;
    ex.params = prm;
    ex.params.alpha = alpha;
    ex.c_adjoint = c_adjoint;
    const OcpParams p = ex.params;
    const double c = c_adjoint;

    ex.y_exact = [alpha](const Vec2& x) { return exact_getoor(alpha, x); };
    ex.p_exact = [alpha, c](const Vec2& x) { return c * exact_getoor(alpha, x); };
    ex.lambda_exact = [ex, p](const Vec2& x) { return subgradient_of_p(ex.p_exact(x), p); };
    ex.u_exact = [ex, p](const Vec2& x) { return control_of_p(ex.p_exact(x), p); };
    ex.data.f = [ex](const Vec2& x) { return 1.0 - ex.u_exact(x); };
    ex.data.y_d = [ex, c](const Vec2& x) { return ex.y_exact(x) - c; };
    return ex;
}

inline ProblemData example2_data() {
    ProblemData d;
    d.f = [](const Vec2&) { return -6.0; };
    d.y_d = [](const Vec2&) { return 1.0; };
    return d;
}

inline ProblemData example3_data() {
    ProblemData d;
    d.f = [](const Vec2& v) {
        return 6.0 * std::sin(4.0 * v.y) * std::cos(4.0 * v.x) * std::exp(v.x);
    };
    d.y_d = [](const Vec2& v) {
        return -4.0 * std::sin(4.0 * v.y) * std::cos(4.0 * v.x) * std::exp(v.x);
    };
    return d;
}

// ---------------------------------------------------------------------------
// Exact-identity energy errors for Example 1
// ---------------------------------------------------------------------------

// a(y,y) = (1, y) on the disk = [2^{-a}/Gamma(1+a/2)^2] * 2 pi / (a + 2)
inline double getoor_energy(double alpha) {
    const double g = std::tgamma(1.0 + 0.5 * alpha);
    return std::pow(2.0, -alpha) / (g * g) * 2.0 * M_PI / (alpha + 2.0);
}

// exact integral of a P1 field over the mesh polygon
inline double integrate_p1(const P1Field& f) {
    double s = 0.0;
    const TriMesh& m = *f.mesh;
    for (int k = 0; k < m.n_elements(); ++k) {
        const auto& vid = m.elements[k].vertex_ids;
        s += m.tri(k).area() / 3.0 * (f.nodal[vid[0]] + f.nodal[vid[1]] + f.nodal[vid[2]]);
    }
    return s;
}

// |y - y_h|_a where a(y, v) = (1, v): sqrt(I_y - 2 (1, y_h) + y_h' A y_h)
inline double energy_error_state(const SpdSolver& solver, const P1Field& y_h, double alpha) {
    const double iy = getoor_energy(alpha);
    const double val = iy - 2.0 * integrate_p1(y_h) + solver.energy(y_h.coeffs);
    return std::sqrt(std::max(0.0, val));
}

inline double energy_error_adjoint(const SpdSolver& solver, const P1Field& p_h, double alpha,
                                   double c_adjoint) {
    const double ip = c_adjoint * c_adjoint * getoor_energy(alpha);
    const double val = ip - 2.0 * c_adjoint * integrate_p1(p_h) + solver.energy(p_h.coeffs);
    return std::sqrt(std::max(0.0, val));
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    int window = 0;
    double r_squared = 0.0;
};

inline RateFit slope_fit(const std::vector<double>& n_dofs, const std::vector<double>& values,
                         int window) {
    if (window < 4) throw std::invalid_argument("slope_fit: window >= 4 required");
    const int n = static_cast<int>(values.size());
    if (n < window || n_dofs.size() != values.size())
        throw std::invalid_argument("slope_fit: insufficient records");
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = n - window; i < n; ++i) {
        if (!(n_dofs[i] > 0.0) || !(values[i] > 0.0))
            throw std::invalid_argument("slope_fit: nonpositive data");
        const double x = std::log(n_dofs[i]);
        const double y = std::log(values[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double w = window;
    RateFit fit;
    fit.window = window;
    const double vx = sxx - sx * sx / w;
    const double cxy = sxy - sx * sy / w;
    const double vy = syy - sy * sy / w;
    fit.slope = cxy / vx;
    fit.intercept = (sy - fit.slope * sx) / w;
    fit.r_squared = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
    return fit;
}

inline RateFit slope_fit(const std::vector<ConvergenceRecord>& recs,
                         double ConvergenceRecord::*field, int window) {
    std::vector<double> n, v;
    for (const auto& r : recs) {
        n.push_back(r.n_dofs);
        v.push_back(r.*field);
    }
    return slope_fit(n, v, window);
}

// area-weighted fraction of quadrature points where the control vanishes
inline double zero_fraction(const LoadQuadrature& lq, const std::vector<double>& u_quad) {
    double zero = 0.0, total = 0.0;
    for (int i = 0; i < lq.n_points(); ++i) {
        total += lq.weights[i];
        if (u_quad[i] == 0.0) zero += lq.weights[i];
    }
    return zero / total;
}

// ---------------------------------------------------------------------------
// Experiment configuration and file outputs
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    int example = 1;
    double alpha = 0.5;
    double theta = 0.7;
    double gamma = 1.0;
    double beta = 1.0;
    double a_lo = -0.5;
    double b_hi = 0.5;
    double c_adjoint = 3.0;
    std::string marking = "dorfler";  // or "uniform"
    int max_dofs = 2000;
    int max_iters = 100;
    int n_boundary = 16;   // disk initial mesh
    int n_per_side = 4;    // square initial mesh
    std::string output_dir = "out";
    QuadratureConfig quad{};
    unsigned seed = 1;
    int slope_window = 6;

    void validate() const {
        if (example < 1 || example > 3)
            throw std::invalid_argument("ExperimentConfig: example must be 1, 2 or 3");
        if (marking != "dorfler" && marking != "uniform")
            throw std::invalid_argument("ExperimentConfig: marking must be dorfler|uniform");
        ocp_params().validate();
        quad.validate();
    }

    OcpParams ocp_params() const {
        OcpParams p;
        p.alpha = alpha;
        p.gamma = gamma;
        p.beta = beta;
        p.a_lo = a_lo;
        p.b_hi = b_hi;
        return p;
    }

    DomainSpec domain() const {
        return example == 1 ? DomainSpec::unit_disk(n_boundary) : DomainSpec::square(n_per_side);
    }
};

// key = value lines, '#' comments
inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "example") cfg.example = std::stoi(val);
            else if (key == "alpha") cfg.alpha = std::stod(val);
            else if (key == "theta") cfg.theta = std::stod(val);
            else if (key == "gamma") cfg.gamma = std::stod(val);
            else if (key == "beta") cfg.beta = std::stod(val);
            else if (key == "a_lo") cfg.a_lo = std::stod(val);
            else if (key == "b_hi") cfg.b_hi = std::stod(val);
            else if (key == "c_adjoint") cfg.c_adjoint = std::stod(val);
            else if (key == "marking") cfg.marking = val;
            else if (key == "max_dofs") cfg.max_dofs = std::stoi(val);
            else if (key == "max_iters") cfg.max_iters = std::stoi(val);
            else if (key == "n_boundary") cfg.n_boundary = std::stoi(val);
            else if (key == "n_per_side") cfg.n_per_side = std::stoi(val);
            else if (key == "output_dir") cfg.output_dir = val;
            else if (key == "far_order") cfg.quad.far_order = std::stoi(val);
            else if (key == "duffy_order") cfg.quad.duffy_order = std::stoi(val);
            else if (key == "grading_levels") cfg.quad.grading_levels = std::stoi(val);
            else if (key == "rho_grading") cfg.quad.rho_grading = std::stoi(val);
            else if (key == "seed") cfg.seed = static_cast<unsigned>(std::stoul(val));
            else if (key == "slope_window") cfg.slope_window = std::stoi(val);
            else throw std::invalid_argument("unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": bad value for '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

inline void write_history_csv(const std::string& path,
                              const std::vector<ConvergenceRecord>& recs) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "iter,n_dofs,E_y,E_p,E_ocp,err_y,err_p,effectivity,solver_iters,wall_ms\n";
    char buf[512];
    for (const auto& r : recs) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.10e,%.10e,%.10e,%.10e,%.10e,%.10e,%d,%.3f\n",
                      r.iteration, r.n_dofs, r.e_y, r.e_p, r.e_ocp, r.err_y, r.err_p,
                      r.effectivity, r.solver_iterations, r.wall_ms);
        os << buf;
    }
}

inline nlohmann::json solution_to_json(const OcpSolution& sol) {
    nlohmann::json j;
    j["y"] = std::vector<double>(sol.y.coeffs.data(), sol.y.coeffs.data() + sol.y.coeffs.size());
    j["p"] = std::vector<double>(sol.p.coeffs.data(), sol.p.coeffs.data() + sol.p.coeffs.size());
    j["u_quad"] = sol.u_quad;
    j["iterations"] = sol.iterations;
    j["final_residual"] = sol.final_residual;
    return j;
}

struct ExperimentResult {
    AfemResult afem;
    RateFit e_ocp_fit;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();

    OcpParams prm = cfg.ocp_params();
    ProblemData data;
    ErrorEvaluator errors;
    if (cfg.example == 1) {
        Example1 ex = example1_data(cfg.alpha, prm, cfg.c_adjoint);
        data = ex.data;
        const double alpha = cfg.alpha;
        const double c = cfg.c_adjoint;
        errors = [alpha, c](const TriMesh&, const SpdSolver& s, const OcpSolution& sol) {
            return std::make_pair(energy_error_state(s, sol.y, alpha),
                                  energy_error_adjoint(s, sol.p, alpha, c));
        };
    } else if (cfg.example == 2) {
        data = example2_data();
        prm.a_lo = -0.3;
        prm.b_hi = 0.3;
    } else {
        data = example3_data();
    }

    AfemConfig ac;
    ac.theta = cfg.theta;
    ac.max_dofs = cfg.max_dofs;
    ac.max_iters = cfg.max_iters;
    ac.marking = cfg.marking == "uniform" ? Marking::Uniform : Marking::Dorfler;
    ac.quad = cfg.quad;

    ExperimentResult res;
    res.afem = afem_loop(cfg.domain(), prm, data, ac, errors);

    const int w = std::min<int>(cfg.slope_window, static_cast<int>(res.afem.records.size()));
    if (w >= 4) res.e_ocp_fit = slope_fit(res.afem.records, &ConvergenceRecord::e_ocp, w);

    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    write_history_csv(cfg.output_dir + "/history.csv", res.afem.records);
    {
        std::ofstream os(cfg.output_dir + "/mesh.json");
        os << mesh_to_json(res.afem.mesh).dump(0) << "\n";
    }
    {
        std::ofstream os(cfg.output_dir + "/solution.json");
        os << solution_to_json(res.afem.solution).dump(0) << "\n";
    }
    {
        nlohmann::json j;
        j["example"] = cfg.example;
        j["alpha"] = cfg.alpha;
        j["theta"] = cfg.theta;
        j["gamma"] = cfg.gamma;
        j["beta"] = cfg.beta;
        j["marking"] = cfg.marking;
        j["n_records"] = res.afem.records.size();
        j["final_n_dofs"] = res.afem.records.empty() ? 0 : res.afem.records.back().n_dofs;
        if (res.e_ocp_fit.window >= 4) {
            j["e_ocp_slope"] = res.e_ocp_fit.slope;
            j["e_ocp_r_squared"] = res.e_ocp_fit.r_squared;
        }
        std::ofstream os(cfg.output_dir + "/summary.json");
        os << j.dump(2) << "\n";
    }
    return res;
}

}  // namespace focp

#endif
