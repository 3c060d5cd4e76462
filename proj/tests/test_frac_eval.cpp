#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "focp/frac_eval.hpp"
#include "oracle_common.hpp"

using namespace focp;

namespace {

TriMesh refined_square(int n_per_side, int sweeps) {
    TriMesh m = make_initial_mesh(DomainSpec::square(n_per_side));
    for (int s = 0; s < sweeps; ++s) {
        std::vector<int> all(m.n_elements());
        for (int k = 0; k < m.n_elements(); ++k) all[k] = k;
        m = bisect_marked(m, all);
    }
    return m;
}

P1Field hat_field(const TriMesh& mesh, int interior_rank) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(mesh.n_dofs());
    c[interior_rank] = 1.0;
    return P1Field::from_coeffs(mesh, c);
}

}  // namespace

TEST_CASE("p1 field basics", "[frac_eval]") {
    const TriMesh mesh = refined_square(2, 1);
    CHECK_THROWS_AS(P1Field::from_coeffs(mesh, Eigen::VectorXd::Zero(mesh.n_dofs() + 1)),
                    std::invalid_argument);
    const P1Field f = hat_field(mesh, 0);
    const int v = mesh.interior_vertices()[0];
    // nodal interpolation: 1 at its vertex, 0 at the others
    const int k = mesh.vertex_stars()[v][0];
    CHECK(f.value(k, mesh.vertices[v].pos()) == Catch::Approx(1.0).epsilon(1e-13));
    for (int i : mesh.elements[k].vertex_ids)
        if (i != v) CHECK(std::abs(f.value(k, mesh.vertices[i].pos())) < 1e-13);
}

TEST_CASE("zero field evaluates to zero", "[frac_eval]") {
    const TriMesh mesh = refined_square(2, 2);
    const P1Field z = P1Field::from_coeffs(mesh, Eigen::VectorXd::Zero(mesh.n_dofs()));
    QuadratureConfig quad;
    const auto prm = FracKernelParams::make(0.7);
    CHECK(frac_laplacian_pointwise(z, 0, mesh.tri(0).centroid(), prm, quad) == 0.0);
}

TEST_CASE("sign away from the support", "[frac_eval]") {
    const TriMesh mesh = refined_square(4, 2);
    const P1Field f = hat_field(mesh, 0);
    QuadratureConfig quad;
    const auto prm = FracKernelParams::make(0.8);
    const int vstar = mesh.interior_vertices()[0];
    // an element far from the hat's star
    int far = -1;
    for (int k = mesh.n_elements() - 1; k >= 0; --k) {
        bool touches = false;
        for (int i : mesh.elements[k].vertex_ids)
            if (i == vstar) touches = true;
        const double d = (mesh.tri(k).centroid() - mesh.vertices[vstar].pos()).norm();
        if (!touches && d > 0.8) {
            far = k;
            break;
        }
    }
    REQUIRE(far >= 0);
    CHECK(frac_laplacian_pointwise(f, far, mesh.tri(far).centroid(), prm, quad) < 0.0);
}

TEST_CASE("pointwise evaluation matches the regularized polar oracle", "[frac_eval]") {
    const TriMesh mesh = refined_square(4, 2);
    const P1Field f = hat_field(mesh, mesh.n_dofs() / 2);
    QuadratureConfig quad;
    for (double alpha : {0.5, 1.0, 1.5}) {
        DYNAMIC_SECTION("alpha " << alpha) {
            const auto prm = FracKernelParams::make(alpha);
            for (int trial = 0; trial < 10; ++trial) {
                const int k = (trial * 37) % mesh.n_elements();
                const Vec2 x = mesh.tri(k).map(0.3 + 0.03 * trial, 0.25);
                const double prod = frac_laplacian_pointwise(f, k, x, prm, quad);
                const double orac = oracle::frac_lap_oracle(f, k, x, alpha, prm.c_norm, 0.5);
                const double orac_half = oracle::frac_lap_oracle(f, k, x, alpha, prm.c_norm, 0.25);
                const double scale = std::max(std::abs(orac), 1e-12);
                INFO("element " << k);
                CHECK(std::abs(prod - orac) < 1e-4 * scale);
                // the regularization radius cancels analytically
                CHECK(std::abs(orac - orac_half) < 1e-10 * scale);
                CHECK(std::abs(prod - orac_half) < 1e-4 * scale);
            }
        }
    }
}

TEST_CASE("delta independence of the pointwise value", "[frac_eval]") {
    // the production formula carries no regularization radius at all: repeated
    // evaluation is bitwise identical, and the oracle agrees across radii
    const TriMesh mesh = refined_square(4, 1);
    const P1Field f = hat_field(mesh, 0);
    QuadratureConfig quad;
    const auto prm = FracKernelParams::make(1.3);
    const int k = mesh.n_elements() / 2;
    const Vec2 x = mesh.tri(k).centroid();
    const double a = frac_laplacian_pointwise(f, k, x, prm, quad);
    const double b = frac_laplacian_pointwise(f, k, x, prm, quad);
    CHECK(a == b);
    for (double df : {0.5, 0.25, 0.125}) {
        const double orac = oracle::frac_lap_oracle(f, k, x, prm.alpha, prm.c_norm, df);
        CHECK(std::abs(a - orac) < 1e-5 * std::abs(orac));
    }
}

TEST_CASE("linearity in the coefficients", "[frac_eval]") {
    const TriMesh mesh = refined_square(2, 2);
    QuadratureConfig quad;
    const auto prm = FracKernelParams::make(0.9);
    Eigen::VectorXd cu(mesh.n_dofs()), cw(mesh.n_dofs());
    for (int i = 0; i < mesh.n_dofs(); ++i) {
        cu[i] = std::sin(1.0 + 2.0 * i);
        cw[i] = std::cos(0.5 + 3.0 * i);
    }
    const double a = 1.7, b = -0.6;
    const P1Field u = P1Field::from_coeffs(mesh, cu);
    const P1Field w = P1Field::from_coeffs(mesh, cw);
    const P1Field uw = P1Field::from_coeffs(mesh, a * cu + b * cw);

    FracEvaluator ev(mesh, prm, quad);
    ev.set_fields({&u, &w, &uw});
    for (int k = 0; k < mesh.n_elements(); k += 7) {
        const Vec2 x = mesh.tri(k).map(0.4, 0.3);
        double out[3];
        ev.evaluate(k, x, out);
        const double scale = std::max({std::abs(out[0]), std::abs(out[1]), 1.0});
        CHECK(std::abs(out[2] - (a * out[0] + b * out[1])) < 1e-12 * scale);
    }
}

TEST_CASE("weak-form consistency with assembly", "[frac_eval]") {
    const TriMesh mesh = refined_square(2, 3);
    QuadratureConfig quad;
    const auto prm = FracKernelParams::make(0.5);
    const SpdOperator A = assemble_stiffness(mesh, prm, quad);

    Eigen::VectorXd cu(mesh.n_dofs()), cw(mesh.n_dofs());
    for (int i = 0; i < mesh.n_dofs(); ++i) {
        cu[i] = std::sin(0.3 + 1.3 * i);
        cw[i] = std::cos(0.9 + 0.7 * i);
    }
    const P1Field u = P1Field::from_coeffs(mesh, cu);
    const P1Field w = P1Field::from_coeffs(mesh, cw);

    FracEvaluator ev(mesh, prm, quad);
    ev.set_fields({&u});
    const auto& rule = triangle_rule(7);
    // the pointwise Laplacian of a P1 field is singular along element edges,
    // so the outer integral needs subdivided cells to resolve that mass
    double acc = 0.0;
    for (int k = 0; k < mesh.n_elements(); ++k) {
        std::vector<Tri> cells{mesh.tri(k)};
        for (int lev = 0; lev < 2; ++lev) {
            std::vector<Tri> next;
            for (const Tri& c : cells) {
                Tri kids[4];
                detail::subdivide4(c, kids);
                for (int j = 0; j < 4; ++j) next.push_back(kids[j]);
            }
            cells.swap(next);
        }
        for (const Tri& c : cells) {
            const double jac = 2.0 * c.area();
            for (int q = 0; q < rule.size(); ++q) {
                const Vec2 x = c.map(rule.r[q], rule.s[q]);
                double fl = 0.0;
                ev.evaluate(k, x, &fl);
                acc += jac * rule.w[q] * w.value(k, x) * fl;
            }
        }
    }
    const double exact = cu.dot(A.entries * cw);
    CHECK(acc == Catch::Approx(exact).epsilon(0.01));
}

TEST_CASE("evaluator input validation", "[frac_eval]") {
    const TriMesh mesh = refined_square(2, 1);
    const TriMesh other = refined_square(2, 1);
    QuadratureConfig quad;
    const auto prm = FracKernelParams::make(1.1);
    const P1Field f = hat_field(mesh, 0);
    const P1Field g = hat_field(other, 0);

    FracEvaluator ev(mesh, prm, quad);
    CHECK_THROWS_AS(ev.set_fields({&g}), std::invalid_argument);
    ev.set_fields({&f});
    double out = 0.0;
    // on an element vertex / outside the element
    CHECK_THROWS_AS(ev.evaluate(0, mesh.tri(0).v[0], &out), std::invalid_argument);
    CHECK_THROWS_AS(ev.evaluate(0, mesh.tri(0).v[0] + Vec2{100.0, 100.0}, &out),
                    std::invalid_argument);
}
