#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <random>

#include "focp/assembly.hpp"
#include "oracle_common.hpp"

using namespace focp;

namespace {

// maximum deviation between two pair blocks, matching entries by global
// vertex id, normalized by the block scale
double block_maxrel(const PairBlock& blk, const std::array<int, 6>& ids, int usize,
                    const double m[6][6]) {
    double scale = 0.0;
    for (int i = 0; i < blk.union_size; ++i)
        for (int j = 0; j < blk.union_size; ++j) scale = std::max(scale, std::abs(blk.m[i][j]));
    REQUIRE(blk.union_size == usize);
    double maxrel = 0.0;
    for (int i = 0; i < blk.union_size; ++i)
        for (int j = 0; j < blk.union_size; ++j) {
            int oi = -1, oj = -1;
            for (int k = 0; k < usize; ++k) {
                if (ids[k] == blk.vertex_ids[i]) oi = k;
                if (ids[k] == blk.vertex_ids[j]) oj = k;
            }
            REQUIRE(oi >= 0);
            REQUIRE(oj >= 0);
            maxrel = std::max(maxrel,
                              std::abs(blk.m[i][j] - 0.5 * (m[oi][oj] + m[oj][oi])) / scale);
        }
    return maxrel;
}

int find_pair(const TriMesh& mesh, PairRelation want, double min_ratio = 0.0) {
    for (int a = 0; a < mesh.n_elements(); ++a)
        for (int b = a + 1; b < mesh.n_elements(); ++b)
            if (classify_pair(mesh, a, b) == want) {
                if (want == PairRelation::Disjoint) {
                    const double r = dist_tri_tri(mesh.tri(a), mesh.tri(b)) /
                                     std::max(mesh.tri(a).diameter(), mesh.tri(b).diameter());
                    if (r < min_ratio) continue;
                }
                return a * mesh.n_elements() + b;
            }
    FAIL("no pair of requested type");
    return -1;
}

}  // namespace

TEST_CASE("normalization constant", "[assembly]") {
    // closed forms: C(2,1) = 1/(2 pi), C(1,1) = 1/pi
    CHECK(normalization_constant(2, 1.0) == Catch::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-13));
    CHECK(normalization_constant(1, 1.0) == Catch::Approx(1.0 / M_PI).epsilon(1e-13));
    for (double a : {0.1, 0.5, 1.0, 1.5, 1.9}) CHECK(normalization_constant(2, a) > 0.0);
    CHECK_THROWS_AS(normalization_constant(2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(normalization_constant(2, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(normalization_constant(0, 1.0), std::invalid_argument);
    const auto p = FracKernelParams::make(0.75);
    CHECK(p.c_norm == Catch::Approx(normalization_constant(2, 0.75)).epsilon(1e-15));
}

TEST_CASE("complement weight on the disk", "[assembly]") {
    const DomainSpec disk = DomainSpec::unit_disk(16);
    QuadratureConfig quad;
    for (double alpha : {0.5, 1.0, 1.5}) {
        const auto prm = FracKernelParams::make(alpha);
        // exact: complement of the unit disk seen from the center
        CHECK(complement_weight(disk, Vec2{0, 0}, prm, quad) ==
              Catch::Approx(2.0 * M_PI / alpha).epsilon(1e-10));
        // singular growth toward the boundary
        CHECK(complement_weight(disk, Vec2{0.99, 0}, prm, quad) >
              complement_weight(disk, Vec2{0, 0}, prm, quad));
    }
    const auto prm = FracKernelParams::make(1.0);
    CHECK_THROWS_AS(complement_weight(disk, Vec2{1.0, 0.0}, prm, quad), std::invalid_argument);
    CHECK_THROWS_AS(complement_weight(disk, Vec2{1.5, 0.0}, prm, quad), std::invalid_argument);
}

TEST_CASE("complement weight on the square", "[assembly]") {
    const DomainSpec sq = DomainSpec::square(4);
    QuadratureConfig quad;
    // center, alpha = 1: four edge sectors of int cos(psi) dpsi -> 4 sqrt(2)
    const auto prm1 = FracKernelParams::make(1.0);
    CHECK(complement_weight(sq, Vec2{0, 0}, prm1, quad) ==
          Catch::Approx(4.0 * std::sqrt(2.0)).epsilon(1e-10));

    // off-center points against a dense uniform polar reference
    for (double alpha : {0.5, 1.0, 1.5}) {
        const auto prm = FracKernelParams::make(alpha);
        for (Vec2 x : {Vec2{0.3, -0.2}, Vec2{0.75, 0.6}}) {
            const auto& g = gauss_legendre_01(8);
            double ref = 0.0;
            const int npan = 2048;
            for (int p = 0; p < npan; ++p)
                for (std::size_t q = 0; q < g.x.size(); ++q) {
                    const double phi = 2.0 * M_PI * (p + g.x[q]) / npan;
                    const Vec2 e{std::cos(phi), std::sin(phi)};
                    // exit radius of the ray through the square boundary
                    double r = std::numeric_limits<double>::max();
                    if (e.x > 1e-15) r = std::min(r, (1.0 - x.x) / e.x);
                    if (e.x < -1e-15) r = std::min(r, (-1.0 - x.x) / e.x);
                    if (e.y > 1e-15) r = std::min(r, (1.0 - x.y) / e.y);
                    if (e.y < -1e-15) r = std::min(r, (-1.0 - x.y) / e.y);
                    ref += 2.0 * M_PI / npan * g.w[q] * std::pow(r, -alpha);
                }
            ref /= alpha;
            CHECK(complement_weight(sq, x, prm, quad) == Catch::Approx(ref).epsilon(1e-5));
        }
    }
    const auto prm = FracKernelParams::make(1.0);
    CHECK_THROWS_AS(complement_weight(sq, Vec2{1.0, 0.0}, prm, quad), std::invalid_argument);
}

TEST_CASE("pair integrals match independent references", "[assembly]") {
    const TriMesh mesh = make_initial_mesh(DomainSpec::square(2));
    QuadratureConfig quad;
    const int ne = mesh.n_elements();
    const int eid = find_pair(mesh, PairRelation::Edge);
    const int vid = find_pair(mesh, PairRelation::Vertex);
    const int did = find_pair(mesh, PairRelation::Disjoint);

    for (double alpha : {0.5, 1.0, 1.5}) {
        const auto prm = FracKernelParams::make(alpha);
        DYNAMIC_SECTION("alpha " << alpha) {
            oracle::PairOracle po;
            po.mesh = &mesh;
            po.alpha = alpha;
            po.depth = alpha > 1.0 ? 13 : 10;

            // identical: autocorrelation reference (exact radial integral)
            {
                const auto blk = pair_integral(mesh, 0, 0, PairRelation::Identical, prm, quad);
                double m[6][6];
                oracle::identical_pair_reference(mesh.tri(0), alpha, m);
                const std::array<int, 6> ids = {mesh.elements[0].vertex_ids[0],
                                                mesh.elements[0].vertex_ids[1],
                                                mesh.elements[0].vertex_ids[2], -1, -1, -1};
                CHECK(block_maxrel(blk, ids, 3, m) < 5e-7);
            }
            for (auto [code, tol, name] :
                 {std::tuple{eid, 3e-5, "edge"}, {vid, 1e-5, "vertex"}, {did, 1e-4, "disjoint"}}) {
                INFO(name);
                const int ka = code / ne, kb = code % ne;
                const auto rel = classify_pair(mesh, ka, kb);
                const auto blk = pair_integral(mesh, ka, kb, rel, prm, quad);
                double m[6][6];
                po.run(ka, kb, m);
                CHECK(block_maxrel(blk, po.uni, po.usize, m) < tol);
            }
        }
    }
}

TEST_CASE("pair integral structural properties", "[assembly]") {
    const TriMesh mesh = make_initial_mesh(DomainSpec::square(2));
    QuadratureConfig quad;
    const auto prm = FracKernelParams::make(0.8);
    const int ne = mesh.n_elements();

    for (PairRelation rel : {PairRelation::Identical, PairRelation::Edge, PairRelation::Vertex,
                             PairRelation::Disjoint}) {
        int ka = 0, kb = 0;
        if (rel != PairRelation::Identical) {
            const int code = find_pair(mesh, rel);
            ka = code / ne;
            kb = code % ne;
        }
        const auto blk = pair_integral(mesh, ka, kb, rel, prm, quad);
        double scale = 0.0, ones = 0.0;
        for (int i = 0; i < blk.union_size; ++i)
            for (int j = 0; j < blk.union_size; ++j) {
                scale = std::max(scale, std::abs(blk.m[i][j]));
                ones += blk.m[i][j];
            }
        REQUIRE(scale > 0.0);
        // constant functions have vanishing differences
        CHECK(std::abs(ones) < 1e-8 * scale);
        // block symmetry
        for (int i = 0; i < blk.union_size; ++i)
            for (int j = 0; j < blk.union_size; ++j)
                CHECK(blk.m[i][j] == Catch::Approx(blk.m[j][i]).margin(1e-12 * scale));

        // swapping the elements reproduces the same values per global id
        if (rel != PairRelation::Identical) {
            const auto swp = pair_integral(mesh, kb, ka, rel, prm, quad);
            for (int i = 0; i < blk.union_size; ++i)
                for (int j = 0; j < blk.union_size; ++j) {
                    int si = -1, sj = -1;
                    for (int k = 0; k < swp.union_size; ++k) {
                        if (swp.vertex_ids[k] == blk.vertex_ids[i]) si = k;
                        if (swp.vertex_ids[k] == blk.vertex_ids[j]) sj = k;
                    }
                    REQUIRE(si >= 0);
                    REQUIRE(sj >= 0);
                    CHECK(blk.m[i][j] == Catch::Approx(swp.m[si][sj]).margin(1e-10 * scale));
                }
        }
    }
}

TEST_CASE("far disjoint pair matches plain tensor Gauss at double order", "[assembly]") {
    const TriMesh mesh = make_initial_mesh(DomainSpec::square(16));
    QuadratureConfig quad;
    // a widely separated pair (corner cells of the square)
    const int ka = 0, kb = mesh.n_elements() - 1;
    REQUIRE(classify_pair(mesh, ka, kb) == PairRelation::Disjoint);
    const Tri s = mesh.tri(ka), t = mesh.tri(kb);
    REQUIRE(dist_tri_tri(s, t) / std::max(s.diameter(), t.diameter()) > 8.0);

    for (double alpha : {0.5, 1.5}) {
        const auto prm = FracKernelParams::make(alpha);
        const auto blk = pair_integral(mesh, ka, kb, PairRelation::Disjoint, prm, quad);
        // reference: plain tensor rule at double order, no subdivision
        const auto& r12 = triangle_rule(2 * quad.far_order);
        const double expo = -0.5 * (2.0 + alpha);
        double ref[6][6] = {};
        const double jac = 4.0 * s.area() * t.area();
        for (int qs = 0; qs < r12.size(); ++qs)
            for (int qt = 0; qt < r12.size(); ++qt) {
                const Vec2 xs = s.map(r12.r[qs], r12.s[qs]);
                const Vec2 xt = t.map(r12.r[qt], r12.s[qt]);
                const double k = jac * r12.w[qs] * r12.w[qt] *
                                 std::pow((xs - xt).dot(xs - xt), expo);
                const double hx[6] = {1.0 - r12.r[qs] - r12.s[qs], r12.r[qs], r12.s[qs], 0, 0, 0};
                const double hy[6] = {0, 0, 0, 1.0 - r12.r[qt] - r12.s[qt], r12.r[qt], r12.s[qt]};
                for (int a = 0; a < 6; ++a)
                    for (int b = 0; b < 6; ++b)
                        ref[a][b] += k * (hx[a] - hy[a]) * (hx[b] - hy[b]);
            }
        double scale = 0.0, maxdiff = 0.0;
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                scale = std::max(scale, std::abs(ref[i][j]));
                maxdiff = std::max(maxdiff, std::abs(blk.m[i][j] - ref[i][j]));
            }
        CHECK(maxdiff < 1e-6 * scale);
    }
}

TEST_CASE("assembled operator is symmetric positive definite", "[assembly]") {
    TriMesh mesh = make_initial_mesh(DomainSpec::square(2));
    mesh = bisect_marked(mesh, std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
    QuadratureConfig quad;
    for (double alpha : {0.5, 1.5}) {
        const auto prm = FracKernelParams::make(alpha);
        const SpdOperator A = assemble_stiffness(mesh, prm, quad);
        REQUIRE(A.n == mesh.n_dofs());
        CHECK(A.max_asymmetry() <= 1e-10 * A.entries.cwiseAbs().maxCoeff());
        const Eigen::MatrixXd sym = 0.5 * (A.entries + A.entries.transpose());
        Eigen::LLT<Eigen::MatrixXd> llt(sym);
        CHECK(llt.info() == Eigen::Success);
        std::mt19937 rng(7);
        std::normal_distribution<double> nd;
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::VectorXd v(A.n);
            for (int i = 0; i < A.n; ++i) v[i] = nd(rng);
            CHECK(v.dot(A.entries * v) > 0.0);
        }
    }
}

TEST_CASE("assembled entries match the oracle on the small square mesh", "[assembly]") {
    const TriMesh mesh = make_initial_mesh(DomainSpec::square(2));
    QuadratureConfig quad;
    for (double alpha : {0.5, 1.5}) {
        const auto prm = FracKernelParams::make(alpha);
        const SpdOperator A = assemble_stiffness(mesh, prm, quad);
        const Eigen::MatrixXd R = oracle::stiffness_oracle(mesh, prm, quad, alpha > 1.0 ? 12 : 10);
        REQUIRE(A.n == 1);
        CHECK(std::abs(A.entries(0, 0) - R(0, 0)) < 1e-4 * std::abs(R(0, 0)));
    }
}

TEST_CASE("galerkin nesting of the energy", "[assembly]") {
    const TriMesh coarse = make_initial_mesh(DomainSpec::square(3));
    TriMesh fine = coarse;
    for (int s = 0; s < 2; ++s) {
        std::vector<int> all(fine.n_elements());
        for (int k = 0; k < fine.n_elements(); ++k) all[k] = k;
        fine = bisect_marked(fine, all);
    }
    QuadratureConfig quad;
    const auto prm = FracKernelParams::make(0.5);
    const SpdOperator Ah = assemble_stiffness(coarse, prm, quad);
    const SpdOperator Af = assemble_stiffness(fine, prm, quad);

    Eigen::VectorXd v(Ah.n);
    for (int i = 0; i < Ah.n; ++i) v[i] = std::sin(1.0 + i);
    // exact P1 prolongation: evaluate the coarse function at fine vertices
    const auto& cdof = coarse.dof_index();
    Eigen::VectorXd vf = Eigen::VectorXd::Zero(Af.n);
    const auto& fdof = fine.dof_index();
    for (int fv = 0; fv < fine.n_vertices(); ++fv) {
        if (fdof[fv] < 0) continue;
        const Vec2 p = fine.vertices[fv].pos();
        const int k = locate(coarse, p);
        const auto b = coarse.tri(k).barycentric(p);
        double val = 0.0;
        for (int i = 0; i < 3; ++i) {
            const int cv = coarse.elements[k].vertex_ids[i];
            if (cdof[cv] >= 0) val += b[i] * v[cdof[cv]];
        }
        vf[fdof[fv]] = val;
    }
    const double eh = v.dot(Ah.entries * v);
    const double ef = vf.dot(Af.entries * vf);
    CHECK(ef == Catch::Approx(eh).epsilon(1e-3));
}

TEST_CASE("quadrature order doubling is converged", "[assembly]") {
    TriMesh mesh = make_initial_mesh(DomainSpec::square(2));
    mesh = bisect_marked(mesh, std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
    QuadratureConfig lo, hi;
    hi.far_order = 2 * lo.far_order;
    hi.duffy_order = 2 * lo.duffy_order;
    hi.grading_levels = 2 * lo.grading_levels;
    hi.rho_grading = 2 * lo.rho_grading;
    for (double alpha : {0.5, 1.5}) {
        const auto prm = FracKernelParams::make(alpha);
        const SpdOperator A = assemble_stiffness(mesh, prm, lo);
        const SpdOperator B = assemble_stiffness(mesh, prm, hi);
        const double scale = A.entries.cwiseAbs().maxCoeff();
        CHECK((A.entries - B.entries).cwiseAbs().maxCoeff() < 1e-4 * scale);
    }
}

TEST_CASE("load vector", "[assembly]") {
    TriMesh mesh = make_initial_mesh(DomainSpec::square(2));
    mesh = bisect_marked(mesh, std::vector<int>{0, 3});

    const auto zero = assemble_load(mesh, [](const Vec2&) { return 0.0; });
    CHECK(zero.norm() == 0.0);

    // g = 1: b_i = |star(i)| / 3 exactly
    const auto ones = assemble_load(mesh, [](const Vec2&) { return 1.0; });
    const auto& stars = mesh.vertex_stars();
    const auto& dof = mesh.dof_index();
    for (int v = 0; v < mesh.n_vertices(); ++v) {
        if (dof[v] < 0) continue;
        double star_area = 0.0;
        for (int k : stars[v]) star_area += mesh.tri(k).area();
        CHECK(ones[dof[v]] == Catch::Approx(star_area / 3.0).epsilon(1e-13));
    }

    // polynomial integrand: order-7 rule already exact, so it matches order 12
    const auto g = [](const Vec2& p) { return 1.0 + p.x * p.x * p.y - 2.0 * p.y * p.y; };
    const auto b7 = assemble_load(mesh, g, 7);
    const auto b12 = assemble_load(mesh, g, 12);
    CHECK((b7 - b12).cwiseAbs().maxCoeff() < 1e-14);

    CHECK_THROWS_AS(
        assemble_load(mesh, [](const Vec2&) { return std::numeric_limits<double>::quiet_NaN(); }),
        std::runtime_error);
}

TEST_CASE("operator binary dump", "[assembly]") {
    TriMesh mesh = make_initial_mesh(DomainSpec::square(2));
    mesh = bisect_marked(mesh, std::vector<int>{0});
    QuadratureConfig quad;
    const SpdOperator A = assemble_stiffness(mesh, FracKernelParams::make(0.5), quad);
    const std::string path = "/tmp/focp_test_matrix.bin";
    A.write_binary(path);
    std::FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f != nullptr);
    std::uint64_t n = 0;
    REQUIRE(std::fread(&n, sizeof n, 1, f) == 1);
    CHECK(n == static_cast<std::uint64_t>(A.n));
    std::vector<double> vals(n * n);
    REQUIRE(std::fread(vals.data(), sizeof(double), vals.size(), f) == vals.size());
    std::fclose(f);
    double maxdiff = 0.0;
    for (std::uint64_t i = 0; i < n; ++i)
        for (std::uint64_t j = 0; j < n; ++j)
            maxdiff = std::max(maxdiff, std::abs(vals[i * n + j] - A.entries(i, j)));
    CHECK(maxdiff == 0.0);
    std::remove(path.c_str());
}
