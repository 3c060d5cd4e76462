#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>

#include "focp/afem.hpp"
#include "focp/harness.hpp"

using namespace focp;

TEST_CASE("bulk marking on a known sequence", "[afem]") {
    // total 10, theta*total = 5: the greedy picks 4 then 3 and stops
    const std::vector<double> eta = {4.0, 3.0, 2.0, 1.0};
    const auto marked = dorfler_mark(eta, 0.5);
    CHECK(marked == std::vector<int>{0, 1});

    // theta = 1 marks everything
    CHECK(dorfler_mark(eta, 1.0).size() == 4);

    // ties broken toward the lower element id
    const std::vector<double> flat = {2.0, 2.0, 2.0, 2.0};
    CHECK(dorfler_mark(flat, 0.4) == std::vector<int>{0, 1});
}

TEST_CASE("bulk marking minimality certificate", "[afem]") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> eta(50);
        for (auto& v : eta) v = ud(rng) * ud(rng);
        const double theta = 0.2 + 0.6 * ud(rng);
        const auto marked = dorfler_mark(eta, theta);
        const double total = std::accumulate(eta.begin(), eta.end(), 0.0);

        double acc = 0.0;
        for (int k : marked) acc += eta[k];
        CHECK(acc >= theta * total - 1e-12);

        // no smaller set can satisfy the bulk criterion: the sum of the
        // largest |M|-1 indicators falls short
        std::vector<double> sorted = eta;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        double best = 0.0;
        for (std::size_t i = 0; i + 1 < marked.size(); ++i) best += sorted[i];
        CHECK(best < theta * total);
    }
}

TEST_CASE("bulk marking input validation", "[afem]") {
    CHECK_THROWS_AS(dorfler_mark({1.0, 2.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(dorfler_mark({1.0, 2.0}, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(dorfler_mark({1.0, -0.1}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(dorfler_mark({0.0, 0.0}, 0.5), std::invalid_argument);
}

TEST_CASE("loop configuration validation", "[afem]") {
    AfemConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.theta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = AfemConfig{};
    cfg.max_dofs = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = AfemConfig{};
    cfg.max_iters = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

namespace {

AfemResult small_run(Marking marking, int max_dofs, int max_iters,
                     const IterationObserver& obs = {}) {
    OcpParams prm;
    prm.alpha = 0.5;
    prm.gamma = 1.0;
    prm.beta = 0.5;
    AfemConfig cfg;
    cfg.theta = 0.5;
    cfg.max_dofs = max_dofs;
    cfg.max_iters = max_iters;
    cfg.marking = marking;
    const ProblemData data{[](const Vec2&) { return -6.0; }, [](const Vec2&) { return 1.0; }};
    return afem_loop(DomainSpec::square(2), prm, data, cfg, {}, obs);
}

}  // namespace

TEST_CASE("adaptive loop bookkeeping and determinism", "[afem]") {
    int calls = 0;
    bool saw_final = false;
    std::vector<int> dofs_seen;
    const AfemResult res = small_run(Marking::Dorfler, 60, 20, [&](const IterationInfo& info) {
        CHECK(info.iteration == calls);
        REQUIRE(info.mesh != nullptr);
        REQUIRE(info.solution != nullptr);
        REQUIRE(info.estimator != nullptr);
        REQUIRE(info.record != nullptr);
        CHECK(info.record->n_dofs == info.mesh->n_dofs());
        CHECK(conformity_check(*info.mesh));
        if (info.marked == nullptr) {
            saw_final = true;
        } else {
            CHECK(!info.marked->empty());
        }
        dofs_seen.push_back(info.mesh->n_dofs());
        ++calls;
    });
    CHECK(saw_final);
    CHECK(calls == static_cast<int>(res.records.size()));
    CHECK(res.records.back().n_dofs >= 60);
    // bisecting only boundary edges adds boundary vertices, so the interior
    // dof count grows monotonically but not necessarily strictly
    for (std::size_t i = 1; i < dofs_seen.size(); ++i) CHECK(dofs_seen[i] >= dofs_seen[i - 1]);
    CHECK(dofs_seen.back() > dofs_seen.front());
    for (const auto& r : res.records) {
        CHECK(r.e_ocp > 0.0);
        CHECK(std::abs(r.e_ocp * r.e_ocp - (r.e_y * r.e_y + r.e_p * r.e_p)) <
              1e-12 * r.e_ocp * r.e_ocp);
    }

    // a second identical run reproduces the history bitwise
    const AfemResult res2 = small_run(Marking::Dorfler, 60, 20);
    REQUIRE(res2.records.size() == res.records.size());
    for (std::size_t i = 0; i < res.records.size(); ++i) {
        CHECK(res2.records[i].n_dofs == res.records[i].n_dofs);
        CHECK(res2.records[i].e_ocp == res.records[i].e_ocp);
    }
}

TEST_CASE("uniform marking quarters element areas per sweep", "[afem]") {
    std::vector<int> nel;
    small_run(Marking::Uniform, 40, 3,
              [&](const IterationInfo& info) { nel.push_back(info.mesh->n_elements()); });
    REQUIRE(nel.size() >= 2);
    for (std::size_t i = 1; i < nel.size(); ++i) CHECK(nel[i] == 4 * nel[i - 1]);
}

TEST_CASE("iteration cap zero solves the initial mesh only", "[afem]") {
    const AfemResult res = small_run(Marking::Dorfler, 10000, 0);
    CHECK(res.records.size() == 1);
    CHECK(res.mesh.n_elements() == 8);
}
