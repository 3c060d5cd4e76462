#ifndef FOCP_QUADRATURE_HPP
#define FOCP_QUADRATURE_HPP

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "focp/geometry.hpp"

namespace focp {

// Tuning knobs for the nonlocal quadrature. All counts must be >= 1.
struct QuadratureConfig {
    int far_order = 7;       // triangle rule size for disjoint element pairs
    int duffy_order = 4;     // tensor Gauss order inside the singular transforms
    int grading_levels = 3;  // subdivision depth toward singularities
    int rho_grading = 4;     // angular grading toward the domain boundary

    void validate() const {
        if (far_order < 1 || duffy_order < 1 || grading_levels < 1 || rho_grading < 1)
            throw std::invalid_argument("QuadratureConfig: all orders must be >= 1");
    }
};

// Gauss-Legendre nodes/weights on [0,1].
struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};

inline const GaussRule& gauss_legendre_01(int n) {
    static std::map<int, GaussRule> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    if (n < 1) throw std::invalid_argument("gauss_legendre_01: n >= 1 required");

    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
        // Newton iteration on P_n, Chebyshev initial guess
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it2 = 0; it2 < 100; ++it2) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (t * p1 - p0) / (t * t - 1.0);
            const double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        const double dp = n * (t * p1 - p0) / (t * t - 1.0);
        r.x[i] = 0.5 * (1.0 - t);  // map [-1,1] -> [0,1], ascending
        r.w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    return cache.emplace(n, std::move(r)).first->second;
}

// Symmetric rules on the reference triangle (0,0),(1,0),(0,1).
// Weights sum to 1/2 (the reference area); all points are interior.
struct TriRule {
    std::vector<double> r, s, w;
    int size() const { return static_cast<int>(w.size()); }
};

namespace detail {

inline void push_perm3(TriRule& q, double a, double w) {
    // three permutations of (a, a, 1-2a) barycentric
    const double b = 1.0 - 2.0 * a;
    q.r.insert(q.r.end(), {a, b, a});
    q.s.insert(q.s.end(), {a, a, b});
    q.w.insert(q.w.end(), {w, w, w});
}

inline void push_perm6(TriRule& q, double a, double b, double w) {
    const double c = 1.0 - a - b;
    const double rr[6] = {a, a, b, b, c, c};
    const double ss[6] = {b, c, a, c, a, b};
    for (int i = 0; i < 6; ++i) {
        q.r.push_back(rr[i]);
        q.s.push_back(ss[i]);
        q.w.push_back(w);
    }
}

inline TriRule make_tri_rule(int n) {
    TriRule q;
    switch (n) {
        case 1:
            q.r = {1.0 / 3.0};
            q.s = {1.0 / 3.0};
            q.w = {0.5};
            break;
        case 3:
            push_perm3(q, 1.0 / 6.0, 1.0 / 6.0);
            break;
        case 6:
            push_perm3(q, 0.445948490915965, 0.111690794839006);
            push_perm3(q, 0.091576213509771, 0.054975871827661);
            break;
        case 7:
            q.r = {1.0 / 3.0};
            q.s = {1.0 / 3.0};
            q.w = {0.1125};
            push_perm3(q, 0.470142064105115, 0.066197076394253);
            push_perm3(q, 0.101286507323456, 0.062969590272414);
            break;
        case 12:
            push_perm3(q, 0.063089014491502, 0.025422453185103);
            push_perm3(q, 0.249286745170910, 0.058393137863189);
            push_perm6(q, 0.310352451033785, 0.053145049844816, 0.041425537809187);
            break;
        default:
            throw std::invalid_argument("triangle_rule: supported sizes are 1,3,6,7,12");
    }
    return q;
}

}  // namespace detail

inline const TriRule& triangle_rule(int n) {
    static std::map<int, TriRule> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    // snap unsupported requests to the next supported size
    int pick = n;
    if (pick != 1 && pick != 3 && pick != 6 && pick != 7 && pick != 12) {
        if (pick < 3)
            pick = 1;
        else if (pick < 6)
            pick = 3;
        else if (pick == 6)
            pick = 6;
        else if (pick <= 9)
            pick = 7;
        else
            pick = 12;
    }
    auto it2 = cache.find(pick);
    if (it2 == cache.end()) it2 = cache.emplace(pick, detail::make_tri_rule(pick)).first;
    if (pick != n) cache.emplace(n, it2->second);
    return cache.at(n);
}

}  // namespace focp

#endif
