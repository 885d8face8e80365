#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sshape/common.hpp"

namespace sshape {

// Relative prior variances alpha_M(m) on spline coefficients, m = 1..M.
// Zero weight means the coefficient is pinned to zero exactly.
struct WindowWeights {
    int basis_count = 0;
    Eigen::VectorXd weights;  // size M, entries in [0, 1]

    // 0-based indices m with weights[m] > 0.
    std::vector<int> free_indices() const {
        std::vector<int> idx;
        for (int m = 0; m < basis_count; ++m)
            if (weights[m] > 0.0) idx.push_back(m);
        return idx;
    }
};

// Planck-taper window: zero on the two coefficients at each boundary, a
// smooth rise over the first tenth of the interior indices, flat at one in
// the middle, and mirrored on the upper half.
inline WindowWeights planck_taper_window(int basis_count) {
    require(basis_count >= 8, ErrorClass::Config,
            "Planck-taper window needs a basis count of at least 8");
    const int m_interior = basis_count - 4;
    WindowWeights w;
    w.basis_count = basis_count;
    w.weights = Eigen::VectorXd::Zero(basis_count);
    for (int m = 1; m <= basis_count; ++m) {
        int mp = m - 2;
        if (2 * mp > m_interior + 1) mp = m_interior + 1 - mp;  // mirror
        double value;
        if (mp <= 0) {
            value = 0.0;
        } else if (mp < 0.1 * m_interior) {
            const double rise = 0.1 * m_interior / mp -
                                0.1 * m_interior / (m_interior - mp);
            value = 1.0 / (1.0 + std::exp(rise));
        } else {
            value = 1.0;
        }
        w.weights[m - 1] = value;
    }
    return w;
}

// All-ones window: no pinned coefficients, plain ridge on every coordinate.
inline WindowWeights uniform_window(int basis_count) {
    require(basis_count >= 1, ErrorClass::Config, "basis count must be positive");
    WindowWeights w;
    w.basis_count = basis_count;
    w.weights = Eigen::VectorXd::Ones(basis_count);
    return w;
}

// Precision matrix of the coefficient prior on the free (unpinned)
// coordinates: first-difference smoothness over the full coefficient chain
// (pinned entries contributing zeros) plus the windowed ridge. The quadratic
// form gamma' Q gamma on free coordinates reproduces
//   (1/s2_smooth) sum_{m=2}^{M} (g_m - g_{m-1})^2
//   + (1/s2_mag) sum_{free m} g_m^2 / alpha(m).
struct PriorPrecision {
    Eigen::MatrixXd matrix;         // F x F, symmetric positive definite
    std::vector<int> free_indices;  // 0-based into the full coefficient vector
    double s2_smooth = 0.0;
    double s2_mag = 0.0;

    double quadratic_form(const Eigen::VectorXd& gamma_free) const {
        return gamma_free.dot(matrix * gamma_free);
    }
};

inline PriorPrecision build_prior_precision(double s2_smooth, double s2_mag,
                                            const WindowWeights& window) {
    require(s2_smooth > 0 && s2_mag > 0, ErrorClass::Config,
            "prior variances must be positive");
    const int m_total = window.basis_count;
    Eigen::MatrixXd smooth = Eigen::MatrixXd::Zero(m_total, m_total);
    for (int m = 1; m < m_total; ++m) {
        smooth(m, m) += 1.0;
        smooth(m - 1, m - 1) += 1.0;
        smooth(m, m - 1) -= 1.0;
        smooth(m - 1, m) -= 1.0;
    }
    PriorPrecision q;
    q.free_indices = window.free_indices();
    q.s2_smooth = s2_smooth;
    q.s2_mag = s2_mag;
    const int f = static_cast<int>(q.free_indices.size());
    q.matrix = Eigen::MatrixXd::Zero(f, f);
    for (int a = 0; a < f; ++a)
        for (int b = 0; b < f; ++b)
            q.matrix(a, b) = smooth(q.free_indices[a], q.free_indices[b]) / s2_smooth;
    for (int a = 0; a < f; ++a)
        q.matrix(a, a) += 1.0 / (window.weights[q.free_indices[a]] * s2_mag);
    return q;
}

// Membership in the up-then-down cone with peak index m_star (1-based):
// 0 <= g_1 <= ... <= g_{m*} >= ... >= g_M >= 0, all non-strict.
inline bool region_membership(const Eigen::VectorXd& gamma, int m_star) {
    const int m_total = static_cast<int>(gamma.size());
    require(m_star >= 1 && m_star <= m_total, ErrorClass::Config,
            "inflection index out of range");
    if (gamma[0] < 0.0 || gamma[m_total - 1] < 0.0) return false;
    for (int m = 1; m < m_star; ++m)
        if (gamma[m] < gamma[m - 1]) return false;
    for (int m = m_star; m < m_total; ++m)
        if (gamma[m] > gamma[m - 1]) return false;
    return true;
}

// Linear-inequality description of the cone on the free coordinates. The
// rows of `cone` are the chain differences with implicit zeros at both ends
// (pinned neighbors), oriented so that membership is exactly cone * g >= 0.
// The cone has F+1 facets in F dimensions, so one row beyond square; the
// first F rows form an invertible map onto the difference coordinates.
struct ConstraintRegion {
    int m_star = 0;  // 1-based peak index in the full coefficient vector
    int basis_count = 0;
    std::vector<int> free_indices;
    Eigen::MatrixXd cone;  // (F+1) x F

    bool contains_free(const Eigen::VectorXd& gamma_free) const {
        return ((cone * gamma_free).array() >= 0.0).all();
    }

    // Strictly feasible witness: a unit-height ramp peaked at m_star.
    Eigen::VectorXd interior_point() const {
        const int f = static_cast<int>(free_indices.size());
        Eigen::VectorXd g(f);
        int peak = 0;
        for (int a = 0; a < f; ++a)
            if (free_indices[a] == m_star - 1) peak = a;
        for (int a = 0; a < f; ++a) {
            if (a <= peak)
                g[a] = static_cast<double>(a + 1) / (peak + 1);
            else
                g[a] = static_cast<double>(f - a) / (f - peak);
        }
        return g;
    }
};

inline ConstraintRegion cone_to_orthant(int m_star, const WindowWeights& window) {
    const int m_total = window.basis_count;
    ConstraintRegion region;
    region.m_star = m_star;
    region.basis_count = m_total;
    region.free_indices = window.free_indices();
    const int f = static_cast<int>(region.free_indices.size());
    require(f >= 1, ErrorClass::Config, "no free coefficients");
    int peak = -1;
    for (int a = 0; a < f; ++a)
        if (region.free_indices[a] == m_star - 1) peak = a;
    require(peak >= 0, ErrorClass::Config,
            "inflection index " + std::to_string(m_star) +
                " is not a free coefficient");
    region.cone = Eigen::MatrixXd::Zero(f + 1, f);
    for (int a = 0; a <= peak; ++a) {  // rising differences, implicit g_0 = 0
        region.cone(a, a) = 1.0;
        if (a > 0) region.cone(a, a - 1) = -1.0;
    }
    for (int a = peak + 1; a < f; ++a) {  // falling differences
        region.cone(a, a - 1) = 1.0;
        region.cone(a, a) = -1.0;
    }
    region.cone(f, f - 1) = 1.0;  // trailing nonnegativity, implicit g_{F+1} = 0
    return region;
}

inline ConstraintRegion cone_to_orthant(int m_star, int basis_count) {
    require(m_star >= 3 && m_star <= basis_count - 2, ErrorClass::Config,
            "inflection index must lie in {3, ..., M-2}");
    return cone_to_orthant(m_star, planck_taper_window(basis_count));
}

// Admissible inflection indices once the boundary coefficients are pinned.
inline std::vector<int> inflection_support(int basis_count) {
    std::vector<int> out;
    for (int m = 3; m <= basis_count - 2; ++m) out.push_back(m);
    return out;
}

}  // namespace sshape
