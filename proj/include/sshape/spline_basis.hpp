#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sshape/common.hpp"
#include "sshape/math_util.hpp"

namespace sshape {

// Quadratic B-spline basis of size M on [L, U] with M-1 public knots.
// Boundary knots are internally tripled so that the two leftmost and two
// rightmost bases have nonzero one-sided derivatives at L and U, basis m
// (1-based, 3 <= m <= M-2) is supported on [knot_{m-2}, knot_{m+1}], and
// the basis forms a partition of unity on [L, U].
class BasisSpec {
  public:
    BasisSpec(int basis_count, std::vector<double> knots)
        : M_(basis_count), knots_(std::move(knots)) {
        require(M_ >= 6, ErrorClass::Config, "basis count must be at least 6");
        require(static_cast<int>(knots_.size()) == M_ - 1, ErrorClass::Config,
                "expected M-1 knots, got " + std::to_string(knots_.size()));
        for (std::size_t j = 0; j + 1 < knots_.size(); ++j)
            require(knots_[j] < knots_[j + 1], ErrorClass::Config,
                    "knots must be strictly increasing");
        padded_.assign(2, knots_.front());
        padded_.insert(padded_.end(), knots_.begin(), knots_.end());
        padded_.insert(padded_.end(), 2, knots_.back());
        build_integral_table();
    }

    int basis_count() const { return M_; }
    double lower() const { return knots_.front(); }
    double upper() const { return knots_.back(); }
    const std::vector<double>& knots() const { return knots_; }

    // All M basis values at t; throws outside [L, U].
    Eigen::VectorXd bspline(double t) const {
        require(t >= lower() && t <= upper(), ErrorClass::Numeric,
                "B-spline evaluation outside [L, U]");
        Eigen::VectorXd out = Eigen::VectorXd::Zero(M_);
        double n0, n1, n2;
        const int span = local_bspline(t, n0, n1, n2);
        out[span - 2] = n0;
        out[span - 1] = n1;
        out[span] = n2;
        return out;
    }

    // Integrated-spline values; constant extension beyond [L, U].
    Eigen::VectorXd ispline(double t) const {
        if (t <= lower()) return Eigen::VectorXd::Zero(M_);
        if (t >= upper()) return cum_.col(static_cast<int>(knots_.size()) - 1);
        const int j = span_index(t);
        Eigen::VectorXd out = cum_.col(j);
        add_partial_integral(knots_[j], t, out);
        return out;
    }

    // (value, derivative) of the curve t -> gamma . I(t); derivative is
    // gamma . B(t) inside [L, U] and 0 outside.
    std::pair<double, double> curve(const Eigen::VectorXd& gamma, double t) const {
        require(gamma.size() == M_, ErrorClass::Config,
                "coefficient vector length does not match basis count");
        if (t <= lower()) return {0.0, t == lower() ? deriv_at(gamma, t) : 0.0};
        if (t >= upper())
            return {gamma.dot(cum_.col(static_cast<int>(knots_.size()) - 1)),
                    t == upper() ? deriv_at(gamma, t) : 0.0};
        return {gamma.dot(ispline(t)), deriv_at(gamma, t)};
    }

  private:
    double deriv_at(const Eigen::VectorXd& gamma, double t) const {
        double n0, n1, n2;
        const int span = local_bspline(t, n0, n1, n2);
        return gamma[span - 2] * n0 + gamma[span - 1] * n1 + gamma[span] * n2;
    }

    // Index j of the public knot span [knot_j, knot_{j+1}) containing t,
    // with t = U mapped into the last span.
    int span_index(double t) const {
        const int n_span = static_cast<int>(knots_.size()) - 1;
        int j = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), t) -
                                 knots_.begin()) -
                1;
        return std::clamp(j, 0, n_span - 1);
    }

    // Cox-de Boor triangular scheme for the three nonzero quadratic bases on
    // the span of t; returns the 0-based index of the rightmost one.
    int local_bspline(double t, double& n0, double& n1, double& n2) const {
        const int k = span_index(t) + 2;  // index into padded_
        double left1 = t - padded_[k], right1 = padded_[k + 1] - t;
        double left2 = t - padded_[k - 1], right2 = padded_[k + 2] - t;
        // degree 1
        double tmp = 1.0 / (right1 + left1);
        double a0 = right1 * tmp;
        double a1 = left1 * tmp;
        // degree 2
        tmp = a0 / (right1 + left2);
        n0 = right1 * tmp;
        double saved = left2 * tmp;
        tmp = a1 / (right2 + left1);
        n1 = saved + right2 * tmp;
        n2 = left1 * tmp;
        return k;
    }

    // cum_(m, j) = integral of basis m from L to public knot j. Per-span
    // two-point Gauss-Legendre, exact for quadratics.
    void build_integral_table() {
        const int n_knot = static_cast<int>(knots_.size());
        cum_ = Eigen::MatrixXd::Zero(M_, n_knot);
        for (int j = 0; j + 1 < n_knot; ++j) {
            Eigen::VectorXd acc = cum_.col(j);
            add_partial_integral(knots_[j], knots_[j + 1], acc);
            cum_.col(j + 1) = acc;
        }
    }

    void add_partial_integral(double a, double b, Eigen::VectorXd& acc) const {
        static const double node = 1.0 / std::sqrt(3.0);
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (double s : {mid - half * node, mid + half * node}) {
            double n0, n1, n2;
            const int span = local_bspline(s, n0, n1, n2);
            acc[span - 2] += half * n0;
            acc[span - 1] += half * n1;
            acc[span] += half * n2;
        }
    }

    int M_;
    std::vector<double> knots_;
    std::vector<double> padded_;
    Eigen::MatrixXd cum_;
};

// Beta-kernel smoothing of an empirical age distribution over [0, 120].
// Each sample point contributes a beta density whose mode sits at the point;
// the concentration parameter trades smoothness against fidelity.
class SmoothedAgeDensity {
  public:
    static constexpr double kDomainHi = 120.0;

    SmoothedAgeDensity(std::vector<double> time_points, double concentration)
        : points_(std::move(time_points)), nu_(concentration) {
        require(!points_.empty(), ErrorClass::Config,
                "age density needs at least one time point");
        require(nu_ > 0, ErrorClass::Config, "concentration must be positive");
        for (double t : points_)
            require(t >= 0.0 && t <= kDomainHi, ErrorClass::Config,
                    "time point outside [0, 120]");
        log_norm_.reserve(points_.size());
        shapes_.reserve(points_.size());
        for (double t : points_) {
            const double s = t / kDomainHi;
            const double a = nu_ * s + 1.0;
            const double b = nu_ * (1.0 - s) + 1.0;
            shapes_.emplace_back(a, b);
            log_norm_.push_back(std::lgamma(a + b) - std::lgamma(a) -
                                std::lgamma(b));
        }
    }

    double concentration() const { return nu_; }
    const std::vector<double>& points() const { return points_; }

    double pdf(double t) const {
        if (t < 0.0 || t > kDomainHi) return 0.0;
        const double x = t / kDomainHi;
        double sum = 0.0;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const auto [a, b] = shapes_[i];
            double lp = log_norm_[i];
            if (a != 1.0) {
                if (x == 0.0) continue;
                lp += (a - 1.0) * std::log(x);
            }
            if (b != 1.0) {
                if (x == 1.0) continue;
                lp += (b - 1.0) * std::log1p(-x);
            }
            sum += std::exp(lp);
        }
        return sum / (kDomainHi * static_cast<double>(points_.size()));
    }

    // Beta shape parameters attached to location t (mode of that kernel).
    std::pair<double, double> kernel_shapes(double t) const {
        const double s = t / kDomainHi;
        return {nu_ * s + 1.0, nu_ * (1.0 - s) + 1.0};
    }

  private:
    std::vector<double> points_;
    double nu_;
    std::vector<std::pair<double, double>> shapes_;
    std::vector<double> log_norm_;
};

inline SmoothedAgeDensity smoothed_age_density(const std::vector<double>& points,
                                               double concentration) {
    return SmoothedAgeDensity(points, concentration);
}

// Knots as quantiles of the smoothed age distribution restricted to [L, U]:
// boundaries pinned, M-3 interior knots at levels k/(M-2). The CDF is
// accumulated on a 4096-cell Gauss grid and each level solved by bisection.
inline BasisSpec build_knots(const SmoothedAgeDensity& density, int basis_count,
                             double lo, double hi) {
    require(basis_count >= 6, ErrorClass::Config, "basis count must be at least 6");
    require(lo < hi, ErrorClass::Config, "knot range must satisfy L < U");
    constexpr int kCells = 4096;
    const double h = (hi - lo) / kCells;
    static const double gnode = 1.0 / std::sqrt(3.0);
    std::vector<double> cdf(kCells + 1, 0.0);
    for (int c = 0; c < kCells; ++c) {
        const double a = lo + c * h, mid = a + 0.5 * h;
        const double cell = 0.5 * h * (density.pdf(mid - 0.5 * h * gnode) +
                                       density.pdf(mid + 0.5 * h * gnode));
        cdf[c + 1] = cdf[c] + cell;
    }
    const double total = cdf.back();
    require(total > 0, ErrorClass::Numeric,
            "smoothed density has no mass on the knot range");

    auto cdf_at = [&](double t) {
        const int c = std::clamp(static_cast<int>((t - lo) / h), 0, kCells - 1);
        const double a = lo + c * h;
        const double half = 0.5 * (t - a), mid = a + half;
        return cdf[c] + half * (density.pdf(mid - half * gnode) +
                                density.pdf(mid + half * gnode));
    };

    std::vector<double> knots(basis_count - 1);
    knots.front() = lo;
    knots.back() = hi;
    const int interior = basis_count - 3;
    for (int k = 1; k <= interior; ++k) {
        const double target = total * k / (basis_count - 2);
        double a = lo, b = hi;
        while (b - a > 1e-8) {
            const double mid = 0.5 * (a + b);
            if (cdf_at(mid) >= target)
                b = mid;
            else
                a = mid;
        }
        knots[k] = 0.5 * (a + b);
    }
    for (int k = 1; k < basis_count - 1; ++k)
        require(knots[k] - knots[k - 1] > 1e-8, ErrorClass::Numeric,
                "knot collision at quantile level " + std::to_string(k) + "/" +
                    std::to_string(basis_count - 2));
    return BasisSpec(basis_count, std::move(knots));
}

}  // namespace sshape
