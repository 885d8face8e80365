#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sshape/common.hpp"
#include "sshape/math_util.hpp"
#include "sshape/rng.hpp"

namespace sshape {

struct GaussianParams {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Feasible set {x : F x >= g}. A feasible witness is stored at construction
// so that infeasible regions are rejected early.
struct LinearConstraints {
    Eigen::MatrixXd F;
    Eigen::VectorXd g;
    Eigen::VectorXd witness;

    LinearConstraints(Eigen::MatrixXd f, Eigen::VectorXd bound,
                      Eigen::VectorXd feasible_point)
        : F(std::move(f)), g(std::move(bound)), witness(std::move(feasible_point)) {
        require(F.rows() >= 1, ErrorClass::Config,
                "constraint set needs at least one row");
        require(F.rows() == g.size() && F.cols() == witness.size(),
                ErrorClass::Config, "constraint dimensions disagree");
        require(((F * witness - g).array() >= -1e-9).all(), ErrorClass::Config,
                "constraint witness is not feasible");
    }

    static LinearConstraints positive_orthant(int dim) {
        return LinearConstraints(Eigen::MatrixXd::Identity(dim, dim),
                                 Eigen::VectorXd::Zero(dim),
                                 Eigen::VectorXd::Ones(dim));
    }
};

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    require(llt.info() == Eigen::Success, ErrorClass::Numeric,
            "covariance is not symmetric positive definite");
    return llt;
}

inline double clamp_unit(double p) {
    return std::min(1.0 - 1e-16, std::max(1e-300, p));
}

}  // namespace detail

struct LogProbEstimate {
    double log_estimate = -std::numeric_limits<double>::infinity();
    double rel_se = 0.0;  // standard error relative to the estimate

    double estimate() const { return std::exp(std::min(0.0, log_estimate)); }
    double std_error() const { return estimate() * rel_se; }
};

// Monte Carlo estimate of P{F x >= g} for x ~ N(mean, cov), by sequential
// conditioning: a maximal linearly independent subset of the whitened
// constraint rows is triangularized and sampled one truncated coordinate at
// a time (each draw carrying the product of interval log-masses as its
// weight); whatever rows remain are scored as indicators on the
// reconstructed point. Log-space weights keep astronomically small regions
// comparable.
inline LogProbEstimate region_log_probability(const GaussianParams& p,
                                              const LinearConstraints& c,
                                              int n_mc, std::uint64_t seed) {
    const int d = static_cast<int>(p.mean.size());
    const int r = static_cast<int>(c.F.rows());
    require(n_mc >= 2, ErrorClass::Config, "need at least two Monte Carlo draws");
    const auto llt = detail::checked_llt(p.cov);
    const Eigen::MatrixXd chol = llt.matrixL();
    const Eigen::MatrixXd fw = c.F * chol;          // r x d, whitened rows
    const Eigen::VectorXd gw = c.g - c.F * p.mean;  // shifted bounds

    // Rank-revealing selection of independent rows.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(fw.transpose());
    qr.setThreshold(1e-12);
    const int rank = static_cast<int>(qr.rank());
    std::vector<int> selected(qr.colsPermutation().indices().data(),
                              qr.colsPermutation().indices().data() + r);
    selected.resize(rank);

    // Square transform: selected rows first, orthonormal completion after.
    Eigen::MatrixXd t_mat(d, d);
    for (int i = 0; i < rank; ++i) t_mat.row(i) = fw.row(selected[i]);
    if (rank < d) {
        const Eigen::MatrixXd q_full = qr.householderQ();
        t_mat.bottomRows(d - rank) = q_full.rightCols(d - rank).transpose();
    }
    Eigen::VectorXd bound(d);
    for (int i = 0; i < rank; ++i) bound[i] = gw[selected[i]];

    std::vector<int> leftover;
    for (int j = 0; j < r; ++j)
        if (std::find(selected.begin(), selected.end(), j) == selected.end())
            leftover.push_back(j);
    Eigen::MatrixXd left_rows(static_cast<int>(leftover.size()), d);
    Eigen::VectorXd left_bound(static_cast<int>(leftover.size()));
    if (!leftover.empty()) {
        Eigen::PartialPivLU<Eigen::MatrixXd> t_lu(t_mat);
        Eigen::MatrixXd rows(static_cast<int>(leftover.size()), d);
        for (std::size_t j = 0; j < leftover.size(); ++j) {
            rows.row(static_cast<int>(j)) = fw.row(leftover[j]);
            left_bound[static_cast<int>(j)] = gw[leftover[j]];
        }
        // indicator rows expressed in v = T w coordinates
        left_rows = rows * t_lu.inverse();
    }

    const Eigen::MatrixXd tt = t_mat * t_mat.transpose();
    Eigen::LLT<Eigen::MatrixXd> tri_llt(tt);
    require(tri_llt.info() == Eigen::Success, ErrorClass::Numeric,
            "failed to triangularize constraint rows");
    const Eigen::MatrixXd lower = tri_llt.matrixL();

    Rng rng(seed);
    std::vector<double> logw(n_mc);
    double top = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd z(d), v(d);
    for (int s = 0; s < n_mc; ++s) {
        double lw = 0.0;
        for (int i = 0; i < d; ++i) {
            const double partial =
                i > 0 ? lower.row(i).head(i).dot(z.head(i)) : 0.0;
            const double u = rng.uniform();
            if (i < rank) {
                const double lo = (bound[i] - partial) / lower(i, i);
                lw += normal_logsf(lo);
                if (lo > 8.0) {
                    // Rayleigh-tail draw, exact enough this deep in the tail
                    z[i] = std::sqrt(lo * lo - 2.0 * std::log1p(-u));
                } else {
                    const double plo = normal_cdf(lo);
                    z[i] = normal_quantile(
                        detail::clamp_unit(plo + u * (1.0 - plo)));
                }
            } else {
                z[i] = normal_quantile(detail::clamp_unit(u));
            }
        }
        if (!leftover.empty()) {
            v = lower * z;
            if (!((left_rows * v - left_bound).array() >= 0.0).all())
                lw = -std::numeric_limits<double>::infinity();
        }
        logw[s] = lw;
        top = std::max(top, lw);
    }
    LogProbEstimate out;
    if (!std::isfinite(top)) return out;  // every path excluded
    double sum = 0.0, sum_sq = 0.0;
    for (double lw : logw) {
        const double w = std::exp(lw - top);
        sum += w;
        sum_sq += w * w;
    }
    const double mean = sum / n_mc;
    const double var = std::max(0.0, sum_sq / n_mc - mean * mean);
    out.log_estimate = std::min(0.0, top + std::log(mean));
    out.rel_se = std::sqrt(var / n_mc) / mean;
    return out;
}

// Plain-probability wrapper: (estimate in [0, 1], standard error).
inline std::pair<double, double> region_probability(const GaussianParams& p,
                                                    const LinearConstraints& c,
                                                    int n_mc, std::uint64_t seed) {
    const LogProbEstimate e = region_log_probability(p, c, n_mc, seed);
    return {e.estimate(), e.std_error()};
}

// Markov chain on {x : F x >= g} targeting N(mean, cov), by exact Hamiltonian
// dynamics: in whitened coordinates the flow is sinusoidal, wall crossings
// are found analytically, and the momentum reflects off active constraints.
// One state is emitted per trajectory of duration pi/2.
class ConstrainedGaussianSampler {
  public:
    ConstrainedGaussianSampler(const GaussianParams& p, const LinearConstraints& c,
                               std::uint64_t seed, const Eigen::VectorXd& init)
        : rng_(seed), mean_(p.mean) {
        const auto llt = detail::checked_llt(p.cov);
        chol_ = llt.matrixL();
        fw_ = c.F * chol_;
        gw_ = c.g - c.F * mean_;
        state_ = chol_.triangularView<Eigen::Lower>().solve(init - mean_);
        ensure_interior();
    }

    // Advance one trajectory and return the new point in original coordinates.
    Eigen::VectorXd step() {
        const int d = static_cast<int>(state_.size());
        Eigen::VectorXd momentum(d);
        for (int i = 0; i < d; ++i) momentum[i] = rng_.normal();
        double remaining = kPi / 2.0;
        int last_wall = -1;
        for (int bounce = 0;; ++bounce) {
            require(bounce < 4096, ErrorClass::Numeric,
                    "failed to locate a boundary-crossing time "
                    "(trajectory exceeded the bounce limit)");
            const Eigen::VectorXd a = fw_ * state_;
            const Eigen::VectorXd b = fw_ * momentum;
            double t_hit = remaining;
            int wall = -1;
            for (int j = 0; j < fw_.rows(); ++j) {
                const double radius = std::hypot(a[j], b[j]);
                if (radius <= std::abs(gw_[j])) continue;
                const double phase = std::atan2(b[j], a[j]);
                const double delta = std::acos(gw_[j] / radius);
                for (double cand : {phase + delta, phase - delta}) {
                    while (cand < 0.0) cand += 2.0 * kPi;
                    while (cand >= 2.0 * kPi) cand -= 2.0 * kPi;
                    const double min_t = (j == last_wall) ? 1e-9 : 1e-12;
                    if (cand > min_t && cand < t_hit) {
                        t_hit = cand;
                        wall = j;
                    }
                }
            }
            const double ct = std::cos(t_hit), st = std::sin(t_hit);
            const Eigen::VectorXd pos = state_ * ct + momentum * st;
            const Eigen::VectorXd vel = momentum * ct - state_ * st;
            state_ = pos;
            momentum = vel;
            if (wall < 0) break;
            const Eigen::VectorXd row = fw_.row(wall).transpose();
            momentum -= (2.0 * row.dot(momentum) / row.squaredNorm()) * row;
            last_wall = wall;
            remaining -= t_hit;
            if (remaining <= 1e-12) break;
        }
        return mean_ + chol_ * state_;
    }

  private:
    void ensure_interior() {
        Eigen::VectorXd slack = fw_ * state_ - gw_;
        require((slack.array() >= -1e-9).all(), ErrorClass::Config,
                "initial point for constrained sampling is infeasible");
        if ((slack.array() > 0.0).all()) return;
        // Nudge off any active boundary along the mean inward direction of
        // the active rows.
        Eigen::VectorXd dir = Eigen::VectorXd::Zero(state_.size());
        for (int j = 0; j < fw_.rows(); ++j)
            if (slack[j] <= 0.0) dir += fw_.row(j).transpose() / fw_.row(j).norm();
        if (dir.norm() == 0.0) return;
        state_ += 1e-8 * dir / dir.norm();
        slack = fw_ * state_ - gw_;
        require((slack.array() > -1e-12).all(), ErrorClass::Config,
                "could not move the initial point strictly inside the region");
    }

    Rng rng_;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd chol_;
    Eigen::MatrixXd fw_;
    Eigen::VectorXd gw_;
    Eigen::VectorXd state_;
};

// n successive chain states, one row per draw.
inline Eigen::MatrixXd sample_constrained(const GaussianParams& p,
                                          const LinearConstraints& c, int n,
                                          std::uint64_t seed,
                                          const Eigen::VectorXd& init) {
    ConstrainedGaussianSampler sampler(p, c, seed, init);
    Eigen::MatrixXd out(n, p.mean.size());
    for (int i = 0; i < n; ++i) out.row(i) = sampler.step();
    return out;
}

// Exact unconstrained draw.
inline Eigen::VectorXd gaussian_draw(Rng& rng, const GaussianParams& p) {
    const auto llt = detail::checked_llt(p.cov);
    Eigen::VectorXd z(p.mean.size());
    for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return p.mean + Eigen::MatrixXd(llt.matrixL()) * z;
}

}  // namespace sshape
