#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "sshape/common.hpp"
#include "sshape/constrained_gaussian.hpp"
#include "sshape/data_model.hpp"
#include "sshape/math_util.hpp"
#include "sshape/shape_constraints.hpp"
#include "sshape/spline_basis.hpp"

namespace sshape {

enum class ConstraintMode { SShaped, MonotoneOnly, LogisticParametric };

inline const char* to_string(ConstraintMode m) {
    switch (m) {
        case ConstraintMode::SShaped: return "s_shaped";
        case ConstraintMode::MonotoneOnly: return "monotone_only";
        case ConstraintMode::LogisticParametric: return "logistic_parametric";
    }
    return "?";
}

inline ConstraintMode constraint_mode_from(const std::string& s) {
    if (s == "s_shaped") return ConstraintMode::SShaped;
    if (s == "monotone_only") return ConstraintMode::MonotoneOnly;
    if (s == "logistic_parametric") return ConstraintMode::LogisticParametric;
    fail(ErrorClass::Config, "unknown variant '" + s + "'");
}

struct ModelConfig {
    int basis_count = 24;
    ConstraintMode mode = ConstraintMode::SShaped;
    double beta_prior_sd = 100.0;
    double ig_shape = 3.0;   // shared by the observation and random-effect noise
    double ig_scale = 0.5;
    // exponential rate on the variance hyperparameters is 1/(2 scale^2);
    // zero means the mode default: 1/(M-4) for the shape-constrained model,
    // 0.01 for the unconstrained monotone comparator
    double hyperprior_scale = 0.0;
    bool s2_exact_rnd_shape = false;  // shape 3 + KN instead of 3 + KN/2
    // comparator priors, truncated to the positive half line
    double logistic_h_mean = 2.0, logistic_h_sd = 1.0;
    double logistic_c_mean = 70.0, logistic_c_sd = 30.0;
    double logistic_s_mean = 5.0, logistic_s_sd = 1.0;

    double resolved_hyperprior_scale() const {
        if (hyperprior_scale > 0.0) return hyperprior_scale;
        return mode == ConstraintMode::MonotoneOnly
                   ? 0.01
                   : 1.0 / (basis_count - 4);
    }

    WindowWeights window() const {
        return mode == ConstraintMode::SShaped ? planck_taper_window(basis_count)
                                               : uniform_window(basis_count);
    }
};

struct ModelState {
    std::vector<Eigen::VectorXd> beta;      // per biomarker, length q
    std::vector<Eigen::VectorXd> gamma;     // per biomarker, length M
    Eigen::MatrixXd omega;                  // subjects x biomarkers
    double sigma2_obs = 1.0;
    double sigma2_rnd = 1.0;
    double sigma2_s = 1.0;
    double sigma2_v = 1.0;
    std::vector<int> group_mstar;           // per group, 1-based peak index
    std::vector<Eigen::Vector3d> logistic;  // per biomarker (c, s, h)
};

inline double logistic_curve(double c, double s, double h, double t) {
    return h / (1.0 + std::exp(-(t - c) / s));
}

// Population curve of biomarker k at age t under the state's mode.
inline double curve_value(const ModelState& state, int k, const BasisSpec* basis,
                          double t) {
    if (!state.logistic.empty()) {
        const auto& p = state.logistic[k];
        return logistic_curve(p[0], p[1], p[2], t);
    }
    return basis->curve(state.gamma[k], t).first;
}

inline double log_likelihood(const ModelState& state, const LongitudinalDataset& ds,
                             const BasisSpec* basis) {
    double ll = 0.0;
    for (int i = 0; i < ds.n_subjects(); ++i) {
        const auto& subj = ds.subjects[i];
        for (int k = 0; k < ds.n_biomarkers(); ++k) {
            const double lin = subj.x.dot(state.beta[k]) + state.omega(i, k);
            for (int j = 0; j < subj.y.rows(); ++j) {
                if (!subj.observed(j, k)) continue;
                const double f = curve_value(state, k, basis, subj.ages[j]);
                ll += normal_logpdf(subj.y(j, k) - f - lin, 0.0, state.sigma2_obs);
            }
        }
    }
    return ll;
}

namespace detail {

inline double invgamma_logpdf(double x, double shape, double scale) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return shape * std::log(scale) - std::lgamma(shape) -
           (shape + 1.0) * std::log(x) - scale / x;
}

inline double truncated_normal_logpdf(double x, double mean, double sd) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    const double z = (x - mean) / sd;
    const double log_tail = std::log(normal_cdf(mean / sd));
    return -0.5 * std::log(2.0 * kPi * sd * sd) - 0.5 * z * z - log_tail;
}

}  // namespace detail

// All prior terms except the truncation normalizer Z(s2_s, s2_v, region),
// which the hyperparameter Metropolis step handles separately. Returns
// -infinity when the state violates its mode's constraints.
inline double log_prior(const ModelState& state, const ModelConfig& config,
                        const WindowWeights& window,
                        const std::vector<int>& biomarker_groups) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    double lp = 0.0;
    lp += detail::invgamma_logpdf(state.sigma2_obs, config.ig_shape, config.ig_scale);
    lp += detail::invgamma_logpdf(state.sigma2_rnd, config.ig_shape, config.ig_scale);
    for (const auto& b : state.beta)
        for (int i = 0; i < b.size(); ++i)
            lp += normal_logpdf(b[i], 0.0, config.beta_prior_sd * config.beta_prior_sd);
    for (int i = 0; i < state.omega.rows(); ++i)
        for (int k = 0; k < state.omega.cols(); ++k)
            lp += normal_logpdf(state.omega(i, k), 0.0, state.sigma2_rnd);

    if (config.mode == ConstraintMode::LogisticParametric) {
        for (const auto& p : state.logistic) {
            lp += detail::truncated_normal_logpdf(p[0], config.logistic_c_mean,
                                                  config.logistic_c_sd);
            lp += detail::truncated_normal_logpdf(p[1], config.logistic_s_mean,
                                                  config.logistic_s_sd);
            lp += detail::truncated_normal_logpdf(p[2], config.logistic_h_mean,
                                                  config.logistic_h_sd);
        }
        return lp;
    }

    const double s0 = config.resolved_hyperprior_scale();
    if (state.sigma2_s <= 0.0 || state.sigma2_v <= 0.0) return neg_inf;
    lp += -state.sigma2_s / (2.0 * s0 * s0) - state.sigma2_v / (2.0 * s0 * s0);

    const PriorPrecision prior =
        build_prior_precision(state.sigma2_s, state.sigma2_v, window);
    const Eigen::LLT<Eigen::MatrixXd> llt(prior.matrix);
    require(llt.info() == Eigen::Success, ErrorClass::Numeric,
            "prior precision is not positive definite");
    double half_logdet = 0.0;
    const Eigen::MatrixXd chol = llt.matrixL();
    for (int i = 0; i < chol.rows(); ++i) half_logdet += std::log(chol(i, i));
    const int f = static_cast<int>(prior.free_indices.size());

    for (std::size_t k = 0; k < state.gamma.size(); ++k) {
        const Eigen::VectorXd& gamma = state.gamma[k];
        if (config.mode == ConstraintMode::SShaped) {
            const int m_star = state.group_mstar[biomarker_groups[k]];
            // pinned entries must be exactly zero
            for (int m = 0; m < gamma.size(); ++m)
                if (window.weights[m] == 0.0 && gamma[m] != 0.0) return neg_inf;
            if (!region_membership(gamma, m_star)) return neg_inf;
        } else {
            if ((gamma.array() < 0.0).any()) return neg_inf;
        }
        Eigen::VectorXd free(f);
        for (int a = 0; a < f; ++a) free[a] = gamma[prior.free_indices[a]];
        lp += -0.5 * f * std::log(2.0 * kPi) + half_logdet -
              0.5 * prior.quadratic_form(free);
    }
    return lp;
}

// Gaussian conditional for a zero-mean prior with the given precision and
// scalar-noise observations: precision P = prior + sum z z' / s2, mean
// P^{-1} sum z y / s2.
inline GaussianParams gaussian_conditional(const Eigen::MatrixXd& prior_precision,
                                           const Eigen::MatrixXd& design_rows,
                                           const Eigen::VectorXd& responses,
                                           double sigma2_obs) {
    const Eigen::MatrixXd precision =
        prior_precision +
        design_rows.transpose() * design_rows / sigma2_obs;
    const Eigen::LLT<Eigen::MatrixXd> llt(precision);
    require(llt.info() == Eigen::Success, ErrorClass::Numeric,
            "conditional precision is singular");
    GaussianParams out;
    out.cov = llt.solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
    out.mean = llt.solve(design_rows.transpose() * responses / sigma2_obs);
    return out;
}

// Joint conditional of (beta_k, free gamma_k) given everything else: block
// prior precision blockdiag(V_beta^-1, Q) plus the Gram term from biomarker
// k's observed rows [x_i; I_free(t_ij)], response y_ijk - omega_ik.
inline GaussianParams conditional_coeff_gaussian(int k, const ModelState& state,
                                                 const LongitudinalDataset& ds,
                                                 const BasisSpec& basis,
                                                 const ModelConfig& config,
                                                 const WindowWeights& window) {
    const PriorPrecision prior =
        build_prior_precision(state.sigma2_s, state.sigma2_v, window);
    const int q = ds.n_covariate_terms();
    const int f = static_cast<int>(prior.free_indices.size());
    Eigen::MatrixXd prior_prec = Eigen::MatrixXd::Zero(q + f, q + f);
    prior_prec.topLeftCorner(q, q) =
        Eigen::MatrixXd::Identity(q, q) /
        (config.beta_prior_sd * config.beta_prior_sd);
    prior_prec.bottomRightCorner(f, f) = prior.matrix;

    std::vector<Eigen::VectorXd> rows;
    std::vector<double> resp;
    for (int i = 0; i < ds.n_subjects(); ++i) {
        const auto& subj = ds.subjects[i];
        for (int j = 0; j < subj.y.rows(); ++j) {
            if (!subj.observed(j, k)) continue;
            Eigen::VectorXd z(q + f);
            z.head(q) = subj.x;
            const Eigen::VectorXd is = basis.ispline(subj.ages[j]);
            for (int a = 0; a < f; ++a) z[q + a] = is[prior.free_indices[a]];
            rows.push_back(std::move(z));
            resp.push_back(subj.y(j, k) - state.omega(i, k));
        }
    }
    Eigen::MatrixXd design(static_cast<int>(rows.size()), q + f);
    Eigen::VectorXd responses(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        design.row(static_cast<int>(r)) = rows[r];
        responses[static_cast<int>(r)] = resp[r];
    }
    return gaussian_conditional(prior_prec, design, responses, state.sigma2_obs);
}

}  // namespace sshape
