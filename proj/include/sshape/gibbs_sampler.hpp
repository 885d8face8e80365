#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sshape/constrained_gaussian.hpp"
#include "sshape/hier_model.hpp"

namespace sshape {

struct SamplerConfig {
    int n_iter = 10000;
    int burn_in = 5000;
    int thinning = 1;
    std::uint64_t seed = 1;
    double metropolis_step = 0.4;  // initial log-scale random-walk step
    double adapt_target = 0.35;
    int genz_n_mc = 512;
    int hmc_trajectories = 3;      // trajectories per truncated coefficient draw
    double logistic_step = 0.08;   // comparator random-walk step (log scale)

    void validate() const {
        require(n_iter > 0 && burn_in >= 0 && burn_in < n_iter, ErrorClass::Config,
                "need 0 <= burn_in < n_iter");
        require(thinning >= 1, ErrorClass::Config, "thinning must be at least 1");
        require(metropolis_step > 0 && logistic_step > 0, ErrorClass::Config,
                "proposal steps must be positive");
        require(genz_n_mc >= 2 && hmc_trajectories >= 1, ErrorClass::Config,
                "genz_n_mc and hmc_trajectories must be positive");
    }
};

struct PosteriorSamples {
    std::vector<ModelState> states;
    std::vector<double> loglik_trace;         // one entry per iteration
    std::vector<std::uint8_t> hyper_accepts;  // one entry per iteration
    double post_burnin_accept_rate = 0.0;
    int z_retries = 0;
    int z_rejects = 0;
};

// The full Gibbs cycle: coefficients (with group-shared inflection indices),
// observation variance, random-effect variance, random effects, and the
// joint Metropolis update of the two coefficient-prior scales.
class GibbsSampler {
  public:
    GibbsSampler(const LongitudinalDataset& ds, const BasisSpec* basis,
                 const ModelConfig& model, const SamplerConfig& config)
        : ds_(ds),
          basis_(basis),
          model_(model),
          config_(config),
          window_(model.window()),
          groups_(ds.biomarker_groups()),
          n_groups_(static_cast<int>(ds.group_labels().size())),
          log_step_(std::log(config.metropolis_step)),
          log_step_logistic_(std::log(config.logistic_step)) {
        config_.validate();
        if (model_.mode != ConstraintMode::LogisticParametric) {
            require(basis_ != nullptr, ErrorClass::Config,
                    "spline modes need a basis");
            require(basis_->basis_count() == model_.basis_count, ErrorClass::Config,
                    "basis size disagrees with the model configuration");
        }
        build_caches();
    }

    const WindowWeights& window() const { return window_; }

    ModelState initial_state() const {
        ModelState st;
        const int k_count = ds_.n_biomarkers();
        const int q = ds_.n_covariate_terms();
        st.omega = Eigen::MatrixXd::Zero(ds_.n_subjects(), k_count);
        st.sigma2_obs = model_.ig_scale / (model_.ig_shape - 1.0);
        st.sigma2_rnd = st.sigma2_obs;
        for (int k = 0; k < k_count; ++k)
            st.beta.push_back(Eigen::VectorXd::Zero(q));
        if (model_.mode == ConstraintMode::LogisticParametric) {
            for (int k = 0; k < k_count; ++k)
                st.logistic.push_back(Eigen::Vector3d(model_.logistic_c_mean,
                                                      model_.logistic_s_mean,
                                                      model_.logistic_h_mean));
            return st;
        }
        const double s0 = model_.resolved_hyperprior_scale();
        st.sigma2_s = 2.0 * s0 * s0;  // exponential hyperprior mean
        st.sigma2_v = st.sigma2_s;
        const int m_total = model_.basis_count;
        const int m_mid = (m_total + 1) / 2;
        if (model_.mode == ConstraintMode::SShaped) {
            st.group_mstar.assign(n_groups_, m_mid);
            const ConstraintRegion region = cone_to_orthant(m_mid, window_);
            const Eigen::VectorXd ramp = 0.1 * region.interior_point();
            for (int k = 0; k < k_count; ++k) {
                Eigen::VectorXd g = Eigen::VectorXd::Zero(m_total);
                for (std::size_t a = 0; a < region.free_indices.size(); ++a)
                    g[region.free_indices[a]] = ramp[a];
                st.gamma.push_back(g);
            }
        } else {
            for (int k = 0; k < k_count; ++k)
                st.gamma.push_back(Eigen::VectorXd::Constant(m_total, 0.1));
        }
        return st;
    }

    PosteriorSamples run() {
        Rng rng(config_.seed);
        ModelState state = initial_state();
        PosteriorSamples out;
        adapt_count_ = 0;
        int post_acc = 0, post_n = 0;
        for (int it = 0; it < config_.n_iter; ++it) {
            const char* step = "coefficients";
            try {
                step_coefficients(state, rng);
                step = "variances";
                step_variances(state, rng);
                step = "random_effects";
                step_random_effects(state, rng);
                step = "hyperparams";
                const bool adapt = it < config_.burn_in;
                const bool acc = step_hyperparams(state, rng, adapt);
                out.hyper_accepts.push_back(acc ? 1 : 0);
                if (it >= config_.burn_in) {
                    post_acc += acc ? 1 : 0;
                    ++post_n;
                }
            } catch (const Error& e) {
                fail(e.error_class(), "iteration " + std::to_string(it) + ", step " +
                                          step + ": " + e.what());
            }
            out.loglik_trace.push_back(log_likelihood(state, ds_, basis_));
            if (it >= config_.burn_in &&
                (it - config_.burn_in) % config_.thinning == 0)
                out.states.push_back(state);
        }
        out.post_burnin_accept_rate =
            post_n > 0 ? static_cast<double>(post_acc) / post_n : 0.0;
        out.z_retries = z_retries_;
        out.z_rejects = z_rejects_;
        return out;
    }

    struct Conditionals {
        std::vector<GaussianParams> joint;           // per k, dim q + F
        std::vector<GaussianParams> gamma_marginal;  // per k, dim F
    };

    Conditionals compute_conditionals(const ModelState& state) const {
        const int q = ds_.n_covariate_terms();
        const int f = n_free_;
        const PriorPrecision prior =
            build_prior_precision(state.sigma2_s, state.sigma2_v, window_);
        Eigen::MatrixXd prior_prec = Eigen::MatrixXd::Zero(q + f, q + f);
        prior_prec.topLeftCorner(q, q) =
            Eigen::MatrixXd::Identity(q, q) /
            (model_.beta_prior_sd * model_.beta_prior_sd);
        prior_prec.bottomRightCorner(f, f) = prior.matrix;

        Conditionals out;
        for (int k = 0; k < ds_.n_biomarkers(); ++k) {
            Eigen::MatrixXd precision = prior_prec + gram_[k] / state.sigma2_obs;
            Eigen::VectorXd rhs = zy_[k];
            for (int i = 0; i < ds_.n_subjects(); ++i)
                if (obs_count_(i, k) > 0)
                    rhs -= state.omega(i, k) * visit_sum_[k][i];
            rhs /= state.sigma2_obs;
            const Eigen::LLT<Eigen::MatrixXd> llt(precision);
            require(llt.info() == Eigen::Success, ErrorClass::Numeric,
                    "conditional precision is singular");
            GaussianParams joint;
            joint.cov = llt.solve(Eigen::MatrixXd::Identity(q + f, q + f));
            joint.mean = llt.solve(rhs);
            GaussianParams marg;
            marg.mean = joint.mean.tail(f);
            marg.cov = joint.cov.bottomRightCorner(f, f);
            out.joint.push_back(std::move(joint));
            out.gamma_marginal.push_back(std::move(marg));
        }
        return out;
    }

    // Group-shared inflection indices drawn from the categorical law whose
    // weights multiply the members' cone probabilities under their gamma
    // marginals. Weights are combined in log space.
    std::vector<int> sample_indices(const std::vector<GaussianParams>& marginals,
                                    Rng& rng) const {
        const auto support = inflection_support(model_.basis_count);
        std::vector<int> result(n_groups_, 0);
        for (int g = 0; g < n_groups_; ++g) {
            std::vector<double> logw(support.size(), 0.0);
            for (int attempt = 0;; ++attempt) {
                // one stream per member, shared across candidate cones, so
                // the weight ratios see common random numbers
                const std::uint64_t seed = rng.raw();
                for (std::size_t mi = 0; mi < support.size(); ++mi) {
                    double acc = 0.0;
                    for (int k = 0; k < ds_.n_biomarkers(); ++k) {
                        if (groups_[k] != g) continue;
                        const int n_mc = config_.genz_n_mc << (2 * attempt);
                        acc += region_log_probability(
                                   marginals[k], cone_constraints_[mi], n_mc,
                                   Rng::derive_seed(seed, k))
                                   .log_estimate;
                    }
                    logw[mi] = acc;
                }
                const double top = *std::max_element(logw.begin(), logw.end());
                if (std::isfinite(top)) {
                    std::vector<double> w(support.size());
                    for (std::size_t mi = 0; mi < support.size(); ++mi)
                        w[mi] = std::exp(logw[mi] - top);
                    result[g] = support[rng.categorical(w)];
                    break;
                }
                require(attempt < 2, ErrorClass::Numeric,
                        "all inflection-index weights estimated zero for group " +
                            std::to_string(g));
            }
        }
        return result;
    }

    void step_coefficients(ModelState& state, Rng& rng) {
        if (model_.mode == ConstraintMode::LogisticParametric) {
            step_logistic_coefficients(state, rng);
            return;
        }
        const Conditionals cond = compute_conditionals(state);
        if (model_.mode == ConstraintMode::SShaped)
            state.group_mstar = sample_indices(cond.gamma_marginal, rng);
        draw_coefficients(state, cond, rng);
    }

    void draw_coefficients(ModelState& state, const Conditionals& cond, Rng& rng) {
        const int q = ds_.n_covariate_terms();
        const int f = n_free_;
        for (int k = 0; k < ds_.n_biomarkers(); ++k) {
            const LinearConstraints* cons;
            const ConstraintRegion* region = nullptr;
            if (model_.mode == ConstraintMode::SShaped) {
                const int m_star = state.group_mstar[groups_[k]];
                const int mi = m_star - 3;
                cons = &joint_constraints_[mi];
                region = &regions_[mi];
            } else {
                cons = &orthant_constraints_.front();
            }
            Eigen::VectorXd init(q + f);
            init.head(q) = state.beta[k];
            for (int a = 0; a < f; ++a)
                init[q + a] = state.gamma[k][free_indices_[a]];
            int trajectories = config_.hmc_trajectories;
            const double scale = std::max(1e-3, init.tail(f).cwiseAbs().maxCoeff());
            const Eigen::VectorXd ramp =
                region != nullptr ? Eigen::VectorXd(scale * region->interior_point())
                                  : Eigen::VectorXd(Eigen::VectorXd::Constant(
                                        f, scale));
            const double min_slack =
                ((cons->F * init - cons->g).array()).minCoeff();
            if (min_slack < 0.0) {
                // a fresh index made the current point infeasible; restart
                // from the interior ramp at a comparable magnitude
                init.tail(f) = ramp;
                trajectories *= 4;
            } else {
                // blend a hint of the strictly interior ramp so boundary
                // contact never stalls the trajectory start
                init.tail(f) = (1.0 - 1e-8) * init.tail(f) + 1e-8 * ramp;
            }
            ConstrainedGaussianSampler sampler(cond.joint[k], *cons, rng.raw(),
                                               init);
            Eigen::VectorXd draw;
            for (int t = 0; t < trajectories; ++t) draw = sampler.step();
            state.beta[k] = draw.head(q);
            Eigen::VectorXd gamma = Eigen::VectorXd::Zero(model_.basis_count);
            for (int a = 0; a < f; ++a) gamma[free_indices_[a]] = draw[q + a];
            repair_gamma(gamma, model_.mode == ConstraintMode::SShaped
                                    ? state.group_mstar[groups_[k]]
                                    : 0);
            state.gamma[k] = gamma;
        }
    }

    void step_variances(ModelState& state, Rng& rng) {
        double rss = 0.0;
        for (int k = 0; k < ds_.n_biomarkers(); ++k)
            for (const auto& [i, j] : observed_[k]) {
                const double r = residual(state, i, j, k) - state.omega(i, k);
                rss += r * r;
            }
        state.sigma2_obs = rng.inverse_gamma(model_.ig_shape + 0.5 * j_tot_,
                                             model_.ig_scale + 0.5 * rss);
        const double kn =
            static_cast<double>(ds_.n_biomarkers()) * ds_.n_subjects();
        const double shape =
            model_.ig_shape + (model_.s2_exact_rnd_shape ? kn : 0.5 * kn);
        state.sigma2_rnd = rng.inverse_gamma(
            shape, model_.ig_scale + 0.5 * state.omega.array().square().sum());
    }

    void step_random_effects(ModelState& state, Rng& rng) {
        for (int i = 0; i < ds_.n_subjects(); ++i)
            for (int k = 0; k < ds_.n_biomarkers(); ++k) {
                const int n_ik = obs_count_(i, k);
                double sum = 0.0;
                for (int j = 0; j < ds_.subjects[i].y.rows(); ++j)
                    if (ds_.subjects[i].observed(j, k))
                        sum += residual(state, i, j, k);
                const double prec =
                    1.0 / state.sigma2_rnd + n_ik / state.sigma2_obs;
                const double mean = (sum / state.sigma2_obs) / prec;
                state.omega(i, k) = rng.normal(mean, std::sqrt(1.0 / prec));
            }
    }

    // Joint log-scale random walk on the two prior scales; the acceptance
    // ratio carries the K gamma densities and the ratio of truncation
    // normalizers, the latter estimated with shared Monte Carlo seeds.
    bool step_hyperparams(ModelState& state, Rng& rng, bool adapt) {
        if (model_.mode == ConstraintMode::LogisticParametric) {
            step_logistic_params(state, rng, adapt);
            return false;
        }
        const double step = std::exp(log_step_);
        const double ls = std::log(state.sigma2_s), lv = std::log(state.sigma2_v);
        const double ls_new = ls + step * rng.normal();
        const double lv_new = lv + step * rng.normal();
        const double s2s_new = std::exp(ls_new), s2v_new = std::exp(lv_new);

        // shared seeds: numerator and denominator normalizers use common
        // random numbers, so equal points cancel exactly
        std::vector<std::uint64_t> seeds;
        const int n_z = model_.mode == ConstraintMode::SShaped
                            ? static_cast<int>(regions_.size())
                            : 1;
        for (int i = 0; i < n_z; ++i) seeds.push_back(rng.raw());

        const double logz_cur = log_z(state.sigma2_s, state.sigma2_v, seeds);
        const double logz_prop = log_z(s2s_new, s2v_new, seeds);
        bool accept = false;
        if (std::isfinite(logz_cur) && std::isfinite(logz_prop)) {
            const double cur =
                hyper_unnorm_logdens(state, state.sigma2_s, state.sigma2_v) -
                logz_cur;
            const double prop =
                hyper_unnorm_logdens(state, s2s_new, s2v_new) - logz_prop;
            // log-scale proposal Jacobian
            const double log_ratio = (prop + ls_new + lv_new) - (cur + ls + lv);
            accept = std::log(rng.uniform() + 1e-300) < log_ratio;
        }
        if (accept) {
            state.sigma2_s = s2s_new;
            state.sigma2_v = s2v_new;
        }
        if (adapt) {
            ++adapt_count_;
            const double rate = std::min(0.1, 1.0 / std::sqrt(double(adapt_count_)));
            log_step_ += rate * ((accept ? 1.0 : 0.0) - config_.adapt_target);
        }
        return accept;
    }

    double current_metropolis_step() const { return std::exp(log_step_); }

  private:
    double residual(const ModelState& state, int i, int j, int k) const {
        // everything except the random effect
        double f;
        if (model_.mode == ConstraintMode::LogisticParametric) {
            const auto& p = state.logistic[k];
            f = logistic_curve(p[0], p[1], p[2], ds_.subjects[i].ages[j]);
        } else {
            f = 0.0;
            const Eigen::VectorXd& irow = iv_rows_[i][j];
            for (int a = 0; a < n_free_; ++a)
                f += state.gamma[k][free_indices_[a]] * irow[a];
        }
        return ds_.subjects[i].y(j, k) - ds_.subjects[i].x.dot(state.beta[k]) - f;
    }

    double hyper_unnorm_logdens(const ModelState& state, double s2s,
                                double s2v) const {
        const double s0 = model_.resolved_hyperprior_scale();
        double lp = -s2s / (2 * s0 * s0) - s2v / (2 * s0 * s0);
        const PriorPrecision prior = build_prior_precision(s2s, s2v, window_);
        const Eigen::LLT<Eigen::MatrixXd> llt(prior.matrix);
        require(llt.info() == Eigen::Success, ErrorClass::Numeric,
                "prior precision is not positive definite");
        double half_logdet = 0.0;
        const Eigen::MatrixXd chol = llt.matrixL();
        for (int i = 0; i < chol.rows(); ++i) half_logdet += std::log(chol(i, i));
        for (const auto& gamma : state.gamma) {
            Eigen::VectorXd free(n_free_);
            for (int a = 0; a < n_free_; ++a) free[a] = gamma[free_indices_[a]];
            lp += half_logdet - 0.5 * prior.quadratic_form(free);
        }
        return lp;
    }

    // log of the truncation normalizer: product over groups of the summed
    // per-index cone masses raised to the group size (all biomarkers share
    // the prior covariance). Returns -infinity after a failed retry; the
    // caller rejects the move and the failure is counted.
    double log_z(double s2s, double s2v, const std::vector<std::uint64_t>& seeds) {
        if (ds_.n_biomarkers() == 0) return 0.0;
        const PriorPrecision prior = build_prior_precision(s2s, s2v, window_);
        GaussianParams p;
        p.mean = Eigen::VectorXd::Zero(prior.matrix.rows());
        p.cov = prior.matrix.llt().solve(
            Eigen::MatrixXd::Identity(prior.matrix.rows(), prior.matrix.rows()));
        const auto& constraints = model_.mode == ConstraintMode::SShaped
                                      ? cone_constraints_
                                      : orthant_gamma_constraints_;
        std::vector<double> logz(constraints.size());
        for (int attempt = 0;; ++attempt) {
            const int n_mc = config_.genz_n_mc << (2 * attempt);
            for (std::size_t mi = 0; mi < constraints.size(); ++mi)
                logz[mi] =
                    region_log_probability(p, constraints[mi], n_mc, seeds[mi])
                        .log_estimate;
            const double top = *std::max_element(logz.begin(), logz.end());
            if (std::isfinite(top)) break;
            ++z_retries_;
            if (attempt >= 1) {
                ++z_rejects_;
                return -std::numeric_limits<double>::infinity();
            }
        }
        if (model_.mode == ConstraintMode::MonotoneOnly)
            return ds_.n_biomarkers() * logz[0];
        double total = 0.0;
        for (int g = 0; g < n_groups_; ++g) {
            int n_g = 0;
            for (int gk : groups_)
                if (gk == g) ++n_g;
            double top = -std::numeric_limits<double>::infinity();
            for (double lz : logz) top = std::max(top, n_g * lz);
            double sum = 0.0;
            for (double lz : logz) sum += std::exp(n_g * lz - top);
            total += top + std::log(sum);
        }
        return total;
    }

    void step_logistic_coefficients(ModelState& state, Rng& rng) {
        const int q = ds_.n_covariate_terms();
        Eigen::MatrixXd prior_prec =
            Eigen::MatrixXd::Identity(q, q) /
            (model_.beta_prior_sd * model_.beta_prior_sd);
        for (int k = 0; k < ds_.n_biomarkers(); ++k) {
            Eigen::MatrixXd design(observed_[k].size(), q);
            Eigen::VectorXd resp(observed_[k].size());
            int r = 0;
            for (const auto& [i, j] : observed_[k]) {
                design.row(r) = ds_.subjects[i].x;
                const auto& p = state.logistic[k];
                resp[r] = ds_.subjects[i].y(j, k) -
                          logistic_curve(p[0], p[1], p[2], ds_.subjects[i].ages[j]) -
                          state.omega(i, k);
                ++r;
            }
            const GaussianParams post =
                gaussian_conditional(prior_prec, design, resp, state.sigma2_obs);
            state.beta[k] = gaussian_draw(rng, post);
        }
    }

    // random-walk Metropolis on (log c, log s, log h)
    void step_logistic_params(ModelState& state, Rng& rng, bool adapt) {
        const double step = std::exp(log_step_logistic_);
        int accepts = 0;
        for (int k = 0; k < ds_.n_biomarkers(); ++k) {
            const Eigen::Vector3d cur = state.logistic[k];
            Eigen::Vector3d prop;
            for (int c = 0; c < 3; ++c)
                prop[c] = cur[c] * std::exp(step * rng.normal());
            const double log_ratio =
                logistic_block_logdens(state, k, prop) -
                logistic_block_logdens(state, k, cur) +
                std::log(prop.prod()) - std::log(cur.prod());
            if (std::log(rng.uniform() + 1e-300) < log_ratio) {
                state.logistic[k] = prop;
                ++accepts;
            }
        }
        if (adapt) {
            ++adapt_count_;
            const double rate = std::min(0.1, 1.0 / std::sqrt(double(adapt_count_)));
            const double acc_frac =
                static_cast<double>(accepts) / ds_.n_biomarkers();
            log_step_logistic_ += rate * (acc_frac - config_.adapt_target);
        }
    }

    double logistic_block_logdens(const ModelState& state, int k,
                                  const Eigen::Vector3d& csh) const {
        double lp = detail::truncated_normal_logpdf(csh[0], model_.logistic_c_mean,
                                                    model_.logistic_c_sd) +
                    detail::truncated_normal_logpdf(csh[1], model_.logistic_s_mean,
                                                    model_.logistic_s_sd) +
                    detail::truncated_normal_logpdf(csh[2], model_.logistic_h_mean,
                                                    model_.logistic_h_sd);
        for (const auto& [i, j] : observed_[k]) {
            const double f =
                logistic_curve(csh[0], csh[1], csh[2], ds_.subjects[i].ages[j]);
            const double r = ds_.subjects[i].y(j, k) -
                             ds_.subjects[i].x.dot(state.beta[k]) - f -
                             state.omega(i, k);
            lp += -0.5 * r * r / state.sigma2_obs;
        }
        return lp;
    }

    void repair_gamma(Eigen::VectorXd& gamma, int m_star) const {
        constexpr double tol = 1e-9;
        if (model_.mode == ConstraintMode::MonotoneOnly) {
            for (int m = 0; m < gamma.size(); ++m)
                if (gamma[m] < 0.0) {
                    require(gamma[m] >= -tol, ErrorClass::Numeric,
                            "coefficient draw violates nonnegativity");
                    gamma[m] = 0.0;
                }
            return;
        }
        const int first = free_indices_.front();
        const int last = free_indices_.back();
        const int peak = m_star - 1;
        double prev = 0.0;
        for (int m = first; m <= peak; ++m) {
            if (gamma[m] < prev) {
                require(prev - gamma[m] <= tol, ErrorClass::Numeric,
                        "coefficient draw violates the rising run");
                gamma[m] = prev;
            }
            prev = gamma[m];
        }
        prev = 0.0;
        for (int m = last; m >= peak; --m) {
            if (gamma[m] < prev) {
                require(prev - gamma[m] <= tol, ErrorClass::Numeric,
                        "coefficient draw violates the falling run");
                gamma[m] = prev;
            }
            prev = gamma[m];
        }
        require(region_membership(gamma, m_star), ErrorClass::Numeric,
                "coefficient repair failed to restore membership");
    }

    void build_caches() {
        const int q = ds_.n_covariate_terms();
        const int k_count = ds_.n_biomarkers();
        if (model_.mode == ConstraintMode::LogisticParametric) {
            free_indices_.clear();
            n_free_ = 0;
        } else {
            free_indices_ = window_.free_indices();
            n_free_ = static_cast<int>(free_indices_.size());
        }
        const int d = q + n_free_;

        iv_rows_.resize(ds_.n_subjects());
        if (basis_ != nullptr)
            for (int i = 0; i < ds_.n_subjects(); ++i) {
                const auto& subj = ds_.subjects[i];
                iv_rows_[i].resize(subj.ages.size());
                for (std::size_t j = 0; j < subj.ages.size(); ++j) {
                    const Eigen::VectorXd is = basis_->ispline(subj.ages[j]);
                    Eigen::VectorXd row(n_free_);
                    for (int a = 0; a < n_free_; ++a)
                        row[a] = is[free_indices_[a]];
                    iv_rows_[i][j] = row;
                }
            }

        observed_.assign(k_count, {});
        obs_count_ = Eigen::MatrixXi::Zero(ds_.n_subjects(), k_count);
        gram_.assign(k_count, Eigen::MatrixXd::Zero(d, d));
        zy_.assign(k_count, Eigen::VectorXd::Zero(d));
        visit_sum_.assign(k_count,
                          std::vector<Eigen::VectorXd>(
                              ds_.n_subjects(), Eigen::VectorXd::Zero(d)));
        j_tot_ = 0;
        for (int i = 0; i < ds_.n_subjects(); ++i) {
            const auto& subj = ds_.subjects[i];
            for (int k = 0; k < k_count; ++k)
                for (int j = 0; j < subj.y.rows(); ++j) {
                    if (!subj.observed(j, k)) continue;
                    observed_[k].push_back({i, j});
                    ++obs_count_(i, k);
                    ++j_tot_;
                    if (model_.mode == ConstraintMode::LogisticParametric) continue;
                    Eigen::VectorXd z(d);
                    z.head(q) = subj.x;
                    z.tail(n_free_) = iv_rows_[i][j];
                    gram_[k].noalias() += z * z.transpose();
                    zy_[k] += z * subj.y(j, k);
                    visit_sum_[k][i] += z;
                }
        }

        if (model_.mode == ConstraintMode::SShaped) {
            for (int m_star : inflection_support(model_.basis_count)) {
                ConstraintRegion region = cone_to_orthant(m_star, window_);
                const int r = static_cast<int>(region.cone.rows());
                cone_constraints_.emplace_back(region.cone,
                                               Eigen::VectorXd::Zero(r),
                                               region.interior_point());
                Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(r, d);
                joint.rightCols(n_free_) = region.cone;
                Eigen::VectorXd witness = Eigen::VectorXd::Zero(d);
                witness.tail(n_free_) = region.interior_point();
                joint_constraints_.emplace_back(joint, Eigen::VectorXd::Zero(r),
                                                witness);
                regions_.push_back(std::move(region));
            }
        } else if (model_.mode == ConstraintMode::MonotoneOnly) {
            const int m_total = model_.basis_count;
            Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(m_total, d);
            joint.rightCols(m_total) = Eigen::MatrixXd::Identity(m_total, m_total);
            Eigen::VectorXd witness = Eigen::VectorXd::Zero(d);
            witness.tail(m_total).setOnes();
            orthant_constraints_.emplace_back(joint, Eigen::VectorXd::Zero(m_total),
                                              witness);
            orthant_gamma_constraints_.push_back(
                LinearConstraints::positive_orthant(m_total));
        }
    }

    const LongitudinalDataset& ds_;
    const BasisSpec* basis_;
    ModelConfig model_;
    SamplerConfig config_;
    WindowWeights window_;
    std::vector<int> groups_;
    int n_groups_;
    std::vector<int> free_indices_;
    int n_free_ = 0;
    int j_tot_ = 0;
    std::vector<std::vector<Eigen::VectorXd>> iv_rows_;  // per subject, visit
    std::vector<std::vector<std::pair<int, int>>> observed_;  // per k: (i, j)
    Eigen::MatrixXi obs_count_;
    std::vector<Eigen::MatrixXd> gram_;
    std::vector<Eigen::VectorXd> zy_;
    std::vector<std::vector<Eigen::VectorXd>> visit_sum_;
    std::vector<ConstraintRegion> regions_;
    std::vector<LinearConstraints> cone_constraints_;   // gamma space
    std::vector<LinearConstraints> joint_constraints_;  // (beta, gamma) space
    std::vector<LinearConstraints> orthant_constraints_;
    std::vector<LinearConstraints> orthant_gamma_constraints_;
    double log_step_;
    double log_step_logistic_;
    int adapt_count_ = 0;
    int z_retries_ = 0;
    int z_rejects_ = 0;
};

inline PosteriorSamples run_chain(const SamplerConfig& config,
                                  const ModelConfig& model,
                                  const LongitudinalDataset& ds,
                                  const BasisSpec* basis) {
    GibbsSampler sampler(ds, basis, model, config);
    return sampler.run();
}

}  // namespace sshape
