#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sshape/gibbs_sampler.hpp"
#include "sshape/io_util.hpp"

namespace sshape {

inline std::vector<double> make_grid(double lo, double hi, double step) {
    std::vector<double> grid;
    const int n = static_cast<int>(std::round((hi - lo) / step));
    for (int i = 0; i <= n; ++i) grid.push_back(lo + i * step);
    return grid;
}

// Pointwise posterior summaries of the raw and standardized curves. The
// standardized curve rescales each draw by its own span over [0, 120];
// draws with a flat span are excluded from the standardized summary and
// counted.
struct CurveSummary {
    std::vector<double> grid;
    std::vector<std::string> biomarkers;
    std::vector<Eigen::VectorXd> mean, lo, hi;
    std::vector<Eigen::VectorXd> std_mean, std_lo, std_hi;
    std::vector<int> degenerate_draws;
};

namespace detail {

inline double draw_curve_value(const ModelState& st, int k, const BasisSpec* basis,
                               double t) {
    return curve_value(st, k, basis, t);
}

}  // namespace detail

inline CurveSummary curve_summary(const PosteriorSamples& samples,
                                  const LongitudinalDataset& ds,
                                  const BasisSpec* basis,
                                  const std::vector<double>& grid) {
    require(!samples.states.empty(), ErrorClass::Config, "no posterior draws");
    CurveSummary out;
    out.grid = grid;
    const int n_draw = static_cast<int>(samples.states.size());
    const int n_grid = static_cast<int>(grid.size());
    for (int k = 0; k < ds.n_biomarkers(); ++k) {
        out.biomarkers.push_back(ds.schema.biomarkers[k].name);
        Eigen::MatrixXd values(n_draw, n_grid);
        std::vector<int> std_ok;
        Eigen::MatrixXd std_values(n_draw, n_grid);
        int degenerate = 0;
        for (int d = 0; d < n_draw; ++d) {
            const ModelState& st = samples.states[d];
            for (int g = 0; g < n_grid; ++g)
                values(d, g) = detail::draw_curve_value(st, k, basis, grid[g]);
            const double f0 = detail::draw_curve_value(st, k, basis, 0.0);
            const double f120 = detail::draw_curve_value(st, k, basis, 120.0);
            const double span = f120 - f0;
            if (span == 0.0) {
                ++degenerate;
                continue;
            }
            for (int g = 0; g < n_grid; ++g)
                std_values(std_ok.size(), g) = (values(d, g) - f0) / span;
            std_ok.push_back(d);
        }
        out.degenerate_draws.push_back(degenerate);
        Eigen::VectorXd mean(n_grid), lo(n_grid), hi(n_grid);
        Eigen::VectorXd smean(n_grid), slo(n_grid), shi(n_grid);
        for (int g = 0; g < n_grid; ++g) {
            std::vector<double> col(values.col(g).data(),
                                    values.col(g).data() + n_draw);
            mean[g] = mean_of(col);
            std::sort(col.begin(), col.end());
            lo[g] = quantile_of_sorted(col, 0.025);
            hi[g] = quantile_of_sorted(col, 0.975);
            if (!std_ok.empty()) {
                std::vector<double> scol(std_ok.size());
                for (std::size_t d = 0; d < std_ok.size(); ++d)
                    scol[d] = std_values(static_cast<int>(d), g);
                smean[g] = mean_of(scol);
                std::sort(scol.begin(), scol.end());
                slo[g] = quantile_of_sorted(scol, 0.025);
                shi[g] = quantile_of_sorted(scol, 0.975);
            } else {
                smean[g] = slo[g] = shi[g] =
                    std::numeric_limits<double>::quiet_NaN();
            }
        }
        out.mean.push_back(mean);
        out.lo.push_back(lo);
        out.hi.push_back(hi);
        out.std_mean.push_back(smean);
        out.std_lo.push_back(slo);
        out.std_hi.push_back(shi);
    }
    return out;
}

// Age at which the curve's slope peaks. The peak coefficient index localizes
// the maximum inside one knot span, which a grid scan plus golden-section
// search then pins down; ties resolve to the smallest age.
inline double inflection_point(const Eigen::VectorXd& gamma, const BasisSpec& basis,
                               int m_star = 0) {
    require(gamma.size() == basis.basis_count(), ErrorClass::Config,
            "coefficient length mismatch");
    require(gamma.cwiseAbs().maxCoeff() > 0.0, ErrorClass::Numeric,
            "inflection point undefined for an all-zero curve");
    const int m_total = basis.basis_count();
    if (m_star == 0) {
        m_star = 1;
        for (int m = 1; m < m_total; ++m)
            if (gamma[m] > gamma[m_star - 1]) m_star = m + 1;
    }
    const auto& knots = basis.knots();
    const double lo = knots[std::max(0, m_star - 2)];
    const double hi = knots[std::min(static_cast<int>(knots.size()) - 1, m_star - 1)];

    auto deriv = [&](double t) { return basis.curve(gamma, t).second; };
    const int n_scan = 2000;
    double best_t = lo, best = -1.0;
    for (int i = 0; i <= n_scan; ++i) {
        const double t =
            basis.lower() + (basis.upper() - basis.lower()) * i / n_scan;
        const double v = deriv(t);
        if (v > best + 1e-15) {
            best = v;
            best_t = t;
        }
    }
    const double step = (basis.upper() - basis.lower()) / n_scan;
    double a = lo, b = hi;
    if (best_t >= lo - step && best_t <= hi + step) {
        a = std::max(lo, best_t - step);
        b = std::min(hi, best_t + step);
        if (a >= b) {
            a = lo;
            b = hi;
        }
    }
    const double t_star = golden_section_max(deriv, a, b, 1e-7);
    return std::min(hi, std::max(lo, t_star));
}

// Age at which the curve reaches half of its value at the upper boundary;
// plateaus resolve to the earliest crossing.
inline double half_progression_time(const Eigen::VectorXd& gamma,
                                    const BasisSpec& basis) {
    const double full = basis.curve(gamma, basis.upper()).first;
    require(full > 0.0, ErrorClass::Numeric,
            "half-progression time undefined for a flat curve");
    const double target = 0.5 * full;
    return bisect_first_true(
        [&](double t) { return basis.curve(gamma, t).first >= target; },
        basis.lower(), basis.upper(), 1e-6);
}

struct MilestoneSummary {
    std::vector<std::string> biomarkers;
    std::vector<double> inflection_mean, inflection_lo, inflection_hi;
    std::vector<double> t50_mean, t50_lo, t50_hi;
    std::vector<int> skipped_draws;
    bool has_inflection = true;
};

// Per-draw milestones summarized across the posterior. The parametric
// comparator's curve peaks its slope at the center parameter, which is also
// where it reaches half of its asymptote, so both milestones equal c there.
inline MilestoneSummary milestone_summary(const PosteriorSamples& samples,
                                          const LongitudinalDataset& ds,
                                          const BasisSpec* basis,
                                          ConstraintMode mode) {
    require(!samples.states.empty(), ErrorClass::Config, "no posterior draws");
    MilestoneSummary out;
    out.has_inflection = mode != ConstraintMode::MonotoneOnly;
    for (int k = 0; k < ds.n_biomarkers(); ++k) {
        out.biomarkers.push_back(ds.schema.biomarkers[k].name);
        std::vector<double> t_star, t_half;
        int skipped = 0;
        for (const auto& st : samples.states) {
            if (mode == ConstraintMode::LogisticParametric) {
                t_star.push_back(st.logistic[k][0]);
                t_half.push_back(st.logistic[k][0]);
                continue;
            }
            try {
                if (out.has_inflection) {
                    const int m_star =
                        st.group_mstar.empty()
                            ? 0
                            : st.group_mstar[ds.biomarker_groups()[k]];
                    t_star.push_back(inflection_point(st.gamma[k], *basis, m_star));
                }
                t_half.push_back(half_progression_time(st.gamma[k], *basis));
            } catch (const Error&) {
                ++skipped;
            }
        }
        out.skipped_draws.push_back(skipped);
        auto summarize = [](const std::vector<double>& v, double& m, double& lo,
                            double& hi) {
            if (v.empty()) {
                m = lo = hi = std::numeric_limits<double>::quiet_NaN();
                return;
            }
            m = mean_of(v);
            std::vector<double> s = v;
            std::sort(s.begin(), s.end());
            lo = quantile_of_sorted(s, 0.025);
            hi = quantile_of_sorted(s, 0.975);
        };
        double m, lo, hi;
        if (out.has_inflection) {
            summarize(t_star, m, lo, hi);
        } else {
            m = lo = hi = std::numeric_limits<double>::quiet_NaN();
        }
        out.inflection_mean.push_back(m);
        out.inflection_lo.push_back(lo);
        out.inflection_hi.push_back(hi);
        summarize(t_half, m, lo, hi);
        out.t50_mean.push_back(m);
        out.t50_lo.push_back(lo);
        out.t50_hi.push_back(hi);
    }
    return out;
}

// A contrast is either a covariate direction (summaries of delta' beta_k) or
// an age pair (summaries of f_k(t2) - f_k(t1)).
struct Contrast {
    std::string label;
    bool is_age = false;
    Eigen::VectorXd delta;  // covariate contrasts
    double t1 = 0.0, t2 = 0.0;
};

struct EffectRow {
    std::string biomarker;
    std::string contrast;
    double mean = 0.0, lo = 0.0, hi = 0.0;
    bool contains_zero = false;
};

inline std::vector<EffectRow> effect_table(const PosteriorSamples& samples,
                                           const LongitudinalDataset& ds,
                                           const BasisSpec* basis,
                                           const std::vector<Contrast>& contrasts) {
    require(!samples.states.empty(), ErrorClass::Config, "no posterior draws");
    std::vector<EffectRow> rows;
    for (int k = 0; k < ds.n_biomarkers(); ++k) {
        for (const auto& c : contrasts) {
            std::vector<double> draws;
            for (const auto& st : samples.states) {
                if (c.is_age)
                    draws.push_back(detail::draw_curve_value(st, k, basis, c.t2) -
                                    detail::draw_curve_value(st, k, basis, c.t1));
                else {
                    require(c.delta.size() == st.beta[k].size(), ErrorClass::Config,
                            "contrast dimension mismatch");
                    draws.push_back(c.delta.dot(st.beta[k]));
                }
            }
            EffectRow row;
            row.biomarker = ds.schema.biomarkers[k].name;
            row.contrast = c.label;
            row.mean = mean_of(draws);
            std::sort(draws.begin(), draws.end());
            row.lo = quantile_of_sorted(draws, 0.025);
            row.hi = quantile_of_sorted(draws, 0.975);
            row.contains_zero = row.lo <= 0.0 && 0.0 <= row.hi;
            rows.push_back(row);
        }
    }
    return rows;
}

// Named-covariate convenience: a unit change in one covariate.
inline Contrast covariate_contrast(const LongitudinalDataset& ds,
                                   const std::string& name, double scale = 1.0) {
    for (std::size_t c = 0; c < ds.schema.covariates.size(); ++c)
        if (ds.schema.covariates[c].name == name) {
            Contrast out;
            out.label = name;
            out.delta = Eigen::VectorXd::Zero(ds.n_covariate_terms());
            out.delta[static_cast<int>(c) + 1] = scale;
            return out;
        }
    fail(ErrorClass::Config, "unknown covariate '" + name + "'");
}

inline Contrast age_contrast(double t1, double t2) {
    Contrast out;
    out.label = "age_" + format_double(t1) + "_to_" + format_double(t2);
    out.is_age = true;
    out.t1 = t1;
    out.t2 = t2;
    return out;
}

inline std::string curve_summary_csv(const CurveSummary& s) {
    std::string out = "biomarker,t,mean,lower,upper,std_mean,std_lower,std_upper\n";
    for (std::size_t k = 0; k < s.biomarkers.size(); ++k)
        for (std::size_t g = 0; g < s.grid.size(); ++g)
            out += s.biomarkers[k] + "," + format_double(s.grid[g]) + "," +
                   format_double(s.mean[k][g]) + "," + format_double(s.lo[k][g]) +
                   "," + format_double(s.hi[k][g]) + "," +
                   format_double(s.std_mean[k][g]) + "," +
                   format_double(s.std_lo[k][g]) + "," +
                   format_double(s.std_hi[k][g]) + "\n";
    return out;
}

inline std::string milestone_csv(const MilestoneSummary& s) {
    std::string out =
        "biomarker,inflection_mean,inflection_lower,inflection_upper,"
        "t50_mean,t50_lower,t50_upper,skipped_draws\n";
    auto cell = [](double v) {
        return std::isnan(v) ? std::string() : format_double(v);
    };
    for (std::size_t k = 0; k < s.biomarkers.size(); ++k)
        out += s.biomarkers[k] + "," + cell(s.inflection_mean[k]) + "," +
               cell(s.inflection_lo[k]) + "," + cell(s.inflection_hi[k]) + "," +
               cell(s.t50_mean[k]) + "," + cell(s.t50_lo[k]) + "," +
               cell(s.t50_hi[k]) + "," + std::to_string(s.skipped_draws[k]) + "\n";
    return out;
}

inline std::string effect_table_csv(const std::vector<EffectRow>& rows) {
    std::string out = "biomarker,contrast,mean,lower,upper,contains_zero\n";
    for (const auto& r : rows)
        out += r.biomarker + "," + r.contrast + "," + format_double(r.mean) + "," +
               format_double(r.lo) + "," + format_double(r.hi) + "," +
               (r.contains_zero ? "1" : "0") + "\n";
    return out;
}

}  // namespace sshape
