#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sshape/posterior_summary.hpp"
#include "sshape/rng.hpp"
#include "sshape/simulation.hpp"

using namespace sshape;

namespace {

LongitudinalDataset one_marker_ds() {
    LongitudinalDataset ds;
    ds.schema.covariates = {{"x1", true}, {"x2", false}};
    ds.schema.biomarkers = {{"marker", "SIM", 1, false}};
    return ds;
}

BasisSpec near_uniform_basis(int m) {
    const SmoothedAgeDensity d({10.0, 60.0, 110.0}, 1e-9);
    return build_knots(d, m, 0.0, 120.0);
}

// Dense least-squares fit of the truth's derivative in the B-spline basis,
// clamped into the coefficient cone.
Eigen::VectorXd dense_cone_fit(const SimTruth& truth, const BasisSpec& basis) {
    const int m_total = basis.basis_count();
    const int n = 600;
    Eigen::MatrixXd design(n + 1, m_total);
    Eigen::VectorXd target(n + 1);
    for (int i = 0; i <= n; ++i) {
        const double t = basis.lower() + (basis.upper() - basis.lower()) * i / n;
        design.row(i) = basis.bspline(t);
        const double h = 1e-4;
        target[i] = (truth.eval(t + h) - truth.eval(t - h)) / (2 * h);
    }
    Eigen::MatrixXd reg = design.transpose() * design +
                          1e-10 * Eigen::MatrixXd::Identity(m_total, m_total);
    Eigen::VectorXd gamma = reg.llt().solve(design.transpose() * target);
    // clamp into the cone around the largest coefficient
    int peak = 0;
    for (int m = 1; m < m_total; ++m)
        if (gamma[m] > gamma[peak]) peak = m;
    gamma = gamma.cwiseMax(0.0);
    for (int m = 1; m <= peak; ++m) gamma[m] = std::max(gamma[m], gamma[m - 1]);
    for (int m = m_total - 2; m >= peak; --m)
        gamma[m] = std::max(gamma[m], gamma[m + 1]);
    return gamma;
}

PosteriorSamples samples_from_gammas(const std::vector<Eigen::VectorXd>& gammas,
                                     int m_star) {
    PosteriorSamples s;
    for (const auto& g : gammas) {
        ModelState st;
        st.beta.push_back(Eigen::VectorXd::Zero(3));
        st.gamma.push_back(g);
        st.omega = Eigen::MatrixXd::Zero(0, 1);
        st.group_mstar = {m_star};
        s.states.push_back(st);
    }
    return s;
}

}  // namespace

TEST_CASE("identical draws collapse the interval") {
    const BasisSpec basis = near_uniform_basis(8);
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(8);
    gamma.segment(2, 4) << 0.01, 0.03, 0.02, 0.01;
    const auto samples = samples_from_gammas({gamma, gamma, gamma}, 4);
    const LongitudinalDataset ds = one_marker_ds();
    const auto grid = make_grid(0.0, 120.0, 10.0);
    const CurveSummary cs = curve_summary(samples, ds, &basis, grid);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double f = basis.curve(gamma, grid[g]).first;
        REQUIRE(cs.mean[0][g] == Catch::Approx(f).margin(1e-12));
        REQUIRE(cs.lo[0][g] == cs.hi[0][g]);
        REQUIRE(cs.lo[0][g] <= cs.mean[0][g] + 1e-12);
        REQUIRE(cs.mean[0][g] <= cs.hi[0][g] + 1e-12);
    }
    REQUIRE(cs.degenerate_draws[0] == 0);
}

TEST_CASE("standardized curves run from zero to one and stay monotone") {
    Rng rng(501);
    const BasisSpec basis = near_uniform_basis(10);
    std::vector<Eigen::VectorXd> gammas;
    for (int d = 0; d < 40; ++d) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(10);
        double acc = 0.0;
        for (int m = 2; m <= 5; ++m) {
            acc += rng.uniform();
            g[m] = acc;
        }
        for (int m = 6; m <= 7; ++m) {
            acc -= rng.uniform(0.0, acc / 2);
            g[m] = acc;
        }
        gammas.push_back(0.01 * g);
    }
    const auto samples = samples_from_gammas(gammas, 6);
    const LongitudinalDataset ds = one_marker_ds();
    const auto grid = make_grid(0.0, 120.0, 1.0);
    const CurveSummary cs = curve_summary(samples, ds, &basis, grid);
    REQUIRE(cs.std_mean[0][0] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(cs.std_mean[0][grid.size() - 1] == Catch::Approx(1.0).margin(1e-12));
    for (std::size_t g = 1; g < grid.size(); ++g)
        REQUIRE(cs.std_mean[0][g] >= cs.std_mean[0][g - 1] - 1e-12);
    // f(0) = 0 by construction, so the standardizing span is f(120) itself
    const double span = basis.curve(gammas[0], 120.0).first;
    REQUIRE(basis.curve(gammas[0], 0.0).first == 0.0);
    REQUIRE(span > 0.0);
}

TEST_CASE("degenerate draws are excluded from the standardized band") {
    const BasisSpec basis = near_uniform_basis(8);
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(8);
    gamma.segment(2, 4) << 0.01, 0.03, 0.02, 0.01;
    const auto samples =
        samples_from_gammas({gamma, Eigen::VectorXd::Zero(8), gamma}, 4);
    const LongitudinalDataset ds = one_marker_ds();
    const CurveSummary cs =
        curve_summary(samples, ds, &basis, make_grid(0.0, 120.0, 20.0));
    REQUIRE(cs.degenerate_draws[0] == 1);
    REQUIRE(std::isfinite(cs.std_mean[0][3]));
}

TEST_CASE("milestones of dense fits recover the known truths") {
    // knots follow the smoothed age density of a typical cohort, as in the
    // fitting pipeline, which concentrates resolution where the curves bend
    Rng krng(503);
    std::vector<double> ages;
    for (int i = 0; i < 1000; ++i) ages.push_back(krng.uniform(50.0, 90.0));
    const SmoothedAgeDensity density(ages, 10.0);
    const BasisSpec basis = build_knots(density, 24, 0.0, 120.0);

    const Eigen::VectorXd g_logit = dense_cone_fit(SimTruth::logistic(), basis);
    const double t_star_logit = inflection_point(g_logit, basis);
    const double t50_logit = half_progression_time(g_logit, basis);
    REQUIRE(t_star_logit == Catch::Approx(70.0).margin(0.5));
    REQUIRE(t50_logit == Catch::Approx(70.0).margin(0.2));

    const Eigen::VectorXd g_asym = dense_cone_fit(SimTruth::asymmetric(), basis);
    const double t_star_asym = inflection_point(g_asym, basis);
    const double t50_asym = half_progression_time(g_asym, basis);
    REQUIRE(t_star_asym == Catch::Approx(75.0).margin(0.5));
    REQUIRE(t50_asym == Catch::Approx(69.3).margin(0.2));

    // localization: the returned maximum lies in the peak coefficient's span
    int m_star = 0;
    for (int m = 1; m < 24; ++m)
        if (g_asym[m] > g_asym[m_star]) m_star = m;
    ++m_star;  // to 1-based
    REQUIRE(t_star_asym >= basis.knots()[m_star - 2]);
    REQUIRE(t_star_asym <= basis.knots()[m_star - 1]);

    // milestone invariance under positive rescaling
    REQUIRE(inflection_point(3.7 * g_asym, basis) ==
            Catch::Approx(t_star_asym).margin(1e-6));
    REQUIRE(half_progression_time(3.7 * g_asym, basis) ==
            Catch::Approx(t50_asym).margin(1e-6));

    REQUIRE_THROWS_AS(inflection_point(Eigen::VectorXd::Zero(24), basis), Error);
    REQUIRE_THROWS_AS(half_progression_time(Eigen::VectorXd::Zero(24), basis),
                      Error);
}

TEST_CASE("milestone summary covers all three model variants") {
    Rng krng(504);
    std::vector<double> ages;
    for (int i = 0; i < 1000; ++i) ages.push_back(krng.uniform(50.0, 90.0));
    const BasisSpec basis =
        build_knots(SmoothedAgeDensity(ages, 10.0), 24, 0.0, 120.0);
    const Eigen::VectorXd g = dense_cone_fit(SimTruth::logistic(), basis);
    int m_star = 0;
    for (int m = 1; m < 24; ++m)
        if (g[m] > g[m_star]) m_star = m;
    ++m_star;
    const auto samples = samples_from_gammas({g, g}, m_star);
    const LongitudinalDataset ds = one_marker_ds();

    const MilestoneSummary shaped =
        milestone_summary(samples, ds, &basis, ConstraintMode::SShaped);
    REQUIRE(shaped.has_inflection);
    REQUIRE(shaped.inflection_mean[0] == Catch::Approx(70.0).margin(0.5));
    REQUIRE(shaped.t50_mean[0] == Catch::Approx(70.0).margin(0.2));

    const MilestoneSummary flat =
        milestone_summary(samples, ds, &basis, ConstraintMode::MonotoneOnly);
    REQUIRE_FALSE(flat.has_inflection);
    REQUIRE(std::isnan(flat.inflection_mean[0]));
    REQUIRE(flat.t50_mean[0] == Catch::Approx(70.0).margin(0.2));
    const std::string csv = milestone_csv(flat);
    REQUIRE(csv.find("marker,,,,") != std::string::npos);  // blank cells

    PosteriorSamples logistic;
    for (double c : {69.0, 71.0}) {
        ModelState st;
        st.beta.push_back(Eigen::VectorXd::Zero(3));
        st.omega = Eigen::MatrixXd::Zero(0, 1);
        st.logistic.push_back(Eigen::Vector3d(c, 5.0, 2.0));
        logistic.states.push_back(st);
    }
    const MilestoneSummary par = milestone_summary(
        logistic, ds, nullptr, ConstraintMode::LogisticParametric);
    REQUIRE(par.inflection_mean[0] == Catch::Approx(70.0));
    REQUIRE(par.t50_mean[0] == Catch::Approx(70.0));
}

TEST_CASE("effect tables summarize contrasts") {
    const BasisSpec basis = near_uniform_basis(8);
    Rng rng(502);
    PosteriorSamples samples;
    for (int d = 0; d < 500; ++d) {
        ModelState st;
        Eigen::VectorXd beta(3);
        beta << 0.4 + 0.01 * rng.normal(), -0.5 + 0.05 * rng.normal(),
            0.1 + 0.2 * rng.normal();
        st.beta.push_back(beta);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(8);
        g.segment(2, 4) << 0.01, 0.03, 0.02, 0.01;
        st.gamma.push_back(g);
        st.omega = Eigen::MatrixXd::Zero(0, 1);
        st.group_mstar = {4};
        samples.states.push_back(st);
    }
    LongitudinalDataset ds = one_marker_ds();

    std::vector<Contrast> contrasts;
    contrasts.push_back(covariate_contrast(ds, "x1"));
    contrasts.push_back(covariate_contrast(ds, "x2"));
    Contrast null_contrast;
    null_contrast.label = "null";
    null_contrast.delta = Eigen::VectorXd::Zero(3);
    contrasts.push_back(null_contrast);
    contrasts.push_back(age_contrast(50.0, 90.0));
    contrasts.push_back(age_contrast(60.0, 60.0));

    const auto rows = effect_table(samples, ds, &basis, contrasts);
    REQUIRE(rows.size() == 5);
    REQUIRE(rows[0].mean == Catch::Approx(-0.5).margin(0.02));
    REQUIRE_FALSE(rows[0].contains_zero);
    REQUIRE(rows[1].contains_zero);  // wide x2 interval straddles zero
    REQUIRE(rows[2].mean == 0.0);
    REQUIRE(rows[2].lo == 0.0);
    REQUIRE(rows[2].hi == 0.0);
    const double age_effect = basis.curve(samples.states[0].gamma[0], 90.0).first -
                              basis.curve(samples.states[0].gamma[0], 50.0).first;
    REQUIRE(rows[3].mean == Catch::Approx(age_effect).margin(1e-12));
    REQUIRE(rows[4].mean == 0.0);
    REQUIRE(rows[4].lo == 0.0);
    REQUIRE(rows[4].hi == 0.0);
    for (const auto& r : rows) {
        REQUIRE(r.lo <= r.mean + 1e-12);
        REQUIRE(r.mean <= r.hi + 1e-12);
    }

    REQUIRE_THROWS_AS(covariate_contrast(ds, "nope"), Error);
    const std::string csv = effect_table_csv(rows);
    REQUIRE(csv.find("age_50_to_90") != std::string::npos);
}
