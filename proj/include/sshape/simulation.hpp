#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "sshape/posterior_summary.hpp"

namespace sshape {

enum class TruthKind { Logistic, Asymmetric };

// Ground-truth progression curves: a symmetric logistic of height 2 centered
// at 70, and a piecewise-cubic asymmetric curve rising over [30, 90] with its
// steepest point at 75. Both are continuously differentiable and essentially
// complete their progression inside [30, 90].
struct SimTruth {
    TruthKind kind = TruthKind::Logistic;

    static SimTruth logistic() { return {TruthKind::Logistic}; }
    static SimTruth asymmetric() { return {TruthKind::Asymmetric}; }

    const char* name() const {
        return kind == TruthKind::Logistic ? "logistic" : "asymmetric";
    }
    double height() const { return 2.0; }
    double inflection() const { return kind == TruthKind::Logistic ? 70.0 : 75.0; }
    double t50() const {
        return kind == TruthKind::Logistic ? 70.0 : 30.0 + std::cbrt(60750.0);
    }

    double eval(double t) const {
        if (kind == TruthKind::Logistic)
            return 2.0 / (1.0 + std::exp(-(t - 70.0) / 5.0));
        if (t < 30.0) return 0.0;
        if (t < 75.0) return 2.0 * std::pow(t - 30.0, 3) / (45.0 * 45.0 * 60.0);
        if (t < 90.0)
            return 2.0 * (1.0 - std::pow(90.0 - t, 3) / (15.0 * 15.0 * 60.0));
        return 2.0;
    }
};

inline SimTruth truth_from(const std::string& s) {
    if (s == "logistic") return SimTruth::logistic();
    if (s == "asymmetric" || s == "asym") return SimTruth::asymmetric();
    fail(ErrorClass::Config, "unknown truth '" + s + "'");
}

struct SimOptions {
    int n_subjects = 250;
    double noise_variance = 0.5;  // observation noise, read as a variance
    double mask_prob = 0.3;
};

// One synthetic cohort: binary and standard-normal baseline covariates with
// coefficients (0.4, -0.5, 0.1), first visit uniform on [50, 90], a
// Poisson(10) visit count (at least one), near-annual visit gaps, unit
// subject effects, and 30% of measurements masked.
inline LongitudinalDataset simulate_dataset(const SimTruth& truth,
                                            std::uint64_t seed,
                                            const SimOptions& opts = {}) {
    LongitudinalDataset ds;
    ds.schema.covariates = {{"x1", true}, {"x2", false}};
    ds.schema.biomarkers = {{"marker", "SIM", 1, false}};
    Rng rng(seed);
    const double noise_sd = std::sqrt(opts.noise_variance);
    for (int i = 0; i < opts.n_subjects; ++i) {
        SubjectData s;
        s.id = "sim" + std::to_string(i);
        s.x = Eigen::VectorXd::Ones(3);
        s.x[1] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        s.x[2] = rng.normal();
        const int n_visits = std::max(1, rng.poisson(10.0));
        double t = rng.uniform(50.0, 90.0);
        for (int j = 0; j < n_visits; ++j) {
            s.ages.push_back(t);
            t += 1.0 + rng.exponential(1.0 / 20.0);
        }
        const double omega = rng.normal();
        s.y = Eigen::MatrixXd::Zero(n_visits, 1);
        s.observed.setZero(n_visits, 1);
        for (int j = 0; j < n_visits; ++j) {
            s.y(j, 0) = truth.eval(s.ages[j]) + 0.4 * s.x[0] - 0.5 * s.x[1] +
                        0.1 * s.x[2] + omega + noise_sd * rng.normal();
            s.observed(j, 0) = rng.bernoulli(opts.mask_prob) ? 0 : 1;
        }
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

struct EvalOptions {
    double grid_step = 0.2;
    double metric_lo = 30.0;  // averaging range for pointwise metrics
    double metric_hi = 90.0;
};

// Per-replicate metrics: pointwise RMSE and 95% coverage of the posterior
// curve against the truth, and absolute errors plus interval coverage of the
// two progression milestones.
struct FitMetrics {
    double curve_rmse = 0.0;
    double curve_coverage = 0.0;
    bool has_inflection = true;
    double inflection_error = 0.0;
    bool inflection_covered = false;
    double t50_error = 0.0;
    bool t50_covered = false;
};

inline FitMetrics evaluate_fit(const PosteriorSamples& samples,
                               const SimTruth& truth,
                               const LongitudinalDataset& ds,
                               const BasisSpec* basis, ConstraintMode mode,
                               const EvalOptions& opts = {}) {
    require(!samples.states.empty(), ErrorClass::Config, "no posterior draws");
    const std::vector<double> grid = make_grid(0.0, 120.0, opts.grid_step);
    const CurveSummary cs = curve_summary(samples, ds, basis, grid);
    FitMetrics out;
    double se_sum = 0.0, cover_sum = 0.0;
    int n_used = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (grid[g] < opts.metric_lo || grid[g] > opts.metric_hi) continue;
        const double f = truth.eval(grid[g]);
        const double err = cs.mean[0][g] - f;
        se_sum += err * err;
        cover_sum += (cs.lo[0][g] <= f && f <= cs.hi[0][g]) ? 1.0 : 0.0;
        ++n_used;
    }
    out.curve_rmse = std::sqrt(se_sum / n_used);
    out.curve_coverage = cover_sum / n_used;

    const MilestoneSummary ms = milestone_summary(samples, ds, basis, mode);
    out.has_inflection = ms.has_inflection;
    if (ms.has_inflection) {
        out.inflection_error = std::abs(ms.inflection_mean[0] - truth.inflection());
        out.inflection_covered = ms.inflection_lo[0] <= truth.inflection() &&
                                 truth.inflection() <= ms.inflection_hi[0];
    }
    out.t50_error = std::abs(ms.t50_mean[0] - truth.t50());
    out.t50_covered = ms.t50_lo[0] <= truth.t50() && truth.t50() <= ms.t50_hi[0];
    return out;
}

struct SimReportRow {
    std::string truth;
    std::string model;
    std::string knot_range;  // "lo-hi", empty for the parametric comparator
    int n_replicates = 0;
    double curve_rmse = 0.0;
    double curve_coverage = 0.0;
    bool has_inflection = true;
    double inflection_rmse = 0.0;
    double inflection_coverage = 0.0;
    double t50_rmse = 0.0;
    double t50_coverage = 0.0;
    double runtime_sec = 0.0;
};

struct SimReport {
    std::vector<SimReportRow> rows;
};

// Runtimes stay out of the CSV so reruns with the same seed are
// byte-identical; they are reported through the run manifest instead.
inline std::string sim_report_csv(const SimReport& report) {
    std::string out =
        "truth,model,knot_range,n_replicates,curve_rmse,curve_coverage,"
        "inflection_rmse,inflection_coverage,t50_rmse,t50_coverage\n";
    for (const auto& r : report.rows) {
        out += r.truth + "," + r.model + "," + r.knot_range + "," +
               std::to_string(r.n_replicates) + "," + format_double(r.curve_rmse) +
               "," + format_double(r.curve_coverage) + ",";
        if (r.has_inflection)
            out += format_double(r.inflection_rmse) + "," +
                   format_double(r.inflection_coverage);
        else
            out += ",";
        out += "," + format_double(r.t50_rmse) + "," +
               format_double(r.t50_coverage) + "\n";
    }
    return out;
}

inline SimReport parse_sim_report(const std::string& text) {
    const auto lines = split_lines(text);
    require(!lines.empty(), ErrorClass::Parse, "empty report");
    require(split_csv_row(lines[0]).size() == 10, ErrorClass::Parse,
            "unexpected report header");
    SimReport report;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto c = split_csv_row(lines[i]);
        require(c.size() == 10, ErrorClass::Parse, "bad report row: " + lines[i]);
        SimReportRow row;
        row.truth = c[0];
        row.model = c[1];
        row.knot_range = c[2];
        row.n_replicates = static_cast<int>(parse_int(c[3], "n_replicates"));
        row.curve_rmse = parse_double(c[4], "curve_rmse");
        row.curve_coverage = parse_double(c[5], "curve_coverage");
        row.has_inflection = !trim(c[6]).empty();
        if (row.has_inflection) {
            row.inflection_rmse = parse_double(c[6], "inflection_rmse");
            row.inflection_coverage = parse_double(c[7], "inflection_coverage");
        }
        row.t50_rmse = parse_double(c[8], "t50_rmse");
        row.t50_coverage = parse_double(c[9], "t50_coverage");
        report.rows.push_back(row);
    }
    return report;
}

// Build the basis for a fitted replicate: knot locations follow the
// smoothed age distribution of the cohort restricted to the knot range.
inline BasisSpec build_basis_for(const LongitudinalDataset& ds, int basis_count,
                                 double knot_lo, double knot_hi,
                                 double concentration) {
    std::vector<double> ages;
    for (const auto& s : ds.subjects)
        for (double t : s.ages)
            ages.push_back(std::min(SmoothedAgeDensity::kDomainHi, std::max(0.0, t)));
    const SmoothedAgeDensity density(ages, concentration);
    return build_knots(density, basis_count, knot_lo, knot_hi);
}

struct ComparisonCell {
    SimTruth truth;
    ConstraintMode mode = ConstraintMode::SShaped;
    double knot_lo = 0.0, knot_hi = 120.0;
    bool has_range = true;  // false for the parametric comparator
};

struct ComparisonSettings {
    int n_replicates = 1;
    std::uint64_t seed = 1;
    int basis_count = 24;
    double density_concentration = 10.0;
    SamplerConfig sampler;
    SimOptions sim;
    EvalOptions eval;
    int jobs = 1;
};

// Full factorial sweep: every cell sees the same replicate datasets (the
// dataset seed depends only on truth and replicate index). Failed fits are
// recorded and excluded from the cell averages.
inline SimReport run_comparison(const std::vector<ComparisonCell>& cells,
                                const ComparisonSettings& settings) {
    SimReport report;
    for (const auto& cell : cells) {
        std::vector<FitMetrics> metrics(settings.n_replicates);
        std::vector<char> ok(settings.n_replicates, 0);
        std::atomic<int> next{0};
        const auto t0 = std::chrono::steady_clock::now();
        auto worker = [&]() {
            for (;;) {
                const int r = next.fetch_add(1);
                if (r >= settings.n_replicates) return;
                const std::uint64_t truth_tag =
                    cell.truth.kind == TruthKind::Logistic ? 1 : 2;
                const std::uint64_t data_seed = Rng::derive_seed(
                    settings.seed, truth_tag * 100003ull + std::uint64_t(r));
                try {
                    const LongitudinalDataset ds =
                        simulate_dataset(cell.truth, data_seed, settings.sim);
                    SamplerConfig sc = settings.sampler;
                    sc.seed = Rng::derive_seed(data_seed, 17);
                    ModelConfig mc;
                    mc.basis_count = settings.basis_count;
                    mc.mode = cell.mode;
                    PosteriorSamples samples;
                    if (cell.mode == ConstraintMode::LogisticParametric) {
                        GibbsSampler sampler(ds, nullptr, mc, sc);
                        samples = sampler.run();
                        metrics[r] = evaluate_fit(samples, cell.truth, ds, nullptr,
                                                  cell.mode, settings.eval);
                    } else {
                        const BasisSpec basis = build_basis_for(
                            ds, settings.basis_count, cell.knot_lo, cell.knot_hi,
                            settings.density_concentration);
                        GibbsSampler sampler(ds, &basis, mc, sc);
                        samples = sampler.run();
                        metrics[r] = evaluate_fit(samples, cell.truth, ds, &basis,
                                                  cell.mode, settings.eval);
                    }
                    ok[r] = 1;
                } catch (const std::exception& e) {
                    std::fprintf(stderr, "replicate %d failed: %s\n", r, e.what());
                }
            }
        };
        std::vector<std::thread> pool;
        const int n_threads = std::max(1, std::min(settings.jobs,
                                                   settings.n_replicates));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();

        SimReportRow row;
        row.truth = cell.truth.name();
        row.model = to_string(cell.mode);
        if (cell.has_range)
            row.knot_range = format_double(cell.knot_lo) + "-" +
                             format_double(cell.knot_hi);
        row.runtime_sec = elapsed;
        row.has_inflection = cell.mode != ConstraintMode::MonotoneOnly;
        double se_curve = 0.0, cov_curve = 0.0, se_inf = 0.0, cov_inf = 0.0,
               se_t50 = 0.0, cov_t50 = 0.0;
        int n_ok = 0;
        for (int r = 0; r < settings.n_replicates; ++r) {
            if (!ok[r]) continue;
            ++n_ok;
            se_curve += metrics[r].curve_rmse * metrics[r].curve_rmse;
            cov_curve += metrics[r].curve_coverage;
            se_inf += metrics[r].inflection_error * metrics[r].inflection_error;
            cov_inf += metrics[r].inflection_covered ? 1.0 : 0.0;
            se_t50 += metrics[r].t50_error * metrics[r].t50_error;
            cov_t50 += metrics[r].t50_covered ? 1.0 : 0.0;
        }
        row.n_replicates = n_ok;
        if (n_ok > 0) {
            row.curve_rmse = std::sqrt(se_curve / n_ok);
            row.curve_coverage = cov_curve / n_ok;
            if (row.has_inflection) {
                row.inflection_rmse = std::sqrt(se_inf / n_ok);
                row.inflection_coverage = cov_inf / n_ok;
            }
            row.t50_rmse = std::sqrt(se_t50 / n_ok);
            row.t50_coverage = cov_t50 / n_ok;
        }
        report.rows.push_back(row);
    }
    return report;
}

// Standard Table-1 style cell list for a set of truths: the shape-constrained
// model and the unconstrained monotone model under both knot ranges, plus the
// parametric comparator.
inline std::vector<ComparisonCell> table_cells(
    const std::vector<SimTruth>& truths, const std::vector<ConstraintMode>& modes,
    const std::vector<std::pair<double, double>>& ranges) {
    std::vector<ComparisonCell> cells;
    for (const auto& truth : truths)
        for (const auto& mode : modes) {
            if (mode == ConstraintMode::LogisticParametric) {
                ComparisonCell c;
                c.truth = truth;
                c.mode = mode;
                c.has_range = false;
                cells.push_back(c);
                continue;
            }
            for (const auto& [lo, hi] : ranges) {
                ComparisonCell c;
                c.truth = truth;
                c.mode = mode;
                c.knot_lo = lo;
                c.knot_hi = hi;
                cells.push_back(c);
            }
        }
    return cells;
}

// Later rows win on duplicate (truth, model, knot_range) keys.
inline SimReport merge_reports(const std::vector<SimReport>& reports,
                               int* duplicates = nullptr) {
    SimReport merged;
    if (duplicates != nullptr) *duplicates = 0;
    for (const auto& rep : reports)
        for (const auto& row : rep.rows) {
            bool replaced = false;
            for (auto& existing : merged.rows)
                if (existing.truth == row.truth && existing.model == row.model &&
                    existing.knot_range == row.knot_range) {
                    existing = row;
                    replaced = true;
                    if (duplicates != nullptr) ++(*duplicates);
                    break;
                }
            if (!replaced) merged.rows.push_back(row);
        }
    std::sort(merged.rows.begin(), merged.rows.end(),
              [](const SimReportRow& a, const SimReportRow& b) {
                  return std::tie(a.truth, a.model, a.knot_range) <
                         std::tie(b.truth, b.model, b.knot_range);
              });
    return merged;
}

}  // namespace sshape
