// Command-line front end: preprocess/fit real cohorts, run simulation
// sweeps, and merge their reports. Every run writes a manifest that pins the
// resolved configuration, input digests, and output digests; rerunning from
// the manifest reproduces all outputs byte for byte (the manifest itself
// records wall-clock timing and is excluded from that guarantee).

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "sshape/data_model.hpp"
#include "sshape/gibbs_sampler.hpp"
#include "sshape/io_util.hpp"
#include "sshape/posterior_summary.hpp"
#include "sshape/serialize.hpp"
#include "sshape/simulation.hpp"

namespace fs = std::filesystem;
using namespace sshape;

namespace {

struct Settings {
    long iters = 10000;
    long burnin = 5000;
    long thinning = 1;
    std::uint64_t seed = 1;
    long basis_count = 24;
    double nu = 10.0;
    double knot_lo = 0.0;
    double knot_hi = 120.0;
    std::string variant = "s_shaped";
    double hyperprior_scale = 0.0;  // 0 = mode default
    double metropolis_step = 0.4;
    double adapt_target = 0.35;
    long genz_n_mc = 512;
    long hmc_trajectories = 3;
    double logistic_step = 0.08;
    double grid_step = 0.2;
    double metric_lo = 30.0;
    double metric_hi = 90.0;
    double age_contrast_lo = 50.0;
    double age_contrast_hi = 90.0;
    std::string truth = "asymmetric";
    long replicates = 1;
    long jobs = 1;
    long n_subjects = 250;
    double noise_variance = 0.5;
    double mask_prob = 0.3;
    bool s2_exact_rnd_shape = false;

    void load(const KeyValueConfig& cfg) {
        iters = cfg.get_int("iters", iters);
        burnin = cfg.get_int("burnin", burnin);
        thinning = cfg.get_int("thinning", thinning);
        seed = static_cast<std::uint64_t>(cfg.get_int("seed", long(seed)));
        basis_count = cfg.get_int("basis_count", basis_count);
        nu = cfg.get_double("nu", nu);
        knot_lo = cfg.get_double("knot_lo", knot_lo);
        knot_hi = cfg.get_double("knot_hi", knot_hi);
        variant = cfg.get("variant", variant);
        hyperprior_scale = cfg.get_double("hyperprior_scale", hyperprior_scale);
        metropolis_step = cfg.get_double("metropolis_step", metropolis_step);
        adapt_target = cfg.get_double("adapt_target", adapt_target);
        genz_n_mc = cfg.get_int("genz_n_mc", genz_n_mc);
        hmc_trajectories = cfg.get_int("hmc_trajectories", hmc_trajectories);
        logistic_step = cfg.get_double("logistic_step", logistic_step);
        grid_step = cfg.get_double("grid_step", grid_step);
        metric_lo = cfg.get_double("metric_lo", metric_lo);
        metric_hi = cfg.get_double("metric_hi", metric_hi);
        age_contrast_lo = cfg.get_double("age_contrast_lo", age_contrast_lo);
        age_contrast_hi = cfg.get_double("age_contrast_hi", age_contrast_hi);
        truth = cfg.get("truth", truth);
        replicates = cfg.get_int("replicates", replicates);
        jobs = cfg.get_int("jobs", jobs);
        n_subjects = cfg.get_int("n_subjects", n_subjects);
        noise_variance = cfg.get_double("noise_variance", noise_variance);
        mask_prob = cfg.get_double("mask_prob", mask_prob);
        s2_exact_rnd_shape = cfg.get_bool("s2_exact_rnd_shape", s2_exact_rnd_shape);
    }

    std::map<std::string, std::string> entries() const {
        return {{"iters", std::to_string(iters)},
                {"burnin", std::to_string(burnin)},
                {"thinning", std::to_string(thinning)},
                {"seed", std::to_string(seed)},
                {"basis_count", std::to_string(basis_count)},
                {"nu", format_double(nu)},
                {"knot_lo", format_double(knot_lo)},
                {"knot_hi", format_double(knot_hi)},
                {"variant", variant},
                {"hyperprior_scale", format_double(hyperprior_scale)},
                {"metropolis_step", format_double(metropolis_step)},
                {"adapt_target", format_double(adapt_target)},
                {"genz_n_mc", std::to_string(genz_n_mc)},
                {"hmc_trajectories", std::to_string(hmc_trajectories)},
                {"logistic_step", format_double(logistic_step)},
                {"grid_step", format_double(grid_step)},
                {"metric_lo", format_double(metric_lo)},
                {"metric_hi", format_double(metric_hi)},
                {"age_contrast_lo", format_double(age_contrast_lo)},
                {"age_contrast_hi", format_double(age_contrast_hi)},
                {"truth", truth},
                {"replicates", std::to_string(replicates)},
                {"jobs", std::to_string(jobs)},
                {"n_subjects", std::to_string(n_subjects)},
                {"noise_variance", format_double(noise_variance)},
                {"mask_prob", format_double(mask_prob)},
                {"s2_exact_rnd_shape", s2_exact_rnd_shape ? "true" : "false"}};
    }

    ModelConfig model_config() const {
        ModelConfig mc;
        mc.basis_count = static_cast<int>(basis_count);
        mc.mode = constraint_mode_from(variant);
        mc.hyperprior_scale = hyperprior_scale;
        mc.s2_exact_rnd_shape = s2_exact_rnd_shape;
        return mc;
    }

    SamplerConfig sampler_config() const {
        SamplerConfig sc;
        sc.n_iter = static_cast<int>(iters);
        sc.burn_in = static_cast<int>(burnin);
        sc.thinning = static_cast<int>(thinning);
        sc.seed = seed;
        sc.metropolis_step = metropolis_step;
        sc.adapt_target = adapt_target;
        sc.genz_n_mc = static_cast<int>(genz_n_mc);
        sc.hmc_trajectories = static_cast<int>(hmc_trajectories);
        sc.logistic_step = logistic_step;
        return sc;
    }
};

// flags shared by fit/simulate/preprocess; presence-tracked for overriding
struct FlagOverrides {
    std::optional<long> iters, burnin, jobs, replicates, genz_n_mc;
    std::optional<std::uint64_t> seed;
    std::optional<double> grid_step;
    std::optional<std::string> knot_range, variant, truth;

    void apply(Settings& s) const {
        if (iters) s.iters = *iters;
        if (burnin) s.burnin = *burnin;
        if (jobs) s.jobs = *jobs;
        if (replicates) s.replicates = *replicates;
        if (genz_n_mc) s.genz_n_mc = *genz_n_mc;
        if (seed) s.seed = *seed;
        if (grid_step) s.grid_step = *grid_step;
        if (variant) s.variant = *variant;
        if (truth) s.truth = *truth;
        if (knot_range) {
            const auto parts = split_list(*knot_range);
            require(parts.size() == 2, ErrorClass::Usage,
                    "--knot-range expects 'lo,hi'");
            s.knot_lo = parse_double(parts[0], "--knot-range");
            s.knot_hi = parse_double(parts[1], "--knot-range");
        }
    }
};

void add_common_flags(CLI::App* cmd, FlagOverrides& o) {
    cmd->add_option("--seed", o.seed, "random seed (drives all randomness)");
    cmd->add_option("--iters", o.iters, "sampler iterations");
    cmd->add_option("--burnin", o.burnin, "burn-in iterations");
    cmd->add_option("--grid-step", o.grid_step, "summary grid step in years");
    cmd->add_option("--knot-range", o.knot_range, "spline boundaries 'lo,hi'");
    cmd->add_option("--variant", o.variant,
                    "s_shaped | monotone_only | logistic_parametric");
    cmd->add_option("--jobs", o.jobs, "parallel workers for replicates");
    cmd->add_option("--genz-n-mc", o.genz_n_mc,
                    "Monte Carlo draws per region-probability estimate");
}

struct OutputDir {
    fs::path dir;
    std::map<std::string, std::string> digests;

    explicit OutputDir(const std::string& path) : dir(path) {
        fs::create_directories(dir);
    }
    void emit(const std::string& name, const std::string& content) {
        write_file((dir / name).string(), content);
        digests[name] = fnv1a64_hex(content);
    }
};

void write_manifest(OutputDir& out, const std::string& command,
                    const Settings& settings,
                    const std::map<std::string, std::string>& inputs,
                    double wall_seconds) {
    std::string text;
    text += "version = " + std::string(kVersion) + "\n";
    text += "command = " + command + "\n";
    for (const auto& [k, v] : settings.entries())
        text += "config." + k + " = " + v + "\n";
    for (const auto& [k, v] : inputs) text += "input." + k + " = " + v + "\n";
    for (const auto& [k, v] : out.digests)
        text += "output." + k + ".digest = " + v + "\n";
    text += "timing.wall_seconds = " + format_double(wall_seconds) + "\n";
    write_file((out.dir / "manifest.txt").string(), text);
}

// simulated cohorts round-trip through the same long CSV format fit reads
std::string dataset_csv(const LongitudinalDataset& ds) {
    std::string out = "subject_id,age";
    for (const auto& c : ds.schema.covariates) out += "," + c.name;
    for (const auto& b : ds.schema.biomarkers) out += "," + b.name;
    out += "\n";
    for (const auto& s : ds.subjects)
        for (std::size_t j = 0; j < s.ages.size(); ++j) {
            out += s.id + "," + format_double(s.ages[j]);
            for (std::size_t c = 0; c < ds.schema.covariates.size(); ++c)
                out += "," + format_double(s.x[static_cast<int>(c) + 1]);
            for (int k = 0; k < ds.n_biomarkers(); ++k)
                out += "," + (s.observed(static_cast<int>(j), k)
                                  ? format_double(s.y(static_cast<int>(j), k))
                                  : std::string());
            out += "\n";
        }
    return out;
}

std::string knots_csv(const BasisSpec& basis) {
    std::string out = "index,knot\n";
    for (std::size_t i = 0; i < basis.knots().size(); ++i)
        out += std::to_string(i + 1) + "," + format_double(basis.knots()[i]) + "\n";
    return out;
}

Settings settings_from_manifest(const std::string& path,
                                const std::string& expected_command,
                                std::map<std::string, std::string>& inputs) {
    const KeyValueConfig m = KeyValueConfig::from_file(path);
    require(m.get("command", "") == expected_command, ErrorClass::Config,
            "manifest was written by '" + m.get("command", "?") +
                "', expected '" + expected_command + "'");
    KeyValueConfig plain;
    for (const auto& [k, v] : m.entries()) {
        if (k.rfind("config.", 0) == 0) plain.set(k.substr(7), v);
        if (k.rfind("input.", 0) == 0 && k.find(".digest") == std::string::npos)
            inputs[k.substr(6)] = v;
    }
    Settings s;
    s.load(plain);
    return s;
}

int run_fit(const Settings& settings, const std::string& data_path,
            const std::string& schema_path, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const DataSchema schema = parse_schema(KeyValueConfig::from_file(schema_path));
    const LongitudinalDataset raw = load_dataset(data_path, schema);
    auto [ds, report] = preprocess(raw);

    const ModelConfig mc = settings.model_config();
    const SamplerConfig sc = settings.sampler_config();
    std::optional<BasisSpec> basis;
    if (mc.mode != ConstraintMode::LogisticParametric)
        basis = build_basis_for(ds, mc.basis_count, settings.knot_lo,
                                settings.knot_hi, settings.nu);
    GibbsSampler sampler(ds, basis ? &*basis : nullptr, mc, sc);
    const PosteriorSamples samples = sampler.run();

    OutputDir out(out_dir);
    out.emit("preprocess_report.csv", preprocess_report_csv(report));
    if (basis) out.emit("knots.csv", knots_csv(*basis));
    out.emit("samples.csv", posterior_samples_csv(samples, ds));
    out.emit("samples.bin", posterior_samples_binary(samples));
    out.emit("trace.csv", trace_csv(samples));

    const auto grid = make_grid(0.0, 120.0, settings.grid_step);
    out.emit("curve_summary.csv",
             curve_summary_csv(
                 curve_summary(samples, ds, basis ? &*basis : nullptr, grid)));
    out.emit("milestones.csv",
             milestone_csv(milestone_summary(samples, ds,
                                             basis ? &*basis : nullptr, mc.mode)));
    std::vector<Contrast> contrasts;
    for (const auto& c : ds.schema.covariates)
        contrasts.push_back(covariate_contrast(ds, c.name));
    contrasts.push_back(
        age_contrast(settings.age_contrast_lo, settings.age_contrast_hi));
    out.emit("effects.csv",
             effect_table_csv(
                 effect_table(samples, ds, basis ? &*basis : nullptr, contrasts)));

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(out, "fit", settings,
                   {{"data", data_path},
                    {"data.digest", digest_file(data_path)},
                    {"schema", schema_path},
                    {"schema.digest", digest_file(schema_path)}},
                   wall);
    return 0;
}

int run_simulate(const Settings& settings, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    ComparisonCell cell;
    cell.truth = truth_from(settings.truth);
    cell.mode = constraint_mode_from(settings.variant);
    cell.knot_lo = settings.knot_lo;
    cell.knot_hi = settings.knot_hi;
    cell.has_range = cell.mode != ConstraintMode::LogisticParametric;

    ComparisonSettings cs;
    cs.n_replicates = static_cast<int>(settings.replicates);
    cs.seed = settings.seed;
    cs.basis_count = static_cast<int>(settings.basis_count);
    cs.density_concentration = settings.nu;
    cs.sampler = settings.sampler_config();
    cs.sim.n_subjects = static_cast<int>(settings.n_subjects);
    cs.sim.noise_variance = settings.noise_variance;
    cs.sim.mask_prob = settings.mask_prob;
    cs.eval.grid_step = settings.grid_step;
    cs.eval.metric_lo = settings.metric_lo;
    cs.eval.metric_hi = settings.metric_hi;
    cs.jobs = static_cast<int>(settings.jobs);

    const SimReport report = run_comparison({cell}, cs);

    OutputDir out(out_dir);
    out.emit("sim_report.csv", sim_report_csv(report));
    const std::uint64_t truth_tag =
        cell.truth.kind == TruthKind::Logistic ? 1 : 2;
    for (int r = 0; r < cs.n_replicates; ++r) {
        const std::uint64_t data_seed = Rng::derive_seed(
            cs.seed, truth_tag * 100003ull + std::uint64_t(r));
        out.emit("dataset_r" + std::to_string(r) + ".csv",
                 dataset_csv(simulate_dataset(cell.truth, data_seed, cs.sim)));
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(out, "simulate", settings, {}, wall);
    return 0;
}

int run_preprocess(const Settings& settings, const std::string& data_path,
                   const std::string& schema_path, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const DataSchema schema = parse_schema(KeyValueConfig::from_file(schema_path));
    const LongitudinalDataset raw = load_dataset(data_path, schema);
    auto [ds, report] = preprocess(raw);
    OutputDir out(out_dir);
    out.emit("adjusted.csv", dataset_csv(ds));
    out.emit("preprocess_report.csv", preprocess_report_csv(report));
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(out, "preprocess", settings,
                   {{"data", data_path},
                    {"data.digest", digest_file(data_path)},
                    {"schema", schema_path},
                    {"schema.digest", digest_file(schema_path)}},
                   wall);
    return 0;
}

int run_report(const std::vector<std::string>& dirs, const std::string& out_path) {
    require(!dirs.empty(), ErrorClass::Usage, "no report directories given");
    std::vector<SimReport> reports;
    for (const auto& dir : dirs) {
        const fs::path p = fs::path(dir) / "sim_report.csv";
        reports.push_back(parse_sim_report(read_file(p.string())));
    }
    int duplicates = 0;
    const SimReport merged = merge_reports(reports, &duplicates);
    if (duplicates > 0)
        std::fprintf(stderr, "warning: %d duplicate cell(s), later runs kept\n",
                     duplicates);
    const std::string csv = sim_report_csv(merged);
    if (out_path.empty())
        std::fputs(csv.c_str(), stdout);
    else
        write_file(out_path, csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian shape-constrained trajectory regression"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // fit
    auto* fit = app.add_subcommand("fit", "fit a longitudinal dataset");
    std::string fit_data, fit_schema, fit_model_cfg, fit_out, fit_manifest;
    FlagOverrides fit_flags;
    fit->add_option("--data", fit_data, "long-format CSV");
    fit->add_option("--schema", fit_schema, "schema config file");
    fit->add_option("--model-config", fit_model_cfg, "model/sampler config file");
    fit->add_option("--out-dir", fit_out, "output directory")->required();
    fit->add_option("--from-manifest", fit_manifest,
                    "replay a previous fit from its manifest");
    add_common_flags(fit, fit_flags);

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a synthetic-data study");
    std::string sim_out, sim_model_cfg, sim_manifest;
    long sim_replicates = -1;
    FlagOverrides sim_flags;
    sim->add_option("--truth", sim_flags.truth, "logistic | asymmetric");
    sim->add_option("--replicates", sim_replicates, "number of replicates");
    sim->add_option("--model-config", sim_model_cfg, "model/sampler config file");
    sim->add_option("--out-dir", sim_out, "output directory")->required();
    sim->add_option("--from-manifest", sim_manifest,
                    "replay a previous study from its manifest");
    add_common_flags(sim, sim_flags);

    // preprocess
    auto* pre = app.add_subcommand("preprocess",
                                   "orient, adjust, and standardize a dataset");
    std::string pre_data, pre_schema, pre_out;
    pre->add_option("--data", pre_data, "long-format CSV")->required();
    pre->add_option("--schema", pre_schema, "schema config file")->required();
    pre->add_option("--out-dir", pre_out, "output directory")->required();

    // report
    auto* rep = app.add_subcommand("report", "merge simulation reports");
    std::vector<std::string> rep_dirs;
    std::string rep_out;
    rep->add_option("dirs", rep_dirs, "simulate output directories");
    rep->add_option("--out", rep_out, "merged CSV path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(fit)) {
            Settings settings;
            std::map<std::string, std::string> inputs;
            if (!fit_manifest.empty()) {
                settings = settings_from_manifest(fit_manifest, "fit", inputs);
                if (fit_data.empty()) fit_data = inputs["data"];
                if (fit_schema.empty()) fit_schema = inputs["schema"];
            } else if (!fit_model_cfg.empty()) {
                settings.load(KeyValueConfig::from_file(fit_model_cfg));
            }
            fit_flags.apply(settings);
            require(!fit_data.empty() && !fit_schema.empty(), ErrorClass::Usage,
                    "fit needs --data and --schema (or --from-manifest)");
            return run_fit(settings, fit_data, fit_schema, fit_out);
        }
        if (app.got_subcommand(sim)) {
            Settings settings;
            std::map<std::string, std::string> inputs;
            if (!sim_manifest.empty())
                settings = settings_from_manifest(sim_manifest, "simulate", inputs);
            else if (!sim_model_cfg.empty())
                settings.load(KeyValueConfig::from_file(sim_model_cfg));
            sim_flags.apply(settings);
            if (sim_replicates >= 0) settings.replicates = sim_replicates;
            return run_simulate(settings, sim_out);
        }
        if (app.got_subcommand(pre)) {
            Settings settings;
            return run_preprocess(settings, pre_data, pre_schema, pre_out);
        }
        if (app.got_subcommand(rep)) return run_report(rep_dirs, rep_out);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", to_string(e.error_class()),
                     e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: INTERNAL: %s\n", e.what());
        return 1;
    }
    return 2;
}
