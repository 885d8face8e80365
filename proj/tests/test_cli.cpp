#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "sshape/io_util.hpp"
#include "sshape/serialize.hpp"
#include "sshape/simulation.hpp"

using namespace sshape;
namespace fs = std::filesystem;

namespace {

std::string bin_path() {
    const char* p = std::getenv("SSHAPE_BIN");
    REQUIRE(p != nullptr);
    return p;
}

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() / "sshape_cli_tests";
    fs::create_directories(dir);
    const std::string out =
        (dir / ("out" + std::to_string(counter) + ".txt")).string();
    const std::string err =
        (dir / ("err" + std::to_string(counter) + ".txt")).string();
    ++counter;
    const std::string cmd = bin_path() + " " + args + " > " + out + " 2> " + err;
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WEXITSTATUS(status);
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

fs::path workspace() {
    const fs::path dir = fs::temp_directory_path() / "sshape_cli_tests" / "ws";
    fs::create_directories(dir);
    return dir;
}

void write_toy_inputs(const fs::path& dir) {
    write_file((dir / "schema.cfg").string(),
               "covariates = apoe,educ\n"
               "covariate.apoe.type = binary\n"
               "covariate.educ.type = continuous\n"
               "biomarkers = tau,mem\n"
               "biomarker.tau.group = CSF\n"
               "biomarker.mem.group = COG\n"
               "biomarker.mem.sign = -1\n"
               "biomarker.mem.cognitive = true\n");
    write_file((dir / "toy.csv").string(),
               "subject_id,age,apoe,educ,tau,mem\n"
               "s1,60,1,12,0.5,30\n"
               "s1,61,1,12,0.8,31\n"
               "s1,63,1,12,0.7,28\n"
               "s2,70,0,16,1.1,25\n"
               "s2,71,0,16,1.3,26\n"
               "s2,74,0,16,1.2,22\n"
               "s3,55,1,14,0.2,33\n"
               "s3,56.5,1,14,0.4,34\n"
               "s4,65,0,12,0.9,29\n"
               "s4,67,0,12,,27\n"
               "s5,75,1,18,1.5,20\n"
               "s5,76,1,18,1.4,21\n"
               "s5,78,1,18,1.6,19\n");
}

std::map<std::string, std::string> dir_digests(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name == "manifest.txt") continue;  // carries wall-clock timing
        out[name] = digest_file(entry.path().string());
    }
    return out;
}

}  // namespace

TEST_CASE("toy fit writes every declared output and verifiable digests") {
    const fs::path ws = workspace();
    write_toy_inputs(ws);
    const std::string out_dir = (ws / "fit_a").string();
    const RunResult r = run_cli("fit --data " + (ws / "toy.csv").string() +
                                " --schema " + (ws / "schema.cfg").string() +
                                " --out-dir " + out_dir +
                                " --iters 200 --burnin 100 --seed 5"
                                " --genz-n-mc 256");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    for (const char* name :
         {"preprocess_report.csv", "knots.csv", "samples.csv", "samples.bin",
          "trace.csv", "curve_summary.csv", "milestones.csv", "effects.csv",
          "manifest.txt"})
        REQUIRE(fs::exists(fs::path(out_dir) / name));

    // manifest digests verify against the actual files
    const KeyValueConfig manifest =
        KeyValueConfig::from_file((fs::path(out_dir) / "manifest.txt").string());
    REQUIRE(manifest.get("input.data.digest", "") ==
            digest_file((ws / "toy.csv").string()));
    REQUIRE(manifest.get("input.schema.digest", "") ==
            digest_file((ws / "schema.cfg").string()));
    for (const auto& [name, digest] : dir_digests(out_dir))
        REQUIRE(manifest.get("output." + name + ".digest", "") == digest);

    // the compact binary round-trips the stored states
    const PosteriorSamples back = read_posterior_samples_binary(
        read_file((fs::path(out_dir) / "samples.bin").string()));
    REQUIRE(back.states.size() == 100);
    REQUIRE(back.states[0].beta.size() == 2);
    REQUIRE(back.states[0].gamma[0].size() == 24);
    for (const auto& st : back.states) {
        REQUIRE(st.sigma2_obs > 0.0);
        REQUIRE(region_membership(st.gamma[0], st.group_mstar[0]));
    }
}

TEST_CASE("fit reruns are bit-identical, including manifest replay") {
    const fs::path ws = workspace();
    write_toy_inputs(ws);
    const std::string args = "fit --data " + (ws / "toy.csv").string() +
                             " --schema " + (ws / "schema.cfg").string() +
                             " --iters 150 --burnin 50 --seed 9"
                             " --genz-n-mc 256 --out-dir ";
    REQUIRE(run_cli(args + (ws / "fit_b1").string()).exit_code == 0);
    REQUIRE(run_cli(args + (ws / "fit_b2").string()).exit_code == 0);
    REQUIRE(dir_digests(ws / "fit_b1") == dir_digests(ws / "fit_b2"));

    const RunResult replay = run_cli(
        "fit --from-manifest " + (ws / "fit_b1" / "manifest.txt").string() +
        " --out-dir " + (ws / "fit_b3").string());
    INFO(replay.err);
    REQUIRE(replay.exit_code == 0);
    REQUIRE(dir_digests(ws / "fit_b1") == dir_digests(ws / "fit_b3"));
}

TEST_CASE("malformed input yields a parse error class and exit 2") {
    const fs::path ws = workspace();
    write_toy_inputs(ws);
    write_file((ws / "broken.csv").string(),
               "subject_id,age,apoe,educ,tau,mem\n"
               "s1,60,1,12,0.5\n");
    const RunResult r = run_cli("fit --data " + (ws / "broken.csv").string() +
                                " --schema " + (ws / "schema.cfg").string() +
                                " --out-dir " + (ws / "fit_broken").string());
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("error: PARSE:") != std::string::npos);
}

TEST_CASE("simulate emits a populated report and is seed sensitive") {
    const fs::path ws = workspace();
    write_file((ws / "small.cfg").string(), "n_subjects = 30\n");
    const std::string base =
        "simulate --truth logistic --variant logistic_parametric"
        " --replicates 1 --iters 150 --burnin 50 --model-config " +
        (ws / "small.cfg").string() + " --out-dir ";
    const RunResult a = run_cli(base + (ws / "sim_a").string() + " --seed 11");
    INFO(a.err);
    REQUIRE(a.exit_code == 0);
    const SimReport report =
        parse_sim_report(read_file((ws / "sim_a" / "sim_report.csv").string()));
    REQUIRE(report.rows.size() == 1);
    REQUIRE(report.rows[0].n_replicates == 1);
    REQUIRE(report.rows[0].model == "logistic_parametric");
    REQUIRE(report.rows[0].knot_range.empty());

    REQUIRE(run_cli(base + (ws / "sim_b").string() + " --seed 12").exit_code == 0);
    REQUIRE(digest_file((ws / "sim_a" / "dataset_r0.csv").string()) !=
            digest_file((ws / "sim_b" / "dataset_r0.csv").string()));

    // replay from the manifest reproduces everything
    const RunResult replay = run_cli(
        "simulate --from-manifest " + (ws / "sim_a" / "manifest.txt").string() +
        " --out-dir " + (ws / "sim_c").string());
    INFO(replay.err);
    REQUIRE(replay.exit_code == 0);
    REQUIRE(dir_digests(ws / "sim_a") == dir_digests(ws / "sim_c"));
}

TEST_CASE("monotone variant leaves the inflection columns empty") {
    const fs::path ws = workspace();
    write_file((ws / "tiny.cfg").string(),
               "n_subjects = 25\nbasis_count = 10\ngenz_n_mc = 128\n");
    const RunResult r = run_cli(
        "simulate --truth asymmetric --variant monotone_only --replicates 1"
        " --iters 120 --burnin 40 --seed 13 --knot-range 30,90"
        " --model-config " +
        (ws / "tiny.cfg").string() + " --out-dir " + (ws / "sim_mono").string());
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    const SimReport report = parse_sim_report(
        read_file((ws / "sim_mono" / "sim_report.csv").string()));
    REQUIRE(report.rows.size() == 1);
    REQUIRE_FALSE(report.rows[0].has_inflection);
    REQUIRE(report.rows[0].knot_range == "30-90");
    REQUIRE(report.rows[0].t50_rmse >= 0.0);
}

TEST_CASE("report merges, deduplicates, and validates") {
    const fs::path ws = workspace();
    fs::create_directories(ws / "rep1");
    SimReport rep;
    SimReportRow row;
    row.truth = "logistic";
    row.model = "s_shaped";
    row.knot_range = "0-120";
    row.n_replicates = 1;
    row.curve_rmse = 0.5;
    rep.rows.push_back(row);
    write_file((ws / "rep1" / "sim_report.csv").string(), sim_report_csv(rep));
    const RunResult single = run_cli("report " + (ws / "rep1").string() +
                                     " --out " + (ws / "merged1.csv").string());
    REQUIRE(single.exit_code == 0);
    REQUIRE(read_file((ws / "merged1.csv").string()) == sim_report_csv(rep));

    // duplicate cell: later wins with a warning
    fs::create_directories(ws / "rep2");
    SimReport rep2 = rep;
    rep2.rows[0].curve_rmse = 0.9;
    write_file((ws / "rep2" / "sim_report.csv").string(), sim_report_csv(rep2));
    const RunResult dup =
        run_cli("report " + (ws / "rep1").string() + " " + (ws / "rep2").string() +
                " --out " + (ws / "merged2.csv").string());
    REQUIRE(dup.exit_code == 0);
    REQUIRE(dup.err.find("duplicate") != std::string::npos);
    const SimReport merged =
        parse_sim_report(read_file((ws / "merged2.csv").string()));
    REQUIRE(merged.rows.size() == 1);
    REQUIRE(merged.rows[0].curve_rmse == 0.9);

    // empty input list: usage error
    const RunResult empty = run_cli("report");
    REQUIRE(empty.exit_code == 2);

    // mismatched schema: parse error
    fs::create_directories(ws / "rep3");
    write_file((ws / "rep3" / "sim_report.csv").string(), "bogus,header\n1,2\n");
    const RunResult bad = run_cli("report " + (ws / "rep3").string());
    REQUIRE(bad.exit_code == 2);
    REQUIRE(bad.err.find("PARSE") != std::string::npos);
}

TEST_CASE("preprocess emits the adjusted dataset") {
    const fs::path ws = workspace();
    write_toy_inputs(ws);
    const RunResult r = run_cli("preprocess --data " + (ws / "toy.csv").string() +
                                " --schema " + (ws / "schema.cfg").string() +
                                " --out-dir " + (ws / "pre").string());
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(ws / "pre" / "adjusted.csv"));
    REQUIRE(fs::exists(ws / "pre" / "preprocess_report.csv"));
    // adjusted file keeps the masked cell blank
    const std::string adjusted = read_file((ws / "pre" / "adjusted.csv").string());
    bool found_blank = false;
    for (const auto& line : split_lines(adjusted))
        if (line.rfind("s4,67", 0) == 0) {
            const auto cells = split_csv_row(line);
            found_blank = trim(cells[4]).empty();
        }
    REQUIRE(found_blank);
}
