#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sshape/common.hpp"
#include "sshape/io_util.hpp"

namespace sshape {

struct CovariateSpec {
    std::string name;
    bool binary = false;
};

struct BiomarkerSpec {
    std::string name;
    std::string group;
    int sign = 1;           // +1 / -1, applied so larger = more abnormal
    bool cognitive = false; // eligible for learning-effect adjustment
};

struct DataSchema {
    std::vector<CovariateSpec> covariates;
    std::vector<BiomarkerSpec> biomarkers;
    double age_lo = 0.0;
    double age_hi = 120.0;
};

struct SubjectData {
    std::string id;
    Eigen::VectorXd x;          // q-vector, leading entry 1 for the intercept
    std::vector<double> ages;   // strictly increasing visit ages
    Eigen::MatrixXd y;          // visits x biomarkers
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> observed;
};

struct LongitudinalDataset {
    DataSchema schema;
    std::vector<SubjectData> subjects;
    bool sign_applied = false;
    bool learning_adjusted = false;
    bool standardized = false;
    int dropped_subjects = 0;  // rows excluded for missing covariates

    int n_subjects() const { return static_cast<int>(subjects.size()); }
    int n_biomarkers() const { return static_cast<int>(schema.biomarkers.size()); }
    int n_covariate_terms() const {
        return 1 + static_cast<int>(schema.covariates.size());
    }
    int total_observed() const {
        int n = 0;
        for (const auto& s : subjects) n += static_cast<int>(s.observed.cast<int>().sum());
        return n;
    }

    // Distinct group labels in schema order of first appearance, and the
    // group id of each biomarker.
    std::vector<std::string> group_labels() const {
        std::vector<std::string> labels;
        for (const auto& b : schema.biomarkers)
            if (std::find(labels.begin(), labels.end(), b.group) == labels.end())
                labels.push_back(b.group);
        return labels;
    }
    std::vector<int> biomarker_groups() const {
        const auto labels = group_labels();
        std::vector<int> ids;
        for (const auto& b : schema.biomarkers)
            ids.push_back(static_cast<int>(
                std::find(labels.begin(), labels.end(), b.group) - labels.begin()));
        return ids;
    }
};

struct BiomarkerReport {
    std::string name;
    double center = 0.0;
    double scale = 1.0;
    int sign = 1;
    double learning_slope = 0.0;
    int n_observed = 0;
    int n_missing = 0;
};

struct PreprocessReport {
    std::vector<BiomarkerReport> biomarkers;
    int dropped_subjects = 0;
};

namespace detail {

inline void apply_sign(LongitudinalDataset& ds) {
    if (ds.sign_applied) return;
    for (int k = 0; k < ds.n_biomarkers(); ++k) {
        const double s = ds.schema.biomarkers[k].sign;
        if (s == 1.0) continue;
        for (auto& subj : ds.subjects) subj.y.col(k) *= s;
    }
    ds.sign_applied = true;
}

inline std::pair<double, double> observed_moments(const LongitudinalDataset& ds,
                                                  int k) {
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (const auto& subj : ds.subjects)
        for (int j = 0; j < subj.y.rows(); ++j)
            if (subj.observed(j, k)) {
                sum += subj.y(j, k);
                sum2 += subj.y(j, k) * subj.y(j, k);
                ++n;
            }
    require(n >= 2, ErrorClass::Config,
            "biomarker " + ds.schema.biomarkers[k].name +
                " has fewer than two observed values");
    const double mean = sum / n;
    return {mean, sum2 / n - mean * mean};
}

}  // namespace detail

// Orient signs, then center and scale each biomarker's observed values to
// mean zero and unit (population) variance; continuous covariates likewise.
inline std::pair<LongitudinalDataset, PreprocessReport> standardize(
    LongitudinalDataset ds) {
    detail::apply_sign(ds);
    PreprocessReport report;
    report.dropped_subjects = ds.dropped_subjects;
    for (int k = 0; k < ds.n_biomarkers(); ++k) {
        const auto [mean, var] = detail::observed_moments(ds, k);
        require(var > 0.0, ErrorClass::Numeric,
                "biomarker " + ds.schema.biomarkers[k].name + " has zero variance");
        const double sd = std::sqrt(var);
        BiomarkerReport row;
        row.name = ds.schema.biomarkers[k].name;
        row.center = mean;
        row.scale = sd;
        row.sign = ds.schema.biomarkers[k].sign;
        for (auto& subj : ds.subjects)
            for (int j = 0; j < subj.y.rows(); ++j) {
                if (subj.observed(j, k)) {
                    subj.y(j, k) = (subj.y(j, k) - mean) / sd;
                    ++row.n_observed;
                } else {
                    ++row.n_missing;
                }
            }
        report.biomarkers.push_back(row);
    }
    for (std::size_t c = 0; c < ds.schema.covariates.size(); ++c) {
        if (ds.schema.covariates[c].binary) continue;
        const int col = static_cast<int>(c) + 1;  // skip intercept
        double sum = 0.0, sum2 = 0.0;
        for (const auto& subj : ds.subjects) {
            sum += subj.x[col];
            sum2 += subj.x[col] * subj.x[col];
        }
        const int n = ds.n_subjects();
        if (n < 2) continue;
        const double mean = sum / n;
        const double var = sum2 / n - mean * mean;
        if (var <= 0.0) continue;
        for (auto& subj : ds.subjects)
            subj.x[col] = (subj.x[col] - mean) / std::sqrt(var);
    }
    ds.standardized = true;
    return {std::move(ds), std::move(report)};
}

// Remove the early-visit familiarization trend from cognitive biomarkers:
// regress score changes from baseline on elapsed time (no intercept, pairs
// within three years), then subtract slope * min(elapsed, 3).
inline std::pair<LongitudinalDataset, PreprocessReport> adjust_learning_effect(
    LongitudinalDataset ds) {
    detail::apply_sign(ds);
    PreprocessReport report;
    report.dropped_subjects = ds.dropped_subjects;
    for (int k = 0; k < ds.n_biomarkers(); ++k) {
        BiomarkerReport row;
        row.name = ds.schema.biomarkers[k].name;
        row.sign = ds.schema.biomarkers[k].sign;
        if (ds.schema.biomarkers[k].cognitive && !ds.learning_adjusted) {
            double sxx = 0.0, sxy = 0.0;
            int n_pairs = 0;
            for (const auto& subj : ds.subjects) {
                if (subj.ages.empty() || !subj.observed(0, k)) continue;
                const double t0 = subj.ages.front();
                const double y0 = subj.y(0, k);
                for (int j = 1; j < subj.y.rows(); ++j) {
                    const double lag = subj.ages[j] - t0;
                    if (lag > 3.0 || !subj.observed(j, k)) continue;
                    sxx += lag * lag;
                    sxy += lag * (subj.y(j, k) - y0);
                    ++n_pairs;
                }
            }
            require(n_pairs > 0 && sxx > 0.0, ErrorClass::Numeric,
                    "no eligible visit pairs to estimate the learning slope of " +
                        ds.schema.biomarkers[k].name);
            const double slope = sxy / sxx;
            row.learning_slope = slope;
            for (auto& subj : ds.subjects) {
                if (subj.ages.empty()) continue;
                const double t0 = subj.ages.front();
                for (int j = 0; j < subj.y.rows(); ++j)
                    if (subj.observed(j, k))
                        subj.y(j, k) -= slope * std::min(subj.ages[j] - t0, 3.0);
            }
        }
        report.biomarkers.push_back(row);
    }
    ds.learning_adjusted = true;
    return {std::move(ds), std::move(report)};
}

// Fixed pipeline: sign orientation, learning-effect adjustment on the
// oriented raw scale, then standardization.
inline std::pair<LongitudinalDataset, PreprocessReport> preprocess(
    LongitudinalDataset ds) {
    auto [adjusted, learn_report] = adjust_learning_effect(std::move(ds));
    auto [out, report] = standardize(std::move(adjusted));
    for (std::size_t k = 0; k < report.biomarkers.size(); ++k)
        report.biomarkers[k].learning_slope =
            learn_report.biomarkers[k].learning_slope;
    return {std::move(out), std::move(report)};
}

// Schema config keys:
//   covariates = name,...            covariate.<name>.type = binary|continuous
//   biomarkers = name,...            biomarker.<name>.group = <label>
//                                    biomarker.<name>.sign = 1|-1
//                                    biomarker.<name>.cognitive = true|false
//   age_lo, age_hi (default 0, 120)
inline DataSchema parse_schema(const KeyValueConfig& cfg) {
    DataSchema schema;
    for (const auto& name : split_list(cfg.get("covariates", ""))) {
        CovariateSpec c;
        c.name = name;
        const std::string type = cfg.get("covariate." + name + ".type", "continuous");
        require(type == "binary" || type == "continuous", ErrorClass::Config,
                "covariate " + name + " has unknown type " + type);
        c.binary = type == "binary";
        schema.covariates.push_back(c);
    }
    const auto biomarkers = split_list(cfg.require_key("biomarkers"));
    require(!biomarkers.empty(), ErrorClass::Config, "no biomarkers declared");
    for (const auto& name : biomarkers) {
        BiomarkerSpec b;
        b.name = name;
        b.group = cfg.get("biomarker." + name + ".group", "ALL");
        b.sign = static_cast<int>(cfg.get_int("biomarker." + name + ".sign", 1));
        require(b.sign == 1 || b.sign == -1, ErrorClass::Config,
                "biomarker " + name + " sign must be 1 or -1");
        b.cognitive = cfg.get_bool("biomarker." + name + ".cognitive", false);
        schema.biomarkers.push_back(b);
    }
    schema.age_lo = cfg.get_double("age_lo", 0.0);
    schema.age_hi = cfg.get_double("age_hi", 120.0);
    require(schema.age_lo < schema.age_hi, ErrorClass::Config,
            "age range must satisfy lo < hi");
    return schema;
}

// Long-format CSV: header row `subject_id,age,<covariates...>,<biomarkers...>`
// (column order free, matched by name), one row per visit, blank cell =
// missing. Missing outcomes are masked; a missing covariate drops the whole
// subject; out-of-order or duplicate ages are rejected.
inline LongitudinalDataset load_dataset(const std::string& path,
                                        const DataSchema& schema) {
    const auto lines = split_lines(read_file(path));
    require(!lines.empty(), ErrorClass::Parse, path + " is empty");
    const auto header = split_csv_row(lines[0]);
    std::map<std::string, int> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = trim(header[i]);
        require(!col.count(name), ErrorClass::Parse,
                "duplicate column '" + name + "' in " + path);
        col[name] = static_cast<int>(i);
    }
    for (const auto& [name, idx] : col) {
        if (name == "subject_id" || name == "age") continue;
        const bool known =
            std::any_of(schema.covariates.begin(), schema.covariates.end(),
                        [&](const auto& c) { return c.name == name; }) ||
            std::any_of(schema.biomarkers.begin(), schema.biomarkers.end(),
                        [&](const auto& b) { return b.name == name; });
        require(known, ErrorClass::Parse, "unknown column '" + name + "' in " + path);
    }
    auto need = [&](const std::string& name) {
        require(col.count(name) > 0, ErrorClass::Parse,
                "missing column '" + name + "' in " + path);
        return col[name];
    };
    const int id_col = need("subject_id");
    const int age_col = need("age");
    std::vector<int> cov_cols, bio_cols;
    for (const auto& c : schema.covariates) cov_cols.push_back(need(c.name));
    for (const auto& b : schema.biomarkers) bio_cols.push_back(need(b.name));

    struct RawSubject {
        std::vector<std::vector<std::string>> rows;
    };
    std::vector<std::string> order;
    std::map<std::string, RawSubject> by_id;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (trim(lines[li]).empty()) continue;
        auto cells = split_csv_row(lines[li]);
        require(cells.size() == header.size(), ErrorClass::Parse,
                path + ":" + std::to_string(li + 1) + ": expected " +
                    std::to_string(header.size()) + " cells, got " +
                    std::to_string(cells.size()));
        const std::string id = trim(cells[id_col]);
        require(!id.empty(), ErrorClass::Parse,
                path + ":" + std::to_string(li + 1) + ": blank subject_id");
        if (!by_id.count(id)) order.push_back(id);
        by_id[id].rows.push_back(std::move(cells));
    }

    LongitudinalDataset ds;
    ds.schema = schema;
    const int k_count = static_cast<int>(schema.biomarkers.size());
    for (const auto& id : order) {
        const auto& rows = by_id[id].rows;
        SubjectData subj;
        subj.id = id;
        subj.x = Eigen::VectorXd::Ones(1 + cov_cols.size());
        bool missing_cov = false;
        for (std::size_t c = 0; c < cov_cols.size(); ++c) {
            const std::string cell = trim(rows[0][cov_cols[c]]);
            if (cell.empty()) {
                missing_cov = true;
                break;
            }
            subj.x[static_cast<int>(c) + 1] =
                parse_double(cell, "covariate " + schema.covariates[c].name +
                                       " of subject " + id);
        }
        if (missing_cov) {
            ++ds.dropped_subjects;
            continue;
        }
        const int n_visit = static_cast<int>(rows.size());
        subj.y = Eigen::MatrixXd::Zero(n_visit, k_count);
        subj.observed.setZero(n_visit, k_count);
        for (int j = 0; j < n_visit; ++j) {
            const std::string age_cell = trim(rows[j][age_col]);
            require(!age_cell.empty(), ErrorClass::Parse,
                    "blank age for subject " + id);
            const double age = parse_double(age_cell, "age of subject " + id);
            require(subj.ages.empty() || age > subj.ages.back(), ErrorClass::Parse,
                    "ages of subject " + id + " are not strictly increasing");
            subj.ages.push_back(age);
            for (int k = 0; k < k_count; ++k) {
                const std::string cell = trim(rows[j][bio_cols[k]]);
                if (cell.empty()) continue;
                subj.y(j, k) = parse_double(
                    cell, "biomarker " + schema.biomarkers[k].name +
                              " of subject " + id);
                subj.observed(j, k) = 1;
            }
        }
        ds.subjects.push_back(std::move(subj));
    }
    for (int k = 0; k < k_count; ++k) {
        bool any = false;
        for (const auto& subj : ds.subjects)
            if (subj.observed.col(k).cast<int>().sum() > 0) any = true;
        require(any, ErrorClass::Parse,
                "biomarker " + schema.biomarkers[k].name + " has no observations");
    }
    return ds;
}

inline std::string preprocess_report_csv(const PreprocessReport& report) {
    std::string out =
        "biomarker,sign,center,scale,learning_slope,n_observed,n_missing,"
        "dropped_subjects\n";
    for (const auto& b : report.biomarkers) {
        out += b.name + "," + std::to_string(b.sign) + "," +
               format_double(b.center) + "," + format_double(b.scale) + "," +
               format_double(b.learning_slope) + "," +
               std::to_string(b.n_observed) + "," + std::to_string(b.n_missing) +
               "," + std::to_string(report.dropped_subjects) + "\n";
    }
    return out;
}

}  // namespace sshape
