#pragma once

#include <cstring>
#include <string>

#include "sshape/gibbs_sampler.hpp"
#include "sshape/io_util.hpp"

namespace sshape {

// Long-format samples: one row per stored iteration per parameter block.
// beta/gamma/logistic rows carry one biomarker each, omega rows carry one
// biomarker across subjects, variance and inflection rows are global.
inline std::string posterior_samples_csv(const PosteriorSamples& samples,
                                         const LongitudinalDataset& ds) {
    std::string out = "iteration,block,biomarker,values\n";
    const int k_count = ds.n_biomarkers();
    for (std::size_t s = 0; s < samples.states.size(); ++s) {
        const ModelState& st = samples.states[s];
        const std::string it = std::to_string(s);
        for (int k = 0; k < k_count; ++k) {
            out += it + ",beta," + ds.schema.biomarkers[k].name;
            for (int i = 0; i < st.beta[k].size(); ++i)
                out += "," + format_double(st.beta[k][i]);
            out += "\n";
        }
        for (int k = 0; k < static_cast<int>(st.gamma.size()); ++k) {
            out += it + ",gamma," + ds.schema.biomarkers[k].name;
            for (int m = 0; m < st.gamma[k].size(); ++m)
                out += "," + format_double(st.gamma[k][m]);
            out += "\n";
        }
        for (int k = 0; k < static_cast<int>(st.logistic.size()); ++k) {
            out += it + ",logistic," + ds.schema.biomarkers[k].name;
            for (int c = 0; c < 3; ++c)
                out += "," + format_double(st.logistic[k][c]);
            out += "\n";
        }
        for (int k = 0; k < k_count; ++k) {
            out += it + ",omega," + ds.schema.biomarkers[k].name;
            for (int i = 0; i < st.omega.rows(); ++i)
                out += "," + format_double(st.omega(i, k));
            out += "\n";
        }
        out += it + ",variances,," + format_double(st.sigma2_obs) + "," +
               format_double(st.sigma2_rnd) + "," + format_double(st.sigma2_s) +
               "," + format_double(st.sigma2_v) + "\n";
        if (!st.group_mstar.empty()) {
            out += it + ",inflection_index,";
            for (int m : st.group_mstar) out += "," + std::to_string(m);
            out += "\n";
        }
    }
    return out;
}

inline std::string trace_csv(const PosteriorSamples& samples) {
    std::string out = "iteration,log_likelihood,hyper_accept\n";
    for (std::size_t i = 0; i < samples.loglik_trace.size(); ++i) {
        out += std::to_string(i) + "," + format_double(samples.loglik_trace[i]) +
               ",";
        out += i < samples.hyper_accepts.size()
                   ? std::to_string(int(samples.hyper_accepts[i]))
                   : std::string("0");
        out += "\n";
    }
    return out;
}

namespace detail {

inline void put_i64(std::string& out, std::int64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

inline void put_f64(std::string& out, double v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

class ByteReader {
  public:
    explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}
    std::int64_t i64() {
        std::int64_t v;
        take(&v);
        return v;
    }
    double f64() {
        double v;
        take(&v);
        return v;
    }

  private:
    template <typename T>
    void take(T* v) {
        require(pos_ + 8 <= bytes_.size(), ErrorClass::Parse,
                "truncated samples binary");
        std::memcpy(v, bytes_.data() + pos_, 8);
        pos_ += 8;
    }
    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// Compact binary layout (little-endian, 8-byte fields):
//   magic "SSHPBIN1", then n_states, K, q, M, N, n_groups, has_logistic,
//   then per state: beta (K x q), gamma (K x M), omega (N x K), the four
//   variances, the group indices, and (c, s, h) per biomarker when present.
inline std::string posterior_samples_binary(const PosteriorSamples& samples) {
    std::string out = "SSHPBIN1";
    const std::int64_t n_states = static_cast<std::int64_t>(samples.states.size());
    std::int64_t k_count = 0, q = 0, m_total = 0, n_subj = 0, n_groups = 0,
                 has_logistic = 0;
    if (n_states > 0) {
        const ModelState& st = samples.states[0];
        k_count = static_cast<std::int64_t>(st.beta.size());
        q = k_count > 0 ? st.beta[0].size() : 0;
        m_total = st.gamma.empty() ? 0 : st.gamma[0].size();
        n_subj = st.omega.rows();
        n_groups = static_cast<std::int64_t>(st.group_mstar.size());
        has_logistic = st.logistic.empty() ? 0 : 1;
    }
    for (std::int64_t v : {n_states, k_count, q, m_total, n_subj, n_groups,
                           has_logistic})
        detail::put_i64(out, v);
    for (const auto& st : samples.states) {
        for (const auto& b : st.beta)
            for (int i = 0; i < b.size(); ++i) detail::put_f64(out, b[i]);
        for (const auto& g : st.gamma)
            for (int m = 0; m < g.size(); ++m) detail::put_f64(out, g[m]);
        for (int k = 0; k < st.omega.cols(); ++k)
            for (int i = 0; i < st.omega.rows(); ++i)
                detail::put_f64(out, st.omega(i, k));
        detail::put_f64(out, st.sigma2_obs);
        detail::put_f64(out, st.sigma2_rnd);
        detail::put_f64(out, st.sigma2_s);
        detail::put_f64(out, st.sigma2_v);
        for (int m : st.group_mstar) detail::put_i64(out, m);
        for (const auto& p : st.logistic)
            for (int c = 0; c < 3; ++c) detail::put_f64(out, p[c]);
    }
    return out;
}

inline PosteriorSamples read_posterior_samples_binary(const std::string& bytes) {
    require(bytes.size() >= 8 && bytes.compare(0, 8, "SSHPBIN1") == 0,
            ErrorClass::Parse, "not a samples binary");
    detail::ByteReader r(bytes.substr(8));
    const std::int64_t n_states = r.i64(), k_count = r.i64(), q = r.i64(),
                       m_total = r.i64(), n_subj = r.i64(), n_groups = r.i64(),
                       has_logistic = r.i64();
    PosteriorSamples out;
    for (std::int64_t s = 0; s < n_states; ++s) {
        ModelState st;
        for (std::int64_t k = 0; k < k_count; ++k) {
            Eigen::VectorXd b(q);
            for (std::int64_t i = 0; i < q; ++i) b[i] = r.f64();
            st.beta.push_back(b);
        }
        if (m_total > 0)
            for (std::int64_t k = 0; k < k_count; ++k) {
                Eigen::VectorXd g(m_total);
                for (std::int64_t m = 0; m < m_total; ++m) g[m] = r.f64();
                st.gamma.push_back(g);
            }
        st.omega = Eigen::MatrixXd::Zero(n_subj, k_count);
        for (std::int64_t k = 0; k < k_count; ++k)
            for (std::int64_t i = 0; i < n_subj; ++i) st.omega(i, k) = r.f64();
        st.sigma2_obs = r.f64();
        st.sigma2_rnd = r.f64();
        st.sigma2_s = r.f64();
        st.sigma2_v = r.f64();
        for (std::int64_t g = 0; g < n_groups; ++g)
            st.group_mstar.push_back(static_cast<int>(r.i64()));
        if (has_logistic)
            for (std::int64_t k = 0; k < k_count; ++k) {
                Eigen::Vector3d p;
                for (int c = 0; c < 3; ++c) p[c] = r.f64();
                st.logistic.push_back(p);
            }
        out.states.push_back(std::move(st));
    }
    return out;
}

}  // namespace sshape
