#include "owdet/gmm.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace owdet {

using nlohmann::json;

namespace {

Eigen::VectorXd to_vec(const std::vector<double>& x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<long>(x.size()));
}

/// Covariance with a progressively raised diagonal floor until the Cholesky
/// factorization succeeds.
Eigen::LLT<Eigen::MatrixXd> safe_llt(Eigen::MatrixXd& cov, double floor) {
    for (int attempt = 0; attempt < 12; ++attempt) {
        Eigen::MatrixXd c = cov + floor * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        if (llt.info() == Eigen::Success) {
            cov = c;
            return llt;
        }
        floor *= 10.0;
    }
    throw std::runtime_error("GaussianMixture: covariance not positive definite");
}

double log_gauss(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                 const Eigen::MatrixXd& chol_l, double log_norm) {
    const Eigen::VectorXd d = x - mean;
    const Eigen::VectorXd z = chol_l.triangularView<Eigen::Lower>().solve(d);
    return log_norm - 0.5 * z.squaredNorm();
}

} // namespace

void GaussianMixture::refresh_cholesky() {
    chol_.clear();
    log_norm_.clear();
    for (auto& cov : covs_) {
        Eigen::MatrixXd c = cov;
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        if (llt.info() != Eigen::Success) llt = safe_llt(c, 1e-9);
        const Eigen::MatrixXd l = llt.matrixL();
        double log_det = 0;
        for (long i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
        chol_.push_back(l);
        log_norm_.push_back(-0.5 * (dim_ * std::log(2.0 * std::numbers::pi) + log_det));
    }
}

void GaussianMixture::set_params(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                                 std::vector<Eigen::MatrixXd> covs) {
    weights_ = std::move(weights);
    means_ = std::move(means);
    covs_ = std::move(covs);
    dim_ = means_.empty() ? 0 : static_cast<int>(means_.front().size());
    refresh_cholesky();
}

double GaussianMixture::log_pdf(const std::vector<double>& x) const {
    const Eigen::VectorXd v = to_vec(x);
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(weights_.size());
    for (size_t c = 0; c < weights_.size(); ++c) {
        terms[c] = std::log(weights_[c]) + log_gauss(v, means_[c], chol_[c], log_norm_[c]);
        mx = std::max(mx, terms[c]);
    }
    double acc = 0;
    for (double t : terms) acc += std::exp(t - mx);
    return mx + std::log(acc);
}

std::vector<double> GaussianMixture::responsibilities(const std::vector<double>& x) const {
    const Eigen::VectorXd v = to_vec(x);
    std::vector<double> terms(weights_.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < weights_.size(); ++c) {
        terms[c] = std::log(weights_[c]) + log_gauss(v, means_[c], chol_[c], log_norm_[c]);
        mx = std::max(mx, terms[c]);
    }
    double denom = 0;
    for (double& t : terms) {
        t = std::exp(t - mx);
        denom += t;
    }
    for (double& t : terms) t /= denom;
    return terms;
}

GaussianMixture GaussianMixture::fit(const std::vector<std::vector<double>>& samples,
                                     int components, std::uint64_t seed, double cov_floor,
                                     int max_iters) {
    if (samples.empty()) throw std::invalid_argument("GaussianMixture::fit: no samples");
    if (components < 1) throw std::invalid_argument("GaussianMixture::fit: components < 1");
    const int n = static_cast<int>(samples.size());
    const int d = static_cast<int>(samples.front().size());
    components = std::min(components, n);

    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i) X.row(i) = to_vec(samples[static_cast<size_t>(i)]).transpose();

    // init: k-means++-style seeding on the sample set, shared covariance
    std::mt19937_64 rng(seed);
    std::vector<Eigen::VectorXd> means;
    {
        std::uniform_int_distribution<int> first(0, n - 1);
        means.push_back(X.row(first(rng)).transpose());
        while (static_cast<int>(means.size()) < components) {
            std::vector<double> d2(static_cast<size_t>(n));
            double total = 0;
            for (int i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& m : means)
                    best = std::min(best, (X.row(i).transpose() - m).squaredNorm());
                d2[static_cast<size_t>(i)] = best;
                total += best;
            }
            if (total <= 0) {
                means.push_back(means.front());
                continue;
            }
            std::uniform_real_distribution<double> u(0.0, total);
            double pick = u(rng), acc = 0;
            int chosen = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += d2[static_cast<size_t>(i)];
                if (acc >= pick) {
                    chosen = i;
                    break;
                }
            }
            means.push_back(X.row(chosen).transpose());
        }
    }
    const Eigen::VectorXd global_mean = X.colwise().mean().transpose();
    Eigen::MatrixXd centered = X.rowwise() - global_mean.transpose();
    Eigen::MatrixXd global_cov = (centered.transpose() * centered) / std::max(1, n - 1);
    safe_llt(global_cov, cov_floor);

    GaussianMixture g;
    g.dim_ = d;
    g.weights_.assign(static_cast<size_t>(components), 1.0 / components);
    g.means_ = means;
    g.covs_.assign(static_cast<size_t>(components), global_cov);
    g.refresh_cholesky();
    if (components == 1) {
        // single component: closed-form MLE
        g.means_[0] = global_mean;
        g.covs_[0] = global_cov;
        g.refresh_cholesky();
        return g;
    }

    Eigen::MatrixXd resp(n, components);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iters; ++iter) {
        // E step
        double ll = 0;
        for (int i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < components; ++c) {
                const double t =
                    std::log(g.weights_[static_cast<size_t>(c)]) +
                    log_gauss(X.row(i).transpose(), g.means_[static_cast<size_t>(c)],
                              g.chol_[static_cast<size_t>(c)], g.log_norm_[static_cast<size_t>(c)]);
                resp(i, c) = t;
                mx = std::max(mx, t);
            }
            double denom = 0;
            for (int c = 0; c < components; ++c) denom += std::exp(resp(i, c) - mx);
            ll += mx + std::log(denom);
            for (int c = 0; c < components; ++c)
                resp(i, c) = std::exp(resp(i, c) - mx) / denom;
        }
        // M step
        for (int c = 0; c < components; ++c) {
            const double nk = resp.col(c).sum();
            if (nk < 1e-9) continue; // dead component keeps its parameters
            g.weights_[static_cast<size_t>(c)] = nk / n;
            Eigen::VectorXd mean = (resp.col(c).transpose() * X).transpose() / nk;
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
            for (int i = 0; i < n; ++i) {
                const Eigen::VectorXd dv = X.row(i).transpose() - mean;
                cov.noalias() += resp(i, c) * (dv * dv.transpose());
            }
            cov /= nk;
            safe_llt(cov, cov_floor);
            g.means_[static_cast<size_t>(c)] = mean;
            g.covs_[static_cast<size_t>(c)] = cov;
        }
        g.refresh_cholesky();
        if (std::abs(ll - prev_ll) < 1e-10 * std::max(1.0, std::abs(prev_ll))) break;
        prev_ll = ll;
    }
    return g;
}

GmmStore fit_gmms(const std::map<int, std::vector<std::vector<double>>>& per_class_logits,
                  const GmmFitConfig& cfg) {
    GmmStore store;
    for (const auto& [class_id, samples] : per_class_logits) {
        if (static_cast<int>(samples.size()) < cfg.min_samples) {
            store.bypassed.push_back(class_id);
            continue;
        }
        GaussianMixturePerClass entry;
        entry.class_id = class_id;
        entry.seed = cfg.seed ^ static_cast<std::uint64_t>(class_id) * 0x9e3779b97f4a7c15ull;
        entry.mixture =
            GaussianMixture::fit(samples, cfg.components, entry.seed, cfg.cov_floor);
        entry.sample_count = static_cast<int>(samples.size());
        entry.theta_like = std::numeric_limits<double>::infinity();
        for (const auto& s : samples)
            entry.theta_like = std::min(entry.theta_like, entry.mixture.log_pdf(s));
        store.per_class.emplace(class_id, std::move(entry));
    }
    return store;
}

void GmmStore::save(const std::filesystem::path& path) const {
    json j;
    j["classes"] = json::array();
    for (const auto& [class_id, e] : per_class) {
        json c;
        c["class_id"] = class_id;
        c["theta_like"] = e.theta_like;
        c["sample_count"] = e.sample_count;
        c["seed"] = e.seed;
        c["weights"] = e.mixture.weights();
        c["means"] = json::array();
        for (const auto& m : e.mixture.means())
            c["means"].push_back(std::vector<double>(m.data(), m.data() + m.size()));
        c["covariances"] = json::array();
        for (const auto& cov : e.mixture.covariances()) {
            std::vector<std::vector<double>> rows(static_cast<size_t>(cov.rows()));
            for (long r = 0; r < cov.rows(); ++r) {
                rows[static_cast<size_t>(r)].resize(static_cast<size_t>(cov.cols()));
                for (long cc = 0; cc < cov.cols(); ++cc)
                    rows[static_cast<size_t>(r)][static_cast<size_t>(cc)] = cov(r, cc);
            }
            c["covariances"].push_back(rows);
        }
        j["classes"].push_back(std::move(c));
    }
    j["bypassed"] = bypassed;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("GmmStore: cannot open " + path.string());
    os << j.dump(2) << '\n';
}

GmmStore GmmStore::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("GmmStore: cannot open " + path.string());
    json j;
    is >> j;
    GmmStore store;
    for (const auto& c : j.at("classes")) {
        GaussianMixturePerClass e;
        e.class_id = c.at("class_id").get<int>();
        e.theta_like = c.at("theta_like").get<double>();
        e.sample_count = c.at("sample_count").get<int>();
        e.seed = c.at("seed").get<std::uint64_t>();
        std::vector<double> weights = c.at("weights").get<std::vector<double>>();
        std::vector<Eigen::VectorXd> means;
        for (const auto& m : c.at("means")) {
            const auto v = m.get<std::vector<double>>();
            means.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size())));
        }
        std::vector<Eigen::MatrixXd> covs;
        for (const auto& cov_rows : c.at("covariances")) {
            const auto rows = cov_rows.get<std::vector<std::vector<double>>>();
            Eigen::MatrixXd cov(rows.size(), rows.front().size());
            for (size_t r = 0; r < rows.size(); ++r)
                for (size_t cc = 0; cc < rows[r].size(); ++cc)
                    cov(static_cast<long>(r), static_cast<long>(cc)) = rows[r][cc];
            covs.push_back(std::move(cov));
        }
        e.mixture.set_params(std::move(weights), std::move(means), std::move(covs));
        store.per_class.emplace(e.class_id, std::move(e));
    }
    store.bypassed = j.value("bypassed", std::vector<int>{});
    return store;
}

} // namespace owdet
