#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

namespace owdet {

/// Gaussian mixture with full covariances over classification-logit vectors.
/// Likelihoods are log densities; thresholds compare in log space.
class GaussianMixture {
  public:
    GaussianMixture() = default;

    static GaussianMixture fit(const std::vector<std::vector<double>>& samples, int components,
                               std::uint64_t seed, double cov_floor = 1e-6, int max_iters = 60);

    double log_pdf(const std::vector<double>& x) const;
    /// Per-component posterior responsibilities for one sample.
    std::vector<double> responsibilities(const std::vector<double>& x) const;

    int dim() const { return dim_; }
    int components() const { return static_cast<int>(weights_.size()); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<Eigen::VectorXd>& means() const { return means_; }
    const std::vector<Eigen::MatrixXd>& covariances() const { return covs_; }

    // used by serialization
    void set_params(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                    std::vector<Eigen::MatrixXd> covs);

  private:
    void refresh_cholesky();

    int dim_ = 0;
    std::vector<double> weights_;
    std::vector<Eigen::VectorXd> means_;
    std::vector<Eigen::MatrixXd> covs_;
    std::vector<Eigen::MatrixXd> chol_; // lower factors
    std::vector<double> log_norm_;      // -0.5*(d log 2pi + log det)
};

struct GaussianMixturePerClass {
    int class_id = 0;
    GaussianMixture mixture;
    double theta_like = 0; // minimum training-sample log-likelihood
    int sample_count = 0;
    std::uint64_t seed = 0;
};

/// Fitted mixtures per known class plus the classes that had too few
/// samples and therefore bypass overconfidence handling.
class GmmStore {
  public:
    std::map<int, GaussianMixturePerClass> per_class;
    std::vector<int> bypassed;

    bool has(int class_id) const { return per_class.count(class_id) > 0; }
    const GaussianMixturePerClass& at(int class_id) const { return per_class.at(class_id); }

    void save(const std::filesystem::path& path) const;
    static GmmStore load(const std::filesystem::path& path);
};

struct GmmFitConfig {
    int components = 1;
    int min_samples = 8;
    double cov_floor = 1e-6;
    std::uint64_t seed = 0;
};

/// One mixture per class with the likelihood threshold set to the minimum
/// training-sample likelihood. Classes under min_samples are reported in
/// `bypassed` instead of being fitted.
GmmStore fit_gmms(const std::map<int, std::vector<std::vector<double>>>& per_class_logits,
                  const GmmFitConfig& cfg);

} // namespace owdet
