#pragma once

#include <posehyp/common.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <span>

namespace posehyp {

/// Rank-mu / rank-one CMA-ES (Hansen's tutorial defaults). The caller ranks the
/// samples and chooses how many of them are parents, which lets the QD emitters
/// recombine only the candidates that changed the archive.
class CmaEs {
public:
    using Vec = Eigen::VectorXd;
    using Mat = Eigen::MatrixXd;

    CmaEs(const Vec& mean, double sigma, int lambda)
        : _n(static_cast<int>(mean.size())), _lambda(lambda)
    {
        require(_n > 0 && lambda >= 2 && sigma > 0.0, "CMA-ES needs dim > 0, lambda >= 2, sigma > 0");
        reset(mean, sigma);
    }

    void reset(const Vec& mean, double sigma)
    {
        _mean = mean;
        _sigma = sigma;
        _C = Mat::Identity(_n, _n);
        _B = Mat::Identity(_n, _n);
        _D = Vec::Ones(_n);
        _inv_sqrt_C = Mat::Identity(_n, _n);
        _pc = Vec::Zero(_n);
        _ps = Vec::Zero(_n);
        _generation = 0;
    }

    int dim() const { return _n; }
    int lambda() const { return _lambda; }
    double sigma() const { return _sigma; }
    const Vec& mean() const { return _mean; }
    void set_mean(const Vec& m) { _mean = m; }
    const Mat& covariance() const { return _C; }

    /// Draws lambda samples x = mean + sigma * B D z.
    template <typename Rng>
    std::vector<Vec> ask(Rng& rng)
    {
        std::normal_distribution<double> normal(0.0, 1.0);
        _steps.assign(_lambda, Vec(_n));
        std::vector<Vec> xs(_lambda);
        for (int k = 0; k < _lambda; ++k) {
            Vec z(_n);
            for (int i = 0; i < _n; ++i)
                z[i] = normal(rng);
            _steps[k] = _B * _D.cwiseProduct(z);
            xs[k] = _mean + _sigma * _steps[k];
        }
        return xs;
    }

    /// Updates from the samples of the last ask(). `ranking` lists sample indices
    /// best first; the first `num_parents` are recombined with log weights.
    void tell(std::span<const int> ranking, int num_parents)
    {
        num_parents = std::min<int>(num_parents, static_cast<int>(ranking.size()));
        if (num_parents <= 0)
            return;
        Vec w(num_parents);
        for (int i = 0; i < num_parents; ++i)
            w[i] = std::log(num_parents + 0.5) - std::log(i + 1.0);
        w /= w.sum();
        const double mu_eff = 1.0 / w.squaredNorm();

        const double n = _n;
        const double cs = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        const double ds = 1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + cs;
        const double cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        const double c1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
        const double cmu = std::min(1.0 - c1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff));
        const double chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        Vec yw = Vec::Zero(_n);
        for (int i = 0; i < num_parents; ++i)
            yw += w[i] * _steps[ranking[i]];
        _mean += _sigma * yw;

        ++_generation;
        _ps = (1.0 - cs) * _ps + std::sqrt(cs * (2.0 - cs) * mu_eff) * (_inv_sqrt_C * yw);
        const double ps_norm = _ps.norm();
        const double hs_bound = (1.4 + 2.0 / (n + 1.0)) * chi_n * std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * _generation));
        const double hs = ps_norm < hs_bound ? 1.0 : 0.0;
        _pc = (1.0 - cc) * _pc + hs * std::sqrt(cc * (2.0 - cc) * mu_eff) * yw;

        Mat rank_mu = Mat::Zero(_n, _n);
        for (int i = 0; i < num_parents; ++i)
            rank_mu += w[i] * _steps[ranking[i]] * _steps[ranking[i]].transpose();
        _C = (1.0 - c1 - cmu) * _C + c1 * (_pc * _pc.transpose() + (1.0 - hs) * cc * (2.0 - cc) * _C) + cmu * rank_mu;
        _sigma *= std::exp((cs / ds) * (ps_norm / chi_n - 1.0));
        _sigma = std::min(_sigma, 1e6);
        _decompose();
    }

private:
    void _decompose()
    {
        _C = 0.5 * (_C + _C.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(_C);
        _B = es.eigenvectors();
        _D = es.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
        _inv_sqrt_C = _B * _D.cwiseInverse().asDiagonal() * _B.transpose();
    }

    int _n;
    int _lambda;
    Vec _mean;
    double _sigma = 1.0;
    Mat _C, _B, _inv_sqrt_C;
    Vec _D, _pc, _ps;
    std::vector<Vec> _steps;
    long _generation = 0;
};

} // namespace posehyp
