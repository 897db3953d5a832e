#pragma once

#include <Eigen/Dense>

#include <sanet/combiner_design.hpp>
#include <sanet/datagen.hpp>
#include <sanet/subspace.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sanet {

class InstabilityError : public std::runtime_error {
public:
    InstabilityError(const std::string& what, double rho)
        : std::runtime_error(what), rho(rho) {}
    double rho;
};

// MSD values of exactly zero are reported at a finite floor.
inline double msd_to_db(double linear) {
    if (linear <= 1e-30) return -300.0;
    return 10.0 * std::log10(linear);
}

// W_deg = U (U^T H U)^{-1} U^T H W*, the aggregate-cost minimizer on range(U).
inline Eigen::VectorXd limit_point(const SubspaceBasis& basis,
                                   const AgentEnsemble& ens) {
    if (ens.n_agents != basis.n_agents || ens.block_size != basis.block_size)
        throw std::invalid_argument("basis and ensemble disagree on dimensions");
    const int L = basis.block_size;
    Eigen::VectorXd h_diag(basis.dim());
    for (int k = 0; k < basis.n_agents; ++k)
        h_diag.segment(k * L, L).setConstant(ens.sigma2_u(k));
    const Eigen::MatrixXd hu = h_diag.asDiagonal() * basis.u;
    const Eigen::MatrixXd uthu = basis.u.transpose() * hu;
    Eigen::LLT<Eigen::MatrixXd> llt(uthu);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("U^T H U is not positive definite");
    return basis.u * llt.solve(hu.transpose() * ens.w_star);
}

// R_deg_k = R_u W_k R_u + R_u tr(R_u W_k) + sigma2_v R_u for Gaussian
// regressors, with W_k the outer product of the per-agent bias w*_k - w_deg_k.
inline Eigen::MatrixXd noise_covariance(const AgentEnsemble& ens, int k,
                                        const Eigen::VectorXd& w_o) {
    const int L = ens.block_size;
    if (k < 0 || k >= ens.n_agents)
        throw std::invalid_argument("agent index out of range");
    if (w_o.size() != ens.dim())
        throw std::invalid_argument("w_o dimension mismatch");
    const double s2u = ens.sigma2_u(k);
    const Eigen::VectorXd delta =
        ens.w_star_agent(k) - w_o.segment(k * L, L);
    // R_u = s2u * I collapses the general formula to scalar coefficients.
    Eigen::MatrixXd out = (s2u * s2u) * (delta * delta.transpose());
    const double tr_term = s2u * delta.squaredNorm();
    out.diagonal().array() += s2u * tr_term + ens.sigma2_v(k) * s2u;
    return out;
}

// rho(B): largest |eigenvalue| for symmetric B, largest singular value
// otherwise (they coincide in the symmetric case).
inline double stability_margin(const Eigen::MatrixXd& b) {
    if ((b - b.transpose()).norm() <= 1e-8) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            0.5 * (b + b.transpose()));
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
    return spectral_norm_power(b);
}

// Everything the steady-state formulas consume, built from one realized
// ensemble and one combination matrix.
struct TheoryContext {
    Eigen::MatrixXd h_o;                   // block-diagonal Hessian at W_deg
    Eigen::VectorXd w_o;                   // limit point
    std::vector<Eigen::MatrixXd> noise_cov; // R_deg_k per agent
    Eigen::MatrixXd s;                     // diag{R_deg_k}
    Eigen::MatrixXd b;                     // A (I - mu H)
    Eigen::MatrixXd y;                     // mu^2 A S A^T
    Eigen::VectorXd bias;                  // H (W_deg - W*)
    double mu = 0.0;
    double rho_b = 0.0;
    bool stable = false;
};

inline TheoryContext make_theory_context(const SubspaceBasis& basis,
                                         const AgentEnsemble& ens,
                                         const Eigen::MatrixXd& a, double mu) {
    const int m = basis.dim();
    if (a.rows() != m || a.cols() != m)
        throw std::invalid_argument("combination matrix dimension mismatch");
    TheoryContext ctx;
    ctx.mu = mu;
    const int L = basis.block_size;
    Eigen::VectorXd h_diag(m);
    for (int k = 0; k < basis.n_agents; ++k)
        h_diag.segment(k * L, L).setConstant(ens.sigma2_u(k));
    ctx.h_o = h_diag.asDiagonal();
    ctx.w_o = limit_point(basis, ens);

    ctx.noise_cov.reserve(basis.n_agents);
    ctx.s = Eigen::MatrixXd::Zero(m, m);
    for (int k = 0; k < basis.n_agents; ++k) {
        Eigen::MatrixXd rk = noise_covariance(ens, k, ctx.w_o);
        ctx.s.block(k * L, k * L, L, L) = rk;
        ctx.noise_cov.push_back(std::move(rk));
    }

    ctx.bias = h_diag.asDiagonal() * (ctx.w_o - ens.w_star);
    // First-order optimality of the limit point on the subspace.
    const double opt_residual = (basis.u.transpose() * ctx.bias).norm();
    const double scale = (h_diag.asDiagonal() * ens.w_star).norm();
    if (opt_residual > 1e-6 * std::max(1.0, scale))
        throw std::runtime_error("limit point violates subspace optimality");

    ctx.b = a * (Eigen::VectorXd::Ones(m) - mu * h_diag).asDiagonal();
    ctx.y = (mu * mu) * (a * ctx.s * a.transpose());
    ctx.rho_b = stability_margin(ctx.b);
    ctx.stable = ctx.rho_b < 1.0;
    return ctx;
}

// MSD = (mu / (2N)) tr((U^T H U)^{-1} (U^T S U)), in dB. Independent of the
// combination matrix.
inline double msd_closed_form(const SubspaceBasis& basis,
                              const Eigen::MatrixXd& h_o,
                              const Eigen::MatrixXd& s, double mu, int n) {
    const Eigen::MatrixXd uthu = basis.u.transpose() * h_o * basis.u;
    const Eigen::MatrixXd utsu = basis.u.transpose() * s * basis.u;
    Eigen::LLT<Eigen::MatrixXd> llt(uthu);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("U^T H U is not positive definite");
    const double msd = mu / (2.0 * double(n)) * llt.solve(utsu).trace();
    return msd_to_db(msd);
}

struct SeriesResult {
    double msd_db = 0.0;
    double msd_linear = 0.0;
    double rho_b = 0.0;
    double tail_bound = 0.0; // linear-domain bound on the truncated mass
    long n_terms = 0;
};

namespace detail {

// Direct recursion X <- B X B^T; exact but cubic per term. Used when the
// similarity trick below does not apply.
inline SeriesResult series_by_recursion(const Eigen::MatrixXd& b,
                                        const Eigen::MatrixXd& y, int n,
                                        double tail_tol, long n_max,
                                        double rho) {
    SeriesResult res;
    res.rho_b = rho;
    Eigen::MatrixXd x = y;
    double sum = 0.0;
    long terms = 0;
    double term = 0.0;
    while (terms < n_max) {
        term = x.trace();
        sum += term;
        ++terms;
        if (sum > 0.0 && term <= tail_tol * sum) break;
        if (term == 0.0) break;
        x = b * x * b.transpose();
    }
    res.n_terms = terms;
    const double denom = 1.0 - rho * rho;
    res.tail_bound = denom > 0.0 ? term * rho * rho / denom / double(n) : 0.0;
    res.msd_linear = sum / double(n);
    res.msd_db = msd_to_db(res.msd_linear);
    return res;
}

} // namespace detail

// (1/N) sum_n tr(B^n Y (B^T)^n). For symmetric A and positive-definite
// D = I - mu H, B = A D is similar to the symmetric D^{1/2} A D^{1/2}, so one
// eigendecomposition turns every term into a weighted power sum and the whole
// series costs O(M^2) per term. The partial sums are identical to the direct
// recursion, term by term; the recursion remains as fallback.
inline SeriesResult msd_series_matrix(const Eigen::MatrixXd& a,
                                      const Eigen::MatrixXd& h_o,
                                      const Eigen::MatrixXd& s, double mu,
                                      int n, double tail_tol = 1e-9,
                                      long n_max = 1000000) {
    const int m = static_cast<int>(a.rows());
    const Eigen::VectorXd d =
        Eigen::VectorXd::Ones(m) - mu * h_o.diagonal();
    const Eigen::MatrixXd b = a * d.asDiagonal();
    const Eigen::MatrixXd y = (mu * mu) * (a * s * a.transpose());

    const bool h_diagonal =
        (h_o - Eigen::MatrixXd(h_o.diagonal().asDiagonal())).norm() <= 1e-12;
    const bool a_symmetric = (a - a.transpose()).norm() <= 1e-10;
    const bool d_positive = d.minCoeff() > 0.0;

    if (!(h_diagonal && a_symmetric && d_positive)) {
        const double rho = stability_margin(b);
        if (rho >= 1.0)
            throw InstabilityError("rho(B) >= 1, the series diverges", rho);
        return detail::series_by_recursion(b, y, n, tail_tol, n_max, rho);
    }

    const Eigen::VectorXd d_sqrt = d.cwiseSqrt();
    Eigen::MatrixXd sym = d_sqrt.asDiagonal() * a * d_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (sym + sym.transpose()));
    const Eigen::VectorXd lam = es.eigenvalues();
    const Eigen::MatrixXd& q = es.eigenvectors();
    const double rho = lam.cwiseAbs().maxCoeff();
    if (rho >= 1.0)
        throw InstabilityError("rho(B) >= 1, the series diverges", rho);

    // B^n = V Lam^n V^{-1} with V = D^{-1/2} Q, so
    // tr(B^n Y B^T^n) = sum_ij (lam_i lam_j)^n [V^{-1} Y V^{-T}]_ij [V^T V]_ij.
    const Eigen::MatrixXd vinv = q.transpose() * d_sqrt.asDiagonal();
    const Eigen::MatrixXd y_t = vinv * y * vinv.transpose();
    const Eigen::MatrixXd gram =
        q.transpose() * d.cwiseInverse().asDiagonal() * q;
    const Eigen::ArrayXXd coeff = y_t.array() * gram.array();
    const Eigen::ArrayXXd ratio =
        (lam * lam.transpose()).array();

    SeriesResult res;
    res.rho_b = rho;
    Eigen::ArrayXXd pw = Eigen::ArrayXXd::Ones(m, m);
    double sum = 0.0;
    double term = 0.0;
    long terms = 0;
    while (terms < n_max) {
        term = (coeff * pw).sum();
        sum += term;
        ++terms;
        if (sum > 0.0 && std::abs(term) <= tail_tol * sum) break;
        if (term == 0.0) break;
        pw *= ratio;
    }
    res.n_terms = terms;
    res.tail_bound = term * rho * rho / (1.0 - rho * rho) / double(n);
    res.msd_linear = sum / double(n);
    res.msd_db = msd_to_db(res.msd_linear);
    return res;
}

inline SeriesResult msd_series(const CombinationMatrix& a,
                               const Eigen::MatrixXd& h_o,
                               const Eigen::MatrixXd& s, double mu, int n,
                               double tail_tol = 1e-9, long n_max = 1000000) {
    return msd_series_matrix(a.a, h_o, s, mu, n, tail_tol, n_max);
}

} // namespace sanet
