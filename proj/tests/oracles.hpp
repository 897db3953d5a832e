#pragma once

// Independent reference implementations used only by tests. Each one solves
// the same problem as a library routine through different machinery, so
// agreement is evidence rather than tautology.

#include <Eigen/Dense>

#include <sanet/combiner_design.hpp>
#include <sanet/rng.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracles {

// --- Equality-constrained least squares for the affine set -----------------
//
// minimize ||A - D||_F^2 over symmetric A with A U = U, solved in the vech
// parametrization through the KKT system. Off-diagonal vech entries carry
// weight 2 because they appear twice in the Frobenius norm. The KKT matrix
// depends only on U, so it is factored once and reused across targets.
class AffineKktProjector {
public:
    explicit AffineKktProjector(const Eigen::MatrixXd& u)
        : m_(static_cast<int>(u.rows())),
          p_(static_cast<int>(u.cols())),
          nv_(m_ * (m_ + 1) / 2),
          nc_(m_ * p_) {
        weights_.resize(nv_);
        for (int j = 0; j < m_; ++j)
            for (int i = j; i < m_; ++i)
                weights_(vech_index(i, j)) = (i == j) ? 1.0 : 2.0;

        // Constraints: (A U)(i, c) = U(i, c) for all i, c.
        Eigen::MatrixXd con = Eigen::MatrixXd::Zero(nc_, nv_);
        rhs_.resize(nc_);
        for (int i = 0; i < m_; ++i) {
            for (int c = 0; c < p_; ++c) {
                const int row = i * p_ + c;
                for (int k = 0; k < m_; ++k)
                    con(row, vech_index(i, k)) += u(k, c);
                rhs_(row) = u(i, c);
            }
        }

        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nv_ + nc_, nv_ + nc_);
        kkt.topLeftCorner(nv_, nv_) = (2.0 * weights_).asDiagonal();
        kkt.topRightCorner(nv_, nc_) = con.transpose();
        kkt.bottomLeftCorner(nc_, nv_) = con;
        // Constraints may be redundant; a rank-revealing factorization keeps
        // the consistent system solvable.
        cod_.compute(kkt);
    }

    Eigen::MatrixXd project(const Eigen::MatrixXd& d) const {
        if (d.rows() != m_ || d.cols() != m_)
            throw std::invalid_argument("AffineKktProjector dimension mismatch");
        Eigen::MatrixXd sym = 0.5 * (d + d.transpose());
        Eigen::VectorXd full_rhs(nv_ + nc_);
        for (int j = 0; j < m_; ++j)
            for (int i = j; i < m_; ++i) {
                const int t = vech_index(i, j);
                full_rhs(t) = 2.0 * weights_(t) * sym(i, j);
            }
        full_rhs.tail(nc_) = rhs_;
        Eigen::VectorXd sol = cod_.solve(full_rhs);
        Eigen::MatrixXd a(m_, m_);
        for (int j = 0; j < m_; ++j)
            for (int i = j; i < m_; ++i)
                a(i, j) = a(j, i) = sol(vech_index(i, j));
        return a;
    }

private:
    int vech_index(int i, int j) const {
        if (i < j) std::swap(i, j); // lower triangle, i >= j
        return j * m_ - j * (j - 1) / 2 + (i - j);
    }

    int m_, p_, nv_, nc_;
    Eigen::VectorXd weights_;
    Eigen::VectorXd rhs_;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_;
};

inline Eigen::MatrixXd project_affine_kkt(const Eigen::MatrixXd& d,
                                          const Eigen::MatrixXd& u) {
    return AffineKktProjector(u).project(d);
}

// --- Dykstra alternating projections onto the intersection -----------------
//
// Projection onto the affine set reuses the KKT oracle above (with its
// factorization rebuilt each call kept simple: instances are 4x4/6x6).
// Projection onto the spectral ball is the eigenvalue clip written out
// locally. Runs the full iteration budget unless the cycle fixpoint is
// reached at machine precision first.
inline Eigen::MatrixXd dykstra_intersection(const Eigen::MatrixXd& d,
                                            const Eigen::MatrixXd& u,
                                            const Eigen::MatrixXd& p_u,
                                            double eps, int max_cycles = 100000) {
    const int m = static_cast<int>(d.rows());
    AffineKktProjector affine(u);

    auto clip_ball = [&](const Eigen::MatrixXd& c) {
        Eigen::MatrixXd e = 0.5 * (c + c.transpose()) - p_u;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e);
        Eigen::VectorXd beta =
            es.eigenvalues().cwiseMax(-1.0 + eps).cwiseMin(1.0 - eps);
        return Eigen::MatrixXd(p_u + es.eigenvectors() * beta.asDiagonal() *
                                         es.eigenvectors().transpose());
    };

    Eigen::MatrixXd x = d;
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
    int stable = 0;
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        Eigen::MatrixXd y = affine.project(x + p);
        p = x + p - y;
        Eigen::MatrixXd xn = clip_ball(y + q);
        q = y + q - xn;
        const double delta = (xn - x).norm();
        x = xn;
        if (delta <= 1e-15 * std::max(1.0, x.norm())) {
            if (++stable >= 3) break; // fixpoint at machine precision
        } else {
            stable = 0;
        }
    }
    return x;
}

// --- Projected subgradient for the sparse design objective -----------------
//
// Polyak steps with the generic lower bound f >= 0 (f is a sum of absolute
// values when gamma = 0). Returns the best objective value seen; projection
// uses the library's exact composed projection.
inline double subgradient_best_objective(const sanet::SubspaceBasis& basis,
                                         const sanet::BlockMask& mask,
                                         double eps, int iterations) {
    const Eigen::MatrixXd& p_u = basis.projector;
    Eigen::MatrixXd a = p_u;
    double best = sanet::objective_f(a, mask, 0.0);
    const int L = mask.block_size;
    for (int t = 0; t < iterations; ++t) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a.rows(), a.cols());
        for (int k = 0; k < mask.n_agents; ++k)
            for (int l = 0; l < mask.n_agents; ++l)
                if (k != l && !mask.allowed(k, l))
                    g.block(k * L, l * L, L, L) =
                        a.block(k * L, l * L, L, L).array().sign();
        const double f = sanet::objective_f(a, mask, 0.0);
        best = std::min(best, f);
        if (f <= 1e-12 || g.squaredNorm() == 0.0) break;
        const double step = f / g.squaredNorm();
        a = sanet::project_omega(a - step * g, p_u, eps);
    }
    best = std::min(best, sanet::objective_f(a, mask, 0.0));
    return best;
}

// --- Independent per-agent LMS (scalar-block filters) -----------------------
//
// N decoupled adaptive filters sharing the simulator's sample streams;
// matches the distributed strategy when A = I.
struct IndependentLms {
    std::vector<Eigen::VectorXd> w;
    double mu;

    IndependentLms(int n_agents, int block_size, double mu)
        : w(n_agents, Eigen::VectorXd::Zero(block_size)), mu(mu) {}

    void step(int agent, const Eigen::VectorXd& u, double d) {
        w[agent] += mu * u * (d - u.dot(w[agent]));
    }
};

// --- Monte-Carlo gradient-noise covariance ----------------------------------
//
// Draws (u, v) pairs, forms the gradient noise at the evaluation point
// s = grad_hat - grad = (u u^T - R_u)(w - w_star) - u v, and averages outer
// products. Uses its own stream layout; only the model definition is shared.
inline Eigen::MatrixXd mc_gradient_noise_cov(double sigma2_u, double sigma2_v,
                                             const Eigen::VectorXd& w_star_k,
                                             const Eigen::VectorXd& w_eval,
                                             long n_samples,
                                             std::uint64_t seed) {
    const int L = static_cast<int>(w_star_k.size());
    sanet::CounterRng rng(seed);
    const double su = std::sqrt(sigma2_u), sv = std::sqrt(sigma2_v);
    const Eigen::VectorXd delta = w_eval - w_star_k;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(L, L);
    Eigen::VectorXd u(L), s(L);
    for (long i = 0; i < n_samples; ++i) {
        for (int r = 0; r < L; ++r) u(r) = su * rng.gaussian();
        const double v = sv * rng.gaussian();
        s = u * (u.dot(delta)) - sigma2_u * delta - u * v;
        acc.noalias() += s * s.transpose();
    }
    return acc / double(n_samples);
}

} // namespace oracles
