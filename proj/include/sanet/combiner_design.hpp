#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <sanet/graph.hpp>
#include <sanet/subspace.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sanet {

// Block-level sparsity pattern: which (k,l) agent pairs may carry a nonzero
// L x L block. Self blocks are always allowed.
struct BlockMask {
    int n_agents = 0;
    int block_size = 1;
    std::vector<std::uint8_t> allow;          // row-major n x n
    std::vector<std::vector<int>> neighbors;  // allowed l per k, sorted, self included

    static BlockMask from_topology(const Topology& topo, int block_size) {
        BlockMask m;
        m.n_agents = topo.n_nodes;
        m.block_size = block_size;
        m.allow.assign(std::size_t(m.n_agents) * m.n_agents, 0);
        m.neighbors = topo.neighborhoods;
        for (int k = 0; k < m.n_agents; ++k)
            for (int l : topo.neighborhoods[k])
                m.allow[std::size_t(k) * m.n_agents + l] = 1;
        return m;
    }

    static BlockMask full(int n_agents, int block_size) {
        BlockMask m;
        m.n_agents = n_agents;
        m.block_size = block_size;
        m.allow.assign(std::size_t(n_agents) * n_agents, 1);
        m.neighbors.resize(n_agents);
        for (int k = 0; k < n_agents; ++k) {
            m.neighbors[k].resize(n_agents);
            for (int l = 0; l < n_agents; ++l) m.neighbors[k][l] = l;
        }
        return m;
    }

    bool allowed(int k, int l) const {
        return allow[std::size_t(k) * n_agents + l] != 0;
    }
    int dim() const { return n_agents * block_size; }
};

struct DesignConfig {
    double eta = 0.003;   // DR step
    double gamma = 0.0;   // Frobenius regularization weight
    double eps = 0.01;    // contraction margin
    int max_iters = 50000;
    double stop_tol = 1e-7;

    void validate() const {
        if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
        if (gamma < 0.0) throw std::invalid_argument("gamma must be nonnegative");
        if (eps <= 0.0 || eps > 1.0) throw std::invalid_argument("eps must be in (0,1]");
        if (max_iters < 1) throw std::invalid_argument("max_iters must be positive");
        if (stop_tol <= 0.0) throw std::invalid_argument("stop_tol must be positive");
    }
};

inline void to_json(nlohmann::json& j, const DesignConfig& c) {
    j = nlohmann::json{{"eta", c.eta},
                       {"gamma", c.gamma},
                       {"eps", c.eps},
                       {"max_iters", c.max_iters},
                       {"stop_tol", c.stop_tol}};
}

inline void from_json(const nlohmann::json& j, DesignConfig& c) {
    c = DesignConfig{};
    if (j.contains("eta")) j.at("eta").get_to(c.eta);
    if (j.contains("gamma")) j.at("gamma").get_to(c.gamma);
    if (j.contains("eps")) j.at("eps").get_to(c.eps);
    if (j.contains("max_iters")) j.at("max_iters").get_to(c.max_iters);
    if (j.contains("stop_tol")) j.at("stop_tol").get_to(c.stop_tol);
    c.validate();
}

struct CombinationMatrix {
    Eigen::MatrixXd a;
    BlockMask mask;
    double eps = 0.01;
    FeasibilityReport certificate;
    std::vector<double> objective_trace;
};

// Solver failure with the residuals it stalled at.
class DesignError : public std::runtime_error {
public:
    DesignError(const std::string& what, double step_residual,
                double membership_residual, int iterations)
        : std::runtime_error(what),
          step_residual(step_residual),
          membership_residual(membership_residual),
          iterations(iterations) {}
    double step_residual;
    double membership_residual;
    int iterations;
};

// Off-neighborhood block l1 mass plus (gamma/2) ||A||_F^2.
inline double objective_f(const Eigen::MatrixXd& a, const BlockMask& mask,
                          double gamma) {
    const int L = mask.block_size;
    if (a.rows() != mask.dim() || a.cols() != mask.dim())
        throw std::invalid_argument("objective_f dimension mismatch");
    double off = 0.0;
    for (int k = 0; k < mask.n_agents; ++k)
        for (int l = 0; l < mask.n_agents; ++l)
            if (k != l && !mask.allowed(k, l))
                off += a.block(k * L, l * L, L, L).cwiseAbs().sum();
    double out = off;
    if (gamma > 0.0) out += 0.5 * gamma * a.squaredNorm();
    return out;
}

// Proximal operator of eta*f: soft-threshold the off-neighborhood entries at
// eta, then scale everything by 1/(1 + eta*gamma).
inline Eigen::MatrixXd prox_f(const Eigen::MatrixXd& c, double eta,
                              double gamma, const BlockMask& mask) {
    if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
    const int L = mask.block_size;
    if (c.rows() != mask.dim() || c.cols() != mask.dim())
        throw std::invalid_argument("prox_f dimension mismatch");
    Eigen::MatrixXd out = c;
    for (int k = 0; k < mask.n_agents; ++k) {
        for (int l = 0; l < mask.n_agents; ++l) {
            if (k == l || mask.allowed(k, l)) continue;
            auto blk = out.block(k * L, l * L, L, L);
            blk = (blk.array().abs() - eta).max(0.0) * blk.array().sign();
        }
    }
    if (gamma > 0.0) out /= (1.0 + eta * gamma);
    return out;
}

// Projection onto the affine set {A : A U = U, A = A^T}:
// (I - P_U) sym(D) (I - P_U) + P_U.
inline Eigen::MatrixXd project_omega1(const Eigen::MatrixXd& d,
                                      const Eigen::MatrixXd& p_u) {
    if (d.rows() != d.cols() || d.rows() != p_u.rows())
        throw std::invalid_argument("project_omega1 dimension mismatch");
    const Eigen::MatrixXd sym = 0.5 * (d + d.transpose());
    const Eigen::MatrixXd im_p =
        Eigen::MatrixXd::Identity(d.rows(), d.cols()) - p_u;
    return im_p * sym * im_p + p_u;
}

// Projection onto {C symmetric : ||C - P_U||_2 <= 1 - eps}: clip the
// eigenvalues of C - P_U into [-1+eps, 1-eps].
inline Eigen::MatrixXd project_omega2(const Eigen::MatrixXd& c,
                                      const Eigen::MatrixXd& p_u, double eps) {
    if (c.rows() != c.cols() || c.rows() != p_u.rows())
        throw std::invalid_argument("project_omega2 dimension mismatch");
    if ((c - c.transpose()).norm() > 1e-8)
        throw std::invalid_argument("project_omega2 requires a symmetric input");
    Eigen::MatrixXd e = c - p_u;
    e = 0.5 * (e + e.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eigendecomposition failed in project_omega2");
    const double lo = -1.0 + eps, hi = 1.0 - eps;
    Eigen::VectorXd beta = es.eigenvalues().cwiseMax(lo).cwiseMin(hi);
    return p_u + es.eigenvectors() * beta.asDiagonal() *
                     es.eigenvectors().transpose();
}

// Exact projection onto the intersection: the spectral clip changes only
// eigenvalues of a matrix already in the affine set, so membership survives.
inline Eigen::MatrixXd project_omega(const Eigen::MatrixXd& d,
                                     const Eigen::MatrixXd& p_u, double eps) {
    return project_omega2(project_omega1(d, p_u), p_u, eps);
}

namespace detail {

struct DrCoreResult {
    Eigen::MatrixXd a;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
};

// Exact Frobenius projection onto {X : X = X^T, supp(X) within mask,
// X u = u}: equality-constrained least squares over the masked
// upper-triangle coordinates, solved through a KKT system whose matrix
// depends only on (u, mask). The factorization is built once and reused per
// projection. The set always contains the identity (self blocks are always
// in the mask), so the post-solve residual check is numerical safety, not
// an emptiness test. An instance is invalid when the system is too large to
// factor densely.
class MaskedAffineProjector {
public:
    MaskedAffineProjector() = default;

    MaskedAffineProjector(const Eigen::MatrixXd& u, const BlockMask& mask) {
        m_ = mask.dim();
        if (u.rows() != m_) return;
        const int lb = mask.block_size;
        p_cols_ = static_cast<int>(u.cols());
        const int n_cons = m_ * p_cols_;
        for (int i = 0; i < m_; ++i)
            for (int j = i; j < m_; ++j)
                if (mask.allowed(i / lb, j / lb)) {
                    rows_.push_back(i);
                    cols_.push_back(j);
                }
        const int n_x = static_cast<int>(rows_.size());
        if (n_x == 0 || n_x + n_cons > 6000) return;

        const int dim = n_x + n_cons;
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
        for (int t = 0; t < n_x; ++t)
            kkt(t, t) = (rows_[t] == cols_[t]) ? 1.0 : 2.0;
        // constraint (i, c): sum_j X_ij u(j, c) = u(i, c); X_ij and X_ji
        // share one coordinate, so each x_t feeds the rows of both endpoints
        for (int t = 0; t < n_x; ++t) {
            const int i = rows_[t], j = cols_[t];
            for (int c = 0; c < p_cols_; ++c) {
                kkt(n_x + i * p_cols_ + c, t) += u(j, c);
                if (i != j) kkt(n_x + j * p_cols_ + c, t) += u(i, c);
            }
        }
        kkt.block(0, n_x, n_x, n_cons) =
            kkt.block(n_x, 0, n_cons, n_x).transpose();

        rhs_tail_ = Eigen::VectorXd::Zero(n_cons);
        for (int i = 0; i < m_; ++i)
            for (int c = 0; c < p_cols_; ++c)
                rhs_tail_(i * p_cols_ + c) = u(i, c);

        lu_.compute(kkt);
        kkt_ = std::move(kkt);
        valid_ = true;
    }

    bool valid() const { return valid_; }

    bool project(const Eigen::MatrixXd& d, Eigen::MatrixXd& out) const {
        if (!valid_ || d.rows() != m_ || d.cols() != m_) return false;
        const int n_x = static_cast<int>(rows_.size());
        Eigen::VectorXd rhs(n_x + rhs_tail_.size());
        for (int t = 0; t < n_x; ++t) {
            const double w = (rows_[t] == cols_[t]) ? 1.0 : 2.0;
            rhs(t) = w * 0.5 * (d(rows_[t], cols_[t]) + d(cols_[t], rows_[t]));
        }
        rhs.tail(rhs_tail_.size()) = rhs_tail_;

        const Eigen::VectorXd z = lu_.solve(rhs);
        if (!z.allFinite()) return false;
        if ((kkt_ * z - rhs).norm() > 1e-8 * std::max(1.0, rhs.norm()))
            return false;

        out = Eigen::MatrixXd::Zero(m_, m_);
        for (int t = 0; t < n_x; ++t) {
            out(rows_[t], cols_[t]) = z(t);
            out(cols_[t], rows_[t]) = z(t);
        }
        return true;
    }

private:
    int m_ = 0;
    int p_cols_ = 0;
    bool valid_ = false;
    std::vector<int> rows_, cols_;
    Eigen::VectorXd rhs_tail_;
    Eigen::MatrixXd kkt_;
    Eigen::FullPivLU<Eigen::MatrixXd> lu_;
};

inline bool project_masked_affine(const Eigen::MatrixXd& d,
                                  const Eigen::MatrixXd& u,
                                  const BlockMask& mask, Eigen::MatrixXd& out) {
    MaskedAffineProjector proj(u, mask);
    return proj.project(d, out);
}

// Douglas-Rachford on matrices of one block granularity. stop_scale converts
// the Frobenius norms of this level to full-matrix norms (sqrt(L) when
// operating on the graph-level factor), obj_scale does the same for f.
// Iterations between certificate probes; the probe costs one KKT solve and
// one eigensolve, about 1% of the per-iteration work at this cadence.
constexpr int kSnapCheckEvery = 1000;

inline DrCoreResult dr_core(const Eigen::MatrixXd& p_u, const BlockMask& mask,
                            const DesignConfig& cfg, double stop_scale,
                            double obj_scale, bool throw_on_max = true,
                            const MaskedAffineProjector* snap = nullptr) {
    Eigen::MatrixXd c = p_u;
    Eigen::MatrixXd a_prev;
    DrCoreResult res;
    res.trace.reserve(256);
    // A snapped iterate certifies once its contraction clears the bar with
    // room for the certificate tolerance.
    const double cert_target = 1.0 - cfg.eps + 5e-7;
    const auto snap_certifies = [&](const Eigen::MatrixXd& a) {
        Eigen::MatrixXd snapped;
        if (!snap->project(a, snapped)) return false;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(snapped - p_u);
        return es.info() == Eigen::Success &&
               es.eigenvalues().cwiseAbs().maxCoeff() <= cert_target;
    };
    double last_step = std::numeric_limits<double>::quiet_NaN();
    int next_probe = 0;
    for (int it = 1; it <= cfg.max_iters; ++it) {
        Eigen::MatrixXd a = prox_f(c, cfg.eta, cfg.gamma, mask);
        res.trace.push_back(obj_scale * objective_f(a, mask, cfg.gamma));
        if (it > 1) {
            last_step = stop_scale * (a - a_prev).norm();
            // The step and membership residuals go quiet well before the
            // off-neighborhood mass finishes draining, so the mass is part
            // of the stop decision: the returned matrix must carry at most
            // stop_tol of it on feasible instances.
            bool residuals_quiet = false;
            if (last_step <= cfg.stop_tol * std::max(1.0, stop_scale * a.norm()) &&
                obj_scale * objective_f(a, mask, 0.0) <= cfg.stop_tol) {
                const double memb =
                    stop_scale * (project_omega(a, p_u, cfg.eps) - a).norm();
                residuals_quiet = memb <= cfg.stop_tol;
            }
            if (residuals_quiet && !snap) {
                res.a = std::move(a);
                res.iterations = it;
                res.converged = true;
                return res;
            }
            // On boundary-hugging instances the residuals either plateau
            // above stop_tol or go quiet on an iterate whose snap still
            // misses the contraction bar. With a snapper available, the
            // stop decision is therefore the certificate itself, probed on
            // a throttle: quiet residuals do not suffice, and noisy ones do
            // not block a certifiable iterate.
            if (snap && (residuals_quiet || it % kSnapCheckEvery == 0) &&
                it >= next_probe) {
                if (snap_certifies(a)) {
                    res.a = std::move(a);
                    res.iterations = it;
                    res.converged = true;
                    return res;
                }
                next_probe = it + kSnapCheckEvery;
            }
        }
        Eigen::MatrixXd reflected = project_omega(2.0 * a - c, p_u, cfg.eps);
        c += reflected - a;
        a_prev = std::move(a);
    }
    const double memb =
        stop_scale * (project_omega(a_prev, p_u, cfg.eps) - a_prev).norm();
    if (throw_on_max)
        throw DesignError(
            "Douglas-Rachford did not meet the stopping rule within max_iters; "
            "the topology/subspace pair may be infeasible or eta too large",
            last_step, memb, cfg.max_iters);
    res.a = std::move(a_prev);
    res.iterations = cfg.max_iters;
    res.converged = false;
    return res;
}

// True when u was assembled as ug (x) I_L with ug = the extracted factor;
// entries are copies, so exact comparison is the right test.
inline bool is_kron_basis(const SubspaceBasis& basis,
                          const Eigen::MatrixXd& ug) {
    const int L = basis.block_size;
    for (int i = 0; i < basis.n_agents; ++i)
        for (int j = 0; j < basis.graph_rank; ++j)
            for (int r = 0; r < L; ++r)
                for (int s = 0; s < L; ++s) {
                    const double expect = (r == s) ? ug(i, j) : 0.0;
                    if (basis.u(i * L + r, j * L + s) != expect) return false;
                }
    return true;
}

inline Eigen::MatrixXd kron_expand(const Eigen::MatrixXd& g, int L) {
    Eigen::MatrixXd out =
        Eigen::MatrixXd::Zero(g.rows() * L, g.cols() * L);
    for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j)
            for (int r = 0; r < L; ++r) out(i * L + r, j * L + r) = g(i, j);
    return out;
}

} // namespace detail

// Solve the sparse combination-matrix design by Douglas-Rachford splitting.
// When U = U_g (x) I_L (the constructor's layout) every DR operation maps
// Kronecker products to Kronecker products, so the iteration is run on the
// N x N graph factor and expanded afterwards; results are identical up to
// roundoff and the certificate is always computed on the full matrix.
inline CombinationMatrix douglas_rachford(const SubspaceBasis& basis,
                                          const Topology& topo,
                                          const DesignConfig& cfg,
                                          bool allow_infeasible = false) {
    cfg.validate();
    if (topo.n_nodes != basis.n_agents)
        throw std::invalid_argument("topology and basis disagree on agent count");

    const int L = basis.block_size;
    const Eigen::MatrixXd ug = basis.graph_factor();
    const bool kron = (L == 1) || detail::is_kron_basis(basis, ug);

    // With allow_infeasible the caller wants the diagnostic certificate, so a
    // stalled iteration returns its last iterate instead of throwing.
    Eigen::MatrixXd u_core, p_core;
    BlockMask core_mask;
    double stop_scale = 1.0, obj_scale = 1.0;
    if (kron && L > 1) {
        u_core = ug;
        p_core = ug * ug.transpose();
        core_mask = BlockMask::from_topology(topo, 1);
        stop_scale = std::sqrt(double(L));
        obj_scale = double(L);
    } else {
        u_core = basis.u;
        p_core = basis.projector;
        core_mask = BlockMask::from_topology(topo, L);
    }
    const detail::MaskedAffineProjector snapper(u_core, core_mask);
    detail::DrCoreResult core = detail::dr_core(
        p_core, core_mask, cfg, stop_scale, obj_scale, !allow_infeasible,
        snapper.valid() ? &snapper : nullptr);

    // Final snap to exact feasibility. The DR iterate carries O(stop_tol)
    // residuals on both constraint families; projecting it onto the masked
    // affine set zeroes the off-neighborhood mass and the eigenvector
    // residual exactly, so the certificate measures only the contraction.
    // When that set is empty (or the snap fails) fall back to the plain
    // Omega projection, and keep whichever snap certifies feasible.
    const auto expand = [&](const Eigen::MatrixXd& g) {
        return (kron && L > 1) ? detail::kron_expand(g, L) : g;
    };
    CombinationMatrix out;
    out.mask = BlockMask::from_topology(topo, L);
    out.eps = cfg.eps;
    out.objective_trace = std::move(core.trace);

    Eigen::MatrixXd snapped;
    const bool snap_ok = snapper.project(core.a, snapped);
    if (snap_ok) {
        out.a = expand(snapped);
        out.certificate = check_conditions(out.a, basis, topo, cfg.eps);
    }
    if (!snap_ok || !out.certificate.feasible) {
        Eigen::MatrixXd alt = expand(project_omega(core.a, p_core, cfg.eps));
        FeasibilityReport rep = check_conditions(alt, basis, topo, cfg.eps);
        if (!snap_ok || rep.feasible) {
            out.a = std::move(alt);
            out.certificate = rep;
        }
    }

    if (!out.certificate.feasible && !allow_infeasible) {
        throw DesignError(
            "design converged to an infeasible matrix: sparsity violation " +
                std::to_string(out.certificate.sparsity_violation) +
                ", contraction " + std::to_string(out.certificate.contraction),
            out.certificate.sparsity_violation, out.certificate.contraction,
            core.iterations);
    }
    return out;
}

// Wrap P_U itself as a combination matrix (the centralized strategy's mixer;
// also the fully-connected solution of the design problem).
inline CombinationMatrix combination_from_projector(const SubspaceBasis& basis) {
    const int n = basis.n_agents;
    CombinationMatrix out;
    out.a = basis.projector;
    out.mask = BlockMask::full(n, basis.block_size);
    out.eps = 0.01;
    Topology full_topo = Topology::from_weights(
        Eigen::MatrixXd::Ones(n, n) - Eigen::MatrixXd::Identity(n, n));
    out.certificate = check_conditions(out.a, basis, full_topo, out.eps);
    return out;
}

} // namespace sanet
