#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <sanet/graph.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sanet {

// Constraint basis U = [v_1 ... v_p] (x) I_L and its projector P_U = U U^T.
struct SubspaceBasis {
    Eigen::MatrixXd u;         // M x P, M = N*L, P = p*L
    int n_agents = 0;          // N
    int block_size = 0;        // L
    int graph_rank = 0;        // p
    Eigen::MatrixXd projector; // M x M

    int dim() const { return n_agents * block_size; }
    int rank() const { return graph_rank * block_size; }

    // The N x p graph-level factor the Kronecker structure was built from.
    Eigen::MatrixXd graph_factor() const {
        Eigen::MatrixXd ug(n_agents, graph_rank);
        for (int i = 0; i < n_agents; ++i)
            for (int j = 0; j < graph_rank; ++j)
                ug(i, j) = u(i * block_size, j * block_size);
        return ug;
    }
};

struct FeasibilityReport {
    double right_eig_residual = 0.0; // ||A U - U||_F
    double left_eig_residual = 0.0;  // ||U^T A - U^T||_F
    double symmetry_residual = 0.0;  // ||A - A^T||_F
    double contraction = 0.0;        // rho(A - P_U)
    double sparsity_violation = 0.0; // l1 mass of blocks outside the mask
    bool feasible = false;
};

inline void to_json(nlohmann::json& j, const FeasibilityReport& r) {
    j = nlohmann::json{{"right_eig_residual", r.right_eig_residual},
                       {"left_eig_residual", r.left_eig_residual},
                       {"symmetry_residual", r.symmetry_residual},
                       {"contraction", r.contraction},
                       {"sparsity_violation", r.sparsity_violation},
                       {"feasible", r.feasible}};
}

inline void from_json(const nlohmann::json& j, FeasibilityReport& r) {
    j.at("right_eig_residual").get_to(r.right_eig_residual);
    j.at("left_eig_residual").get_to(r.left_eig_residual);
    j.at("symmetry_residual").get_to(r.symmetry_residual);
    j.at("contraction").get_to(r.contraction);
    j.at("sparsity_violation").get_to(r.sparsity_violation);
    j.at("feasible").get_to(r.feasible);
}

inline SubspaceBasis build_subspace(const LaplacianEigenbasis& eb, int p,
                                    int block_size) {
    const int n = static_cast<int>(eb.eigenvectors.rows());
    if (p < 1 || p > n) throw std::invalid_argument("subspace rank p out of range");
    if (block_size < 1) throw std::invalid_argument("block_size must be positive");
    SubspaceBasis b;
    b.n_agents = n;
    b.block_size = block_size;
    b.graph_rank = p;
    const int m = n * block_size;
    const int cols = p * block_size;
    b.u = Eigen::MatrixXd::Zero(m, cols);
    for (int j = 0; j < p; ++j)
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < block_size; ++r)
                b.u(i * block_size + r, j * block_size + r) = eb.eigenvectors(i, j);
    b.projector = b.u * b.u.transpose();
    return b;
}

inline const Eigen::MatrixXd& projector(const SubspaceBasis& b) {
    return b.projector;
}

// Largest singular value via power iteration on B^T B, deterministic start.
inline double spectral_norm_power(const Eigen::MatrixXd& b,
                                  int max_iters = 500, double tol = 1e-12) {
    const int n = static_cast<int>(b.cols());
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
    double prev = 0.0;
    for (int i = 0; i < max_iters; ++i) {
        Eigen::VectorXd y = b.transpose() * (b * x);
        const double norm = y.norm();
        if (norm == 0.0) return 0.0;
        x = y / norm;
        const double est = std::sqrt(norm);
        if (std::abs(est - prev) <= tol * std::max(1.0, est)) return est;
        prev = est;
    }
    return prev;
}

// All five feasibility residuals of the design constraint set. The spectral
// radius uses a symmetric eigensolve when A is symmetric within tol_eq and a
// power iteration on (A-P)^T (A-P) otherwise.
inline FeasibilityReport check_conditions(const Eigen::MatrixXd& a,
                                          const SubspaceBasis& basis,
                                          const Topology& topo, double eps,
                                          double tol_eq = 1e-6) {
    const int m = basis.dim();
    if (a.rows() != m || a.cols() != m)
        throw std::invalid_argument("combination matrix dimension mismatch");
    if (eps <= 0.0 || eps > 1.0)
        throw std::invalid_argument("eps must be in (0,1]");
    if (topo.n_nodes != basis.n_agents)
        throw std::invalid_argument("topology and basis disagree on agent count");

    FeasibilityReport r;
    r.right_eig_residual = (a * basis.u - basis.u).norm();
    r.left_eig_residual = (basis.u.transpose() * a - basis.u.transpose()).norm();
    r.symmetry_residual = (a - a.transpose()).norm();

    const int L = basis.block_size;
    double viol = 0.0;
    for (int k = 0; k < basis.n_agents; ++k)
        for (int l = 0; l < basis.n_agents; ++l)
            if (k != l && !topo.in_neighborhood(k, l))
                viol += a.block(k * L, l * L, L, L).cwiseAbs().sum();
    r.sparsity_violation = viol;

    Eigen::MatrixXd e = a - basis.projector;
    if (r.symmetry_residual <= tol_eq) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            0.5 * (e + e.transpose()));
        r.contraction = es.eigenvalues().cwiseAbs().maxCoeff();
    } else {
        r.contraction = spectral_norm_power(e);
    }

    r.feasible = r.right_eig_residual <= tol_eq &&
                 r.left_eig_residual <= tol_eq &&
                 r.symmetry_residual <= tol_eq &&
                 r.sparsity_violation <= tol_eq &&
                 r.contraction <= 1.0 - eps + tol_eq;
    return r;
}

// ||A^i - P_U||_2 for i = 1..iterations. Diagnostic; cost is one
// multiplication and one norm per step.
inline std::vector<double> power_convergence(const Eigen::MatrixXd& a,
                                             const SubspaceBasis& basis,
                                             int iterations) {
    std::vector<double> out;
    out.reserve(iterations);
    Eigen::MatrixXd pw = a;
    for (int i = 0; i < iterations; ++i) {
        Eigen::MatrixXd diff = pw - basis.projector;
        double nrm;
        if ((diff - diff.transpose()).norm() <= 1e-10) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                0.5 * (diff + diff.transpose()));
            nrm = es.eigenvalues().cwiseAbs().maxCoeff();
        } else {
            nrm = spectral_norm_power(diff);
        }
        out.push_back(nrm);
        if (i + 1 < iterations) pw = a * pw;
    }
    return out;
}

} // namespace sanet
