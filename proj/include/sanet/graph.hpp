#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <sanet/rng.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

// Random geometric network with thresholded Gaussian kernel weights.
// Edge weights live only off-diagonal; k is a member of its own neighborhood
// by convention (the self-distance is zero, so the kernel there is 1).
struct Topology {
    int n_nodes = 0;
    Eigen::MatrixX2d coords;      // row k = position of node k in the unit square
    Eigen::MatrixXd weights;      // symmetric, zero diagonal
    double threshold = 0.0;       // kappa
    double kernel_width = 0.0;    // sigma
    std::vector<std::vector<int>> neighborhoods; // sorted, self included

    // Build a topology from an explicit weight matrix (tests, file input).
    static Topology from_weights(const Eigen::MatrixXd& w,
                                 double kappa = 0.0, double sigma = 0.0) {
        if (w.rows() != w.cols()) throw std::invalid_argument("weight matrix must be square");
        if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw std::invalid_argument("weight matrix must be symmetric");
        Topology t;
        t.n_nodes = static_cast<int>(w.rows());
        t.coords = Eigen::MatrixX2d::Zero(t.n_nodes, 2);
        t.weights = w;
        t.weights.diagonal().setZero();
        t.threshold = kappa;
        t.kernel_width = sigma;
        t.rebuild_neighborhoods();
        return t;
    }

    void rebuild_neighborhoods() {
        neighborhoods.assign(n_nodes, {});
        for (int k = 0; k < n_nodes; ++k) {
            for (int l = 0; l < n_nodes; ++l) {
                if (l == k || weights(k, l) > 0.0) neighborhoods[k].push_back(l);
            }
        }
    }

    bool in_neighborhood(int k, int l) const {
        return k == l || weights(k, l) > 0.0;
    }

    bool connected() const {
        if (n_nodes == 0) return false;
        std::vector<char> seen(n_nodes, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            int k = stack.back();
            stack.pop_back();
            for (int l = 0; l < n_nodes; ++l) {
                if (!seen[l] && weights(k, l) > 0.0) {
                    seen[l] = 1;
                    ++count;
                    stack.push_back(l);
                }
            }
        }
        return count == n_nodes;
    }

    Eigen::MatrixXd laplacian() const {
        Eigen::MatrixXd lap = -weights;
        lap.diagonal() = weights.rowwise().sum();
        return lap;
    }
};

struct LaplacianEigenbasis {
    Eigen::MatrixXd laplacian;    // L_c = diag(C*1) - C
    Eigen::MatrixXd eigenvectors; // columns, ascending eigenvalue order
    Eigen::VectorXd eigenvalues;  // ascending
};

// Nodes uniform in the unit square; kernel exp(-d^2 / (2 sigma^2)) applied to
// pairs within distance kappa. Resamples deterministically (seed + j*2^20)
// until the graph is connected; gives up after 100 attempts.
inline Topology generate_geometric(int n, double sigma, double kappa,
                                   std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("need at least 2 nodes");
    if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
    if (kappa <= 0.0 || kappa > std::sqrt(2.0))
        throw std::invalid_argument("kappa must be in (0, sqrt(2)]");

    constexpr int max_attempts = 100;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        CounterRng rng(seed + static_cast<std::uint64_t>(attempt) * (1ull << 20));
        Topology t;
        t.n_nodes = n;
        t.threshold = kappa;
        t.kernel_width = sigma;
        t.coords.resize(n, 2);
        for (int k = 0; k < n; ++k) {
            t.coords(k, 0) = rng.uniform01();
            t.coords(k, 1) = rng.uniform01();
        }
        t.weights = Eigen::MatrixXd::Zero(n, n);
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (int k = 0; k < n; ++k) {
            for (int l = k + 1; l < n; ++l) {
                const double d2 = (t.coords.row(k) - t.coords.row(l)).squaredNorm();
                if (d2 <= kappa * kappa) {
                    const double w = std::exp(-d2 * inv);
                    t.weights(k, l) = w;
                    t.weights(l, k) = w;
                }
            }
        }
        if (t.connected()) {
            t.rebuild_neighborhoods();
            return t;
        }
    }
    throw std::runtime_error(
        "geometric graph stayed disconnected after 100 attempts; "
        "raise kappa or the node count");
}

// Symmetric eigendecomposition of the Laplacian, ascending eigenvalues.
// Sign convention: first entry of each eigenvector exceeding 1e-12 in
// magnitude is made positive, so the basis is reproducible.
inline LaplacianEigenbasis laplacian_eigenbasis(const Topology& topo) {
    LaplacianEigenbasis out;
    out.laplacian = topo.laplacian();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.laplacian);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("Laplacian eigendecomposition failed");
    out.eigenvalues = es.eigenvalues();
    out.eigenvectors = es.eigenvectors();
    for (int j = 0; j < out.eigenvectors.cols(); ++j) {
        for (int i = 0; i < out.eigenvectors.rows(); ++i) {
            const double v = out.eigenvectors(i, j);
            if (std::abs(v) > 1e-12) {
                if (v < 0.0) out.eigenvectors.col(j) *= -1.0;
                break;
            }
        }
    }
    return out;
}

inline void to_json(nlohmann::json& j, const Topology& t) {
    std::vector<std::array<double, 2>> coords(t.n_nodes);
    for (int k = 0; k < t.n_nodes; ++k) coords[k] = {t.coords(k, 0), t.coords(k, 1)};
    std::vector<std::vector<double>> w(t.n_nodes, std::vector<double>(t.n_nodes));
    for (int k = 0; k < t.n_nodes; ++k)
        for (int l = 0; l < t.n_nodes; ++l) w[k][l] = t.weights(k, l);
    j = nlohmann::json{{"n_nodes", t.n_nodes},
                       {"coords", coords},
                       {"weights", w},
                       {"threshold", t.threshold},
                       {"kernel_width", t.kernel_width}};
}

inline void from_json(const nlohmann::json& j, Topology& t) {
    t.n_nodes = j.at("n_nodes").get<int>();
    if (t.n_nodes <= 0) throw std::invalid_argument("n_nodes must be positive");
    const auto coords = j.at("coords").get<std::vector<std::array<double, 2>>>();
    const auto w = j.at("weights").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(coords.size()) != t.n_nodes ||
        static_cast<int>(w.size()) != t.n_nodes)
        throw std::invalid_argument("topology arrays disagree with n_nodes");
    t.coords.resize(t.n_nodes, 2);
    t.weights.resize(t.n_nodes, t.n_nodes);
    for (int k = 0; k < t.n_nodes; ++k) {
        t.coords(k, 0) = coords[k][0];
        t.coords(k, 1) = coords[k][1];
        if (static_cast<int>(w[k].size()) != t.n_nodes)
            throw std::invalid_argument("weight row length mismatch");
        for (int l = 0; l < t.n_nodes; ++l) t.weights(k, l) = w[k][l];
    }
    if ((t.weights - t.weights.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("weights must be symmetric");
    t.weights.diagonal().setZero();
    t.threshold = j.at("threshold").get<double>();
    t.kernel_width = j.at("kernel_width").get<double>();
    t.rebuild_neighborhoods();
}

} // namespace sanet
