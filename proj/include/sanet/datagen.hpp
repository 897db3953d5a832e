#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <sanet/graph.hpp>
#include <sanet/rng.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace sanet {

// Per-agent second-order statistics and the stacked target W*. Regressor
// covariance is sigma2_u[k] * I_L throughout.
struct AgentEnsemble {
    int n_agents = 0;
    int block_size = 0;
    Eigen::VectorXd sigma2_u;
    Eigen::VectorXd sigma2_v;
    Eigen::VectorXd w_star; // M = N*L entries, agent-major blocks

    int dim() const { return n_agents * block_size; }
    Eigen::VectorXd w_star_agent(int k) const {
        return w_star.segment(k * block_size, block_size);
    }
};

struct Sample {
    Eigen::VectorXd regressor; // u_{k,i}
    double observation = 0.0;  // d_k(i)
};

// W* = [(V exp(-tau Lambda) V^T) (x) I_L] W_o with W_o ~ N(0.1*1, I).
// The Kronecker product is applied by reshaping W_o to an N x L matrix and
// multiplying by the N x N diffusion kernel.
inline Eigen::VectorXd smooth_signal(const LaplacianEigenbasis& eb, double tau,
                                     int block_size, std::uint64_t seed) {
    if (tau < 0.0) throw std::invalid_argument("tau must be nonnegative");
    const int n = static_cast<int>(eb.eigenvalues.size());
    const int L = block_size;
    CounterRng rng(seed);
    Eigen::MatrixXd w_o(n, L); // row k = agent k's block
    for (int k = 0; k < n; ++k)
        for (int r = 0; r < L; ++r) w_o(k, r) = 0.1 + rng.gaussian();

    Eigen::VectorXd decay = (-tau * eb.eigenvalues.array()).exp();
    Eigen::MatrixXd kernel = eb.eigenvectors * decay.asDiagonal() *
                             eb.eigenvectors.transpose();
    Eigen::MatrixXd smoothed = kernel * w_o;

    Eigen::VectorXd out(n * L);
    for (int k = 0; k < n; ++k) out.segment(k * L, L) = smoothed.row(k);
    return out;
}

// Variances from unif(0.5,2) and unif(0.2,0.8); W* from the diffusion kernel.
// Sub-seeds are derived so the variance draws and the signal draws come from
// independent streams.
inline AgentEnsemble sample_agent_models(int n, int block_size,
                                         const LaplacianEigenbasis& eb,
                                         double tau, std::uint64_t seed) {
    if (n != eb.eigenvalues.size())
        throw std::invalid_argument("agent count disagrees with the eigenbasis");
    AgentEnsemble ens;
    ens.n_agents = n;
    ens.block_size = block_size;
    ens.sigma2_u.resize(n);
    ens.sigma2_v.resize(n);
    CounterRng var_rng(CounterRng::derive(seed, 1));
    for (int k = 0; k < n; ++k) ens.sigma2_u(k) = var_rng.uniform(0.5, 2.0);
    for (int k = 0; k < n; ++k) ens.sigma2_v(k) = var_rng.uniform(0.2, 0.8);
    ens.w_star = smooth_signal(eb, tau, block_size, CounterRng::derive(seed, 2));
    return ens;
}

// One regression pair for agent k: u ~ N(0, sigma2_u I), d = u' w*_k + v.
inline Sample stream_sample(const AgentEnsemble& ens, int agent,
                            CounterRng& rng) {
    if (agent < 0 || agent >= ens.n_agents)
        throw std::invalid_argument("agent index out of range");
    const int L = ens.block_size;
    Sample s;
    s.regressor.resize(L);
    const double su = std::sqrt(ens.sigma2_u(agent));
    for (int r = 0; r < L; ++r) s.regressor(r) = su * rng.gaussian();
    const double v = std::sqrt(ens.sigma2_v(agent)) * rng.gaussian();
    s.observation = s.regressor.dot(ens.w_star_agent(agent)) + v;
    return s;
}

inline void to_json(nlohmann::json& j, const AgentEnsemble& e) {
    j = nlohmann::json{
        {"n_agents", e.n_agents},
        {"block_size", e.block_size},
        {"sigma2_u", std::vector<double>(e.sigma2_u.begin(), e.sigma2_u.end())},
        {"sigma2_v", std::vector<double>(e.sigma2_v.begin(), e.sigma2_v.end())},
        {"w_star", std::vector<double>(e.w_star.begin(), e.w_star.end())}};
}

inline void from_json(const nlohmann::json& j, AgentEnsemble& e) {
    e.n_agents = j.at("n_agents").get<int>();
    e.block_size = j.at("block_size").get<int>();
    auto su = j.at("sigma2_u").get<std::vector<double>>();
    auto sv = j.at("sigma2_v").get<std::vector<double>>();
    auto ws = j.at("w_star").get<std::vector<double>>();
    if (static_cast<int>(su.size()) != e.n_agents ||
        static_cast<int>(sv.size()) != e.n_agents ||
        static_cast<int>(ws.size()) != e.n_agents * e.block_size)
        throw std::invalid_argument("ensemble arrays disagree with n_agents");
    e.sigma2_u = Eigen::Map<Eigen::VectorXd>(su.data(), su.size());
    e.sigma2_v = Eigen::Map<Eigen::VectorXd>(sv.data(), sv.size());
    e.w_star = Eigen::Map<Eigen::VectorXd>(ws.data(), ws.size());
    for (int k = 0; k < e.n_agents; ++k)
        if (e.sigma2_u(k) <= 0.0 || e.sigma2_v(k) <= 0.0)
            throw std::invalid_argument("variances must be strictly positive");
}

} // namespace sanet
