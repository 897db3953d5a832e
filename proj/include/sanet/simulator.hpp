#pragma once

#include <Eigen/Dense>

#include <sanet/combiner_design.hpp>
#include <sanet/datagen.hpp>
#include <sanet/rng.hpp>
#include <sanet/subspace.hpp>
#include <sanet/theory.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace sanet {

enum class Strategy { distributed, centralized, non_cooperative };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::distributed: return "distributed";
        case Strategy::centralized: return "centralized";
        case Strategy::non_cooperative: return "non_cooperative";
    }
    throw std::logic_error("unknown strategy");
}

inline Strategy strategy_from_name(const std::string& name) {
    if (name == "distributed") return Strategy::distributed;
    if (name == "centralized") return Strategy::centralized;
    if (name == "non_cooperative") return Strategy::non_cooperative;
    throw std::invalid_argument("unknown strategy: " + name);
}

struct SimState {
    Eigen::VectorXd estimates;     // col{w_k}
    Eigen::VectorXd intermediates; // col{psi_k}
    long iteration = 0;
    double step_size = 0.0;
};

inline SimState make_state(int dim, double mu) {
    SimState s;
    s.estimates = Eigen::VectorXd::Zero(dim);
    s.intermediates = Eigen::VectorXd::Zero(dim);
    s.step_size = mu;
    return s;
}

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long run, long iteration)
        : std::runtime_error(what), run(run), iteration(iteration) {}
    long run;       // -1 when thrown below the Monte-Carlo harness
    long iteration;
};

// One synchronous time step of data for the whole network.
struct SampleBatch {
    Eigen::VectorXd regressors;   // M stacked agent-major
    Eigen::VectorXd observations; // N
};

// Stream keyed by (run, agent, iteration): every strategy that replays the
// same indices sees the same data, which is what makes cross-strategy
// comparisons sharp.
inline SampleBatch draw_batch(const AgentEnsemble& ens, const CounterRng& root,
                              std::uint64_t run, std::uint64_t iteration) {
    SampleBatch b;
    const int L = ens.block_size;
    b.regressors.resize(ens.dim());
    b.observations.resize(ens.n_agents);
    for (int k = 0; k < ens.n_agents; ++k) {
        CounterRng rng = root.at(run, std::uint64_t(k), iteration);
        Sample s = stream_sample(ens, k, rng);
        b.regressors.segment(k * L, L) = s.regressor;
        b.observations(k) = s.observation;
    }
    return b;
}

// Sequential-draw variant used by the single-step entry points that take a
// bare generator.
inline SampleBatch draw_batch_sequential(const AgentEnsemble& ens,
                                         CounterRng& rng) {
    SampleBatch b;
    const int L = ens.block_size;
    b.regressors.resize(ens.dim());
    b.observations.resize(ens.n_agents);
    for (int k = 0; k < ens.n_agents; ++k) {
        Sample s = stream_sample(ens, k, rng);
        b.regressors.segment(k * L, L) = s.regressor;
        b.observations(k) = s.observation;
    }
    return b;
}

namespace detail {

// Stochastic-gradient half step, shared by every strategy:
// psi_k = w_k + mu * u_k (d_k - u_k^T w_k).
inline void adapt(const SimState& state, const AgentEnsemble& ens,
                  const SampleBatch& batch, Eigen::VectorXd& psi) {
    const int L = ens.block_size;
    for (int k = 0; k < ens.n_agents; ++k) {
        const auto u = batch.regressors.segment(k * L, L);
        const auto w = state.estimates.segment(k * L, L);
        const double err = batch.observations(k) - u.dot(w);
        psi.segment(k * L, L) = w + state.step_size * err * u;
    }
}

inline void check_finite(const SimState& state) {
    if (!state.estimates.allFinite())
        throw DivergenceError("estimate left the finite range at iteration " +
                                  std::to_string(state.iteration),
                              -1, state.iteration);
}

} // namespace detail

// Adapt-then-combine diffusion step; the combine reads only blocks the mask
// allows, so cost scales with neighborhood size rather than network size.
inline void step_distributed(SimState& state, const CombinationMatrix& a,
                             const AgentEnsemble& ens,
                             const SampleBatch& batch) {
    const int L = ens.block_size;
    detail::adapt(state, ens, batch, state.intermediates);
    for (int k = 0; k < ens.n_agents; ++k) {
        auto w = state.estimates.segment(k * L, L);
        w.setZero();
        for (int l : a.mask.neighbors[k])
            w.noalias() +=
                a.a.block(k * L, l * L, L, L) * state.intermediates.segment(l * L, L);
    }
    ++state.iteration;
    detail::check_finite(state);
}

inline SimState step_distributed(SimState state, const CombinationMatrix& a,
                                 const AgentEnsemble& ens, CounterRng& rng) {
    const SampleBatch batch = draw_batch_sequential(ens, rng);
    step_distributed(state, a, ens, batch);
    return state;
}

// Projected stochastic gradient on the stacked vector, applied through the
// skinny factors of P_U = U U^T.
inline void step_centralized(SimState& state, const SubspaceBasis& basis,
                             const AgentEnsemble& ens,
                             const SampleBatch& batch) {
    detail::adapt(state, ens, batch, state.intermediates);
    state.estimates.noalias() =
        basis.u * (basis.u.transpose() * state.intermediates);
    ++state.iteration;
    detail::check_finite(state);
}

inline SimState step_centralized(SimState state, const Eigen::MatrixXd& p_u,
                                 const AgentEnsemble& ens, CounterRng& rng) {
    const SampleBatch batch = draw_batch_sequential(ens, rng);
    detail::adapt(state, ens, batch, state.intermediates);
    state.estimates.noalias() = p_u * state.intermediates;
    ++state.iteration;
    detail::check_finite(state);
    return state;
}

// Non-cooperative baseline: adapt only, equivalent to A = I.
inline void step_non_cooperative(SimState& state, const AgentEnsemble& ens,
                                 const SampleBatch& batch) {
    detail::adapt(state, ens, batch, state.intermediates);
    state.estimates = state.intermediates;
    ++state.iteration;
    detail::check_finite(state);
}

struct LearningCurve {
    Strategy strategy = Strategy::distributed;
    double mu = 0.0;
    int n_runs = 0;
    std::vector<double> msd_wstar_db; // (1/N) E||W* - W_i||^2 per iteration
    std::vector<double> msd_wo_db;    // (1/N) E||W_deg - W_i||^2 per iteration
    double steady_state_db = 0.0;       // tail mean of msd_wo, linear domain
    double steady_state_wstar_db = 0.0; // tail mean of msd_wstar
};

struct McConfig {
    double mu = 1e-3;
    long iterations = 0;
    int n_runs = 1;
    double burn_in_fraction = 0.8;
    std::vector<Strategy> strategies;
    std::uint64_t sample_seed = 0;
    int n_threads = 1;

    void validate() const {
        if (mu <= 0.0) throw std::invalid_argument("mu must be positive");
        if (iterations < 1) throw std::invalid_argument("iterations must be positive");
        if (n_runs < 1) throw std::invalid_argument("n_runs must be positive");
        if (burn_in_fraction < 0.0 || burn_in_fraction >= 1.0)
            throw std::invalid_argument("burn_in_fraction must be in [0,1)");
        if (strategies.empty())
            throw std::invalid_argument("at least one strategy required");
        if (n_threads < 1) throw std::invalid_argument("n_threads must be positive");
    }
};

namespace detail {

struct RunAccumulator {
    // One squared-error series per strategy, filled by a single run.
    std::vector<Eigen::VectorXd> sq_wstar;
    std::vector<Eigen::VectorXd> sq_wo;
};

inline RunAccumulator simulate_one_run(const SubspaceBasis& basis,
                                       const AgentEnsemble& ens,
                                       const CombinationMatrix& a,
                                       const McConfig& cfg,
                                       const std::vector<Eigen::VectorXd>& refs_wo,
                                       long run) {
    const int n_strategies = static_cast<int>(cfg.strategies.size());
    const double inv_n = 1.0 / double(ens.n_agents);
    RunAccumulator acc;
    acc.sq_wstar.assign(n_strategies, Eigen::VectorXd(cfg.iterations));
    acc.sq_wo.assign(n_strategies, Eigen::VectorXd(cfg.iterations));

    std::vector<SimState> states;
    states.reserve(n_strategies);
    for (int s = 0; s < n_strategies; ++s)
        states.push_back(make_state(ens.dim(), cfg.mu));

    const CounterRng root(cfg.sample_seed);
    try {
        for (long i = 0; i < cfg.iterations; ++i) {
            const SampleBatch batch =
                draw_batch(ens, root, std::uint64_t(run), std::uint64_t(i));
            for (int s = 0; s < n_strategies; ++s) {
                switch (cfg.strategies[s]) {
                    case Strategy::distributed:
                        step_distributed(states[s], a, ens, batch);
                        break;
                    case Strategy::centralized:
                        step_centralized(states[s], basis, ens, batch);
                        break;
                    case Strategy::non_cooperative:
                        step_non_cooperative(states[s], ens, batch);
                        break;
                }
                acc.sq_wstar[s](i) =
                    inv_n * (ens.w_star - states[s].estimates).squaredNorm();
                acc.sq_wo[s](i) =
                    inv_n * (refs_wo[s] - states[s].estimates).squaredNorm();
            }
        }
    } catch (const DivergenceError& e) {
        throw DivergenceError("run " + std::to_string(run) +
                                  " diverged at iteration " +
                                  std::to_string(e.iteration),
                              run, e.iteration);
    }
    return acc;
}

} // namespace detail

// Monte-Carlo learning curves, one per requested strategy. Deterministic for
// a fixed sample_seed regardless of n_threads: runs are reduced in run order.
inline std::vector<LearningCurve> run_monte_carlo(const SubspaceBasis& basis,
                                                  const AgentEnsemble& ens,
                                                  const CombinationMatrix& a,
                                                  const McConfig& cfg) {
    cfg.validate();
    const int n_strategies = static_cast<int>(cfg.strategies.size());

    // Cooperative strategies measure bias against the subspace limit point;
    // the non-cooperative baseline has no subspace, its limit is W* itself.
    const Eigen::VectorXd w_o = limit_point(basis, ens);
    std::vector<Eigen::VectorXd> refs_wo;
    refs_wo.reserve(n_strategies);
    for (Strategy s : cfg.strategies)
        refs_wo.push_back(s == Strategy::non_cooperative ? ens.w_star : w_o);

    std::vector<Eigen::VectorXd> mean_wstar(n_strategies),
        mean_wo(n_strategies);
    for (int s = 0; s < n_strategies; ++s) {
        mean_wstar[s] = Eigen::VectorXd::Zero(cfg.iterations);
        mean_wo[s] = Eigen::VectorXd::Zero(cfg.iterations);
    }

    auto reduce = [&](const detail::RunAccumulator& acc) {
        for (int s = 0; s < n_strategies; ++s) {
            mean_wstar[s] += acc.sq_wstar[s];
            mean_wo[s] += acc.sq_wo[s];
        }
    };

    if (cfg.n_threads <= 1) {
        for (long r = 0; r < cfg.n_runs; ++r)
            reduce(detail::simulate_one_run(basis, ens, a, cfg, refs_wo, r));
    } else {
        // Waves of independent runs; join and fold in run order so the
        // floating-point reduction is identical to the sequential one.
        for (long wave = 0; wave < cfg.n_runs; wave += cfg.n_threads) {
            const long count =
                std::min<long>(cfg.n_threads, cfg.n_runs - wave);
            std::vector<detail::RunAccumulator> results(count);
            std::vector<std::exception_ptr> errors(count);
            std::vector<std::thread> pool;
            pool.reserve(count);
            for (long t = 0; t < count; ++t)
                pool.emplace_back([&, t] {
                    try {
                        results[t] = detail::simulate_one_run(
                            basis, ens, a, cfg, refs_wo, wave + t);
                    } catch (...) {
                        errors[t] = std::current_exception();
                    }
                });
            for (auto& th : pool) th.join();
            for (long t = 0; t < count; ++t)
                if (errors[t]) std::rethrow_exception(errors[t]);
            for (long t = 0; t < count; ++t) reduce(results[t]);
        }
    }

    const long tail_start =
        std::min<long>(cfg.iterations - 1,
                       std::lround(cfg.burn_in_fraction * cfg.iterations));
    std::vector<LearningCurve> curves(n_strategies);
    for (int s = 0; s < n_strategies; ++s) {
        LearningCurve& c = curves[s];
        c.strategy = cfg.strategies[s];
        c.mu = cfg.mu;
        c.n_runs = cfg.n_runs;
        mean_wstar[s] /= double(cfg.n_runs);
        mean_wo[s] /= double(cfg.n_runs);
        const long tail_len = cfg.iterations - tail_start;
        c.steady_state_db =
            msd_to_db(mean_wo[s].tail(tail_len).mean());
        c.steady_state_wstar_db =
            msd_to_db(mean_wstar[s].tail(tail_len).mean());
        c.msd_wstar_db.resize(cfg.iterations);
        c.msd_wo_db.resize(cfg.iterations);
        for (long i = 0; i < cfg.iterations; ++i) {
            c.msd_wstar_db[i] = msd_to_db(mean_wstar[s](i));
            c.msd_wo_db[i] = msd_to_db(mean_wo[s](i));
        }
    }
    return curves;
}

} // namespace sanet
