#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <sanet/combiner_design.hpp>
#include <sanet/datagen.hpp>
#include <sanet/graph.hpp>
#include <sanet/rng.hpp>
#include <sanet/simulator.hpp>
#include <sanet/subspace.hpp>
#include <sanet/theory.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

// Config sections mirror the module boundaries: graph generation, subspace
// construction, combiner design, and the Monte-Carlo harness. Scalar p / mu
// entries are accepted and normalized to one-element lists, so a round trip
// through JSON is lossless after the first normalization.
struct GraphParams {
    int n = 50;
    double sigma = 0.12;
    double kappa = 0.33;
    std::string topology_file; // when set, overrides the generator

    void validate() const {
        if (topology_file.empty()) {
            if (n < 2) throw std::invalid_argument("graph.n must be at least 2");
            if (sigma <= 0.0)
                throw std::invalid_argument("graph.sigma must be positive");
            if (kappa <= 0.0 || kappa >= 1.0)
                throw std::invalid_argument("graph.kappa must be in (0,1)");
        }
    }
};

struct SubspaceParams {
    std::vector<int> p{4};
    int block_size = 5;
    double tau = 30.0;

    void validate() const {
        if (p.empty()) throw std::invalid_argument("subspace.p must be nonempty");
        for (int v : p)
            if (v < 1) throw std::invalid_argument("subspace.p entries must be positive");
        if (block_size < 1)
            throw std::invalid_argument("subspace.block_size must be positive");
        if (tau < 0.0) throw std::invalid_argument("subspace.tau must be nonnegative");
    }
};

// combiner: "design" runs the DR solver per p; "projector" uses A = P_U
// directly (the centralized mixer, also the fully-connected solution).
struct SimulationParams {
    std::vector<double> mu{1e-3};
    long iterations = 0; // 0: resolved to ceil(20 / mu) per mu
    int n_runs = 100;
    double burn_in_fraction = 0.8;
    std::vector<Strategy> strategies{Strategy::distributed};
    std::string combiner = "design";

    void validate() const {
        if (mu.empty()) throw std::invalid_argument("simulation.mu must be nonempty");
        for (double m : mu)
            if (m <= 0.0) throw std::invalid_argument("simulation.mu entries must be positive");
        if (iterations < 0)
            throw std::invalid_argument("simulation.iterations must be nonnegative");
        if (n_runs < 1) throw std::invalid_argument("simulation.n_runs must be positive");
        if (burn_in_fraction < 0.0 || burn_in_fraction >= 1.0)
            throw std::invalid_argument("simulation.burn_in_fraction must be in [0,1)");
        if (strategies.empty())
            throw std::invalid_argument("simulation.strategies must be nonempty");
        if (combiner != "design" && combiner != "projector")
            throw std::invalid_argument("simulation.combiner must be design or projector");
    }
};

struct ExperimentConfig {
    GraphParams graph;
    SubspaceParams subspace;
    DesignConfig design;
    SimulationParams simulation;
    std::uint64_t master_seed = 1;
    std::string output_dir = ".";

    void validate() const {
        graph.validate();
        subspace.validate();
        design.validate();
        simulation.validate();
        for (int p : subspace.p)
            if (graph.topology_file.empty() && p > graph.n)
                throw std::invalid_argument("subspace.p exceeds graph.n");
    }
};

inline void to_json(nlohmann::json& j, const GraphParams& g) {
    j = nlohmann::json{{"n", g.n}, {"sigma", g.sigma}, {"kappa", g.kappa}};
    if (!g.topology_file.empty()) j["topology_file"] = g.topology_file;
}

inline void from_json(const nlohmann::json& j, GraphParams& g) {
    g = GraphParams{};
    if (j.contains("n")) j.at("n").get_to(g.n);
    if (j.contains("sigma")) j.at("sigma").get_to(g.sigma);
    if (j.contains("kappa")) j.at("kappa").get_to(g.kappa);
    if (j.contains("topology_file")) j.at("topology_file").get_to(g.topology_file);
}

inline void to_json(nlohmann::json& j, const SubspaceParams& s) {
    j = nlohmann::json{{"p", s.p}, {"block_size", s.block_size}, {"tau", s.tau}};
}

inline void from_json(const nlohmann::json& j, SubspaceParams& s) {
    s = SubspaceParams{};
    if (j.contains("p")) {
        if (j.at("p").is_array())
            j.at("p").get_to(s.p);
        else
            s.p = {j.at("p").get<int>()};
    }
    if (j.contains("block_size")) j.at("block_size").get_to(s.block_size);
    if (j.contains("tau")) j.at("tau").get_to(s.tau);
}

inline void to_json(nlohmann::json& j, const SimulationParams& s) {
    std::vector<std::string> names;
    names.reserve(s.strategies.size());
    for (Strategy st : s.strategies) names.emplace_back(strategy_name(st));
    j = nlohmann::json{{"mu", s.mu},
                       {"iterations", s.iterations},
                       {"n_runs", s.n_runs},
                       {"burn_in_fraction", s.burn_in_fraction},
                       {"strategies", names},
                       {"combiner", s.combiner}};
}

inline void from_json(const nlohmann::json& j, SimulationParams& s) {
    s = SimulationParams{};
    if (j.contains("mu")) {
        if (j.at("mu").is_array())
            j.at("mu").get_to(s.mu);
        else
            s.mu = {j.at("mu").get<double>()};
    }
    if (j.contains("iterations")) j.at("iterations").get_to(s.iterations);
    if (j.contains("n_runs")) j.at("n_runs").get_to(s.n_runs);
    if (j.contains("burn_in_fraction"))
        j.at("burn_in_fraction").get_to(s.burn_in_fraction);
    if (j.contains("strategies")) {
        s.strategies.clear();
        for (const auto& name : j.at("strategies"))
            s.strategies.push_back(strategy_from_name(name.get<std::string>()));
    }
    if (j.contains("combiner")) j.at("combiner").get_to(s.combiner);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"graph", c.graph},
                       {"subspace", c.subspace},
                       {"design", c.design},
                       {"simulation", c.simulation},
                       {"master_seed", c.master_seed},
                       {"output_dir", c.output_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c = ExperimentConfig{};
    if (j.contains("graph")) j.at("graph").get_to(c.graph);
    if (j.contains("subspace")) j.at("subspace").get_to(c.subspace);
    if (j.contains("design")) j.at("design").get_to(c.design);
    if (j.contains("simulation")) j.at("simulation").get_to(c.simulation);
    if (j.contains("master_seed")) j.at("master_seed").get_to(c.master_seed);
    if (j.contains("output_dir")) j.at("output_dir").get_to(c.output_dir);
    c.validate();
}

// The master seed names the realization: the graph and ensemble generators
// take it as-is (they already split into disjoint internal streams), so a
// directly constructed setup and a config with the same master_seed sample
// the identical network and agents. Only the simulation stream is derived,
// keeping Monte-Carlo draws decoupled from the realization draws.
inline std::uint64_t seed_graph(std::uint64_t master) { return master; }
inline std::uint64_t seed_ensemble(std::uint64_t master) { return master; }
inline std::uint64_t seed_simulation(std::uint64_t master) {
    return CounterRng::derive(master, 0x73696dull); // "sim"
}

inline long resolve_iterations(const SimulationParams& sim, double mu) {
    if (sim.iterations > 0) return sim.iterations;
    return static_cast<long>(std::ceil(20.0 / mu));
}

// The sampled world shared by every subcommand: topology, its eigenbasis,
// and the agent models.
struct Realization {
    Topology topo;
    LaplacianEigenbasis eb;
    AgentEnsemble ens;
};

inline Realization realize(const ExperimentConfig& cfg) {
    cfg.validate();
    Realization r;
    if (!cfg.graph.topology_file.empty()) {
        std::ifstream in(cfg.graph.topology_file);
        if (!in) throw std::runtime_error("cannot open topology file " +
                                          cfg.graph.topology_file);
        nlohmann::json j;
        in >> j;
        r.topo = j.get<Topology>();
    } else {
        r.topo = generate_geometric(cfg.graph.n, cfg.graph.sigma,
                                    cfg.graph.kappa, seed_graph(cfg.master_seed));
    }
    r.eb = laplacian_eigenbasis(r.topo);
    r.ens = sample_agent_models(r.topo.n_nodes, cfg.subspace.block_size, r.eb,
                                cfg.subspace.tau, seed_ensemble(cfg.master_seed));
    return r;
}

// Combiner for one subspace rank per the config policy.
inline CombinationMatrix make_combiner(const ExperimentConfig& cfg,
                                       const Realization& r,
                                       const SubspaceBasis& basis,
                                       bool allow_infeasible = false) {
    if (cfg.simulation.combiner == "projector")
        return combination_from_projector(basis);
    return douglas_rachford(basis, r.topo, cfg.design, allow_infeasible);
}

// Theory pair (closed form + series) evaluated on the realized ensemble for
// a given mixer. The non-cooperative baseline is the same formulas with
// U = I and A = I: every agent estimates its own W* block unconstrained.
struct TheoryPair {
    double msd_closed_db = 0.0;
    double msd_series_db = 0.0;
    double rho_b = 0.0;
    double tail_bound = 0.0;
    long n_terms = 0;
};

inline TheoryPair theory_pair(const SubspaceBasis& basis,
                              const AgentEnsemble& ens,
                              const Eigen::MatrixXd& a, double mu) {
    TheoryContext ctx = make_theory_context(basis, ens, a, mu);
    TheoryPair out;
    out.msd_closed_db =
        msd_closed_form(basis, ctx.h_o, ctx.s, mu, basis.n_agents);
    SeriesResult sr =
        msd_series_matrix(a, ctx.h_o, ctx.s, mu, basis.n_agents);
    out.msd_series_db = sr.msd_db;
    out.rho_b = sr.rho_b;
    out.tail_bound = sr.tail_bound;
    out.n_terms = sr.n_terms;
    return out;
}

inline SubspaceBasis identity_basis(int n_agents, int block_size) {
    const int m = n_agents * block_size;
    SubspaceBasis b;
    b.n_agents = n_agents;
    b.block_size = block_size;
    b.graph_rank = n_agents;
    b.u = Eigen::MatrixXd::Identity(m, m);
    b.projector = b.u;
    return b;
}

inline TheoryPair theory_pair_noncooperative(const AgentEnsemble& ens,
                                             double mu) {
    SubspaceBasis b = identity_basis(ens.n_agents, ens.block_size);
    return theory_pair(b, ens, b.projector, mu);
}

inline void to_json(nlohmann::json& j, const TheoryPair& t) {
    j = nlohmann::json{{"msd_closed_db", t.msd_closed_db},
                       {"msd_series_db", t.msd_series_db},
                       {"rho_B", t.rho_b},
                       {"tail_bound", t.tail_bound},
                       {"n_terms", t.n_terms}};
}

// Learning-curve CSV: one row per iteration, dB columns, full double
// precision so reruns compare byte-for-byte.
inline void write_curve_csv(std::ostream& os, const LearningCurve& c) {
    os << "iteration,msd_wstar_db,msd_wo_db\n";
    char buf[64];
    for (std::size_t i = 0; i < c.msd_wstar_db.size(); ++i) {
        os << i;
        std::snprintf(buf, sizeof buf, ",%.17g", c.msd_wstar_db[i]);
        os << buf;
        std::snprintf(buf, sizeof buf, ",%.17g", c.msd_wo_db[i]);
        os << buf << '\n';
    }
}

inline std::string mu_tag(double mu) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0e", mu);
    return buf;
}

inline std::string curve_filename(Strategy s, double mu, int p) {
    std::ostringstream name;
    name << "curve_" << strategy_name(s);
    if (s != Strategy::non_cooperative) name << "_p" << p;
    name << "_mu" << mu_tag(mu) << ".csv";
    return name.str();
}

} // namespace sanet
