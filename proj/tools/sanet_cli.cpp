// Command-line driver: combiner design, Monte-Carlo simulation, and MSD
// theory predictions from one JSON experiment config.
// Exit codes: 0 success, 2 config error, 3 infeasible design, 4 divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <sanet/experiment.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitDivergence = 4;

struct SharedArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 1;
};

sanet::ExperimentConfig load_config(const SharedArgs& args) {
    std::ifstream in(args.config_path);
    if (!in)
        throw std::runtime_error("cannot open config file " + args.config_path);
    const json j = json::parse(in);
    auto cfg = j.get<sanet::ExperimentConfig>();
    if (args.seed_given) cfg.master_seed = args.seed;
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json_file(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

std::string matrix_csv(const Eigen::MatrixXd& a) {
    std::string text;
    char buf[64];
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            std::snprintf(buf, sizeof buf, c == 0 ? "%.17g" : ",%.17g", a(r, c));
            text += buf;
        }
        text += '\n';
    }
    return text;
}

std::string ftrace_csv(const std::vector<double>& trace) {
    std::string text = "iteration,f\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, trace[i]);
        text += buf;
    }
    return text;
}

// Config as recorded inside result files; output_dir is dropped so a rerun
// into another directory still produces byte-identical artifacts.
json config_record(const sanet::ExperimentConfig& cfg) {
    json j = cfg;
    j.erase("output_dir");
    return j;
}

sanet::TheoryPair theory_for(sanet::Strategy s, const sanet::SubspaceBasis& basis,
                             const sanet::Realization& r, const Eigen::MatrixXd& a,
                             double mu) {
    switch (s) {
        case sanet::Strategy::distributed:
            return sanet::theory_pair(basis, r.ens, a, mu);
        case sanet::Strategy::centralized:
            return sanet::theory_pair(basis, r.ens, basis.projector, mu);
        case sanet::Strategy::non_cooperative:
            return sanet::theory_pair_noncooperative(r.ens, mu);
    }
    throw std::logic_error("unhandled strategy");
}

int cmd_design(const sanet::ExperimentConfig& cfg) {
    const sanet::Realization r = sanet::realize(cfg);
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    bool all_feasible = true;
    for (int p : cfg.subspace.p) {
        const sanet::SubspaceBasis basis =
            sanet::build_subspace(r.eb, p, cfg.subspace.block_size);
        const sanet::CombinationMatrix cm =
            sanet::make_combiner(cfg, r, basis, /*allow_infeasible=*/true);

        const std::string tag = "p" + std::to_string(p);
        write_text(dir / ("A_" + tag + ".csv"), matrix_csv(cm.a));
        write_json_file(dir / ("certificate_" + tag + ".json"),
                        json(cm.certificate));
        write_text(dir / ("ftrace_" + tag + ".csv"),
                   ftrace_csv(cm.objective_trace));

        std::printf("design p=%d: %s, contraction %.6f, off-mask mass %.3g, "
                    "%zu iterations\n",
                    p, cm.certificate.feasible ? "feasible" : "INFEASIBLE",
                    cm.certificate.contraction,
                    cm.certificate.sparsity_violation,
                    cm.objective_trace.size());
        if (!cm.certificate.feasible) all_feasible = false;
    }
    return all_feasible ? 0 : kExitInfeasible;
}

int cmd_theory(const sanet::ExperimentConfig& cfg) {
    const sanet::Realization r = sanet::realize(cfg);
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    std::vector<sanet::Strategy> coop;
    bool want_noncoop = false;
    for (sanet::Strategy s : cfg.simulation.strategies) {
        if (s == sanet::Strategy::non_cooperative)
            want_noncoop = true;
        else
            coop.push_back(s);
    }

    json results = json::array();
    for (int p : cfg.subspace.p) {
        if (coop.empty()) break;
        const sanet::SubspaceBasis basis =
            sanet::build_subspace(r.eb, p, cfg.subspace.block_size);
        bool need_design = false;
        for (sanet::Strategy s : coop)
            if (s == sanet::Strategy::distributed) need_design = true;
        Eigen::MatrixXd a;
        if (need_design) a = sanet::make_combiner(cfg, r, basis).a;

        for (double mu : cfg.simulation.mu) {
            for (sanet::Strategy s : coop) {
                json row = theory_for(s, basis, r, a, mu);
                row["strategy"] = sanet::strategy_name(s);
                row["p"] = p;
                row["mu"] = mu;
                std::printf("theory %-15s p=%d mu=%.0e: closed %9.3f dB, "
                            "series %9.3f dB, rho_B %.6f\n",
                            sanet::strategy_name(s), p, mu,
                            row["msd_closed_db"].get<double>(),
                            row["msd_series_db"].get<double>(),
                            row["rho_B"].get<double>());
                results.push_back(std::move(row));
            }
        }
    }
    if (want_noncoop) {
        for (double mu : cfg.simulation.mu) {
            json row = sanet::theory_pair_noncooperative(r.ens, mu);
            row["strategy"] = sanet::strategy_name(sanet::Strategy::non_cooperative);
            row["mu"] = mu;
            std::printf("theory %-15s     mu=%.0e: closed %9.3f dB, "
                        "series %9.3f dB, rho_B %.6f\n",
                        sanet::strategy_name(sanet::Strategy::non_cooperative), mu,
                        row["msd_closed_db"].get<double>(),
                        row["msd_series_db"].get<double>(),
                        row["rho_B"].get<double>());
            results.push_back(std::move(row));
        }
    }

    write_json_file(dir / "theory.json",
                    json{{"config", config_record(cfg)}, {"results", results}});
    return 0;
}

int cmd_simulate(const sanet::ExperimentConfig& cfg, int threads) {
    const sanet::Realization r = sanet::realize(cfg);
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    bool noncoop_pending = false;
    for (sanet::Strategy s : cfg.simulation.strategies)
        if (s == sanet::Strategy::non_cooperative) noncoop_pending = true;

    json results = json::array();
    try {
        for (int p : cfg.subspace.p) {
            // The baseline has no subspace, so it runs once, alongside the
            // first p; the shared sample seed keeps all curves comparable.
            std::vector<sanet::Strategy> strategies;
            for (sanet::Strategy s : cfg.simulation.strategies) {
                if (s == sanet::Strategy::non_cooperative) {
                    if (noncoop_pending) strategies.push_back(s);
                } else {
                    strategies.push_back(s);
                }
            }
            noncoop_pending = false;
            if (strategies.empty()) continue;

            const sanet::SubspaceBasis basis =
                sanet::build_subspace(r.eb, p, cfg.subspace.block_size);
            const sanet::CombinationMatrix cm = sanet::make_combiner(cfg, r, basis);

            for (double mu : cfg.simulation.mu) {
                sanet::McConfig mc;
                mc.mu = mu;
                mc.iterations = sanet::resolve_iterations(cfg.simulation, mu);
                mc.n_runs = cfg.simulation.n_runs;
                mc.burn_in_fraction = cfg.simulation.burn_in_fraction;
                mc.strategies = strategies;
                mc.sample_seed = sanet::seed_simulation(cfg.master_seed);
                mc.n_threads = threads;

                const std::vector<sanet::LearningCurve> curves =
                    sanet::run_monte_carlo(basis, r.ens, cm, mc);

                for (const sanet::LearningCurve& c : curves) {
                    const std::string fname = sanet::curve_filename(c.strategy, mu, p);
                    std::ostringstream os;
                    sanet::write_curve_csv(os, c);
                    write_text(dir / fname, os.str());

                    json row;
                    row["strategy"] = sanet::strategy_name(c.strategy);
                    if (c.strategy != sanet::Strategy::non_cooperative) row["p"] = p;
                    row["mu"] = mu;
                    row["iterations"] = mc.iterations;
                    row["n_runs"] = c.n_runs;
                    row["curve_file"] = fname;
                    row["empirical"] =
                        json{{"steady_state_wo_db", c.steady_state_db},
                             {"steady_state_wstar_db", c.steady_state_wstar_db}};
                    row["theory"] = theory_for(c.strategy, basis, r, cm.a, mu);
                    char ptag[16] = "   ";
                    if (c.strategy != sanet::Strategy::non_cooperative)
                        std::snprintf(ptag, sizeof ptag, "p=%d", p);
                    std::printf("simulate %-15s %s mu=%.0e: steady %9.3f dB "
                                "(theory series %9.3f dB)\n",
                                sanet::strategy_name(c.strategy), ptag, mu,
                                c.steady_state_db,
                                row["theory"]["msd_series_db"].get<double>());
                    results.push_back(std::move(row));
                }
            }
        }
    } catch (const sanet::DivergenceError& e) {
        write_json_file(dir / "divergence.json",
                        json{{"error", "divergence"},
                             {"message", e.what()},
                             {"run", e.run},
                             {"iteration", e.iteration}});
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    }

    write_json_file(dir / "summary.json",
                    json{{"config", config_record(cfg)}, {"results", results}});
    return 0;
}

int cmd_table2(const sanet::ExperimentConfig& cfg, int threads) {
    const sanet::Realization r = sanet::realize(cfg);
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    const int p = cfg.subspace.p.front();
    const sanet::SubspaceBasis basis =
        sanet::build_subspace(r.eb, p, cfg.subspace.block_size);
    const sanet::CombinationMatrix cm = sanet::make_combiner(cfg, r, basis);

    const std::vector<double> mus{1e-2, 1e-3, 1e-4};
    const std::vector<sanet::Strategy> strategies{sanet::Strategy::centralized,
                                                  sanet::Strategy::distributed};

    json rows = json::array();
    std::string csv = "mu,strategy,msd_closed_db,msd_series_db,msd_empirical_db\n";
    try {
        for (double mu : mus) {
            sanet::McConfig mc;
            mc.mu = mu;
            mc.iterations = sanet::resolve_iterations(cfg.simulation, mu);
            mc.n_runs = cfg.simulation.n_runs;
            mc.burn_in_fraction = cfg.simulation.burn_in_fraction;
            mc.strategies = strategies;
            mc.sample_seed = sanet::seed_simulation(cfg.master_seed);
            mc.n_threads = threads;

            const std::vector<sanet::LearningCurve> curves =
                sanet::run_monte_carlo(basis, r.ens, cm, mc);

            for (const sanet::LearningCurve& c : curves) {
                const sanet::TheoryPair tp = theory_for(c.strategy, basis, r, cm.a, mu);
                json row;
                row["mu"] = mu;
                row["strategy"] = sanet::strategy_name(c.strategy);
                row["p"] = p;
                row["msd_closed_db"] = tp.msd_closed_db;
                row["msd_series_db"] = tp.msd_series_db;
                row["msd_empirical_db"] = c.steady_state_db;
                row["steady_state_wstar_db"] = c.steady_state_wstar_db;
                row["rho_B"] = tp.rho_b;
                rows.push_back(std::move(row));

                char line[192];
                std::snprintf(line, sizeof line, "%.0e,%s,%.6f,%.6f,%.6f\n", mu,
                              sanet::strategy_name(c.strategy), tp.msd_closed_db,
                              tp.msd_series_db, c.steady_state_db);
                csv += line;
                std::printf("table2 mu=%.0e %-12s closed %9.3f  series %9.3f  "
                            "empirical %9.3f dB\n",
                            mu, sanet::strategy_name(c.strategy), tp.msd_closed_db,
                            tp.msd_series_db, c.steady_state_db);
            }
        }
    } catch (const sanet::DivergenceError& e) {
        write_json_file(dir / "divergence.json",
                        json{{"error", "divergence"},
                             {"message", e.what()},
                             {"run", e.run},
                             {"iteration", e.iteration}});
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    }

    write_json_file(dir / "table2.json",
                    json{{"config", config_record(cfg)}, {"rows", rows}});
    write_text(dir / "table2.csv", csv);
    return 0;
}

int dispatch(const std::string& name, const SharedArgs& args) {
    const sanet::ExperimentConfig cfg = load_config(args);
    if (name == "design") return cmd_design(cfg);
    if (name == "theory") return cmd_theory(cfg);
    if (name == "simulate") return cmd_simulate(cfg, args.threads);
    return cmd_table2(cfg, args.threads);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse combiner design and simulation for subspace-constrained "
                 "adaptive networks"};
    app.require_subcommand(1);

    SharedArgs args;
    CLI::App* design = app.add_subcommand("design", "run the combiner design solver");
    CLI::App* simulate = app.add_subcommand("simulate", "Monte-Carlo learning curves");
    CLI::App* theory =
        app.add_subcommand("theory", "closed-form and series MSD predictions");
    CLI::App* table2 =
        app.add_subcommand("table2", "theory vs simulation across step-sizes");
    for (CLI::App* sub : {design, simulate, theory, table2}) {
        sub->add_option("--config", args.config_path, "experiment config (JSON)")
            ->required();
        sub->add_option("--out", args.out_dir, "output directory (overrides config)");
        sub->add_option("--seed", args.seed, "master seed (overrides config)");
        sub->add_option("--threads", args.threads, "Monte-Carlo worker threads")
            ->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    CLI::App* sub = app.get_subcommands().front();
    args.seed_given = sub->count("--seed") > 0;

    try {
        return dispatch(sub->get_name(), args);
    } catch (const sanet::DesignError& e) {
        std::fprintf(stderr, "infeasible design: %s\n", e.what());
        return kExitInfeasible;
    } catch (const sanet::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const sanet::InstabilityError& e) {
        std::fprintf(stderr, "unstable recursion: %s\n", e.what());
        return kExitDivergence;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        // A topology that stays disconnected cannot carry any design, so it
        // lands with the infeasibility exit; other runtime failures are
        // config or I/O problems.
        std::fprintf(stderr, "%s\n", e.what());
        const std::string what = e.what();
        return what.find("disconnected") != std::string::npos ? kExitInfeasible
                                                              : kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
