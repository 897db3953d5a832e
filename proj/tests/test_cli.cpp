// End-to-end checks of the command-line driver: exit codes, artifact layout,
// and rerun determinism. Everything runs on small explicit topologies so the
// suite is hermetic and fast.

#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string(SANET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("sanet_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json load_json(const fs::path& path) { return json::parse(slurp(path)); }

long count_lines(const std::string& text) {
    long n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

json ring8_topology() {
    const int n = 8;
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    std::vector<std::array<double, 2>> coords(n);
    for (int k = 0; k < n; ++k) {
        const int l = (k + 1) % n;
        w[k][l] = 1.0;
        w[l][k] = 1.0;
        const double ang = 2.0 * M_PI * k / n;
        coords[k] = {0.5 + 0.4 * std::cos(ang), 0.5 + 0.4 * std::sin(ang)};
    }
    return json{{"n_nodes", n},
                {"coords", coords},
                {"weights", w},
                {"threshold", 0.0},
                {"kernel_width", 0.0}};
}

// A path with p = n-1 admits exactly one matrix in the affine constraint set
// (the identity), whose contraction radius is 1: certifiably infeasible.
json path5_topology() {
    const int n = 5;
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    for (int k = 0; k + 1 < n; ++k) {
        w[k][k + 1] = 1.0;
        w[k + 1][k] = 1.0;
    }
    return json{{"n_nodes", n},
                {"coords", std::vector<std::array<double, 2>>(n, {0.0, 0.0})},
                {"weights", w},
                {"threshold", 0.0},
                {"kernel_width", 0.0}};
}

// Ring-of-8 base config: explicit topology (no generation randomness), small
// horizons, P_U combiner so no solve is needed unless a test asks for one.
json ring_config(const fs::path& dir) {
    write_file(dir / "ring8.json", ring8_topology().dump());
    return json{
        {"graph", {{"topology_file", (dir / "ring8.json").string()}}},
        {"subspace", {{"p", 2}, {"block_size", 2}, {"tau", 30.0}}},
        {"design",
         {{"eta", 0.003}, {"eps", 0.01}, {"stop_tol", 1e-5}, {"max_iters", 50000}}},
        {"simulation",
         {{"mu", 0.01},
          {"iterations", 400},
          {"n_runs", 3},
          {"burn_in_fraction", 0.8},
          {"strategies", json::array({"distributed", "centralized",
                                      "non_cooperative"})},
          {"combiner", "projector"}}},
        {"master_seed", 5},
        {"output_dir", (dir / "out").string()}};
}

std::string config_arg(const fs::path& dir, const json& cfg,
                       const std::string& name = "cfg.json") {
    write_file(dir / name, cfg.dump());
    return "--config " + (dir / name).string();
}

std::vector<std::vector<double>> parse_matrix_csv(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

TEST_CASE("config problems exit with the config error code", "[cli]") {
    const fs::path dir = fresh_dir("config_errors");

    write_file(dir / "bad.json", "{ not json");
    CHECK(run_cli("design --config " + (dir / "bad.json").string()) == 2);

    CHECK(run_cli("simulate --config " + (dir / "missing.json").string()) == 2);

    CHECK(run_cli("") == 2); // a subcommand is required

    json cfg = ring_config(dir);
    cfg["simulation"]["n_runs"] = 0;
    CHECK(run_cli("simulate " + config_arg(dir, cfg, "zero_runs.json")) == 2);

    cfg = ring_config(dir);
    cfg["simulation"]["strategies"] = json::array({"gossip"});
    CHECK(run_cli("theory " + config_arg(dir, cfg, "bad_strategy.json")) == 2);
}

TEST_CASE("infeasible designs exit with the infeasibility code", "[cli]") {
    const fs::path dir = fresh_dir("infeasible");
    write_file(dir / "path5.json", path5_topology().dump());
    const json cfg{
        {"graph", {{"topology_file", (dir / "path5.json").string()}}},
        {"subspace", {{"p", 4}, {"block_size", 1}, {"tau", 30.0}}},
        {"design", {{"max_iters", 20000}}},
        {"simulation",
         {{"mu", 0.01},
          {"iterations", 200},
          {"n_runs", 2},
          {"strategies", json::array({"distributed"})},
          {"combiner", "design"}}},
        {"master_seed", 3},
        {"output_dir", (dir / "out").string()}};
    const std::string arg = config_arg(dir, cfg);

    CHECK(run_cli("design " + arg) == 3);

    // diagnostic artifacts are still written
    const json cert = load_json(dir / "out" / "certificate_p4.json");
    CHECK_FALSE(cert.at("feasible").get<bool>());
    CHECK(cert.at("contraction").get<double>() >= 0.99);
    CHECK(fs::exists(dir / "out" / "A_p4.csv"));
    CHECK(fs::exists(dir / "out" / "ftrace_p4.csv"));

    // simulation refuses to run on the same instance
    CHECK(run_cli("simulate " + arg) == 3);
}

TEST_CASE("simulate writes one curve per strategy plus a paired summary",
          "[cli]") {
    const fs::path dir = fresh_dir("simulate");
    const json cfg = ring_config(dir);
    REQUIRE(run_cli("simulate " + config_arg(dir, cfg)) == 0);

    const fs::path out = dir / "out";
    for (const char* name :
         {"curve_distributed_p2_mu1e-02.csv", "curve_centralized_p2_mu1e-02.csv",
          "curve_non_cooperative_mu1e-02.csv"}) {
        const std::string text = slurp(out / name);
        CHECK(text.rfind("iteration,msd_wstar_db,msd_wo_db\n", 0) == 0);
        CHECK(count_lines(text) == 401); // header + one row per iteration
    }

    const json summary = load_json(out / "summary.json");
    const auto& results = summary.at("results");
    REQUIRE(results.size() == 3);
    for (const auto& row : results) {
        const auto& th = row.at("theory");
        for (const char* key :
             {"msd_closed_db", "msd_series_db", "rho_B", "tail_bound", "n_terms"})
            CHECK(th.contains(key));
        CHECK(row.at("empirical").contains("steady_state_wo_db"));
        CHECK(row.at("empirical").contains("steady_state_wstar_db"));
        if (row.at("strategy") == "non_cooperative")
            CHECK_FALSE(row.contains("p"));
        else
            CHECK(row.at("p") == 2);
    }
}

TEST_CASE("reruns with the same master seed are byte-identical", "[cli]") {
    const fs::path dir = fresh_dir("rerun");
    const json cfg = ring_config(dir);
    const std::string arg = config_arg(dir, cfg);

    REQUIRE(run_cli("simulate " + arg + " --out " + (dir / "a").string()) == 0);
    REQUIRE(run_cli("simulate " + arg + " --out " + (dir / "b").string()) == 0);
    const char* curve = "curve_distributed_p2_mu1e-02.csv";
    CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));
    CHECK(slurp(dir / "a" / curve) == slurp(dir / "b" / curve));

    // --seed overrides the config and changes the sampled data
    REQUIRE(run_cli("simulate " + arg + " --seed 6 --out " +
                    (dir / "c").string()) == 0);
    CHECK(slurp(dir / "a" / curve) != slurp(dir / "c" / curve));
}

TEST_CASE("a divergent run exits with the divergence code", "[cli]") {
    const fs::path dir = fresh_dir("divergence");
    json cfg = ring_config(dir);
    cfg["simulation"]["mu"] = 50.0;
    REQUIRE(run_cli("simulate " + config_arg(dir, cfg)) == 4);

    const json diag = load_json(dir / "out" / "divergence.json");
    CHECK(diag.at("error") == "divergence");
    CHECK(diag.at("run").get<long>() >= 0);
    CHECK(diag.at("iteration").get<long>() > 0);
}

TEST_CASE("design solves a small ring and writes all artifacts", "[cli]") {
    const fs::path dir = fresh_dir("design");
    json cfg = ring_config(dir);
    cfg["subspace"]["p"] = json::array({1});
    cfg["simulation"]["combiner"] = "design";
    REQUIRE(run_cli("design " + config_arg(dir, cfg)) == 0);

    const fs::path out = dir / "out";
    const json cert = load_json(out / "certificate_p1.json");
    CHECK(cert.at("feasible").get<bool>());
    CHECK(cert.at("contraction").get<double>() < 0.99);
    CHECK(cert.at("sparsity_violation").get<double>() == 0.0);

    const auto a = parse_matrix_csv(slurp(out / "A_p1.csv"));
    const int m = 16; // 8 agents x block size 2
    REQUIRE(static_cast<int>(a.size()) == m);
    for (const auto& row : a) REQUIRE(static_cast<int>(row.size()) == m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) CHECK(a[i][j] == a[j][i]);
    // p=1 basis is the averaging direction, so block rows sum to identity
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int l = 0; l < 8; ++l) s += a[i][l * 2 + (i % 2)];
        CHECK(std::abs(s - 1.0) < 1e-9);
    }

    const std::string ftrace = slurp(out / "ftrace_p1.csv");
    CHECK(ftrace.rfind("iteration,f\n", 0) == 0);
    CHECK(count_lines(ftrace) >= 2);
}

TEST_CASE("theory emits paired predictions", "[cli]") {
    const fs::path dir = fresh_dir("theory");
    const json cfg = ring_config(dir);
    REQUIRE(run_cli("theory " + config_arg(dir, cfg)) == 0);

    const json th = load_json(dir / "out" / "theory.json");
    const auto& results = th.at("results");
    REQUIRE(results.size() == 3);
    for (const auto& row : results) {
        const double rho = row.at("rho_B").get<double>();
        CHECK(rho > 0.0);
        CHECK(rho < 1.0);
        // small step size: the series sum sits near the closed form
        CHECK(std::abs(row.at("msd_closed_db").get<double>() -
                       row.at("msd_series_db").get<double>()) < 0.5);
        if (row.at("strategy") == "non_cooperative") CHECK_FALSE(row.contains("p"));
    }
}

TEST_CASE("table2 produces the six-row step-size study", "[cli]") {
    const fs::path dir = fresh_dir("table2");
    json cfg = ring_config(dir);
    cfg["simulation"]["iterations"] = 0; // horizon tracks each step size
    cfg["simulation"]["n_runs"] = 2;
    REQUIRE(run_cli("table2 " + config_arg(dir, cfg)) == 0);

    const std::string csv = slurp(dir / "out" / "table2.csv");
    CHECK(csv.rfind("mu,strategy,msd_closed_db,msd_series_db,msd_empirical_db\n",
                    0) == 0);
    CHECK(count_lines(csv) == 7);

    const json t2 = load_json(dir / "out" / "table2.json");
    const auto& rows = t2.at("rows");
    REQUIRE(rows.size() == 6);
    // closed form is linear in mu: exactly +10 dB per decade
    for (int s = 0; s < 2; ++s) {
        const double c2 = rows[0 + s].at("msd_closed_db").get<double>();
        const double c3 = rows[2 + s].at("msd_closed_db").get<double>();
        const double c4 = rows[4 + s].at("msd_closed_db").get<double>();
        CHECK(std::abs((c2 - c3) - 10.0) < 1e-9);
        CHECK(std::abs((c3 - c4) - 10.0) < 1e-9);
    }
    for (const auto& row : rows) {
        CHECK(row.contains("msd_series_db"));
        CHECK(row.contains("msd_empirical_db"));
        CHECK(std::abs(row.at("msd_empirical_db").get<double>() -
                       row.at("msd_series_db").get<double>()) < 3.0);
    }
}

TEST_CASE("the baseline runs once across multiple subspace ranks", "[cli]") {
    const fs::path dir = fresh_dir("multi_p");
    json cfg = ring_config(dir);
    cfg["subspace"]["p"] = json::array({1, 2});
    cfg["simulation"]["strategies"] =
        json::array({"distributed", "non_cooperative"});
    cfg["simulation"]["iterations"] = 200;
    cfg["simulation"]["n_runs"] = 2;
    REQUIRE(run_cli("simulate " + config_arg(dir, cfg)) == 0);

    const fs::path out = dir / "out";
    CHECK(fs::exists(out / "curve_distributed_p1_mu1e-02.csv"));
    CHECK(fs::exists(out / "curve_distributed_p2_mu1e-02.csv"));
    CHECK(fs::exists(out / "curve_non_cooperative_mu1e-02.csv"));
    int n_curves = 0;
    for (const auto& entry : fs::directory_iterator(out))
        if (entry.path().filename().string().rfind("curve_", 0) == 0) ++n_curves;
    CHECK(n_curves == 3);
    CHECK(load_json(out / "summary.json").at("results").size() == 3);
}
