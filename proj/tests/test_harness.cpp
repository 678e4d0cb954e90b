#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dujad/harness.hpp"

using namespace dujad;

TEST_CASE("method names") {
    for (Method m : {Method::baseline1, Method::baseline4_200it, Method::baseline4_10it, Method::dujad})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("baseline7"), ConfigError);
}

TEST_CASE("csv round trip") {
    const std::vector<ResultRow> rows{{"dujad", 8, 0, 0.125, 0.0625, 10, 0.0},
                                      {"baseline1", 8, 1, 0.0, 1.0 / 3.0, 200, 0.5},
                                      {"baseline4_10it", 12, 499, 1.0, 0.0, 0, 0.0}};
    std::stringstream ss;
    write_csv(ss, rows);
    const auto back = parse_csv(ss);
    REQUIRE(back.size() == rows.size());
    CHECK(back[0] == rows[0]);
    CHECK(back[2] == rows[2]);
    // 9 significant digits.
    CHECK(back[1].aser == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

    std::stringstream bad("method,P,trial,uder,aser,iterations,wall_time\ndujad,8,zero,0,0,1,0\n");
    CHECK_THROWS(parse_csv(bad));

    const std::string path = "harness_roundtrip.csv";
    export_csv(rows, path);
    CHECK(import_csv(path).size() == 3);
    std::remove(path.c_str());
    CHECK_THROWS(import_csv(path));
}

TEST_CASE("aggregate by hand") {
    const std::vector<ResultRow> rows{{"a", 4, 0, 0.0, 0.1, 1, 0}, {"b", 4, 0, 0.5, 0.3, 1, 0},
                                      {"a", 4, 1, 1.0, 0.3, 1, 0}, {"b", 4, 1, 0.5, 0.2, 1, 0},
                                      {"a", 8, 0, 0.25, 0.0, 1, 0}};
    const auto s = aggregate(rows);
    REQUIRE(s.size() == 3);
    CHECK(s[0].method == "a");
    CHECK(s[0].P == 4);
    CHECK(s[0].count == 2);
    CHECK(s[0].uder_mean == doctest::Approx(0.5));
    // sample deviation of {0, 1} is 1/sqrt(2), over sqrt(2)
    CHECK(s[0].uder_stderr == doctest::Approx(0.5));
    CHECK(s[0].aser_mean == doctest::Approx(0.2));
    CHECK(s[0].aser_stderr == doctest::Approx(0.1));
    CHECK(s[1].method == "b");
    CHECK(s[1].uder_stderr == 0.0);
    CHECK(s[2].P == 8);
    CHECK(s[2].count == 1);
    CHECK(s[2].aser_stderr == 0.0);

    const auto d = paired_aser_difference(rows, "a", "b", 4);
    CHECK(d.count == 2);
    // differences -0.2, +0.1
    CHECK(d.mean == doctest::Approx(-0.05));
    CHECK(d.std_error == doctest::Approx(0.15));
    CHECK(paired_aser_difference(rows, "a", "b", 8).count == 0);

    std::stringstream os;
    write_summary(os, s);
    CHECK(os.str().find("a,4,2") != std::string::npos);
}

TEST_CASE("checkpoint round trip") {
    Checkpoint c;
    c.N = 8;
    c.M = 2;
    c.R_P = 8;
    c.R_D = 6;
    ModelEntry m;
    m.P = 4;
    m.network.layers.resize(3);
    m.network.layers[1].tau_h = 0.123456789012345;
    m.network.layers[2].log_Ne = -1.5;
    m.aud = {0.3, 1.7, 2.2, 0.5};
    m.thresholds = {{"baseline1", 0.75}};
    m.fbs_best_val = 1.25;
    c.models.push_back(m);
    const std::string path = "harness_ckpt.json";
    save_checkpoint(path, c);
    const auto back = load_checkpoint(path);
    std::remove(path.c_str());
    CHECK(back.N == 8);
    CHECK(back.R_D == 6);
    REQUIRE(back.find(4) != nullptr);
    CHECK(back.find(8) == nullptr);
    const auto& e = *back.find(4);
    CHECK(e.network.flatten() == m.network.flatten());
    CHECK(e.aud.omega_x == 1.7);
    CHECK(e.aud.T_th == 2.2);
    CHECK(e.thresholds.at("baseline1") == 0.75);
    CHECK(e.fbs_best_val == 1.25);
    CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("streams and samples are deterministic") {
    ExperimentConfig cfg;
    cfg.scenario.N = 10;
    cfg.scenario.R_P = 8;
    cfg.scenario.R_D = 4;
    cfg.scenario.P = 2;
    const CMatrix pilots = experiment_pilots(cfg.scenario, cfg.seed);
    CHECK(pilots == experiment_pilots(cfg.scenario, cfg.seed));
    Rng r1 = trial_stream(1, 2, 3), r2 = trial_stream(1, 2, 3);
    const auto a = make_sample(cfg.scenario, pilots, cfg.baseline, r1);
    const auto b = make_sample(cfg.scenario, pilots, cfg.baseline, r2);
    CHECK(a.inst.Y == b.inst.Y);
    CHECK(a.init.H == b.init.H);
    CHECK(a.init.XD.norm() == 0.0);
    CHECK(trial_stream(1, 2, 3)() != trial_stream(1, 2, 4)());
    CHECK(trial_stream(1, 2, 3)() != trial_stream(1, 4, 3)());
    CHECK(train_stream(1, 2, 3, false)() != train_stream(1, 2, 3, true)());
    CHECK(trial_stream(1, 2, 0)() != train_stream(1, 2, 0, false)());
}

TEST_CASE("experiment checks inputs before work") {
    ExperimentConfig cfg;
    cfg.scenario.N = 10;
    cfg.scenario.R_P = 8;
    cfg.scenario.R_D = 4;
    cfg.P_sweep = {2};
    cfg.trials = 2;
    cfg.methods = {Method::dujad};
    CHECK(cfg.needs_checkpoint());
    cfg.checkpoint = "does_not_exist.json";
    CHECK_THROWS(run_experiment(cfg));

    cfg.methods = {Method::baseline1, Method::baseline4_10it};
    cfg.checkpoint.clear();
    cfg.output.clear();
    cfg.calibration_trials = 5;
    cfg.workers = 1;
    const auto rows = run_experiment(cfg);
    CHECK(rows.size() == 4);
    for (const auto& r : rows) {
        CHECK(r.uder >= 0.0);
        CHECK(r.uder <= 1.0);
        CHECK(r.aser >= 0.0);
        CHECK(r.aser <= 1.0);
        CHECK(r.wall_time == 0.0);
    }
    CHECK(run_experiment(cfg) == rows);
}
