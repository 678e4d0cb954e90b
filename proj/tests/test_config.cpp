#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "acceptance.hpp"
#include "dujad/config.hpp"
#include "dujad/harness.hpp"

using namespace dujad;

namespace {

std::string error_of(const std::string& text) {
    try {
        experiment_from_config(KeyValueConfig::parse(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("key-value parsing") {
    const auto kv = KeyValueConfig::parse("# comment\nN = 12\nP_sweep = 4, 8,12\ntrain.epochs=3\nflag = true\n");
    CHECK(kv.get_int("N", 0) == 12);
    CHECK(kv.get_int_list("P_sweep", {}) == std::vector<int>{4, 8, 12});
    CHECK(kv.get_int("train.epochs", 0) == 3);
    CHECK(kv.get_bool("flag", false));
    CHECK(kv.get_double("missing", 2.5) == 2.5);
}

TEST_CASE("malformed values name their field") {
    const auto kv = KeyValueConfig::parse("N = twelve\n");
    CHECK_THROWS_WITH_AS(kv.get_int("N", 0), doctest::Contains("'N'"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
}

TEST_CASE("experiment errors name the offending field") {
    CHECK(error_of("trials = 0\n").find("'trials'") != std::string::npos);
    CHECK(error_of("P_a = 1.5\n").find("'P_a'") != std::string::npos);
    CHECK(error_of("methods = baseline9\n").find("'methods'") != std::string::npos);
    CHECK(error_of("train.step_rule = cosine\n").find("'train.step_rule'") != std::string::npos);
    CHECK(error_of("train.estimator = adjoint\n").find("'train.estimator'") != std::string::npos);
    CHECK(error_of("bogus_key = 1\n").find("bogus_key") != std::string::npos);
    CHECK(error_of("") == "");
}

TEST_CASE("P alone sets a one-point sweep") {
    const auto cfg = experiment_from_config(KeyValueConfig::parse("P = 7\nmethods = baseline1\n"));
    CHECK(cfg.P_sweep == std::vector<int>{7});
    CHECK(cfg.methods == std::vector<Method>{Method::baseline1});
    CHECK_FALSE(cfg.needs_checkpoint());
}

TEST_CASE("shipped profiles match the acceptance profiles") {
    const std::string root = DUJAD_SOURCE_DIR;
    const auto desk = load_experiment(root + "/configs/desk.cfg");
    const auto ref = acceptance::desk_config();
    CHECK(desk.scenario.N == ref.scenario.N);
    CHECK(desk.scenario.M == ref.scenario.M);
    CHECK(desk.scenario.R_P == ref.scenario.R_P);
    CHECK(desk.scenario.R_D == ref.scenario.R_D);
    CHECK(desk.scenario.P_a == ref.scenario.P_a);
    CHECK(desk.scenario.area_side == ref.scenario.area_side);
    CHECK(desk.scenario.power_control_range == ref.scenario.power_control_range);
    CHECK(desk.scenario.power_target_db == ref.scenario.power_target_db);
    CHECK(desk.scenario.shadow_std == ref.scenario.shadow_std);
    CHECK(desk.seed == ref.seed);
    CHECK(desk.P_sweep == ref.P_sweep);
    CHECK(desk.trials == ref.trials);
    CHECK(desk.K == ref.K);
    CHECK(desk.baseline.mu_h == ref.baseline.mu_h);
    CHECK(desk.baseline.mu_x == ref.baseline.mu_x);
    CHECK(desk.train.n_train == ref.train.n_train);
    CHECK(desk.train.n_val == ref.train.n_val);
    CHECK(desk.train.batch_size == ref.train.batch_size);
    CHECK(desk.train.epochs == ref.train.epochs);
    CHECK(desk.train.base_lr == ref.train.base_lr);

    const auto tiny = load_experiment(root + "/configs/tiny.cfg");
    const auto tref = acceptance::tiny_config();
    CHECK(tiny.scenario.N == tref.scenario.N);
    CHECK(tiny.scenario.noise_scale == tref.scenario.noise_scale);
    CHECK(tiny.scenario.shadow_std == tref.scenario.shadow_std);
    CHECK(tiny.scenario.power_control_range == tref.scenario.power_control_range);
    CHECK(tiny.seed == tref.seed);
    CHECK(tiny.baseline.mu_h == tref.baseline.mu_h);
    CHECK(tiny.baseline.mu_x == tref.baseline.mu_x);
    CHECK(tiny.baseline.tol == tref.baseline.tol);
}

TEST_CASE("full-scale profile loads") {
    const auto full = load_experiment(std::string(DUJAD_SOURCE_DIR) + "/configs/full.cfg");
    CHECK(full.scenario.N == 400);
    CHECK(full.scenario.M == 4);
    CHECK(full.P_sweep == std::vector<int>{20, 40, 60, 80, 100});
    CHECK(full.trials == 5000);
    CHECK(full.K == 10);
}
