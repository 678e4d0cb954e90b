#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <cstdio>
#include <filesystem>

#include "dujad/scenario.hpp"

using namespace dujad;

namespace {

ScenarioConfig small_config() {
    ScenarioConfig c;
    c.N = 30;
    c.P = 5;
    c.M = 2;
    c.R_P = 10;
    c.R_D = 12;
    c.pilot_iterations = 200;
    return c;
}

}  // namespace

TEST_CASE("large-scale gain") {
    ScenarioConfig c;
    // 20 dBm - (30.5 + 36.7 * 2) dB + 91.9649 dBm of noise, evaluated by hand.
    CHECK(large_scale_gain(100.0, 0.0, c) == doctest::Approx(6.404551522525664).epsilon(1e-12));
    CHECK(large_scale_gain(10.0, 0.0, c) / large_scale_gain(100.0, 0.0, c) ==
          doctest::Approx(std::pow(10.0, 3.67)).epsilon(1e-12));
    CHECK(large_scale_gain(50.0, 3.0, c) == large_scale_gain(50.0, 3.0, c));
    CHECK_THROWS_AS(large_scale_gain(0.0, 0.0, c), std::domain_error);
}

TEST_CASE("geometry") {
    ScenarioConfig c;
    c.N = 40;
    c.P = 20;
    Rng a = make_stream(3, {1}), b = make_stream(3, {1});
    const Geometry g = generate_geometry(c, a);
    const Geometry h = generate_geometry(c, b);
    CHECK(g.beta == h.beta);
    CHECK(g.beta.rows() == 40);
    CHECK(g.beta.cols() == 20);
    CHECK((g.beta.array() > 0.0).all());
    for (int n = 0; n < c.N; ++n) {
        for (int p = 0; p < c.P; ++p) CHECK((g.ue_positions.col(n) - g.ap_positions.col(p)).norm() >= 13.35 - 1e-12);
        CHECK(g.ue_positions(0, n) >= 0.0);
        CHECK(g.ue_positions(0, n) <= c.area_side);
        CHECK(g.ue_positions(1, n) <= c.area_side);
        CHECK(g.power_offset_db(n) <= 0.0);
        CHECK(g.power_offset_db(n) >= -c.power_control_range);
    }
}

TEST_CASE("power control") {
    ScenarioConfig c;
    c.N = 60;
    c.P = 6;
    c.power_control_range = 80.0;
    auto best_db = [&](const Geometry& g, int n) { return 10.0 * std::log10(g.beta.row(n).maxCoeff()); };

    Rng a = make_stream(4, {1});
    const Geometry eq = generate_geometry(c, a);
    double lo = 1e300;
    for (int n = 0; n < c.N; ++n) lo = std::min(lo, best_db(eq, n));
    // Unset target: everyone meets the weakest UE, who stays at full power.
    for (int n = 0; n < c.N; ++n) CHECK(best_db(eq, n) == doctest::Approx(lo).epsilon(1e-9));

    c.power_target_db = lo + 5.0;
    Rng b = make_stream(4, {1});
    const Geometry fixed = generate_geometry(c, b);
    CHECK(fixed.ue_positions == eq.ue_positions);
    int capped = 0;
    for (int n = 0; n < c.N; ++n) {
        const double raw = best_db(fixed, n) - fixed.power_offset_db(n);
        if (raw > *c.power_target_db) {
            CHECK(best_db(fixed, n) == doctest::Approx(*c.power_target_db).epsilon(1e-9));
        } else {
            ++capped;
            CHECK(fixed.power_offset_db(n) == 0.0);
        }
    }
    CHECK(capped >= 1);

    c.power_control_range = 3.0;
    Rng d = make_stream(4, {1});
    const Geometry narrow = generate_geometry(c, d);
    for (int n = 0; n < c.N; ++n) CHECK(narrow.power_offset_db(n) >= -3.0);

    c.power_target_db = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    const auto kv = KeyValueConfig::parse("power_target_db = 12.5");
    CHECK(scenario_from_config(kv).power_target_db == 12.5);
    CHECK(!scenario_from_config(KeyValueConfig::parse("N = 3")).power_target_db);
}

TEST_CASE("instance invariants") {
    const ScenarioConfig c = small_config();
    Rng rng = make_stream(9, {2});
    const Geometry geo = generate_geometry(c, rng);
    const CMatrix pilots = generate_pilots(c, rng);
    const double B = c.B;
    for (int t = 0; t < 5; ++t) {
        const Instance inst = generate_instance(c, geo, pilots, rng);
        CHECK((inst.Y - (inst.H * inst.X() + inst.noise)).norm() < 1e-12);
        for (int n = 0; n < c.N; ++n) {
            const bool on = inst.xi[static_cast<std::size_t>(n)] != 0;
            CHECK((inst.H.col(n).norm() > 0.0) == on);
            CHECK((inst.X_D.row(n).norm() > 0.0) == on);
            if (on) {
                for (int r = 0; r < c.R_D; ++r) {
                    CHECK(std::abs(std::abs(inst.X_D(n, r).real()) - B) < 1e-15);
                    CHECK(std::abs(std::abs(inst.X_D(n, r).imag()) - B) < 1e-15);
                }
            }
        }
    }
}

TEST_CASE("activity extremes and the noise-free limit") {
    ScenarioConfig c = small_config();
    Rng rng = make_stream(4, {0});
    const Geometry geo = generate_geometry(c, rng);
    const CMatrix pilots = generate_pilots(c, rng);
    c.P_a = 0.0;
    const Instance off = generate_instance(c, geo, pilots, rng);
    CHECK(off.X_D.norm() == 0.0);
    CHECK(off.H.norm() == 0.0);
    CHECK((off.Y - off.noise).norm() == 0.0);
    c.P_a = 1.0;
    c.noise_scale = 0.0;
    const Instance on = generate_instance(c, geo, pilots, rng);
    CHECK(on.num_active() == c.N);
    CHECK((on.Y - on.H * on.X()).norm() == 0.0);
}

TEST_CASE("pilots") {
    ScenarioConfig c = small_config();
    Rng rng = make_stream(5, {0});
    const CMatrix X = generate_pilots(c, rng);
    CHECK(X.rows() == c.N);
    CHECK(X.cols() == c.R_P);
    for (int n = 0; n < c.N; ++n) CHECK(std::abs(X.row(n).norm() - c.pilot_amplitude()) < 1e-9);
    CHECK(max_cross_correlation(X) >= welch_bound(c.N, c.R_P) - 1e-12);
    c.R_P = c.N + 1;
    CHECK_THROWS_AS(generate_pilots(c, rng), ConfigError);
}

TEST_CASE("welch bound") {
    CHECK(welch_bound(400, 50) == doctest::Approx(std::sqrt(350.0 / (50.0 * 399.0))));
    CHECK(welch_bound(10, 10) == 0.0);
}

TEST_CASE("dataset round trip") {
    const ScenarioConfig c = small_config();
    Rng rng = make_stream(6, {0});
    const Geometry geo = generate_geometry(c, rng);
    const CMatrix pilots = generate_pilots(c, rng);
    std::vector<Instance> set = {generate_instance(c, geo, pilots, rng), generate_instance(c, geo, pilots, rng)};
    const auto path = (std::filesystem::temp_directory_path() / "dujad_test_set.bin").string();
    write_instances(path, set);
    const auto back = read_instances(path);
    std::remove(path.c_str());
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].Y == set[i].Y);
        CHECK(back[i].H == set[i].H);
        CHECK(back[i].X_P == set[i].X_P);
        CHECK(back[i].X_D == set[i].X_D);
        CHECK(back[i].noise == set[i].noise);
        CHECK(back[i].xi == set[i].xi);
        CHECK(back[i].M == c.M);
        CHECK(back[i].P == c.P);
    }
    CHECK_THROWS(read_instances(path));
}

TEST_CASE("streams are independent of request order") {
    Rng a = make_stream(1, {7, 8});
    Rng b = make_stream(1, {7, 9});
    Rng c = make_stream(1, {7, 8});
    CHECK(a() == c());
    CHECK(a() != b());
}
