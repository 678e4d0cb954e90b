#include "dujad/harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "dujad/aud.hpp"
#include "dujad/parallel.hpp"

namespace dujad {

namespace {

constexpr std::uint64_t kEvalTag = 0x6576616c;
constexpr std::uint64_t kTrainTag = 0x747261696e;
constexpr std::uint64_t kCalibTag = 0x63616c6962;
constexpr std::uint64_t kPilotTag = 0x70696c6f74;

const char* const kCsvHeader = "method,P,trial,uder,aser,iterations,wall_time";

int resolve_workers(int requested) { return requested > 0 ? requested : worker_count(); }

ScenarioConfig scenario_for(const ExperimentConfig& cfg, int P) {
    ScenarioConfig s = cfg.scenario;
    s.P = P;
    s.validate();
    return s;
}

ObjectiveParams objective(const BaselineSettings& b, double B) {
    ObjectiveParams p;
    p.mu_h = b.mu_h;
    p.mu_x = b.mu_x;
    p.B = B;
    return p;
}

FbsResult run_baseline4(const TrainingSample& s, const BaselineSettings& b, double B, int max_iter) {
    FbsOptions o;
    o.max_iter = max_iter;
    o.tol = b.tol;
    return fbs_solve(s.inst, objective(b, B), s.init, o);
}

std::string format9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

template <class T>
T parse_number(const std::string& field, const std::string& what, int line) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw std::runtime_error("csv line " + std::to_string(line) + ": bad " + what + " '" + field + "'");
    }
    return value;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::baseline1: return "baseline1";
        case Method::baseline4_200it: return "baseline4_200it";
        case Method::baseline4_10it: return "baseline4_10it";
        case Method::dujad: return "dujad";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::baseline1, Method::baseline4_200it, Method::baseline4_10it, Method::dujad})
        if (method_name(m) == name) return m;
    throw ConfigError("methods", "unknown method '" + name + "'");
}

void ExperimentConfig::validate() const {
    scenario.validate();
    if (methods.empty()) throw ConfigError("methods", "at least one method required");
    if (trials < 1) throw ConfigError("trials", "must be at least 1");
    if (P_sweep.empty()) throw ConfigError("P_sweep", "at least one AP count required");
    for (int P : P_sweep)
        if (P < 1) throw ConfigError("P_sweep", "AP counts must be positive");
    if (K < 1) throw ConfigError("K", "must be at least 1");
    if (!(L_bar >= 0.0 && L_bar <= 1.0)) throw ConfigError("L_bar", "must lie in [0, 1]");
    if (calibration_trials < 1) throw ConfigError("calibration_trials", "must be at least 1");
    if (!(baseline.mu_h >= 0.0)) throw ConfigError("baseline.mu_h", "must be non-negative");
    if (!(baseline.mu_x >= 0.0)) throw ConfigError("baseline.mu_x", "must be non-negative");
    if (baseline.ce_iter < 1) throw ConfigError("baseline.ce_iter", "must be at least 1");
    if (baseline.long_iter < 1) throw ConfigError("baseline.long_iter", "must be at least 1");
    if (baseline.short_iter < 1) throw ConfigError("baseline.short_iter", "must be at least 1");
    if (!(baseline.tol >= 0.0)) throw ConfigError("baseline.tol", "must be non-negative");
    if (workers < 0) throw ConfigError("workers", "must be non-negative");
    train.validate();
}

bool ExperimentConfig::needs_checkpoint() const {
    for (Method m : methods)
        if (m == Method::dujad) return true;
    return false;
}

ExperimentConfig experiment_from_config(const KeyValueConfig& kv) {
    std::set<std::string> known(scenario_config_keys().begin(), scenario_config_keys().end());
    known.insert(train_config_keys().begin(), train_config_keys().end());
    for (const char* k : {"P_sweep", "methods", "trials", "checkpoint", "output", "record_wall_time",
                          "calibration_trials", "K", "L_bar", "workers", "baseline.mu_h", "baseline.mu_x",
                          "baseline.ce_iter", "baseline.long_iter", "baseline.short_iter", "baseline.tol"})
        known.insert(k);
    kv.reject_unknown(known);

    ExperimentConfig c;
    c.scenario = scenario_from_config(kv, c.scenario);
    c.seed = c.scenario.rng_seed;
    if (kv.has("methods")) {
        c.methods.clear();
        for (const auto& name : kv.get_list("methods", {})) c.methods.push_back(parse_method(name));
    }
    c.trials = static_cast<int>(kv.get_int("trials", c.trials));
    c.P_sweep = kv.get_int_list("P_sweep", kv.has("P") ? std::vector<int>{c.scenario.P} : c.P_sweep);
    c.checkpoint = kv.get_string("checkpoint", c.checkpoint);
    c.output = kv.get_string("output", c.output);
    c.record_wall_time = kv.get_bool("record_wall_time", c.record_wall_time);
    c.calibration_trials = static_cast<int>(kv.get_int("calibration_trials", c.calibration_trials));
    c.K = static_cast<int>(kv.get_int("K", c.K));
    c.L_bar = kv.get_double("L_bar", c.L_bar);
    c.workers = static_cast<int>(kv.get_int("workers", c.workers));
    c.baseline.mu_h = kv.get_double("baseline.mu_h", c.baseline.mu_h);
    c.baseline.mu_x = kv.get_double("baseline.mu_x", c.baseline.mu_x);
    c.baseline.ce_iter = static_cast<int>(kv.get_int("baseline.ce_iter", c.baseline.ce_iter));
    c.baseline.long_iter = static_cast<int>(kv.get_int("baseline.long_iter", c.baseline.long_iter));
    c.baseline.short_iter = static_cast<int>(kv.get_int("baseline.short_iter", c.baseline.short_iter));
    c.baseline.tol = kv.get_double("baseline.tol", c.baseline.tol);
    c.train = train_config_from(kv, c.train);
    c.validate();
    return c;
}

ExperimentConfig load_experiment(const std::string& path) { return experiment_from_config(KeyValueConfig::load(path)); }

Rng trial_stream(std::uint64_t seed, int P, int trial) {
    return make_stream(seed, {kEvalTag, static_cast<std::uint64_t>(P), static_cast<std::uint64_t>(trial)});
}

Rng train_stream(std::uint64_t seed, int P, int index, bool validation) {
    return make_stream(seed, {kTrainTag, static_cast<std::uint64_t>(P), validation ? 1u : 0u,
                              static_cast<std::uint64_t>(index)});
}

CMatrix experiment_pilots(const ScenarioConfig& scenario, std::uint64_t seed) {
    Rng rng = make_stream(seed, {kPilotTag});
    return generate_pilots(scenario, rng);
}

SolverState baseline1_init(const Instance& inst, const BaselineSettings& b, double B, int* iterations) {
    FbsOptions o;
    o.max_iter = b.ce_iter;
    o.tol = b.tol;
    auto ce = pilot_only_estimate(inst, objective(b, B), o);
    if (iterations) *iterations = ce.iterations;
    return SolverState::from_channel(std::move(ce.H), inst.R_D());
}

void attach_baseline1_data(TrainingSample& s, double threshold, double B) {
    const auto xi = energy_activity(s.init.H, threshold);
    s.init.XD = zf_detect(s.init.H, xi, s.inst.Y_D(), B).XD;
}

TrainingSample make_sample(const ScenarioConfig& scenario, const CMatrix& pilots, const BaselineSettings& b,
                           Rng& rng) {
    TrainingSample s;
    const Geometry geo = generate_geometry(scenario, rng);
    s.inst = generate_instance(scenario, geo, pilots, rng);
    s.init = baseline1_init(s.inst, b, scenario.B, &s.init_iterations);
    return s;
}

std::map<std::string, double> calibrate_baselines(std::vector<TrainingSample>& samples, const BaselineSettings& b,
                                                  double B, int workers) {
    workers = resolve_workers(workers);
    const std::size_t n = samples.size();
    std::vector<std::uint8_t> truth;
    for (const auto& s : samples) truth.insert(truth.end(), s.inst.xi.begin(), s.inst.xi.end());
    auto fit = [&](const std::vector<RVector>& e) {
        std::vector<double> flat;
        for (const auto& v : e) flat.insert(flat.end(), v.data(), v.data() + v.size());
        return calibrate_energy_threshold(flat, truth);
    };

    std::vector<RVector> e1(n), e200(n), e10(n);
    for (std::size_t i = 0; i < n; ++i) e1[i] = channel_energies(samples[i].init.H);
    const double t1 = fit(e1);
    parallel_for(
        n,
        [&](std::size_t i) {
            attach_baseline1_data(samples[i], t1, B);
            e200[i] = channel_energies(run_baseline4(samples[i], b, B, b.long_iter).state.H);
            e10[i] = channel_energies(run_baseline4(samples[i], b, B, b.short_iter).state.H);
        },
        workers);
    return {{method_name(Method::baseline1), t1},
            {method_name(Method::baseline4_200it), fit(e200)},
            {method_name(Method::baseline4_10it), fit(e10)}};
}

ResultRow run_method(Method m, const TrainingSample& sample, const ExperimentConfig& cfg, const ModelEntry& model) {
    const auto& inst = sample.inst;
    const double B = cfg.scenario.B;
    ResultRow row;
    row.method = method_name(m);
    row.P = inst.P;
    const auto t0 = std::chrono::steady_clock::now();
    Metrics metrics;
    switch (m) {
        case Method::baseline1: {
            const auto xi = energy_activity(sample.init.H, model.thresholds.at(row.method));
            const auto zf = zf_detect(sample.init.H, xi, inst.Y_D(), B);
            // Rows left at zero for missed UEs count as symbol errors.
            metrics = compute_metrics(inst, xi, zf.XD);
            row.iterations = sample.init_iterations;
            break;
        }
        case Method::baseline4_200it:
        case Method::baseline4_10it: {
            const int iters = m == Method::baseline4_200it ? cfg.baseline.long_iter : cfg.baseline.short_iter;
            const auto res = run_baseline4(sample, cfg.baseline, B, iters);
            const auto xi = energy_activity(res.state.H, model.thresholds.at(row.method));
            metrics = compute_metrics(inst, xi, nearest_symbols(res.state.XD, B));
            row.iterations = res.iterations;
            break;
        }
        case Method::dujad: {
            const auto out = run_network(inst, model.network, sample.init, B);
            AudParams ap = model.aud;
            ap.L_bar = cfg.L_bar;
            const auto rep = detect(inst, out.state, ap, B);
            metrics = {rep.uder, rep.aser, rep.aser_undefined};
            row.iterations = model.network.K();
            break;
        }
    }
    row.uder = metrics.uder;
    row.aser = metrics.aser;
    if (cfg.record_wall_time) {
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return row;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::optional<Checkpoint> ckpt;
    if (cfg.needs_checkpoint()) {
        if (cfg.checkpoint.empty()) throw ConfigError("checkpoint", "required when dujad is evaluated");
        ckpt = load_checkpoint(cfg.checkpoint);
    }
    if (!cfg.output.empty()) {
        std::ofstream probe(cfg.output, std::ios::app);
        if (!probe) throw std::runtime_error("output '" + cfg.output + "' is not writable");
    }
    return run_experiment(cfg, ckpt ? &*ckpt : nullptr);
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const Checkpoint* ckpt) {
    cfg.validate();
    const int workers = resolve_workers(cfg.workers);
    if (cfg.needs_checkpoint()) {
        if (!ckpt) throw ConfigError("checkpoint", "required when dujad is evaluated");
        if (ckpt->N != cfg.scenario.N || ckpt->M != cfg.scenario.M || ckpt->R_P != cfg.scenario.R_P ||
            ckpt->R_D != cfg.scenario.R_D) {
            throw ConfigError("checkpoint", "trained for different dimensions than the scenario");
        }
        for (int P : cfg.P_sweep) {
            const auto* m = ckpt->find(P);
            if (!m) throw ConfigError("checkpoint", "no model for P = " + std::to_string(P));
            if (m->network.K() != cfg.K) throw ConfigError("K", "checkpoint has a different number of layers");
        }
    }

    const CMatrix pilots = experiment_pilots(cfg.scenario, cfg.seed);
    std::vector<ResultRow> rows;
    for (int P : cfg.P_sweep) {
        const ScenarioConfig scenario = scenario_for(cfg, P);
        ModelEntry model;
        model.P = P;
        if (ckpt && ckpt->find(P)) model = *ckpt->find(P);
        bool need_thresholds = !model.thresholds.count(method_name(Method::baseline1));
        for (Method m : cfg.methods)
            if (m != Method::dujad && !model.thresholds.count(method_name(m))) need_thresholds = true;
        if (need_thresholds) {
            std::vector<TrainingSample> calib(static_cast<std::size_t>(cfg.calibration_trials));
            parallel_for(
                calib.size(),
                [&](std::size_t i) {
                    Rng rng = make_stream(cfg.seed, {kCalibTag, static_cast<std::uint64_t>(P), i});
                    calib[i] = make_sample(scenario, pilots, cfg.baseline, rng);
                },
                workers);
            // Thresholds from the checkpoint win; calibration only fills gaps.
            for (const auto& [k, v] : calibrate_baselines(calib, cfg.baseline, scenario.B, workers))
                model.thresholds.try_emplace(k, v);
        }
        const double t1 = model.thresholds.at(method_name(Method::baseline1));

        std::vector<std::vector<ResultRow>> per_trial(static_cast<std::size_t>(cfg.trials));
        parallel_for(
            per_trial.size(),
            [&](std::size_t t) {
                Rng rng = trial_stream(cfg.seed, P, static_cast<int>(t));
                TrainingSample sample = make_sample(scenario, pilots, cfg.baseline, rng);
                attach_baseline1_data(sample, t1, scenario.B);
                for (Method m : cfg.methods) {
                    auto row = run_method(m, sample, cfg, model);
                    row.trial = static_cast<int>(t);
                    per_trial[t].push_back(std::move(row));
                }
            },
            workers);
        for (auto& trial_rows : per_trial)
            for (auto& r : trial_rows) rows.push_back(std::move(r));
    }
    return rows;
}

TrainingSet make_training_set(const ExperimentConfig& cfg, int P, const CMatrix& pilots,
                              std::map<std::string, double>* thresholds) {
    const ScenarioConfig scenario = scenario_for(cfg, P);
    TrainingSet data;
    data.B = scenario.B;
    data.train.resize(static_cast<std::size_t>(cfg.train.n_train));
    data.val.resize(static_cast<std::size_t>(cfg.train.n_val));
    const int workers = resolve_workers(cfg.workers);
    for (bool validation : {false, true}) {
        auto& set = validation ? data.val : data.train;
        parallel_for(
            set.size(),
            [&](std::size_t i) {
                Rng rng = train_stream(cfg.seed, P, static_cast<int>(i), validation);
                set[i] = make_sample(scenario, pilots, cfg.baseline, rng);
            },
            workers);
    }
    const auto fitted = calibrate_baselines(data.train, cfg.baseline, data.B, workers);
    const double t1 = fitted.at(method_name(Method::baseline1));
    for (auto& s : data.val) attach_baseline1_data(s, t1, data.B);
    if (thresholds) *thresholds = fitted;
    return data;
}

TrainReport train_all(const ExperimentConfig& cfg, bool verbose) {
    cfg.validate();
    TrainReport report;
    report.checkpoint.N = cfg.scenario.N;
    report.checkpoint.M = cfg.scenario.M;
    report.checkpoint.R_P = cfg.scenario.R_P;
    report.checkpoint.R_D = cfg.scenario.R_D;
    const CMatrix pilots = experiment_pilots(cfg.scenario, cfg.seed);
    const int workers = resolve_workers(cfg.workers);
    TrainConfig tc = cfg.train;
    tc.workers = workers;

    for (int P : cfg.P_sweep) {
        ModelEntry entry;
        entry.P = P;
        const TrainingSet data = make_training_set(cfg, P, pilots, &entry.thresholds);

        const auto init = initial_unfolded_params(data.train, cfg.K, cfg.baseline.mu_h, cfg.scenario.P_a, cfg.scenario.B);
        auto fbs = train_fbs_layers(data, init, tc);
        entry.network = fbs.params;
        entry.fbs_initial_val = fbs.trace.initial_val;
        entry.fbs_best_val = fbs.trace.best();

        const auto train_features = aud_features(data.train, entry.network, data.B, workers);
        const auto val_features = aud_features(data.val, entry.network, data.B, workers);
        auto aud = train_aud_head(train_features, val_features, initial_aud_params(cfg.scenario.R_D, data.B), tc);
        entry.aud = aud.params;
        entry.aud.L_bar = cfg.L_bar;
        entry.aud_initial_val = aud.trace.initial_val;
        entry.aud_best_val = aud.val_loss;

        if (verbose) {
            std::cerr << "P=" << P << ": fbs val " << entry.fbs_initial_val << " -> " << entry.fbs_best_val
                      << ", aud val " << entry.aud_initial_val << " -> " << entry.aud_best_val << '\n';
        }
        report.checkpoint.models.push_back(std::move(entry));
        report.fbs_traces.push_back(std::move(fbs.trace));
        report.aud_traces.push_back(std::move(aud.trace));
    }
    return report;
}

std::vector<SummaryRow> aggregate(const std::vector<ResultRow>& rows) {
    std::vector<std::pair<std::string, int>> order;
    std::map<std::pair<std::string, int>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.method, r.P);
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.first.push_back(r.uder);
        it->second.second.push_back(r.aser);
    }
    std::vector<SummaryRow> out;
    for (const auto& key : order) {
        const auto& [u, a] = groups.at(key);
        SummaryRow s;
        s.method = key.first;
        s.P = key.second;
        s.count = static_cast<int>(u.size());
        s.uder_mean = mean_of(u);
        s.uder_stderr = stderr_of(u, s.uder_mean);
        s.aser_mean = mean_of(a);
        s.aser_stderr = stderr_of(a, s.aser_mean);
        out.push_back(s);
    }
    return out;
}

PairedDifference paired_aser_difference(const std::vector<ResultRow>& rows, const std::string& a,
                                        const std::string& b, int P) {
    std::map<int, double> ra, rb;
    for (const auto& r : rows) {
        if (r.P != P) continue;
        if (r.method == a) ra[r.trial] = r.aser;
        if (r.method == b) rb[r.trial] = r.aser;
    }
    std::vector<double> diff;
    for (const auto& [trial, v] : ra) {
        auto it = rb.find(trial);
        if (it != rb.end()) diff.push_back(v - it->second);
    }
    PairedDifference d;
    d.count = static_cast<int>(diff.size());
    d.mean = mean_of(diff);
    d.std_error = stderr_of(diff, d.mean);
    return d;
}

void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    os << kCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.method << ',' << r.P << ',' << r.trial << ',' << format9(r.uder) << ',' << format9(r.aser) << ','
           << r.iterations << ',' << format9(r.wall_time) << '\n';
    }
}

void export_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_csv(os, rows);
    os.flush();
    if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

std::vector<ResultRow> parse_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader) throw std::runtime_error("csv: missing or unexpected header");
    std::vector<ResultRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 7) throw std::runtime_error("csv line " + std::to_string(lineno) + ": expected 7 fields");
        ResultRow r;
        r.method = f[0];
        r.P = parse_number<int>(f[1], "P", lineno);
        r.trial = parse_number<int>(f[2], "trial", lineno);
        r.uder = parse_number<double>(f[3], "uder", lineno);
        r.aser = parse_number<double>(f[4], "aser", lineno);
        r.iterations = parse_number<int>(f[5], "iterations", lineno);
        r.wall_time = parse_number<double>(f[6], "wall_time", lineno);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ResultRow> import_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    try {
        return parse_csv(is);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void write_summary(std::ostream& os, const std::vector<SummaryRow>& summary) {
    os << "method,P,count,uder_mean,uder_stderr,aser_mean,aser_stderr\n";
    for (const auto& s : summary) {
        os << s.method << ',' << s.P << ',' << s.count << ',' << format9(s.uder_mean) << ','
           << format9(s.uder_stderr) << ',' << format9(s.aser_mean) << ',' << format9(s.aser_stderr) << '\n';
    }
}

}  // namespace dujad
