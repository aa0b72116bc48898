// srsdeq command-line pipeline: gen-data, train, certify, report.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "srsdeq/srsdeq.hpp"

namespace fs = std::filesystem;
using namespace srsdeq;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct SolverFlags {
    std::string method = "anderson";
    double tol = 1e-3;
    std::size_t max_iters = 30;
    std::size_t memory = 5;

    void add(CLI::App* cmd) {
        cmd->add_option("--solver", method, "Fixed-point solver")
            ->check(CLI::IsMember({"naive", "anderson", "broyden"}))
            ->capture_default_str();
        cmd->add_option("--tol", tol, "Relative residual tolerance")->capture_default_str();
        cmd->add_option("--max-iters", max_iters, "Iteration budget")->capture_default_str();
        cmd->add_option("--anderson-memory", memory, "Anderson history length")
            ->capture_default_str();
    }

    SolverConfig config() const {
        SolverConfig s;
        s.method = parse_solver_method(method);
        s.tol = tol;
        s.max_iters = max_iters;
        s.anderson_memory = memory;
        return s;
    }
};

json solver_json(const SolverConfig& s) {
    return {{"method", to_string(s.method)},    {"tol", s.tol},
            {"max_iters", s.max_iters},         {"anderson_memory", s.anderson_memory},
            {"anderson_damping", s.anderson_damping}, {"anderson_ridge", s.anderson_ridge}};
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string kind = "two_moons";
    DataSpec spec;
    std::string out;
};

void cmd_gen_data(const GenDataArgs& a) {
    DataSpec spec = a.spec;
    spec.kind = parse_data_kind(a.kind);
    save_dataset(a.out, gen_data(spec));
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string loss_out;
    std::size_t hidden = 16;
    double gamma = 0.9;
    std::string init = "gaussian";
    TrainConfig train;
    SolverFlags solver;
    CLI::App* cmd = nullptr;
};

bool given(const CLI::App* cmd, const std::string& flag) { return cmd->count(flag) > 0; }

// Config file first, then any flag given on the command line.
void apply_train_config(TrainArgs& a) {
    if (a.config.empty()) return;
    const json j = detail::parse_json(detail::read_file(a.config), "train config '" + a.config + "'");
    if (!j.is_object()) throw FormatError("train config '" + a.config + "': expected an object");
    static const std::vector<std::string> known = {
        "hidden", "gamma", "init",   "sigma",  "epochs", "lr",
        "batch_size", "seed", "solver", "adjoint"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw FormatError("train config '" + a.config + "': unknown key '" + key + "'");
    try {
        auto take = [&](const char* key, const char* flag, auto& dst) {
            if (j.contains(key) && !given(a.cmd, flag)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
        };
        take("hidden", "--hidden", a.hidden);
        take("gamma", "--gamma", a.gamma);
        take("init", "--init", a.init);
        take("sigma", "--sigma", a.train.sigma);
        take("epochs", "--epochs", a.train.epochs);
        take("lr", "--lr", a.train.lr);
        take("batch_size", "--batch-size", a.train.batch_size);
        take("seed", "--seed", a.train.seed);
        if (j.contains("solver")) {
            const json& s = j.at("solver");
            auto take_s = [&](const char* key, const char* flag, auto& dst) {
                if (s.contains(key) && !given(a.cmd, flag))
                    dst = s.at(key).get<std::decay_t<decltype(dst)>>();
            };
            take_s("method", "--solver", a.solver.method);
            take_s("tol", "--tol", a.solver.tol);
            take_s("max_iters", "--max-iters", a.solver.max_iters);
            take_s("anderson_memory", "--anderson-memory", a.solver.memory);
        }
        if (j.contains("adjoint")) {
            const json& adj = j.at("adjoint");
            if (adj.contains("iters")) a.train.adjoint.iters = adj.at("iters").get<std::size_t>();
            if (adj.contains("tol")) a.train.adjoint.tol = adj.at("tol").get<double>();
        }
    } catch (const json::exception& e) {
        throw FormatError("train config '" + a.config + "': " + e.what());
    }
}

void cmd_train(TrainArgs a) {
    apply_train_config(a);
    a.train.solver = a.solver.config();
    const WeightInit init = a.init == "orthogonal" ? WeightInit::orthogonal
                            : a.init == "gaussian" ? WeightInit::gaussian
                                                   : throw ArgumentError("unknown init '" + a.init + "'");
    const Dataset data = load_dataset(a.data);
    if (data.size() == 0) throw ArgumentError("dataset '" + a.data + "' is empty");
    const DeqModel init_model =
        make_random_model(a.hidden, data.dim(), data.num_classes, a.gamma, a.train.seed, init);
    const TrainResult res = train(init_model, data, a.train);
    save_model(a.out, res.model);
    const std::string loss_path = a.loss_out.empty() ? a.out + ".loss.csv" : a.loss_out;
    detail::write_file(loss_path, loss_trace_csv(res.trace));
    std::fprintf(stderr, "trained %zu epochs, final epoch loss %.6g, train accuracy %.4f\n",
                 res.epoch_loss.size(), res.epoch_loss.back(),
                 accuracy(res.model, data, a.train.solver));
    if (res.truncated_adjoints > 0)
        std::fprintf(stderr, "warning: %zu adjoint solves were truncated\n", res.truncated_adjoints);
}

// ---------------------------------------------------------------- certify

struct CertifyArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string mode = "standard";
    SmoothingConfig base;
    double alpha = 0.001;
    SolverFlags solver;
    std::size_t srs_steps = 3;
    std::size_t warmup_steps = 30;
    std::size_t restart_interval = 10;
    std::size_t holdout_k = 1000;
    bool start_from_clean = false;
    bool diagnostic = false;
    std::size_t jobs = 1;
};

ReportRow certify_point(const DeqModel& model, const Vector& x, int label, std::size_t index,
                        CertifyMode mode, const SrsConfig& cfg, bool diagnostic) {
    ReportRow row;
    row.point_index = index;
    row.true_label = label;
    row.mode = mode;
    try {
        if (mode == CertifyMode::standard) {
            const CertifyOutcome o = certify_standard(model, x, cfg.base, cfg.reference_solver, index);
            row.predicted = o.predicted;
            row.radius = o.radius;
            row.counts = o.counts;
            row.p_a_lower = o.p_a_lower;
            row.iters_total = o.total_solver_iters;
            row.wall_time = o.wall_time;
        } else {
            SrsConfig c = cfg;
            c.record_predictions = diagnostic;
            const SrsOutcome o = srs_certify(model, x, c, index);
            row.predicted = o.predicted;
            row.radius = o.radius;
            row.counts = o.counts;
            row.p_a_lower = o.p_a_lower;
            row.iters_total = o.total_solver_iters;
            row.wall_time = o.wall_time;
            row.pm_upper = o.pm_upper;
            row.n_a = o.n_a;
            row.n_a_effective = o.n_a_effective;
            row.iters_saved = o.iters_saved;
            if (diagnostic) {
                // Re-predict every sample with the reference solver.
                const DeqClassifier ref{&model, cfg.reference_solver};
                const SamplePredictions rp = mc_predictions(ref, x, cfg.base, index);
                row.pm_gap = pm_gap(o.pm_upper, o.top_class, rp.labels, o.sample_predictions);
            }
        }
    } catch (const CertificationFailed& e) {
        row = ReportRow{};
        row.point_index = index;
        row.true_label = label;
        row.mode = mode;
        row.status = std::string("failed: ") + e.what();
    }
    return row;
}

void cmd_certify(const CertifyArgs& a) {
    const CertifyMode mode = parse_certify_mode(a.mode);
    SrsConfig cfg;
    cfg.base = a.base;
    cfg.base.confidence = ConfidenceSpec(a.alpha);
    cfg.reference_solver = a.solver.config();
    cfg.srs_steps = a.srs_steps;
    cfg.warmup_steps = a.warmup_steps;
    cfg.restart_interval = a.restart_interval;
    cfg.holdout_k = a.holdout_k;
    cfg.start_from_clean = a.start_from_clean;
    if (mode == CertifyMode::srs) {
        cfg.validate();
    } else {
        cfg.base.validate();
        cfg.reference_solver.validate();
    }
    if (a.diagnostic && mode != CertifyMode::srs)
        throw ArgumentError("--diagnostic only applies to --mode srs");
    if (a.jobs < 1) throw ArgumentError("--jobs must be >= 1");

    const DeqModel model = load_model(a.model);
    const Dataset data = load_dataset(a.data);
    if (data.size() > 0 && data.dim() != model.input_dim)
        throw DimensionError("dataset dim " + std::to_string(data.dim()) +
                             " does not match model input dim " + std::to_string(model.input_dim));
    if (data.num_classes != model.num_classes)
        throw DimensionError("dataset has " + std::to_string(data.num_classes) +
                             " classes but the model has " + std::to_string(model.num_classes));
    if (model.sigma_train != cfg.base.sigma)
        std::fprintf(stderr, "warning: certifying at sigma=%g but the model was trained at sigma=%g\n",
                     cfg.base.sigma, model.sigma_train);

    Report rep;
    rep.header = {{"command", "certify"},
                  {"mode", to_string(mode)},
                  {"model", a.model},
                  {"data", a.data},
                  {"num_points", data.size()},
                  {"sigma", cfg.base.sigma},
                  {"sigma_train", model.sigma_train},
                  {"n_samples", cfg.base.n_samples},
                  {"batch_size", cfg.base.batch_size},
                  {"alpha", cfg.base.confidence.alpha()},
                  {"alpha_tilde", cfg.base.confidence.alpha_tilde()},
                  {"seed", cfg.base.seed},
                  {"solver", solver_json(cfg.reference_solver)},
                  {"jobs", a.jobs}};
    if (mode == CertifyMode::srs) {
        rep.header["srs_steps"] = cfg.srs_steps;
        rep.header["warmup_steps"] = cfg.warmup_steps;
        rep.header["restart_interval"] = cfg.restart_interval;
        rep.header["holdout_k"] = cfg.holdout_k;
        rep.header["start_from_clean"] = cfg.start_from_clean;
        rep.header["diagnostic"] = a.diagnostic;
    }

    rep.rows.resize(data.size());
    parallel_for(data.size(), a.jobs, [&](std::size_t i) {
        rep.rows[i] = certify_point(model, data.inputs[i], data.labels[i], i, mode, cfg, a.diagnostic);
    });
    save_report(a.out, rep);

    std::size_t failed = 0;
    for (const auto& r : rep.rows)
        if (r.status != "ok") ++failed;
    if (failed > 0) std::fprintf(stderr, "warning: %zu of %zu points failed\n", failed, rep.rows.size());
}

// ---------------------------------------------------------------- report

struct ReportArgs {
    std::vector<std::string> reports;
    std::vector<double> thresholds = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::string out;
    std::string csv_dir;
};

json histogram_json(const Histogram& h) {
    return {{"edges", h.edges()}, {"counts", h.counts}, {"below", h.below}, {"above", h.above}};
}

std::string histogram_csv(const Histogram& h) {
    std::string s = "bin_lo,bin_hi,count\n";
    const auto e = h.edges();
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        s += detail::fmt_double(e[i]) + "," + detail::fmt_double(e[i + 1]) + "," +
             std::to_string(h.counts[i]) + "\n";
    return s;
}

void check_aligned(const Report& a, const Report& b, const std::string& pa, const std::string& pb) {
    auto fail = [&](const std::string& why) {
        throw AlignmentError("reports '" + pa + "' and '" + pb + "' are not sample-aligned: " + why);
    };
    for (const char* key : {"seed", "sigma", "n_samples", "data"})
        if (a.header.value(key, json()) != b.header.value(key, json()))
            fail(std::string("header field '") + key + "' differs");
    if (a.rows.size() != b.rows.size()) fail("different number of rows");
    for (std::size_t i = 0; i < a.rows.size(); ++i)
        if (a.rows[i].point_index != b.rows[i].point_index ||
            a.rows[i].true_label != b.rows[i].true_label)
            fail("row " + std::to_string(i) + " refers to a different point");
}

void cmd_report(const ReportArgs& a) {
    if (a.reports.empty() || a.reports.size() > 2)
        throw ArgumentError("report: expected one or two report files");
    std::vector<Report> reps;
    for (const auto& p : a.reports) reps.push_back(load_report(p));
    if (reps.size() == 2) check_aligned(reps[0], reps[1], a.reports[0], a.reports[1]);

    json metrics;
    metrics["thresholds"] = a.thresholds;
    json per_report = json::array();
    std::string acc_csv = "threshold";
    for (const auto& p : a.reports) acc_csv += "," + fs::path(p).filename().string();
    acc_csv += "\n";
    std::vector<std::vector<double>> accs;
    for (std::size_t k = 0; k < reps.size(); ++k) {
        const auto& rows = reps[k].rows;
        json m;
        m["path"] = a.reports[k];
        m["mode"] = reps[k].header.value("mode", "");
        accs.push_back(certified_accuracy(rows, a.thresholds));
        m["certified_accuracy"] = accs.back();
        m["acr"] = acr(rows);
        double wall = 0.0;
        std::size_t iters = 0;
        std::vector<double> pms;
        std::vector<double> gaps;
        for (const auto& r : rows) {
            wall += r.wall_time;
            iters += r.iters_total;
            if (r.pm_upper) pms.push_back(*r.pm_upper);
            if (r.pm_gap) gaps.push_back(*r.pm_gap);
        }
        m["wall_time_total"] = wall;
        m["iters_total"] = iters;
        if (!pms.empty()) m["pm_histogram"] = histogram_json(make_histogram(pms, 0.0, 1.0, 10));
        if (!gaps.empty()) m["gap_histogram"] = histogram_json(make_histogram(gaps, 0.0, 1.0, 10));
        per_report.push_back(std::move(m));
    }
    for (std::size_t t = 0; t < a.thresholds.size(); ++t) {
        acc_csv += detail::fmt_double(a.thresholds[t]);
        for (const auto& acc : accs) acc_csv += "," + detail::fmt_double(acc[t]);
        acc_csv += "\n";
    }
    metrics["reports"] = per_report;
    // Top-level fields mirror the first report.
    metrics["certified_accuracy"] = per_report[0]["certified_accuracy"];
    metrics["acr"] = per_report[0]["acr"];
    for (const char* key : {"pm_histogram", "gap_histogram"})
        for (const auto& m : per_report)
            if (m.contains(key) && !metrics.contains(key)) metrics[key] = m[key];

    std::map<std::string, std::string> csvs;
    csvs["certified_accuracy.csv"] = acc_csv;
    if (reps.size() == 2) {
        // The standard-mode report is the baseline when there is one.
        const std::size_t base = reps[1].header.value("mode", "") == "standard" &&
                                         reps[0].header.value("mode", "") != "standard"
                                     ? 1
                                     : 0;
        const auto& rb = reps[base].rows;
        const auto& rs = reps[1 - base].rows;
        std::vector<double> rrds;
        for (std::size_t i = 0; i < rb.size(); ++i)
            if (rb[i].radius > 0.0) rrds.push_back(rrd(rb[i].radius, rs[i].radius));
        const Histogram h = make_histogram(rrds, 0.0, 1.0, 20);
        metrics["rrd_baseline"] = a.reports[base];
        metrics["rrd_points"] = rrds.size();
        metrics["rrd_histogram"] = histogram_json(h);
        csvs["rrd_histogram.csv"] = histogram_csv(h);
    }
    if (metrics.contains("pm_histogram"))
        csvs["pm_histogram.csv"] = histogram_csv(make_histogram(
            [&] {
                std::vector<double> v;
                for (const auto& rep : reps)
                    for (const auto& r : rep.rows)
                        if (r.pm_upper) v.push_back(*r.pm_upper);
                return v;
            }(),
            0.0, 1.0, 10));
    if (metrics.contains("gap_histogram")) {
        std::vector<double> v;
        for (const auto& rep : reps)
            for (const auto& r : rep.rows)
                if (r.pm_gap) v.push_back(*r.pm_gap);
        csvs["gap_histogram.csv"] = histogram_csv(make_histogram(v, 0.0, 1.0, 10));
    }

    const std::string text = metrics.dump(2) + "\n";
    if (a.out.empty())
        std::cout << text;
    else
        detail::write_file(a.out, text);
    if (!a.csv_dir.empty()) {
        std::error_code ec;
        fs::create_directories(a.csv_dir, ec);
        if (ec) throw IoError("cannot create directory '" + a.csv_dir + "': " + ec.message());
        for (const auto& [name, body] : csvs) detail::write_file((fs::path(a.csv_dir) / name).string(), body);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Randomized-smoothing certification for deep equilibrium models"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    g->add_option("--kind", gen.kind, "blobs, two_moons or rings")
        ->check(CLI::IsMember({"blobs", "two_moons", "rings"}))
        ->capture_default_str();
    g->add_option("--n-points", gen.spec.n_points)->capture_default_str();
    g->add_option("--noise", gen.spec.noise)->capture_default_str();
    g->add_option("--seed", gen.spec.seed)->capture_default_str();
    g->add_option("--num-classes", gen.spec.num_classes, "blobs only")->capture_default_str();
    g->add_option("--dim", gen.spec.dim, "blobs only")->capture_default_str();
    g->add_option("--separation", gen.spec.separation, "blobs: distance between neighbouring centres")
        ->capture_default_str();
    g->add_option("--out", gen.out, "Dataset JSON path")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a DEQ on Gaussian-augmented data");
    tr.cmd = t;
    t->add_option("--data", tr.data, "Training dataset JSON")->required();
    t->add_option("--config", tr.config, "Training config JSON; flags given explicitly win");
    t->add_option("--out", tr.out, "Model JSON path")->required();
    t->add_option("--loss-out", tr.loss_out, "Loss trace CSV (default <out>.loss.csv)");
    t->add_option("--hidden", tr.hidden)->capture_default_str();
    t->add_option("--gamma", tr.gamma, "Contraction bound on W")->capture_default_str();
    t->add_option("--init", tr.init, "gaussian or orthogonal")->capture_default_str();
    t->add_option("--sigma", tr.train.sigma, "Augmentation noise")->capture_default_str();
    t->add_option("--epochs", tr.train.epochs)->capture_default_str();
    t->add_option("--lr", tr.train.lr)->capture_default_str();
    t->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
    t->add_option("--seed", tr.train.seed)->capture_default_str();
    tr.solver.tol = tr.train.solver.tol;
    tr.solver.max_iters = tr.train.solver.max_iters;
    tr.solver.add(t);

    CertifyArgs ce;
    auto* c = app.add_subcommand("certify", "Certify every point of a dataset");
    c->add_option("--model", ce.model)->required();
    c->add_option("--data", ce.data)->required();
    c->add_option("--out", ce.out, "Report CSV path")->required();
    c->add_option("--mode", ce.mode)->check(CLI::IsMember({"standard", "srs"}))->capture_default_str();
    c->add_option("--sigma", ce.base.sigma)->capture_default_str();
    c->add_option("--n-samples", ce.base.n_samples)->capture_default_str();
    c->add_option("--batch-size", ce.base.batch_size)->capture_default_str();
    c->add_option("--alpha", ce.alpha)->capture_default_str();
    c->add_option("--seed", ce.base.seed)->capture_default_str();
    ce.solver.add(c);
    c->add_option("--srs-steps", ce.srs_steps)->capture_default_str();
    c->add_option("--warmup-steps", ce.warmup_steps)->capture_default_str();
    c->add_option("--restart-interval", ce.restart_interval, "0 disables restarts")
        ->capture_default_str();
    c->add_option("--holdout-k", ce.holdout_k)->capture_default_str();
    c->add_flag("--start-from-clean", ce.start_from_clean, "Warm-start from the clean fixed point");
    c->add_flag("--diagnostic", ce.diagnostic, "Re-predict all samples and record the p_m gap");
    c->add_option("--jobs", ce.jobs, "Points certified concurrently")->capture_default_str();

    ReportArgs re;
    auto* r = app.add_subcommand("report", "Metrics over one or two reports");
    r->add_option("reports", re.reports, "Report CSVs (two for RRD)")->required()->expected(1, 2);
    r->add_option("--thresholds", re.thresholds)->capture_default_str();
    r->add_option("--out", re.out, "Metrics JSON path (stdout if omitted)");
    r->add_option("--csv-dir", re.csv_dir, "Directory for plot-ready CSVs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*g) cmd_gen_data(gen);
        if (*t) cmd_train(tr);
        if (*c) cmd_certify(ce);
        if (*r) cmd_report(re);
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
