#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "sepdgp/data.hpp"
#include "sepdgp/metrics.hpp"
#include "sepdgp/model_io.hpp"
#include "sepdgp/trainer.hpp"
#include "sepdgp/verify.hpp"

namespace {

using namespace sepdgp;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitTrainingAborted = 3;

std::string fmt(double v) { return model_io::format_double(v); }

struct TrainFlags {
    std::string data_path;
    std::string target = "-1";
    std::string arch_text;
    long iterations = 4000;
    int minibatch = 50;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
    std::string out_path;
    std::string history_path;
    double damping = 0.0;
    bool serial = true;
    bool parallel = false;
    bool per_point = false;
};

int cmd_train(const TrainFlags& flags) {
    const auto ds = data::load_csv(flags.data_path, flags.target);

    trainer::TrainConfig cfg;
    cfg.architecture = arch::parse(flags.arch_text);
    cfg.iterations = flags.iterations;
    cfg.minibatch_size = flags.minibatch;
    cfg.learning_rate = flags.learning_rate;
    cfg.seed = flags.seed;
    cfg.sep.damping = flags.damping;
    cfg.sep.update_per_minibatch = !flags.per_point;
    cfg.sep.parallel_within_minibatch = flags.parallel && !flags.serial;

    const auto result = trainer::train(ds.x, ds.y, cfg);

    bool any_finite = false;
    for (const auto& rec : result.history) {
        if (std::isfinite(rec.mean_logz)) {
            any_finite = true;
            break;
        }
    }
    if (!any_finite) {
        std::cerr << "training aborted: every datapoint evaluation failed\n";
        return kExitTrainingAborted;
    }

    model_io::ModelFile file;
    file.architecture = arch::to_string(cfg.architecture);
    file.model = result.model;
    file.state = result.state;
    file.meta = model_io::TrainingMeta{cfg.seed, cfg.iterations, model_io::config_hash(cfg)};
    model_io::save_model(file, flags.out_path);

    const std::string history_path =
        flags.history_path.empty() ? flags.out_path + ".history.csv" : flags.history_path;
    model_io::write_history_csv(history_path, result.history);

    std::cerr << "trained " << file.architecture << " on " << ds.n() << " points; skips "
              << result.counters.skipped << ", reverted " << result.counters.reverted << "\n";
    return kExitOk;
}

Eigen::MatrixXd features_for_model(const model_io::ModelFile& file, const data::Dataset& ds) {
    if (ds.d() != file.model.input_dim) {
        throw DimensionError("data has " + std::to_string(ds.d()) +
                             " feature columns but the model expects " +
                             std::to_string(file.model.input_dim));
    }
    return ds.x;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& target, const std::string& out_path) {
    const auto file = model_io::load_model(model_path);
    data::Dataset ds;
    if (target.empty()) {
        // No target column: read via a synthetic index so all columns stay.
        ds = data::load_csv(data_path, "0");
        Eigen::MatrixXd x(ds.n(), ds.d() + 1);
        x.col(0) = ds.y;
        x.rightCols(ds.d()) = ds.x;
        ds.column_names.insert(ds.column_names.begin(), ds.target_name);
        ds.x = std::move(x);
        ds.target_name.clear();
    } else {
        ds = data::load_csv(data_path, target);
    }
    const Eigen::MatrixXd x = features_for_model(file, ds);
    const auto preds = network::predict_batch(file.model, file.state, x);

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ParseError("cannot write predictions file: " + out_path);
    for (std::size_t c = 0; c < ds.column_names.size(); ++c) out << ds.column_names[c] << ',';
    out << "mean,variance\n";
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) out << fmt(x(i, c)) << ',';
        out << fmt(preds[static_cast<std::size_t>(i)].mean_raw) << ','
            << fmt(preds[static_cast<std::size_t>(i)].var_raw) << '\n';
    }
    return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& target, const std::string& out_path) {
    const auto file = model_io::load_model(model_path);
    const auto ds = data::load_csv(data_path, target);
    const Eigen::MatrixXd x = features_for_model(file, ds);
    const auto preds = network::predict_batch(file.model, file.state, x);
    Eigen::VectorXd means(ds.n()), vars(ds.n());
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        means[i] = preds[static_cast<std::size_t>(i)].mean_raw;
        vars[i] = preds[static_cast<std::size_t>(i)].var_raw;
    }
    const auto report = metrics::evaluate(means, vars, ds.y);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ParseError("cannot write eval file: " + out_path);
    out << "rmse,mll,n_test\n";
    out << fmt(report.rmse) << ',' << fmt(report.mll) << ',' << report.n_test << '\n';
    std::cerr << "rmse " << report.rmse << "  mll " << report.mll << "  n " << report.n_test
              << "\n";
    return kExitOk;
}

struct BenchmarkCell {
    std::string dataset;
    std::string arch_text;
    Eigen::Index n = 0;
    Eigen::Index d = 0;
    std::vector<double> rmse;
    std::vector<double> mll;
    bool failed = false;
};

int cmd_benchmark(const std::string& spec_path, const std::string& out_path, bool full,
                  int jobs, std::string data_dir) {
    std::ifstream in(spec_path);
    if (!in) throw ParseError("cannot open benchmark spec: " + spec_path);
    nlohmann::json spec;
    try {
        in >> spec;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid benchmark spec: ") + e.what());
    }
    if (data_dir.empty()) data_dir = data::default_data_dir();

    const auto datasets = spec.at("datasets").get<std::vector<std::string>>();
    const auto archs = spec.at("architectures").get<std::vector<std::string>>();
    int n_splits = spec.value("n_splits", 5);
    if (full) n_splits = 20;
    const double train_fraction = spec.value("train_fraction", 0.9);

    trainer::TrainConfig base;
    if (spec.contains("config")) {
        const auto& jc = spec["config"];
        base.iterations = jc.value("iterations", 4000L);
        base.minibatch_size = jc.value("minibatch", 50);
        base.learning_rate = jc.value("learning_rate", 0.01);
        base.seed = jc.value("seed", std::uint64_t{0});
        base.sep.damping = jc.value("damping", 0.0);
    }

    struct Task {
        std::string dataset;
        std::string arch_text;
        int split = 0;
    };
    std::vector<BenchmarkCell> cells;
    std::vector<Task> tasks;
    std::map<std::string, data::Dataset> loaded;
    for (const auto& name : datasets) {
        loaded[name] = data::load_registered(name, data_dir);
        for (const auto& arch_text : archs) {
            BenchmarkCell cell;
            cell.dataset = name;
            cell.arch_text = arch_text;
            cell.n = loaded[name].n();
            cell.d = loaded[name].d();
            cell.rmse.assign(static_cast<std::size_t>(n_splits),
                             std::numeric_limits<double>::quiet_NaN());
            cell.mll.assign(static_cast<std::size_t>(n_splits),
                            std::numeric_limits<double>::quiet_NaN());
            cells.push_back(std::move(cell));
            for (int s = 0; s < n_splits; ++s) {
                tasks.push_back(Task{name, arch_text, s});
            }
        }
    }

    const auto run_task = [&](const Task& task) {
        const auto& ds = loaded.at(task.dataset);
        auto& cell = *std::find_if(cells.begin(), cells.end(), [&](const BenchmarkCell& c) {
            return c.dataset == task.dataset && c.arch_text == task.arch_text;
        });
        try {
            const auto splits =
                data::make_splits(ds.n(), n_splits, train_fraction, base.seed);
            const auto& split = splits[static_cast<std::size_t>(task.split)];
            const auto train_ds = data::subset(ds, split.train_idx);
            const auto test_ds = data::subset(ds, split.test_idx);

            trainer::TrainConfig cfg = base;
            cfg.architecture = arch::parse(task.arch_text);
            cfg.seed = base.seed + static_cast<std::uint64_t>(task.split);
            const auto result = trainer::train(train_ds.x, train_ds.y, cfg);

            const auto preds = network::predict_batch(result.model, result.state, test_ds.x);
            Eigen::VectorXd means(test_ds.n()), vars(test_ds.n());
            for (Eigen::Index i = 0; i < test_ds.n(); ++i) {
                means[i] = preds[static_cast<std::size_t>(i)].mean_raw;
                vars[i] = preds[static_cast<std::size_t>(i)].var_raw;
            }
            const auto report = metrics::evaluate(means, vars, test_ds.y);
            cell.rmse[static_cast<std::size_t>(task.split)] = report.rmse;
            cell.mll[static_cast<std::size_t>(task.split)] = report.mll;
        } catch (const std::exception& e) {
            std::cerr << "benchmark cell failed (" << task.dataset << ", " << task.arch_text
                      << ", split " << task.split << "): " << e.what() << "\n";
            cell.failed = true;
        }
    };

    if (jobs <= 1) {
        for (const auto& task : tasks) run_task(task);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const int n_workers = std::min<int>(jobs, static_cast<int>(tasks.size()));
        for (int w = 0; w < n_workers; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < tasks.size();
                     i = next.fetch_add(1)) {
                    run_task(tasks[i]);
                }
            });
        }
        for (auto& w : workers) w.join();
    }

    const auto mean_std = [](const std::vector<double>& v) {
        double mean = 0.0;
        long count = 0;
        for (const double x : v) {
            if (std::isfinite(x)) {
                mean += x;
                ++count;
            }
        }
        if (count == 0) {
            return std::pair<double, double>{std::numeric_limits<double>::quiet_NaN(),
                                             std::numeric_limits<double>::quiet_NaN()};
        }
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (const double x : v) {
            if (std::isfinite(x)) var += (x - mean) * (x - mean);
        }
        const double sd = count > 1 ? std::sqrt(var / static_cast<double>(count - 1)) : 0.0;
        return std::pair<double, double>{mean, sd};
    };

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ParseError("cannot write benchmark results: " + out_path);
    out << "dataset,N,D,arch,rmse_mean,rmse_std,mll_mean,mll_std\n";
    for (const auto& cell : cells) {
        const auto [rm, rs] = mean_std(cell.rmse);
        const auto [mm, ms] = mean_std(cell.mll);
        out << cell.dataset << ',' << cell.n << ',' << cell.d << ',' << cell.arch_text << ','
            << fmt(rm) << ',' << fmt(rs) << ',' << fmt(mm) << ',' << fmt(ms) << '\n';
        std::cerr << cell.dataset << " " << cell.arch_text << ": rmse " << rm << " +- " << rs
                  << ", mll " << mm << " +- " << ms << "\n";
    }
    return kExitOk;
}

int cmd_verify(std::uint64_t seed, bool quick, const std::string& report_path,
               double psi1_bias) {
    verify::Options opt;
    opt.seed = seed;
    opt.quick = quick;
    opt.psi1_bias = psi1_bias;
    const auto results = verify::run_all(opt);
    for (const auto& r : results) {
        std::printf("[%s] %-14s %-36s value %.4g bound %.4g\n", r.pass ? "PASS" : "FAIL",
                    r.suite.c_str(), r.name.c_str(), r.value, r.bound);
    }
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary);
        if (!out) throw ParseError("cannot write verify report: " + report_path);
        out << "suite,check,value,bound,status\n";
        for (const auto& r : results) {
            out << r.suite << ",\"" << r.name << "\"," << fmt(r.value) << ',' << fmt(r.bound)
                << ',' << (r.pass ? "pass" : "fail") << '\n';
        }
    }
    const bool ok = verify::all_pass(results);
    std::printf("%s (%zu checks)\n", ok ? "all suites passed" : "VERIFICATION FAILED",
                results.size());
    return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sepdgp: sparse deep Gaussian process regression trained with "
                 "stochastic expectation propagation"};
    app.require_subcommand(1);

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "Train a model on a CSV dataset");
    train->add_option("--data", tf.data_path, "training CSV (header row, numeric cells)")
        ->required();
    train->add_option("--target", tf.target, "target column name or index (-1 = last)");
    train->add_option("--arch", tf.arch_text, "architecture, e.g. y@50 or 2@50,y@50")
        ->required();
    train->add_option("--iters", tf.iterations, "training iterations (minibatches)");
    train->add_option("--minibatch", tf.minibatch, "minibatch size");
    train->add_option("--lr", tf.learning_rate, "Adam learning rate");
    train->add_option("--seed", tf.seed, "random seed");
    train->add_option("--out", tf.out_path, "output model file")->required();
    train->add_option("--history", tf.history_path,
                      "per-iteration history CSV (default: <out>.history.csv)");
    train->add_option("--damping", tf.damping, "SEP damping (0 = 1/N)");
    train->add_flag("--serial", tf.serial, "force serial evaluation (default)");
    train->add_flag("--parallel", tf.parallel, "evaluate minibatch points in parallel");
    train->add_flag("--per-point", tf.per_point, "apply SEP updates per datapoint");

    std::string model_path, data_path, out_path, target, spec_path, report_path, data_dir;
    auto* predict = app.add_subcommand("predict", "Predictive mean/variance for a CSV");
    predict->add_option("--model", model_path, "model file")->required();
    predict->add_option("--data", data_path, "input CSV")->required();
    predict->add_option("--target", target, "target column to drop, if present");
    predict->add_option("--out", out_path, "output CSV")->required();

    std::string e_model, e_data, e_target = "-1", e_out;
    auto* eval = app.add_subcommand("eval", "RMSE and mean log-density on labelled data");
    eval->add_option("--model", e_model, "model file")->required();
    eval->add_option("--data", e_data, "labelled CSV")->required();
    eval->add_option("--target", e_target, "target column name or index");
    eval->add_option("--out", e_out, "output CSV")->required();

    bool full = false;
    int jobs = 1;
    auto* bench = app.add_subcommand("benchmark", "Split/train/eval grid from a spec file");
    bench->add_option("--spec", spec_path, "benchmark spec JSON")->required();
    bench->add_option("--out", out_path, "results CSV")->required();
    bench->add_flag("--full", full, "run 20 splits instead of the spec's n_splits");
    bench->add_option("--jobs", jobs, "parallel cells");
    bench->add_option("--data-dir", data_dir, "dataset registry directory");

    std::uint64_t v_seed = 23;
    bool quick = false;
    double psi1_bias = 0.0;
    auto* verify_cmd = app.add_subcommand("verify", "Run the oracle verification suites");
    verify_cmd->add_option("--seed", v_seed, "suite seed");
    verify_cmd->add_flag("--quick", quick, "1e4 MC samples and wider bands");
    verify_cmd->add_option("--report", report_path, "write a CSV report");
    verify_cmd->add_option("--inject-psi1-bias", psi1_bias,
                           "test hook: bias added to analytic psi1");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(tf);
        if (predict->parsed()) return cmd_predict(model_path, data_path, target, out_path);
        if (eval->parsed()) return cmd_eval(e_model, e_data, e_target, e_out);
        if (bench->parsed()) return cmd_benchmark(spec_path, out_path, full, jobs, data_dir);
        if (verify_cmd->parsed()) return cmd_verify(v_seed, quick, report_path, psi1_bias);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTrainingAborted;
    }
    return kExitUsage;
}
