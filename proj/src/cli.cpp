#include "alen/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>

#include "alen/checkpoint.hpp"
#include "alen/errors.hpp"
#include "alen/experiment.hpp"
#include "alen/gradcheck.hpp"

namespace alen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cmd_run(const fs::path& config_path, const std::string& output) {
    ExperimentConfig config = load_config(config_path);
    if (!output.empty()) config.output_dir = output;
    if (config.output_dir.empty()) config.output_dir = "results";
    RunResult r = run_experiment(config);
    std::cout << "method " << to_string(r.method) << "  avg_acc " << std::fixed << std::setprecision(4) << r.avg_acc;
    if (r.forgetting_pct) std::cout << "  forgetting " << *r.forgetting_pct;
    std::cout << "\nresults written to " << config.output_dir.string() << '\n';
    return 0;
}

int cmd_gradcheck(std::size_t seeds, std::uint64_t base_seed) {
    const auto entries = run_gradcheck_suite(seeds, base_seed);
    int failed = 0;
    for (const auto& e : entries) {
        std::printf("%-40s max_rel_error %.3e  checked %zu  %s\n", e.name.c_str(), e.max_rel_error, e.checked,
                    e.passed() ? "ok" : "FAIL");
        failed += e.passed() ? 0 : 1;
    }
    std::printf("%zu entries, %d failed (tolerance %.0e)\n", entries.size(), failed, kGradCheckTolerance);
    return failed == 0 ? 0 : 1;
}

int cmd_gen_data(const fs::path& config_path, const fs::path& out) {
    const ExperimentConfig config = load_config(config_path);
    if (!config.scenario) throw InputError("gen-data needs a config with a scenario");
    const auto domains = load_domains(config);
    json manifest{{"domains", json::array()}, {"source_increments", config.scenario->source_increments}};
    for (const auto& d : domains) {
        const fs::path file = out / (d.domain_id + ".csv");
        write_csv_domain(file, d);
        manifest["domains"].push_back({{"path", fs::absolute(file).string()}, {"domain_id", d.domain_id}});
    }
    write_json_file(out / "manifest.json", manifest);
    std::cout << domains.size() << " domains written to " << out.string() << '\n';
    return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, bool no_labels) {
    const ModelBundle model = model_bundle_from_json(read_json_file(checkpoint));
    const DomainBatch batch = load_csv_domain(data, !no_labels, data.stem().string());
    if (batch.features.cols() != model.feature_extractor.input_dim())
        throw ShapeError("data has " + std::to_string(batch.features.cols()) + " features, model expects " +
                         std::to_string(model.feature_extractor.input_dim()));
    const auto predictions = predict_labels(model.feature_extractor, model.classifier, batch.features);
    if (batch.labels) {
        std::cout << "rows " << batch.size() << "  accuracy " << std::setprecision(6)
                  << accuracy(predictions, *batch.labels) << '\n';
    } else {
        for (Label p : predictions) std::cout << p << '\n';
    }
    return 0;
}

int cmd_report(const fs::path& dir) {
    const RunResult r = result_from_json(read_json_file(dir / "results.json"));
    const auto& m = r.accuracy_matrix;
    {
        std::ofstream out(dir / "accuracy_curves.csv");
        if (!out) throw InputError("cannot write to '" + dir.string() + "'");
        out << std::setprecision(std::numeric_limits<double>::max_digits10);
        out << "increment";
        for (const auto& id : r.domain_ids) out << ',' << id;
        out << ",mean_seen\n";
        for (std::size_t i = 0; i < m.increments(); ++i) {
            out << i;
            double sum = 0.0;
            for (std::size_t j = 0; j < r.domain_ids.size(); ++j) {
                out << ',';
                if (j <= i) {
                    out << m.at(i, j);
                    sum += m.at(i, j);
                }
            }
            out << ',' << sum / static_cast<double>(i + 1) << '\n';
        }
    }
    std::ofstream summary(dir / "summary.csv");
    summary << std::setprecision(std::numeric_limits<double>::max_digits10);
    summary << "method,increments,avg_acc_pct,forgetting_pct\n"
            << to_string(r.method) << ',' << m.increments() << ',' << r.avg_acc * 100.0 << ',';
    if (r.forgetting_pct) summary << *r.forgetting_pct;
    summary << '\n';

    std::printf("%-10s %-12s %-14s\n", "method", "avg_acc(%)", "forgetting(%)");
    std::printf("%-10s %-12.2f ", std::string(to_string(r.method)).c_str(), r.avg_acc * 100.0);
    if (r.forgetting_pct)
        std::printf("%-14.2f\n", *r.forgetting_pct);
    else
        std::printf("%-14s\n", "n/a");
    std::printf("\n%-10s", "after");
    for (const auto& id : r.domain_ids) std::printf(" %10s", id.c_str());
    std::printf("\n");
    for (std::size_t i = 0; i < m.increments(); ++i) {
        std::printf("%-10zu", i);
        for (std::size_t j = 0; j <= i; ++j) std::printf(" %10.4f", m.at(i, j));
        std::printf("\n");
    }
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Foresighted source-free domain-incremental learning"};
    app.require_subcommand(1);

    std::string config_path, output;
    auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
    run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("--output", output, "Output directory (overrides the config)");

    std::size_t seeds = 100;
    std::uint64_t base_seed = 0;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer, network and loss");
    grad->add_option("--seeds", seeds, "Random seeds per entry")->check(CLI::PositiveNumber);
    grad->add_option("--base-seed", base_seed);

    std::string gen_config, gen_out;
    auto* gen = app.add_subcommand("gen-data", "Write a scenario's domains as CSV");
    gen->add_option("--config", gen_config)->required()->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out)->required();

    std::string checkpoint, data;
    bool no_labels = false;
    auto* eval = app.add_subcommand("eval", "Score a saved model checkpoint on a CSV");
    eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data)->required()->check(CLI::ExistingFile);
    eval->add_flag("--no-labels", no_labels, "CSV has no label column; print predictions");

    std::string result_dir;
    auto* report = app.add_subcommand("report", "Accuracy curves and a summary table from a run directory");
    report->add_option("--result", result_dir)->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run) return cmd_run(config_path, output);
        if (*grad) return cmd_gradcheck(seeds, base_seed);
        if (*gen) return cmd_gen_data(gen_config, gen_out);
        if (*eval) return cmd_eval(checkpoint, data, no_labels);
        if (*report) return cmd_report(result_dir);
    } catch (const StageError& e) {
        std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace alen
