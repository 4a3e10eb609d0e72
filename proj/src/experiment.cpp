#include "alen/experiment.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>

#include "alen/checkpoint.hpp"
#include "alen/errors.hpp"

namespace alen {

using nlohmann::json;

namespace {

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct PreparedDomain {
    Split split;
    std::string id;
};

std::vector<PreparedDomain> prepare(const ExperimentConfig& config, std::size_t& class_count) {
    std::vector<DomainBatch> domains = load_domains(config);
    std::vector<PreparedDomain> out;
    class_count = 0;
    for (const auto& d : domains) {
        if (!d.labels) throw InputError("domain '" + d.domain_id + "' has no labels for evaluation");
        for (Label y : *d.labels) class_count = std::max(class_count, static_cast<std::size_t>(y) + 1);
    }
    for (std::size_t i = 0; i < domains.size(); ++i) {
        Rng rng = make_rng(config.seed, 100 + i);
        Split s = stratified_split(domains[i], config.split[0], config.split[1], config.split[2], rng);
        if (config.scenario && config.scenario->test_noise_scale > 0.0) {
            std::normal_distribution<double> noise(0.0, config.scenario->test_noise_scale);
            for (double& v : s.test.features.data()) v += noise(rng);
        }
        out.push_back({std::move(s), domains[i].domain_id});
    }
    return out;
}

std::size_t source_increment_count(const ExperimentConfig& c) {
    return c.scenario ? c.scenario->source_increments : c.csv->source_increments;
}

/// Scores every domain 0..upto on its test split with read-only copies.
std::vector<EvalRecord> evaluate_row(const Network& f, const Network& g, const std::vector<PreparedDomain>& domains,
                                     std::size_t upto) {
    std::vector<EvalRecord> row(upto + 1);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(upto + 1);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
        const auto& test = domains[static_cast<std::size_t>(j)].split.test;
        EvalRecord& r = row[static_cast<std::size_t>(j)];
        r.increment = upto;
        r.domain = static_cast<std::size_t>(j);
        r.domain_id = domains[static_cast<std::size_t>(j)].id;
        r.predictions = predict_labels(f, g, test.features);
        r.labels = *test.labels;
        r.accuracy = accuracy(r.predictions, r.labels);
    }
    return row;
}

void append_row(RunResult& result, std::vector<EvalRecord> row) {
    std::vector<double> acc;
    for (const auto& r : row) acc.push_back(r.accuracy);
    result.accuracy_matrix.append_row(std::move(acc));
    for (auto& r : row) result.evaluations.push_back(std::move(r));
}

void finalize(RunResult& result) {
    result.avg_acc = average_accuracy(result.accuracy_matrix);
    if (result.accuracy_matrix.increments() >= 2) result.forgetting_pct = forgetting(result.accuracy_matrix);
}

void persist(const ExperimentConfig& config, const RunResult& result) {
    if (config.output_dir.empty()) return;
    std::filesystem::create_directories(config.output_dir / "logs");
    for (std::size_t s = 0; s < result.source_epoch_logs.size(); ++s)
        write_epoch_log_csv(config.output_dir / "logs" / ("source_" + std::to_string(s) + "_epochs.csv"),
                            result.source_epoch_logs[s]);
    for (std::size_t s = 0; s < result.source_iteration_logs.size(); ++s)
        write_iteration_log_csv(config.output_dir / "logs" / ("source_" + std::to_string(s) + "_iterations.csv"),
                                result.source_iteration_logs[s]);
    const std::size_t first_target = source_increment_count(config);
    for (std::size_t i = 0; i < result.adapt_logs.size(); ++i)
        write_adapt_log_csv(config.output_dir / "logs" / ("adapt_increment_" + std::to_string(first_target + i) + ".csv"),
                            result.adapt_logs[i]);
    if (result.accuracy_matrix.increments() > 0) write_accuracy_matrix_csv(config.output_dir / "accuracy_matrix.csv", result);
    write_json_file(config.output_dir / "results.json", result_to_json(result));
}

void save_checkpoint(const ExperimentConfig& config, std::size_t increment, const Network& f, const Network& g,
                     const Network* d, std::size_t class_count) {
    if (config.output_dir.empty() || !config.write_checkpoints) return;
    write_json_file(config.output_dir / "checkpoints" / ("increment_" + std::to_string(increment) + ".json"),
                    model_bundle_to_json(f, g, d, class_count));
}

/// Runs `body` as the named stage; on failure flushes partial results and rethrows with the stage name.
template <typename Fn>
void stage(const std::string& name, const ExperimentConfig& config, RunResult& result, Fn&& body) {
    Stopwatch watch;
    try {
        body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        result.stage_times.push_back({name, watch.seconds()});
        try {
            persist(config, result);
        } catch (...) {
        }
        throw StageError(name, e.what());
    }
    result.stage_times.push_back({name, watch.seconds()});
}

RunResult begin(const ExperimentConfig& config, std::vector<PreparedDomain>& domains, std::size_t& class_count) {
    config.validate();
    RunResult result;
    result.method = config.method;
    result.config_echo = config_to_json(config);
    stage("load", config, result, [&] { domains = prepare(config, class_count); });
    for (const auto& d : domains) result.domain_ids.push_back(d.id);
    return result;
}

}  // namespace

std::vector<DomainBatch> load_domains(const ExperimentConfig& config) {
    std::vector<DomainBatch> out;
    if (config.scenario) {
        DriftScenario s = *config.scenario;
        s.seed = config.seed;
        for (std::size_t i = 0; i < s.increment_count(); ++i) out.push_back(generate_domain(s, i));
    } else if (config.csv) {
        for (std::size_t i = 0; i < config.csv->domains.size(); ++i) {
            const auto& d = config.csv->domains[i];
            DomainBatch b = load_csv_domain(d.path, true, d.domain_id);
            b.increment_index = i;
            out.push_back(std::move(b));
        }
    } else {
        throw InputError("config has no scenario source");
    }
    return out;
}

RunResult run_experiment(const ExperimentConfig& config) {
    if (config.method == Method::FT) return run_ft_baseline(config);
    std::vector<PreparedDomain> domains;
    std::size_t class_count = 0;
    RunResult result = begin(config, domains, class_count);

    const ForesightedConfig fcfg = config.effective_foresighted();
    const AdaptConfig acfg = config.effective_adapt();
    const std::size_t sources = source_increment_count(config);
    std::vector<std::unique_ptr<SourceDataset>> source_data;
    SourceModel source;

    for (std::size_t s = 0; s < sources; ++s) {
        stage("foresighted_train[" + std::to_string(s) + "]", config, result, [&] {
            source_data.push_back(std::make_unique<SourceDataset>(domains[s].split.train));
            ForesightedConfig cfg = fcfg;
            cfg.seed = fcfg.seed + s;
            ForesightedResult fr = foresighted_train(*source_data.back(), cfg, s > 0 ? &source : nullptr);
            source = std::move(fr.model);
            result.source_epoch_logs.push_back(std::move(fr.epochs));
            result.source_iteration_logs.push_back(std::move(fr.iterations));
            for (auto& flag : fr.deviation_flags)
                if (std::find(result.deviation_flags.begin(), result.deviation_flags.end(), flag) ==
                    result.deviation_flags.end())
                    result.deviation_flags.push_back(flag);
        });
        stage("evaluate[" + std::to_string(s) + "]", config, result, [&] {
            append_row(result, evaluate_row(source.feature_extractor, source.classifier, domains, s));
            save_checkpoint(config, s, source.feature_extractor, source.classifier, nullptr, source.class_count);
        });
    }
    if (!config.output_dir.empty())
        write_json_file(config.output_dir / "checkpoints" / "prototypes.json", bank_to_json(source.bank));

    Rng rng = make_rng(config.seed, 7);
    TargetModel target = init_from_source(source, acfg.discriminator_hidden, rng);
    const auto reads = [&] {
        std::size_t total = 0;
        for (const auto& d : source_data) total += d->reads();
        return total;
    };
    for (std::size_t i = sources; i < domains.size(); ++i) {
        stage("adapt[" + std::to_string(i) + "]", config, result, [&] {
            if (i > sources && acfg.reset_discriminator)
                target.discriminator =
                    Network(discriminator_layers(target.latent_dim(), acfg.discriminator_hidden), rng);
            const std::size_t before = reads();
            DomainBatch unlabeled = domains[i].split.train.unlabeled();
            AdaptResult ar = adapt_increment(std::move(target), source.bank, unlabeled, acfg);
            result.source_reads_during_adaptation += reads() - before;
            target = std::move(ar.model);
            result.adapt_logs.push_back(std::move(ar.log));
        });
        stage("evaluate[" + std::to_string(i) + "]", config, result, [&] {
            append_row(result, evaluate_row(target.feature_extractor, target.classifier, domains, i));
            save_checkpoint(config, i, target.feature_extractor, target.classifier, &target.discriminator,
                            target.class_count);
        });
    }
    finalize(result);
    persist(config, result);
    return result;
}

RunResult run_ft_baseline(const ExperimentConfig& config) {
    std::vector<PreparedDomain> domains;
    std::size_t class_count = 0;
    RunResult result = begin(config, domains, class_count);

    ForesightedConfig fcfg = config.effective_foresighted();
    const std::size_t sources = source_increment_count(config);
    SourceModel model;
    for (std::size_t s = 0; s < sources; ++s) {
        stage("fine_tune[" + std::to_string(s) + "]", config, result, [&] {
            SourceDataset data(domains[s].split.train);
            ForesightedConfig cfg = fcfg;
            cfg.seed = fcfg.seed + s;
            CrossEntropyResult cr = train_cross_entropy(data, cfg, s > 0 ? &model : nullptr);
            model = std::move(cr.model);
            result.source_epoch_logs.push_back(std::move(cr.epochs));
        });
        stage("evaluate[" + std::to_string(s) + "]", config, result, [&] {
            append_row(result, evaluate_row(model.feature_extractor, model.classifier, domains, s));
            save_checkpoint(config, s, model.feature_extractor, model.classifier, nullptr, model.class_count);
        });
    }
    for (std::size_t i = sources; i < domains.size(); ++i)
        stage("evaluate[" + std::to_string(i) + "]", config, result, [&] {
            append_row(result, evaluate_row(model.feature_extractor, model.classifier, domains, i));
        });
    finalize(result);
    persist(config, result);
    return result;
}

// ---- serialization ---------------------------------------------------------------

json model_bundle_to_json(const Network& f, const Network& g, const Network* d, std::size_t class_count) {
    json doc{{"format_version", kCheckpointFormatVersion},
             {"class_count", class_count},
             {"feature_extractor", network_to_json(f)},
             {"classifier", network_to_json(g)}};
    if (d) doc["discriminator"] = network_to_json(*d);
    return doc;
}

ModelBundle model_bundle_from_json(const json& doc) {
    try {
        ModelBundle b;
        b.class_count = doc.at("class_count").get<std::size_t>();
        b.feature_extractor = network_from_json(doc.at("feature_extractor")).network;
        b.classifier = network_from_json(doc.at("classifier")).network;
        if (doc.contains("discriminator")) b.discriminator = network_from_json(doc.at("discriminator")).network;
        if (b.feature_extractor.output_dim() != b.classifier.input_dim())
            throw ShapeError("model bundle: feature extractor and classifier widths do not chain");
        return b;
    } catch (const json::exception& e) {
        throw ParseError(std::string("model bundle: ") + e.what());
    }
}

void write_accuracy_matrix_csv(const std::filesystem::path& path, const RunResult& r) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "increment,domain_id,accuracy\n";
    for (std::size_t i = 0; i < r.accuracy_matrix.increments(); ++i)
        for (std::size_t j = 0; j <= i; ++j)
            out << i << ',' << r.domain_ids.at(j) << ',' << r.accuracy_matrix.at(i, j) << '\n';
}

json result_to_json(const RunResult& r) {
    json evals = json::array();
    for (const auto& e : r.evaluations)
        evals.push_back({{"increment", e.increment},
                         {"domain", e.domain},
                         {"domain_id", e.domain_id},
                         {"accuracy", e.accuracy},
                         {"predictions", e.predictions},
                         {"labels", e.labels}});
    json epochs = json::array();
    for (const auto& log : r.source_epoch_logs) {
        json rows = json::array();
        for (const auto& e : log)
            rows.push_back({{"epoch", e.epoch},
                            {"mean_Ls1", std::isnan(e.mean_ls1) ? json() : json(e.mean_ls1)},
                            {"mean_Ls2", e.mean_ls2},
                            {"train_accuracy", e.train_accuracy},
                            {"negatives_accepted", e.negatives_accepted}});
        epochs.push_back(rows);
    }
    json adapt = json::array();
    for (const auto& log : r.adapt_logs) {
        json summary{{"iterations", log.size()}};
        if (!log.empty())
            summary.update({{"final_L_c", log.back().retention},
                            {"final_L_d", log.back().confusion},
                            {"final_discriminator_accuracy", log.back().discriminator_accuracy}});
        adapt.push_back(summary);
    }
    json times = json::object();
    for (const auto& t : r.stage_times) times[t.stage] = t.seconds;
    return {{"method", to_string(r.method)},
            {"accuracy_matrix", r.accuracy_matrix.rows()},
            {"avg_acc", r.avg_acc},
            {"forgetting_pct", r.forgetting_pct ? json(*r.forgetting_pct) : json()},
            {"domain_ids", r.domain_ids},
            {"evaluation_split", r.evaluation_split},
            {"evaluations", evals},
            {"source_epoch_logs", epochs},
            {"adaptation", adapt},
            {"wall_time_seconds", times},
            {"deviation_flags", r.deviation_flags},
            {"source_reads_during_adaptation", r.source_reads_during_adaptation},
            {"config", r.config_echo}};
}

RunResult result_from_json(const json& doc) {
    try {
        RunResult r;
        r.method = doc.at("method").get<std::string>() == "FT" ? Method::FT : Method::ALEN;
        for (const auto& row : doc.at("accuracy_matrix")) r.accuracy_matrix.append_row(row.get<std::vector<double>>());
        r.avg_acc = doc.at("avg_acc").get<double>();
        if (!doc.at("forgetting_pct").is_null()) r.forgetting_pct = doc.at("forgetting_pct").get<double>();
        r.domain_ids = doc.at("domain_ids").get<std::vector<std::string>>();
        r.evaluation_split = doc.value("evaluation_split", "test");
        for (const auto& e : doc.at("evaluations"))
            r.evaluations.push_back({e.at("increment").get<std::size_t>(), e.at("domain").get<std::size_t>(),
                                     e.at("domain_id").get<std::string>(), e.at("accuracy").get<double>(),
                                     e.at("predictions").get<std::vector<Label>>(),
                                     e.at("labels").get<std::vector<Label>>()});
        for (const auto& [stage, secs] : doc.at("wall_time_seconds").items())
            r.stage_times.push_back({stage, secs.get<double>()});
        r.deviation_flags = doc.at("deviation_flags").get<std::vector<std::string>>();
        r.source_reads_during_adaptation = doc.at("source_reads_during_adaptation").get<std::size_t>();
        r.config_echo = doc.at("config");
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("results.json: ") + e.what());
    }
}

}  // namespace alen
