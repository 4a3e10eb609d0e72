#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "alen/checkpoint.hpp"
#include "alen/errors.hpp"
#include "alen/experiment.hpp"
#include "helpers.hpp"

using namespace alen;
using nlohmann::json;

namespace {

json small_doc(const std::string& method = "ALEN") {
    json doc = json::parse(R"({
        "scenario": {"generator": "GaussianBlobs", "class_count": 3, "dim": 2, "samples_per_domain": 150,
                     "rotation_stream": {"increments": 3, "total_radians": 0.4}},
        "foresighted": {"max_epochs": 15},
        "adapt": {"max_iters": 250, "adversarial_lambda": 0.05},
        "seed": 3
    })");
    doc["method"] = method;
    return doc;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("experiment: results are recomputable from stored predictions") {
    const RunResult r = run_experiment(config_from_json(small_doc()));
    REQUIRE(r.accuracy_matrix.increments() == 3);
    CHECK(r.evaluations.size() == 6);
    for (const auto& e : r.evaluations) {
        CHECK(e.accuracy == accuracy(e.predictions, e.labels));
        CHECK(r.accuracy_matrix.at(e.increment, e.domain) == e.accuracy);
    }
    const auto& last = r.accuracy_matrix.row(2);
    CHECK(r.avg_acc == doctest::Approx((last[0] + last[1] + last[2]) / 3.0));
    REQUIRE(r.forgetting_pct.has_value());
    CHECK(*r.forgetting_pct == doctest::Approx(forgetting(r.accuracy_matrix)));
    CHECK(r.adapt_logs.size() == 2);
    CHECK(r.source_reads_during_adaptation == 0);
    CHECK(r.domain_ids == std::vector<std::string>{"domain_0", "domain_1", "domain_2"});
    CHECK(r.evaluation_split == "test");
    for (const auto& flag : r.deviation_flags) CHECK_FALSE(flag.empty());
}

TEST_CASE("experiment: same config and seed reproduce the run") {
    const ExperimentConfig c = config_from_json(small_doc());
    const RunResult a = run_experiment(c), b = run_experiment(c);
    CHECK(a.accuracy_matrix.rows() == b.accuracy_matrix.rows());
    for (std::size_t i = 0; i < a.evaluations.size(); ++i)
        CHECK(a.evaluations[i].predictions == b.evaluations[i].predictions);
}

TEST_CASE("experiment: fine-tuning baseline never adapts") {
    const RunResult r = run_ft_baseline(config_from_json(small_doc("FT")));
    CHECK(r.method == Method::FT);
    CHECK(r.adapt_logs.empty());
    CHECK(r.accuracy_matrix.increments() == 3);
    // no adaptation: every target row scores the same frozen model
    CHECK(r.accuracy_matrix.at(1, 0) == r.accuracy_matrix.at(0, 0));
    CHECK(r.accuracy_matrix.at(2, 1) == r.accuracy_matrix.at(1, 1));
    CHECK(run_experiment(config_from_json(small_doc("FT"))).accuracy_matrix.rows() == r.accuracy_matrix.rows());
}

TEST_CASE("experiment: ablations reach the trainer") {
    json doc = small_doc();
    doc["ablations"] = {{"disable_Ls1", true}, {"k_sigma_override", 5.0}, {"src_neg_ratio", 2.0}};
    const ExperimentConfig c = config_from_json(doc);
    CHECK(c.effective_foresighted().n_neg == 16);
    CHECK(c.effective_foresighted().k_sigma == 5.0);
    const RunResult r = run_experiment(c);
    for (const auto& it : r.source_iteration_logs.at(0)) {
        CHECK(it.objective != Objective::Ls1);
        if (it.objective == Objective::Ls2) CHECK(it.k_sigma == 5.0);
    }
    for (const auto& e : r.source_epoch_logs.at(0)) CHECK(std::isnan(e.mean_ls1));
    const json j = result_to_json(r);
    CHECK(j["source_epoch_logs"][0][0]["mean_Ls1"].is_null());
}

TEST_CASE("experiment: zero shift keeps the source accuracy") {
    json doc = small_doc();
    doc["scenario"]["rotation_stream"] = {{"increments", 2}, {"total_radians", 0.0}};
    doc["scenario"]["samples_per_domain"] = 300;
    const RunResult r = run_experiment(config_from_json(doc));
    CHECK(std::abs(r.accuracy_matrix.at(1, 1) - r.accuracy_matrix.at(0, 0)) <= 0.05);
}

TEST_CASE("experiment: outputs on disk") {
    testing::TempDir dir("exp_out");
    json doc = small_doc();
    doc["output_dir"] = dir.path.string();
    const RunResult r = run_experiment(config_from_json(doc));
    for (const char* f : {"accuracy_matrix.csv", "results.json", "logs/source_0_epochs.csv",
                          "logs/source_0_iterations.csv", "logs/adapt_increment_1.csv", "logs/adapt_increment_2.csv",
                          "checkpoints/increment_0.json", "checkpoints/increment_2.json", "checkpoints/prototypes.json"})
        CHECK_MESSAGE(std::filesystem::exists(dir.path / f), f);

    const std::string csv = slurp(dir.path / "accuracy_matrix.csv");
    CHECK(csv.rfind("increment,domain_id,accuracy\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

    const RunResult back = result_from_json(read_json_file(dir.path / "results.json"));
    CHECK(back.accuracy_matrix.rows() == r.accuracy_matrix.rows());
    CHECK(back.avg_acc == r.avg_acc);
    CHECK(back.evaluations.size() == r.evaluations.size());
    CHECK(back.evaluations[3].predictions == r.evaluations[3].predictions);
    CHECK(back.deviation_flags == r.deviation_flags);

    // scoring a saved model is read-only and reproduces the stored predictions
    const ModelBundle m = model_bundle_from_json(read_json_file(dir.path / "checkpoints/increment_2.json"));
    REQUIRE(m.discriminator.has_value());
    const auto hf = m.feature_extractor.parameter_hash(), hg = m.classifier.parameter_hash();
    const auto domains = load_domains(config_from_json(doc));
    Rng rng = make_rng(3, 102);
    const Split sp = stratified_split(domains[2], 0.8, 0.1, 0.1, rng);
    CHECK(predict_labels(m.feature_extractor, m.classifier, sp.test.features) == r.evaluations.back().predictions);
    CHECK(m.feature_extractor.parameter_hash() == hf);
    CHECK(m.classifier.parameter_hash() == hg);
}

TEST_CASE("experiment: no output directory writes nothing") {
    json doc = small_doc();
    doc["scenario"]["rotation_stream"]["increments"] = 1;
    const auto before = std::distance(std::filesystem::directory_iterator("."), {});
    const RunResult r = run_experiment(config_from_json(doc));
    CHECK_FALSE(r.forgetting_pct.has_value());
    CHECK(std::distance(std::filesystem::directory_iterator("."), {}) == before);
}

TEST_CASE("experiment: csv streams and stage failures") {
    testing::TempDir dir("exp_csv");
    DriftScenario s;
    s.class_count = 2;
    s.samples_per_domain = 120;
    s.shift_schedule = rotation_schedule(2, 0.2);
    for (std::size_t i = 0; i < 2; ++i) write_csv_domain(dir.path / ("d" + std::to_string(i) + ".csv"), generate_domain(s, i));

    json doc = small_doc();
    doc.erase("scenario");
    doc["csv"] = {{"domains", {{{"path", (dir.path / "d0.csv").string()}, {"domain_id", "a"}},
                               {{"path", (dir.path / "d1.csv").string()}, {"domain_id", "b"}}}}};
    const RunResult ok = run_experiment(config_from_json(doc));
    CHECK(ok.domain_ids == std::vector<std::string>{"a", "b"});
    CHECK(ok.accuracy_matrix.increments() == 2);

    // a target table of the wrong width fails during adaptation, after the source row was flushed
    DomainBatch wide = generate_domain(s, 1);
    wide.features = Matrix(wide.size(), 3, 0.5);
    write_csv_domain(dir.path / "d1.csv", wide);
    doc["output_dir"] = (dir.path / "out").string();
    try {
        run_experiment(config_from_json(doc));
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == "adapt[1]");
    }
    const json partial = read_json_file(dir.path / "out" / "results.json");
    CHECK(partial["accuracy_matrix"].size() == 1);
    CHECK(std::filesystem::exists(dir.path / "out" / "accuracy_matrix.csv"));
}

TEST_CASE("experiment: configuration errors") {
    json doc = small_doc();
    doc["typo"] = 1;
    CHECK_THROWS_AS(config_from_json(doc), InputError);
    doc = small_doc();
    doc["adapt"]["lamda"] = 1.0;
    CHECK_THROWS_AS(config_from_json(doc), InputError);
    doc = small_doc();
    doc["csv"] = {{"domains", json::array()}};
    CHECK_THROWS_AS(config_from_json(doc), InputError);
    doc = small_doc();
    doc["split"] = {0.8, 0.0, 0.2};
    CHECK_THROWS_AS(config_from_json(doc), InputError);
    doc = small_doc();
    doc["method"] = "SGD";
    CHECK_THROWS_AS(config_from_json(doc), InputError);
    doc = small_doc();
    doc["ablations"] = {{"src_neg_ratio", 0.0}};
    CHECK_THROWS_AS(config_from_json(doc), InputError);
}

TEST_CASE("experiment: config echo round trips and the seed can come from the environment") {
    const ExperimentConfig c = config_from_json(small_doc());
    const json echo = config_to_json(c);
    CHECK(config_to_json(config_from_json(echo)) == echo);
    CHECK(echo["adapt"]["adversarial_lambda"] == 0.05);

    testing::TempDir dir("exp_env");
    write_json_file(dir.path / "c.json", small_doc());
    setenv("ALEN_SEED", "77", 1);
    CHECK(load_config(dir.path / "c.json").seed == 77);
    setenv("ALEN_SEED", "abc", 1);
    CHECK_THROWS_AS(load_config(dir.path / "c.json"), InputError);
    unsetenv("ALEN_SEED");
    CHECK(load_config(dir.path / "c.json").seed == 3);
}
