#include <cmath>
#include <cstdlib>
#include <set>

#include "alen/checkpoint.hpp"
#include "alen/errors.hpp"
#include "alen/experiment.hpp"

namespace alen {

using nlohmann::json;

std::string_view to_string(Method m) { return m == Method::ALEN ? "ALEN" : "FT"; }

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw InputError("config: '" + where + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items())
        if (!ok.contains(key)) throw InputError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError("config: '" + where + "." + key + "' has the wrong type");
    }
}

void read_adam(const json& obj, AdamConfig& a, const std::string& where) {
    check_keys(obj, {"lr", "beta1", "beta2", "eps"}, where);
    read(obj, "lr", a.lr, where);
    read(obj, "beta1", a.beta1, where);
    read(obj, "beta2", a.beta2, where);
    read(obj, "eps", a.eps, where);
    if (!(a.lr > 0) || !(a.beta1 >= 0 && a.beta1 < 1) || !(a.beta2 >= 0 && a.beta2 < 1) || !(a.eps > 0))
        throw InputError("config: invalid Adam hyperparameters in " + where);
}

json adam_json(const AdamConfig& a) {
    return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

Generator generator_from(const std::string& s) {
    if (s == "GaussianBlobs") return Generator::GaussianBlobs;
    if (s == "TwoMoons") return Generator::TwoMoons;
    throw InputError("config: unknown generator '" + s + "'");
}

DriftScenario scenario_from(const json& j) {
    const std::string w = "scenario";
    check_keys(j,
               {"generator", "class_count", "dim", "samples_per_domain", "blob_radius", "blob_std", "moons_noise",
                "source_increments", "test_noise_scale", "shift_schedule", "rotation_stream"},
               w);
    DriftScenario s;
    std::string gen = "GaussianBlobs";
    read(j, "generator", gen, w);
    s.generator = generator_from(gen);
    read(j, "class_count", s.class_count, w);
    read(j, "dim", s.dim, w);
    read(j, "samples_per_domain", s.samples_per_domain, w);
    read(j, "blob_radius", s.blob_radius, w);
    read(j, "blob_std", s.blob_std, w);
    read(j, "moons_noise", s.moons_noise, w);
    read(j, "source_increments", s.source_increments, w);
    read(j, "test_noise_scale", s.test_noise_scale, w);
    if (j.contains("shift_schedule") == j.contains("rotation_stream"))
        throw InputError("config: scenario needs exactly one of 'shift_schedule' or 'rotation_stream'");
    if (j.contains("shift_schedule")) {
        for (const auto& t : j.at("shift_schedule")) {
            check_keys(t, {"rotation", "translation", "noise_scale"}, "scenario.shift_schedule[]");
            ShiftTransform st;
            read(t, "rotation", st.rotation, "shift_schedule");
            read(t, "translation", st.translation, "shift_schedule");
            read(t, "noise_scale", st.noise_scale, "shift_schedule");
            s.shift_schedule.push_back(std::move(st));
        }
    } else {
        const auto& r = j.at("rotation_stream");
        check_keys(r, {"increments", "total_radians"}, "scenario.rotation_stream");
        std::size_t count = 0;
        double total = 0.0;
        read(r, "increments", count, "rotation_stream");
        read(r, "total_radians", total, "rotation_stream");
        s.shift_schedule = rotation_schedule(count, total);
    }
    return s;
}

json scenario_json(const DriftScenario& s) {
    json schedule = json::array();
    for (const auto& t : s.shift_schedule)
        schedule.push_back({{"rotation", t.rotation}, {"translation", t.translation}, {"noise_scale", t.noise_scale}});
    return {{"generator", s.generator == Generator::GaussianBlobs ? "GaussianBlobs" : "TwoMoons"},
            {"class_count", s.class_count},
            {"dim", s.dim},
            {"samples_per_domain", s.samples_per_domain},
            {"blob_radius", s.blob_radius},
            {"blob_std", s.blob_std},
            {"moons_noise", s.moons_noise},
            {"source_increments", s.source_increments},
            {"test_noise_scale", s.test_noise_scale},
            {"shift_schedule", schedule}};
}

}  // namespace

void ExperimentConfig::validate() const {
    if (scenario.has_value() == csv.has_value())
        throw InputError("config: exactly one of 'scenario' or 'csv' must be given");
    if (scenario) scenario->validate();
    if (csv) {
        if (csv->domains.empty()) throw InputError("config: csv.domains is empty");
        if (csv->source_increments < 1 || csv->source_increments > csv->domains.size())
            throw InputError("config: csv.source_increments must be in [1, domain count]");
    }
    if (ablations.src_neg_ratio && !(*ablations.src_neg_ratio > 0.0))
        throw InputError("config: ablations.src_neg_ratio must be > 0");
    if (ablations.k_sigma_override && !(*ablations.k_sigma_override >= 0.0))
        throw InputError("config: ablations.k_sigma_override must be >= 0");
    double sum = 0.0;
    for (double f : split) {
        if (f < 0.0) throw InputError("config: split fractions must be non-negative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InputError("config: split fractions must sum to 1");
    if (split[1] <= 0.0) throw InputError("config: the test split must be non-empty");
    effective_foresighted().validate();
    effective_adapt().validate();
}

ForesightedConfig ExperimentConfig::effective_foresighted() const {
    ForesightedConfig f = foresighted;
    f.seed = seed;
    f.disable_ls1 = ablations.disable_ls1;
    if (ablations.k_sigma_override) f.k_sigma = *ablations.k_sigma_override;
    if (ablations.src_neg_ratio)
        f.n_neg = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(f.n_src) / *ablations.src_neg_ratio)));
    return f;
}

AdaptConfig ExperimentConfig::effective_adapt() const {
    AdaptConfig a = adapt;
    a.seed = seed;
    a.discriminator_hidden = foresighted.arch.discriminator_hidden;
    return a;
}

ExperimentConfig config_from_json(const json& doc) {
    check_keys(doc,
               {"method", "seed", "output_dir", "write_checkpoints", "split", "scenario", "csv", "foresighted",
                "adapt", "network", "ablations"},
               "config");
    ExperimentConfig c;
    std::string method = "ALEN";
    read(doc, "method", method, "config");
    if (method == "ALEN")
        c.method = Method::ALEN;
    else if (method == "FT")
        c.method = Method::FT;
    else
        throw InputError("config: method must be 'ALEN' or 'FT'");
    read(doc, "seed", c.seed, "config");
    std::string out;
    read(doc, "output_dir", out, "config");
    c.output_dir = out;
    read(doc, "write_checkpoints", c.write_checkpoints, "config");
    if (doc.contains("split")) {
        std::vector<double> s;
        read(doc, "split", s, "config");
        if (s.size() != 3) throw InputError("config: split must have 3 entries (train, test, val)");
        c.split = {s[0], s[1], s[2]};
    }
    if (doc.contains("scenario")) c.scenario = scenario_from(doc.at("scenario"));
    if (doc.contains("csv")) {
        const auto& j = doc.at("csv");
        check_keys(j, {"domains", "source_increments"}, "csv");
        CsvManifest m;
        read(j, "source_increments", m.source_increments, "csv");
        for (const auto& d : j.at("domains")) {
            check_keys(d, {"path", "domain_id"}, "csv.domains[]");
            CsvDomainSpec spec;
            std::string path;
            read(d, "path", path, "csv.domains[]");
            spec.path = path;
            read(d, "domain_id", spec.domain_id, "csv.domains[]");
            if (spec.domain_id.empty()) spec.domain_id = spec.path.stem().string();
            m.domains.push_back(std::move(spec));
        }
        c.csv = std::move(m);
    }
    if (doc.contains("foresighted")) {
        const auto& j = doc.at("foresighted");
        const std::string w = "foresighted";
        check_keys(j,
                   {"n_src", "n_neg", "k_sigma", "max_epochs", "convergence_tol", "patience", "warmup_epochs",
                    "ridge", "max_attempts_factor", "adam"},
                   w);
        auto& f = c.foresighted;
        read(j, "n_src", f.n_src, w);
        read(j, "n_neg", f.n_neg, w);
        read(j, "k_sigma", f.k_sigma, w);
        read(j, "max_epochs", f.max_epochs, w);
        read(j, "convergence_tol", f.convergence_tol, w);
        read(j, "patience", f.patience, w);
        read(j, "warmup_epochs", f.warmup_epochs, w);
        read(j, "ridge", f.ridge, w);
        read(j, "max_attempts_factor", f.max_attempts_factor, w);
        if (j.contains("adam")) read_adam(j.at("adam"), f.adam, "foresighted.adam");
    }
    if (doc.contains("adapt")) {
        const auto& j = doc.at("adapt");
        const std::string w = "adapt";
        check_keys(j,
                   {"n", "max_iters", "min_iters", "convergence_tol", "window", "samples_per_class",
                    "adversarial_lambda", "reset_discriminator", "adam"},
                   w);
        auto& a = c.adapt;
        read(j, "n", a.n, w);
        read(j, "max_iters", a.max_iters, w);
        read(j, "min_iters", a.min_iters, w);
        read(j, "convergence_tol", a.convergence_tol, w);
        read(j, "window", a.window, w);
        read(j, "samples_per_class", a.samples_per_class, w);
        read(j, "adversarial_lambda", a.adversarial_lambda, w);
        read(j, "reset_discriminator", a.reset_discriminator, w);
        if (j.contains("adam")) read_adam(j.at("adam"), a.adam, "adapt.adam");
    }
    if (doc.contains("network")) {
        const auto& j = doc.at("network");
        const std::string w = "network";
        check_keys(j, {"trunk_hidden", "latent_dim", "classifier_hidden", "discriminator_hidden"}, w);
        auto& n = c.foresighted.arch;
        read(j, "trunk_hidden", n.trunk_hidden, w);
        read(j, "latent_dim", n.latent_dim, w);
        read(j, "classifier_hidden", n.classifier_hidden, w);
        read(j, "discriminator_hidden", n.discriminator_hidden, w);
    }
    if (doc.contains("ablations")) {
        const auto& j = doc.at("ablations");
        const std::string w = "ablations";
        check_keys(j, {"disable_Ls1", "k_sigma_override", "src_neg_ratio"}, w);
        read(j, "disable_Ls1", c.ablations.disable_ls1, w);
        if (j.contains("k_sigma_override") && !j.at("k_sigma_override").is_null()) {
            double k = 0.0;
            read(j, "k_sigma_override", k, w);
            c.ablations.k_sigma_override = k;
        }
        if (j.contains("src_neg_ratio") && !j.at("src_neg_ratio").is_null()) {
            double r = 0.0;
            read(j, "src_neg_ratio", r, w);
            c.ablations.src_neg_ratio = r;
        }
    }
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    const auto& f = c.foresighted;
    const auto& a = c.adapt;
    json doc{{"method", to_string(c.method)},
             {"seed", c.seed},
             {"output_dir", c.output_dir.string()},
             {"write_checkpoints", c.write_checkpoints},
             {"split", {c.split[0], c.split[1], c.split[2]}},
             {"foresighted",
              {{"n_src", f.n_src},
               {"n_neg", f.n_neg},
               {"k_sigma", f.k_sigma},
               {"max_epochs", f.max_epochs},
               {"convergence_tol", f.convergence_tol},
               {"patience", f.patience},
               {"warmup_epochs", f.warmup_epochs},
               {"ridge", f.ridge},
               {"max_attempts_factor", f.max_attempts_factor},
               {"adam", adam_json(f.adam)}}},
             {"adapt",
              {{"n", a.n},
               {"max_iters", a.max_iters},
               {"min_iters", a.min_iters},
               {"convergence_tol", a.convergence_tol},
               {"window", a.window},
               {"samples_per_class", a.samples_per_class},
               {"adversarial_lambda", a.adversarial_lambda},
               {"reset_discriminator", a.reset_discriminator},
               {"adam", adam_json(a.adam)}}},
             {"network",
              {{"trunk_hidden", f.arch.trunk_hidden},
               {"latent_dim", f.arch.latent_dim},
               {"classifier_hidden", f.arch.classifier_hidden},
               {"discriminator_hidden", f.arch.discriminator_hidden}}},
             {"ablations",
              {{"disable_Ls1", c.ablations.disable_ls1},
               {"k_sigma_override", c.ablations.k_sigma_override ? json(*c.ablations.k_sigma_override) : json()},
               {"src_neg_ratio", c.ablations.src_neg_ratio ? json(*c.ablations.src_neg_ratio) : json()}}}};
    if (c.scenario) doc["scenario"] = scenario_json(*c.scenario);
    if (c.csv) {
        json domains = json::array();
        for (const auto& d : c.csv->domains) domains.push_back({{"path", d.path.string()}, {"domain_id", d.domain_id}});
        doc["csv"] = {{"domains", domains}, {"source_increments", c.csv->source_increments}};
    }
    return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    json doc = read_json_file(path);
    if (const char* env = std::getenv("ALEN_SEED"); env && *env) {
        try {
            doc["seed"] = std::stoull(env);
        } catch (const std::exception&) {
            throw InputError("ALEN_SEED is not an unsigned integer");
        }
    }
    return config_from_json(doc);
}

}  // namespace alen
