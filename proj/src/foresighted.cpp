#include "alen/foresighted.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>

#include "alen/errors.hpp"
#include "alen/loss.hpp"

namespace alen {

std::vector<LayerSpec> feature_extractor_layers(std::size_t input_dim, const ArchitectureConfig& arch) {
    const std::size_t h = arch.trunk_hidden, z = arch.latent_dim;
    return {LayerSpec::dense(input_dim, h), LayerSpec::elu(h),   LayerSpec::batch_norm(h),
            LayerSpec::dense(h, z),         LayerSpec::elu(z),   LayerSpec::dense(z, z),
            LayerSpec::elu(z),              LayerSpec::batch_norm(z)};
}

std::vector<LayerSpec> classifier_layers(std::size_t latent_dim, std::size_t hidden, std::size_t outputs) {
    return {LayerSpec::dense(latent_dim, hidden), LayerSpec::elu(hidden), LayerSpec::dense(hidden, outputs)};
}

std::vector<LayerSpec> discriminator_layers(std::size_t latent_dim, std::size_t hidden) {
    return classifier_layers(latent_dim, hidden, 2);
}

std::string_view to_string(Objective o) {
    switch (o) {
        case Objective::Warmup: return "warmup";
        case Objective::Ls1: return "Ls1";
        case Objective::Ls2: return "Ls2";
        case Objective::CrossEntropy: return "ce";
    }
    return "?";
}

void ForesightedConfig::validate() const {
    if (n_src < 1) throw InputError("foresighted: n_src must be >= 1");
    if (n_neg < 1) throw InputError("foresighted: n_neg must be >= 1");
    if (max_epochs < 1) throw InputError("foresighted: max_epochs must be >= 1");
    if (k_sigma < 0.0) throw InputError("foresighted: k_sigma must be >= 0");
    if (max_attempts_factor < 1) throw InputError("foresighted: max_attempts_factor must be >= 1");
    if (arch.latent_dim < 1 || arch.trunk_hidden < 1 || arch.classifier_hidden < 1)
        throw InputError("foresighted: architecture widths must be >= 1");
}

SourceModel make_source_model(std::size_t input_dim, std::size_t class_count, const ArchitectureConfig& arch,
                              Rng& rng) {
    SourceModel m;
    m.feature_extractor = Network(feature_extractor_layers(input_dim, arch), rng);
    m.classifier = Network(classifier_layers(arch.latent_dim, arch.classifier_hidden, class_count + 1), rng);
    m.class_count = class_count;
    return m;
}

Matrix predict_logits(const Network& features, const Network& classifier, const Matrix& x) {
    return classifier.predict(features.predict(x));
}

std::vector<Label> predict_labels(const Network& features, const Network& classifier, const Matrix& x) {
    return argmax_rows(predict_logits(features, classifier, x));
}

double dataset_cross_entropy(const SourceModel& model, const SourceDataset& data) {
    return softmax_cross_entropy(predict_logits(model.feature_extractor, model.classifier, data.features()),
                                 data.labels())
        .loss;
}

double dataset_accuracy(const SourceModel& model, const SourceDataset& data) {
    const auto pred = predict_labels(model.feature_extractor, model.classifier, data.features());
    const auto& y = data.labels();
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
    return static_cast<double>(hit) / static_cast<double>(y.size());
}

PrototypeBank refit_bank(const SourceModel& model, const SourceDataset& data, double k_sigma, double ridge) {
    return fit_prototypes(model.feature_extractor.predict(data.features()), data.labels(), k_sigma, ridge);
}

Ls2Result compute_ls2(SourceModel& model, const Matrix& source_x, std::span<const Label> source_y,
                      const Matrix& negatives, std::span<const Label> negative_y) {
    if (negatives.rows() != negative_y.size()) throw ShapeError("compute_ls2: negative label count mismatch");
    for (Label y : negative_y)
        if (y != model.ood_label())
            throw InputError("compute_ls2: negative row labeled " + std::to_string(y) + ", expected OOD label " +
                             std::to_string(model.ood_label()));
    for (Label y : source_y)
        if (y < 0 || y >= model.ood_label()) throw InputError("compute_ls2: source label outside the real classes");

    Ls2Result out;
    const Matrix u = model.feature_extractor.forward(source_x, Mode::Train);
    const Matrix logits = model.classifier.forward(u, Mode::Train);
    const LossAndGrad src = softmax_cross_entropy(logits, source_y);
    BackwardResult g_src = model.classifier.backward(src.grad);
    BackwardResult f_src = model.feature_extractor.backward(g_src.input_grad);
    out.source_loss = src.loss;
    out.feature_grads = std::move(f_src.grads);
    out.classifier_grads = std::move(g_src.grads);

    if (negatives.rows() > 0) {
        if (negatives.cols() != model.classifier.input_dim())
            throw ShapeError("compute_ls2: negatives must be latent rows");
        const Matrix neg_logits = model.classifier.forward(negatives, Mode::Train);
        const LossAndGrad neg = softmax_cross_entropy(neg_logits, negative_y);
        out.classifier_grads += model.classifier.backward(neg.grad).grads;
        out.negative_loss = neg.loss;
    }
    out.loss = out.source_loss + out.negative_loss;
    return out;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t end = std::min(n, start + batch);
        // A single-row tail cannot form batch statistics; fold it into the previous batch.
        if (end - start < 2 && !out.empty()) {
            out.back().insert(out.back().end(), perm.begin() + static_cast<std::ptrdiff_t>(start),
                              perm.begin() + static_cast<std::ptrdiff_t>(end));
            break;
        }
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

/// One cross-entropy minibatch step on g(f(x)) updating both networks.
double ce_step(SourceModel& model, const SourceDataset& data, std::span<const std::size_t> rows,
               AdamState& f_state, AdamState& g_state) {
    const Matrix x = data.rows(rows);
    const auto y = data.labels_of(rows);
    const Matrix u = model.feature_extractor.forward(x, Mode::Train);
    const Matrix logits = model.classifier.forward(u, Mode::Train);
    const LossAndGrad ce = softmax_cross_entropy(logits, y);
    BackwardResult g = model.classifier.backward(ce.grad);
    BackwardResult f = model.feature_extractor.backward(g.input_grad);
    adam_step(model.classifier, g_state, g.grads);
    adam_step(model.feature_extractor, f_state, f.grads);
    return ce.loss;
}

void run_warmup(SourceModel& model, const SourceDataset& data, const ForesightedConfig& config, Rng& rng,
                AdamState& f_state, AdamState& g_state, std::vector<IterationLog>* log) {
    if (data.size() == 0) throw InputError("warmup: empty dataset");
    for (std::size_t e = 0; e < config.warmup_epochs; ++e)
        for (const auto& batch : make_batches(data.size(), config.n_src, rng)) {
            const double loss = ce_step(model, data, batch, f_state, g_state);
            if (log) log->push_back({log->size() + 1, 0, Objective::Warmup, loss, 0, 0.0});
        }
}

SourceModel initial_model(const SourceDataset& data, const ForesightedConfig& config,
                          const SourceModel* warm_start, Rng& rng) {
    if (!warm_start) return make_source_model(data.input_dim(), data.class_count(), config.arch, rng);
    if (warm_start->feature_extractor.input_dim() != data.input_dim())
        throw ShapeError("warm start: input width differs from dataset");
    if (warm_start->class_count < data.class_count())
        throw InputError("warm start: dataset has classes unknown to the model");
    SourceModel m = *warm_start;
    m.feature_extractor.clear_cache();
    m.classifier.clear_cache();
    return m;
}

bool converged(const std::vector<double>& totals, double tol, std::size_t patience) {
    if (totals.size() < patience + 1) return false;
    for (std::size_t k = 0; k < patience; ++k) {
        const double prev = totals[totals.size() - 2 - k];
        const double cur = totals[totals.size() - 1 - k];
        const double rel = (prev - cur) / std::max(std::abs(prev), 1e-12);
        if (rel >= tol) return false;
    }
    return true;
}

}  // namespace

void warmup(SourceModel& model, const SourceDataset& data, const ForesightedConfig& config, Rng& rng) {
    AdamState f_state(model.feature_extractor, config.adam);
    AdamState g_state(model.classifier, config.adam);
    run_warmup(model, data, config, rng, f_state, g_state, nullptr);
}

ForesightedResult foresighted_train(const SourceDataset& data, const ForesightedConfig& config,
                                    const SourceModel* warm_start) {
    config.validate();
    Rng rng = make_rng(config.seed, 1);
    ForesightedResult result;
    result.deviation_flags.push_back("warmup_updates_classifier");
    SourceModel& model = result.model;
    model = initial_model(data, config, warm_start, rng);

    // Opt[0] = Adam over f_s (separability); Opt[1] = Adam over {f_s, g_s}.
    AdamState sep_f(model.feature_extractor, config.adam);
    AdamState joint_f(model.feature_extractor, config.adam);
    AdamState joint_g(model.classifier, config.adam);

    run_warmup(model, data, config, rng, joint_f, joint_g, &result.iterations);
    model.bank = refit_bank(model, data, config.k_sigma, config.ridge);

    const std::size_t max_attempts = config.max_attempts_factor * config.n_neg;
    std::vector<double> totals;
    std::size_t iter = 0;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double sum_ls1 = 0.0, sum_ls2 = 0.0;
        std::size_t n_ls1 = 0, n_ls2 = 0, accepted = 0;
        for (const auto& batch : make_batches(data.size(), config.n_src, rng)) {
            ++iter;
            const bool ls2_turn = iter % 2 == 1;
            if (ls2_turn) {
                NegativeSamples neg = identify_negative_samples(model.bank, config.n_neg, rng, max_attempts);
                if (neg.shortfall()) ++result.negative_shortfalls;
                const Matrix x = data.rows(batch);
                const auto y = data.labels_of(batch);
                Ls2Result ls2 = compute_ls2(model, x, y, neg.samples, neg.labels);
                adam_step(model.feature_extractor, joint_f, ls2.feature_grads);
                adam_step(model.classifier, joint_g, ls2.classifier_grads);
                sum_ls2 += ls2.loss;
                ++n_ls2;
                ++result.ls2_updates;
                accepted += neg.labels.size();
                result.iterations.push_back(
                    {iter, epoch, Objective::Ls2, ls2.loss, neg.labels.size(), neg.k_sigma});
            } else {
                if (config.disable_ls1) continue;
                const Matrix x = data.rows(batch);
                const auto y = data.labels_of(batch);
                const Matrix u = model.feature_extractor.forward(x, Mode::Eval);
                const LossAndGrad ls1 = class_separability_loss(model.bank, u, y);
                adam_step(model.feature_extractor, sep_f, model.feature_extractor.backward(ls1.grad).grads);
                sum_ls1 += ls1.loss;
                ++n_ls1;
                ++result.ls1_updates;
                result.iterations.push_back({iter, epoch, Objective::Ls1, ls1.loss, 0, model.bank.k_sigma()});
            }
        }
        model.bank = refit_bank(model, data, config.k_sigma, config.ridge);

        EpochLog e;
        e.epoch = epoch;
        e.mean_ls1 = n_ls1 ? sum_ls1 / static_cast<double>(n_ls1) : std::numeric_limits<double>::quiet_NaN();
        e.mean_ls2 = n_ls2 ? sum_ls2 / static_cast<double>(n_ls2) : 0.0;
        e.train_accuracy = dataset_accuracy(model, data);
        e.negatives_accepted = accepted;
        result.epochs.push_back(e);
        totals.push_back((n_ls1 ? e.mean_ls1 : 0.0) + e.mean_ls2);
        if (converged(totals, config.convergence_tol, config.patience)) break;
    }
    if (result.negative_shortfalls > 0)
        std::cerr << "warning: negative sampling fell short of n_neg in " << result.negative_shortfalls
                  << " iteration(s)\n";
    model.feature_extractor.clear_cache();
    model.classifier.clear_cache();
    return result;
}

CrossEntropyResult train_cross_entropy(const SourceDataset& data, const ForesightedConfig& config,
                                       const SourceModel* warm_start) {
    config.validate();
    Rng rng = make_rng(config.seed, 2);
    CrossEntropyResult result;
    result.model = initial_model(data, config, warm_start, rng);
    SourceModel& model = result.model;
    AdamState f_state(model.feature_extractor, config.adam);
    AdamState g_state(model.classifier, config.adam);
    std::vector<double> totals;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& batch : make_batches(data.size(), config.n_src, rng)) {
            sum += ce_step(model, data, batch, f_state, g_state);
            ++n;
        }
        EpochLog e;
        e.epoch = epoch;
        e.mean_ls1 = std::numeric_limits<double>::quiet_NaN();
        e.mean_ls2 = sum / static_cast<double>(n);
        e.train_accuracy = dataset_accuracy(model, data);
        result.epochs.push_back(e);
        totals.push_back(e.mean_ls2);
        if (converged(totals, config.convergence_tol, config.patience)) break;
    }
    model.bank = refit_bank(model, data, config.k_sigma, config.ridge);
    model.feature_extractor.clear_cache();
    model.classifier.clear_cache();
    return result;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

}  // namespace

void write_epoch_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    auto out = open_csv(path);
    out << "epoch,mean_Ls1,mean_Ls2,train_accuracy,negatives_accepted\n";
    for (const auto& e : log) {
        out << e.epoch << ',';
        if (!std::isnan(e.mean_ls1)) out << e.mean_ls1;
        out << ',' << e.mean_ls2 << ',' << e.train_accuracy << ',' << e.negatives_accepted << '\n';
    }
}

void write_iteration_log_csv(const std::filesystem::path& path, const std::vector<IterationLog>& log) {
    auto out = open_csv(path);
    out << "iter,epoch,objective,loss,negatives_accepted,k_sigma\n";
    for (const auto& e : log)
        out << e.iter << ',' << e.epoch << ',' << to_string(e.objective) << ',' << e.loss << ','
            << e.negatives_accepted << ',' << e.k_sigma << '\n';
}

}  // namespace alen
