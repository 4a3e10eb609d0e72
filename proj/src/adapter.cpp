#include "alen/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>

#include "alen/errors.hpp"
#include "alen/loss.hpp"

namespace alen {

void AdaptConfig::validate() const {
    if (n < 1) throw InputError("adapt: n must be >= 1");
    if (samples_per_class < 1) throw InputError("adapt: samples_per_class must be >= 1");
    if (max_iters < 1) throw InputError("adapt: max_iters must be >= 1");
    if (window < 1) throw InputError("adapt: window must be >= 1");
    if (adversarial_lambda < 0.0) throw InputError("adapt: adversarial_lambda must be >= 0");
}

TargetModel init_from_source(const SourceModel& source, std::size_t discriminator_hidden, Rng& rng) {
    TargetModel t;
    t.feature_extractor = source.feature_extractor;
    t.classifier = source.classifier;
    t.feature_extractor.clear_cache();
    t.classifier.clear_cache();
    t.discriminator = Network(discriminator_layers(t.feature_extractor.output_dim(), discriminator_hidden), rng);
    t.class_count = source.class_count;
    return t;
}

LabeledLatents sample_class_latents(const PrototypeBank& bank, std::size_t samples_per_class, Rng& rng) {
    LabeledLatents out{Matrix(0, bank.latent_dim()), {}};
    for (const auto& [c, proto] : bank.per_class()) {
        out.latents = out.latents.vstack(sample(proto, samples_per_class, rng));
        out.labels.insert(out.labels.end(), samples_per_class, c);
    }
    return out;
}

RetentionResult retention_loss_on(TargetModel& model, const Matrix& latents, std::span<const Label> labels) {
    for (Label y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= model.class_count)
            throw InputError("retention_loss: label " + std::to_string(y) + " is not a real class");
    const Matrix logits = model.classifier.forward(latents, Mode::Train);
    const LossAndGrad ce = softmax_cross_entropy(logits, labels);
    return {ce.loss, model.classifier.backward(ce.grad).grads, model.feature_extractor.zero_gradients()};
}

RetentionResult retention_loss(TargetModel& model, const PrototypeBank& bank, std::size_t samples_per_class,
                               Rng& rng) {
    for (std::size_t c = 0; c < model.class_count; ++c)
        if (!bank.contains(static_cast<Label>(c)))
            throw InputError("retention_loss: prototype bank is missing class " + std::to_string(c));
    const LabeledLatents draws = sample_class_latents(bank, samples_per_class, rng);
    return retention_loss_on(model, draws.latents, draws.labels);
}

ConfusionResult domain_confusion_loss(TargetModel& model, const Matrix& source_latents,
                                      const Matrix& target_inputs) {
    if (source_latents.cols() != model.discriminator.input_dim())
        throw ShapeError("domain_confusion_loss: source latents have the wrong width");
    if (target_inputs.cols() != model.feature_extractor.input_dim())
        throw ShapeError("domain_confusion_loss: target inputs have the wrong width");
    ConfusionResult out;
    std::size_t correct = 0;

    const Matrix src_logits = model.discriminator.forward(source_latents, Mode::Train);
    const std::vector<Label> zeros(source_latents.rows(), 0);
    const LossAndGrad src = softmax_cross_entropy(src_logits, zeros);
    out.discriminator_grads = model.discriminator.backward(src.grad).grads;
    for (Label p : argmax_rows(src_logits)) correct += p == 0;

    const Matrix v = model.feature_extractor.forward(target_inputs, Mode::Train);
    const Matrix tgt_logits = model.discriminator.forward(v, Mode::Train);
    const std::vector<Label> ones(target_inputs.rows(), 1);
    const LossAndGrad tgt = softmax_cross_entropy(tgt_logits, ones);
    BackwardResult d_tgt = model.discriminator.backward(tgt.grad);
    out.discriminator_grads += d_tgt.grads;
    out.feature_grads = model.feature_extractor.backward(d_tgt.input_grad).grads;
    for (Label p : argmax_rows(tgt_logits)) correct += p == 1;

    out.source_term = src.loss;
    out.target_term = tgt.loss;
    out.loss = src.loss + tgt.loss;
    const std::size_t total = source_latents.rows() + target_inputs.rows();
    out.discriminator_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return out;
}

IncrementAdapter::IncrementAdapter(TargetModel& model, const PrototypeBank& bank, AdaptConfig config)
    : model_(model),
      bank_(bank),
      config_(config),
      classifier_state_(model.classifier, config.adam),
      discriminator_state_(model.discriminator, config.adam),
      feature_state_(model.feature_extractor, config.adam) {
    config_.validate();
    if (bank.latent_dim() != model.latent_dim())
        throw ShapeError("adapter: prototype latent width differs from the feature extractor output");
}

AdaptStepRecord IncrementAdapter::step(const Matrix& target_batch, Rng& rng) {
    AdaptStepRecord rec;
    rec.iter = ++iter_;

    RetentionResult keep = retention_loss(model_, bank_, config_.samples_per_class, rng);
    adam_step(model_.classifier, classifier_state_, keep.classifier_grads);
    rec.retention = keep.loss;

    const Matrix source_latents = sample_class_latents(bank_, config_.samples_per_class, rng).latents;
    ConfusionResult conf = domain_confusion_loss(model_, source_latents, target_batch);
    apply_signed_update(model_.discriminator, conf.discriminator_grads, discriminator_state_, +1);
    rec.feature_descent_delta = apply_signed_update(model_.feature_extractor, conf.feature_grads, feature_state_,
                                                    -1, config_.adversarial_lambda);
    rec.confusion = conf.loss;
    rec.discriminator_accuracy = conf.discriminator_accuracy;
    return rec;
}

AdaptResult adapt_increment(TargetModel model, const PrototypeBank& bank, const DomainBatch& target_data,
                            const AdaptConfig& config) {
    config.validate();
    if (target_data.size() == 0) throw InputError("adapt_increment: empty target data");
    if (target_data.size() < 2) throw InputError("adapt_increment: need at least 2 target rows");
    Rng rng = make_rng(config.seed, 1000 + target_data.increment_index);
    AdaptResult result;
    result.model = std::move(model);
    IncrementAdapter adapter(result.model, bank, config);

    const std::size_t rows = target_data.size();
    const std::size_t batch = std::min(config.n, rows);
    std::vector<std::size_t> perm(rows);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t cursor = rows;
    const double chance = 2.0 * std::numbers::ln2;
    std::deque<double> window;
    double window_sum = 0.0;

    for (std::size_t it = 0; it < config.max_iters; ++it) {
        if (cursor + batch > rows) {
            std::shuffle(perm.begin(), perm.end(), rng);
            cursor = 0;
        }
        const std::span<const std::size_t> pick(perm.data() + cursor, batch);
        cursor += batch;
        const Matrix x = target_data.features.select_rows(pick);
        const AdaptStepRecord rec = adapter.step(x, rng);
        result.log.push_back({rec.iter, rec.retention, rec.confusion, rec.discriminator_accuracy});

        window.push_back(rec.confusion);
        window_sum += rec.confusion;
        if (window.size() > config.window) {
            window_sum -= window.front();
            window.pop_front();
        }
        if (rec.iter >= config.min_iters && window.size() == config.window &&
            std::abs(window_sum / static_cast<double>(config.window) - chance) < config.convergence_tol) {
            result.converged = true;
            break;
        }
    }
    result.model.feature_extractor.clear_cache();
    result.model.classifier.clear_cache();
    result.model.discriminator.clear_cache();
    return result;
}

StreamResult adapt_stream(const SourceModel& source, std::span<const DomainBatch> increments,
                          const AdaptConfig& config) {
    if (increments.empty()) throw InputError("adapt_stream: no increments");
    Rng rng = make_rng(config.seed, 7);
    StreamResult out;
    out.model = init_from_source(source, config.discriminator_hidden, rng);
    for (std::size_t i = 0; i < increments.size(); ++i) {
        if (i > 0 && config.reset_discriminator)
            out.model.discriminator = Network(
                discriminator_layers(out.model.latent_dim(), config.discriminator_hidden), rng);
        AdaptResult r = adapt_increment(std::move(out.model), source.bank, increments[i], config);
        out.model = std::move(r.model);
        out.snapshots.push_back(out.model);
        out.logs.push_back(std::move(r.log));
    }
    return out;
}

void write_adapt_log_csv(const std::filesystem::path& path, const std::vector<AdaptLogRow>& log) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "iter,L_c,L_d,discriminator_accuracy\n";
    for (const auto& r : log)
        out << r.iter << ',' << r.retention << ',' << r.confusion << ',' << r.discriminator_accuracy << '\n';
}

}  // namespace alen
