#include "alen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "alen/adapter.hpp"
#include "alen/data.hpp"
#include "alen/foresighted.hpp"
#include "alen/loss.hpp"
#include "alen/prototype.hpp"

namespace alen {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
    return std::abs(analytic - numeric) / denom;
}

double central_difference(const std::function<double()>& loss, double& x, double h) {
    const double saved = x;
    x = saved + h;
    const double up = loss();
    x = saved - h;
    const double down = loss();
    x = saved;
    return (up - down) / (2.0 * h);
}

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (double& v : m.data()) v = n(rng);
    return m;
}

double weighted_sum(const Matrix& a, const Matrix& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * w.data()[i];
    return s;
}

void record(GradCheckEntry& e, double analytic, double numeric) {
    e.max_rel_error = std::max(e.max_rel_error, relative_error(analytic, numeric));
    ++e.checked;
}

/// Checks every trainable parameter of `net` against `loss`.
void check_params(GradCheckEntry& e, Network& net, const Gradients& grads, const std::function<double()>& loss,
                  const std::vector<double>& sign_per_param) {
    for (std::size_t p = 0; p < net.params().size(); ++p) {
        if (!net.params()[p].trainable) continue;
        for (std::size_t k = 0; k < net.params()[p].values.size(); ++k) {
            const double fd = central_difference(loss, net.params()[p].values[k]);
            record(e, grads.arrays[p][k], sign_per_param[p] * fd);
        }
    }
}

std::vector<double> unit_signs(const Network& net) { return std::vector<double>(net.params().size(), 1.0); }

}  // namespace

GradCheckEntry check_network_gradients(const Network& source, const Matrix& x, Mode mode, Rng& rng,
                                       std::string name) {
    GradCheckEntry entry{std::move(name), 0.0, 0};
    Network net = source;
    Matrix input = x;
    const std::size_t out_cols = net.layers().empty() ? x.cols() : net.output_dim();
    const Matrix r = random_matrix(x.rows(), out_cols, rng);

    auto loss = [&]() { return weighted_sum(net.forward(input, mode), r); };
    net.forward(input, mode);
    const BackwardResult analytic = net.backward(r);

    // Reversal factor seen by layer l = product of -lambda over GradReverse layers after l.
    std::vector<double> layer_sign(net.layers().size() + 1, 1.0);
    for (std::size_t l = net.layers().size(); l-- > 0;) {
        layer_sign[l] = layer_sign[l + 1];
        if (net.layers()[l].kind == LayerKind::GradReverse) layer_sign[l] *= -net.layers()[l].lambda;
    }
    std::vector<double> param_sign(net.params().size(), 1.0);
    {
        std::size_t p = 0;
        for (std::size_t l = 0; l < net.layers().size(); ++l) {
            const auto kind = net.layers()[l].kind;
            const std::size_t count = kind == LayerKind::Dense ? 2 : kind == LayerKind::BatchNorm ? 4 : 0;
            for (std::size_t k = 0; k < count; ++k) param_sign[p++] = layer_sign[l + 1];
        }
    }
    check_params(entry, net, analytic.grads, loss, param_sign);
    for (std::size_t k = 0; k < input.size(); ++k) {
        const double fd = central_difference(loss, input.data()[k]);
        record(entry, analytic.input_grad.data()[k], layer_sign[0] * fd);
    }
    return entry;
}

namespace {

void merge(std::map<std::string, GradCheckEntry>& acc, std::vector<std::string>& order, const GradCheckEntry& e) {
    auto it = acc.find(e.name);
    if (it == acc.end()) {
        acc.emplace(e.name, e);
        order.push_back(e.name);
        return;
    }
    it->second.max_rel_error = std::max(it->second.max_rel_error, e.max_rel_error);
    it->second.checked += e.checked;
}

void randomize_batch_norm_stats(Network& net, Rng& rng) {
    std::uniform_real_distribution<double> u(0.5, 2.0), m(-0.5, 0.5);
    for (auto& p : net.params()) {
        const bool gamma = p.name.ends_with(".gamma"), beta = p.name.ends_with(".beta");
        const bool rmean = p.name.ends_with(".running_mean"), rvar = p.name.ends_with(".running_var");
        for (double& v : p.values) {
            if (gamma || rvar) v = u(rng);
            if (beta || rmean) v = m(rng);
        }
    }
}

std::vector<Label> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
    std::uniform_int_distribution<Label> d(0, static_cast<Label>(classes) - 1);
    std::vector<Label> y(n);
    for (auto& v : y) v = d(rng);
    return y;
}

PrototypeBank random_bank(std::size_t classes, std::size_t dim, Rng& rng) {
    const std::size_t per = 5 * dim;
    Matrix f(classes * per, dim);
    std::vector<Label> y(classes * per);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t k = 0; k < per; ++k) {
            const std::size_t r = c * per + k;
            for (std::size_t j = 0; j < dim; ++j) f(r, j) = 1.5 * static_cast<double>(c) * (j == 0) + n(rng);
            y[r] = static_cast<Label>(c);
        }
    return fit_prototypes(f, y, 3.0, 1e-6);
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed) {
    std::map<std::string, GradCheckEntry> acc;
    std::vector<std::string> order;
    const ArchitectureConfig arch{12, 6, 8, 8};
    const std::size_t input_dim = 3, classes = 3, batch = 6;

    for (std::size_t s = 0; s < seeds; ++s) {
        Rng rng = make_rng(base_seed, s);
        std::uniform_real_distribution<double> lam(0.1, 2.0);

        merge(acc, order, check_network_gradients(Network({LayerSpec::dense(3, 2)}, rng), random_matrix(batch, 3, rng),
                                                  Mode::Train, rng, "layer:Dense"));
        merge(acc, order, check_network_gradients(Network({LayerSpec::elu(4)}, rng), random_matrix(batch, 4, rng),
                                                  Mode::Train, rng, "layer:Elu"));
        {
            Network bn({LayerSpec::batch_norm(4)}, rng);
            randomize_batch_norm_stats(bn, rng);
            merge(acc, order, check_network_gradients(bn, random_matrix(batch, 4, rng, 2.0), Mode::Train, rng,
                                                      "layer:BatchNorm(train)"));
            merge(acc, order, check_network_gradients(bn, random_matrix(batch, 4, rng, 2.0), Mode::Eval, rng,
                                                      "layer:BatchNorm(eval)"));
        }
        merge(acc, order,
              check_network_gradients(Network({LayerSpec::grad_reverse(4, lam(rng))}, rng),
                                      random_matrix(batch, 4, rng), Mode::Train, rng, "layer:GradReverse"));

        Network fe(feature_extractor_layers(input_dim, arch), rng);
        randomize_batch_norm_stats(fe, rng);
        Network cls(classifier_layers(arch.latent_dim, arch.classifier_hidden, classes + 1), rng);
        Network disc(discriminator_layers(arch.latent_dim, arch.discriminator_hidden), rng);
        merge(acc, order, check_network_gradients(fe, random_matrix(batch, input_dim, rng), Mode::Train, rng,
                                                  "net:feature_extractor"));
        merge(acc, order, check_network_gradients(cls, random_matrix(batch, arch.latent_dim, rng), Mode::Train, rng,
                                                  "net:classifier"));
        merge(acc, order, check_network_gradients(disc, random_matrix(batch, arch.latent_dim, rng), Mode::Train,
                                                  rng, "net:discriminator"));
        {
            auto layers = discriminator_layers(arch.latent_dim, arch.discriminator_hidden);
            layers.insert(layers.begin(), LayerSpec::grad_reverse(arch.latent_dim, lam(rng)));
            merge(acc, order, check_network_gradients(Network(layers, rng), random_matrix(batch, arch.latent_dim, rng),
                                                      Mode::Train, rng, "net:reversed_discriminator"));
        }

        // softmax cross-entropy w.r.t. logits
        {
            GradCheckEntry e{"loss:softmax_cross_entropy", 0.0, 0};
            Matrix logits = random_matrix(batch, classes + 1, rng, 2.0);
            const auto y = random_labels(batch, classes + 1, rng);
            const auto analytic = softmax_cross_entropy(logits, y);
            auto loss = [&] { return softmax_cross_entropy(logits, y).loss; };
            for (std::size_t k = 0; k < logits.size(); ++k)
                record(e, analytic.grad.data()[k], central_difference(loss, logits.data()[k]));
            merge(acc, order, e);
        }
        // class separability w.r.t. latent features
        {
            GradCheckEntry e{"loss:class_separability", 0.0, 0};
            const PrototypeBank bank = random_bank(classes, arch.latent_dim, rng);
            Matrix u = random_matrix(batch, arch.latent_dim, rng);
            const auto y = random_labels(batch, classes, rng);
            const auto analytic = class_separability_loss(bank, u, y);
            auto loss = [&] { return class_separability_loss(bank, u, y).loss; };
            for (std::size_t k = 0; k < u.size(); ++k)
                record(e, analytic.grad.data()[k], central_difference(loss, u.data()[k]));
            merge(acc, order, e);
        }
        // L_s2 w.r.t. f_s and g_s
        {
            GradCheckEntry e{"loss:Ls2", 0.0, 0};
            SourceModel m = make_source_model(input_dim, classes, arch, rng);
            const Matrix x = random_matrix(batch, input_dim, rng);
            const auto y = random_labels(batch, classes, rng);
            const Matrix neg = random_matrix(4, arch.latent_dim, rng, 2.0);
            const std::vector<Label> ny(4, static_cast<Label>(classes));
            const Ls2Result analytic = compute_ls2(m, x, y, neg, ny);
            auto loss = [&] { return compute_ls2(m, x, y, neg, ny).loss; };
            check_params(e, m.feature_extractor, analytic.feature_grads, loss, unit_signs(m.feature_extractor));
            check_params(e, m.classifier, analytic.classifier_grads, loss, unit_signs(m.classifier));
            merge(acc, order, e);
        }
        // L_c w.r.t. g_t, and L_d w.r.t. d and f_t
        {
            SourceModel src = make_source_model(input_dim, classes, arch, rng);
            TargetModel t = init_from_source(src, arch.discriminator_hidden, rng);
            const Matrix lat = random_matrix(batch, arch.latent_dim, rng, 1.5);
            const auto y = random_labels(batch, classes, rng);
            GradCheckEntry ec{"loss:retention", 0.0, 0};
            const RetentionResult rc = retention_loss_on(t, lat, y);
            auto lc = [&] { return retention_loss_on(t, lat, y).loss; };
            check_params(ec, t.classifier, rc.classifier_grads, lc, unit_signs(t.classifier));
            merge(acc, order, ec);

            GradCheckEntry ed{"loss:domain_confusion", 0.0, 0};
            const Matrix tx = random_matrix(batch, input_dim, rng);
            const ConfusionResult rd = domain_confusion_loss(t, lat, tx);
            auto ld = [&] { return domain_confusion_loss(t, lat, tx).loss; };
            check_params(ed, t.discriminator, rd.discriminator_grads, ld, unit_signs(t.discriminator));
            check_params(ed, t.feature_extractor, rd.feature_grads, ld, unit_signs(t.feature_extractor));
            merge(acc, order, ed);
        }
    }
    std::vector<GradCheckEntry> out;
    for (const auto& name : order) out.push_back(acc.at(name));
    return out;
}

}  // namespace alen
