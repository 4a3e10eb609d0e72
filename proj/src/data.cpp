#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "alen/data.hpp"
#include "alen/errors.hpp"

namespace alen {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x616c656eu};
    return Rng(seq);
}

// ---- DomainBatch / SourceDataset ---------------------------------------------

void DomainBatch::validate(std::size_t class_count) const {
    if (!labels) throw InputError("domain '" + domain_id + "' has no labels");
    if (labels->size() != features.rows())
        throw InputError("domain '" + domain_id + "': label count differs from row count");
    for (Label y : *labels)
        if (y < 0 || static_cast<std::size_t>(y) >= class_count)
            throw InputError("domain '" + domain_id + "': label " + std::to_string(y) + " outside [0, " +
                             std::to_string(class_count) + ")");
}

DomainBatch DomainBatch::select(std::span<const std::size_t> rows) const {
    DomainBatch out{features.select_rows(rows), std::nullopt, domain_id, increment_index};
    if (labels) {
        std::vector<Label> l;
        l.reserve(rows.size());
        for (std::size_t r : rows) l.push_back((*labels)[r]);
        out.labels = std::move(l);
    }
    return out;
}

DomainBatch DomainBatch::unlabeled() const { return {features, std::nullopt, domain_id, increment_index}; }

SourceDataset::SourceDataset(DomainBatch batch) : batch_(std::move(batch)) {
    if (!batch_.labels) throw InputError("source dataset requires labels");
    if (batch_.size() == 0) throw InputError("source dataset is empty");
    Label max_label = 0;
    for (Label y : *batch_.labels) {
        if (y < 0) throw InputError("source dataset: negative label");
        max_label = std::max(max_label, y);
    }
    class_count_ = static_cast<std::size_t>(max_label) + 1;
    batch_.validate(class_count_);
}

const Matrix& SourceDataset::features() const {
    ++reads_;
    return batch_.features;
}

const std::vector<Label>& SourceDataset::labels() const {
    ++reads_;
    return *batch_.labels;
}

Matrix SourceDataset::rows(std::span<const std::size_t> indices) const {
    ++reads_;
    return batch_.features.select_rows(indices);
}

std::vector<Label> SourceDataset::labels_of(std::span<const std::size_t> indices) const {
    ++reads_;
    std::vector<Label> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back((*batch_.labels)[i]);
    return out;
}

// ---- synthetic drift -------------------------------------------------------------

void DriftScenario::validate() const {
    if (class_count < 1) throw InputError("scenario: class_count must be >= 1");
    if (dim < 1) throw InputError("scenario: dim must be >= 1");
    if (shift_schedule.empty()) throw InputError("scenario: shift_schedule is empty");
    if (samples_per_domain == 0) throw InputError("scenario: samples_per_domain must be >= 1");
    if (generator == Generator::GaussianBlobs && samples_per_domain < class_count)
        throw InputError("scenario: samples_per_domain must be >= class_count for GaussianBlobs");
    if (generator == Generator::TwoMoons && class_count != 2)
        throw InputError("scenario: TwoMoons requires class_count == 2");
    if (generator == Generator::TwoMoons && dim < 2) throw InputError("scenario: TwoMoons requires dim >= 2");
    if (source_increments < 1 || source_increments > shift_schedule.size())
        throw InputError("scenario: source_increments must be in [1, increment count]");
    for (const auto& t : shift_schedule) {
        if (t.rotation != 0.0 && dim < 2) throw InputError("scenario: rotation needs dim >= 2");
        if (!t.translation.empty() && t.translation.size() != dim)
            throw InputError("scenario: translation length differs from dim");
        if (t.noise_scale < 0.0) throw InputError("scenario: noise_scale must be >= 0");
    }
    if (test_noise_scale < 0.0) throw InputError("scenario: test_noise_scale must be >= 0");
}

Matrix apply_transform(const ShiftTransform& t, const Matrix& features) {
    Matrix out = features;
    const double c = std::cos(t.rotation), s = std::sin(t.rotation);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        if (r.size() >= 2 && t.rotation != 0.0) {
            const double x = r[0], y = r[1];
            r[0] = c * x - s * y;
            r[1] = s * x + c * y;
        }
        for (std::size_t j = 0; j < t.translation.size() && j < r.size(); ++j) r[j] += t.translation[j];
    }
    return out;
}

Matrix invert_transform(const ShiftTransform& t, const Matrix& features) {
    Matrix out = features;
    const double c = std::cos(t.rotation), s = std::sin(t.rotation);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < t.translation.size() && j < r.size(); ++j) r[j] -= t.translation[j];
        if (r.size() >= 2 && t.rotation != 0.0) {
            const double x = r[0], y = r[1];
            r[0] = c * x + s * y;
            r[1] = -s * x + c * y;
        }
    }
    return out;
}

std::vector<ShiftTransform> rotation_schedule(std::size_t count, double total_radians) {
    std::vector<ShiftTransform> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i].rotation = count > 1 ? total_radians * static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    return out;
}

namespace {

void draw_blobs(const DriftScenario& s, Rng& rng, Matrix& x, std::vector<Label>& y) {
    std::normal_distribution<double> normal(0.0, 1.0);
    // The remainder goes to the lowest class ids, one extra row each.
    const std::size_t base = s.samples_per_domain / s.class_count, extra = s.samples_per_domain % s.class_count;
    std::size_t r = 0;
    for (std::size_t c = 0; c < s.class_count; ++c) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(s.class_count);
        std::vector<double> center(s.dim, 0.0);
        if (s.dim >= 2) {
            center[0] = s.blob_radius * std::cos(angle);
            center[1] = s.blob_radius * std::sin(angle);
        } else {
            center[0] = s.blob_radius * static_cast<double>(c);
        }
        const std::size_t per_class = base + (c < extra ? 1 : 0);
        for (std::size_t k = 0; k < per_class; ++k, ++r) {
            for (std::size_t j = 0; j < s.dim; ++j) x(r, j) = center[j] + s.blob_std * normal(rng);
            y[r] = static_cast<Label>(c);
        }
    }
}

void draw_moons(const DriftScenario& s, Rng& rng, Matrix& x, std::vector<Label>& y) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = s.samples_per_domain;
    const std::size_t upper = n / 2 + n % 2;
    for (std::size_t r = 0; r < n; ++r) {
        const bool first = r < upper;
        const double t = std::numbers::pi * unit(rng);
        double px = first ? std::cos(t) : 1.0 - std::cos(t);
        double py = first ? std::sin(t) : 0.5 - std::sin(t);
        x(r, 0) = (px - 0.5) * s.blob_radius + s.moons_noise * s.blob_radius * normal(rng);
        x(r, 1) = (py - 0.25) * s.blob_radius + s.moons_noise * s.blob_radius * normal(rng);
        for (std::size_t j = 2; j < s.dim; ++j) x(r, j) = s.moons_noise * s.blob_radius * normal(rng);
        y[r] = first ? 0 : 1;
    }
}

}  // namespace

DomainBatch generate_domain(const DriftScenario& scenario, std::size_t increment_index, Rng& rng) {
    scenario.validate();
    if (increment_index >= scenario.increment_count())
        throw RangeError("increment index " + std::to_string(increment_index) + " outside schedule of length " +
                         std::to_string(scenario.increment_count()));
    Matrix x(scenario.samples_per_domain, scenario.dim);
    std::vector<Label> y(scenario.samples_per_domain);
    if (scenario.generator == Generator::GaussianBlobs)
        draw_blobs(scenario, rng, x, y);
    else
        draw_moons(scenario, rng, x, y);

    const ShiftTransform& t = scenario.shift_schedule[increment_index];
    Matrix shifted = apply_transform(t, x);
    if (t.noise_scale > 0.0) {
        std::normal_distribution<double> normal(0.0, t.noise_scale);
        for (double& v : shifted.data()) v += normal(rng);
    }
    return {std::move(shifted), std::move(y), "domain_" + std::to_string(increment_index), increment_index};
}

DomainBatch generate_domain(const DriftScenario& scenario, std::size_t increment_index) {
    Rng rng = make_rng(scenario.seed, increment_index);
    return generate_domain(scenario, increment_index, rng);
}

Split stratified_split(const DomainBatch& batch, double train, double test, double val, Rng& rng) {
    if (train < 0 || test < 0 || val < 0 || std::abs(train + test + val - 1.0) > 1e-9)
        throw InputError("stratified_split: fractions must be non-negative and sum to 1");
    if (!batch.labels) throw InputError("stratified_split: batch has no labels");
    std::map<Label, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < batch.size(); ++i) by_class[(*batch.labels)[i]].push_back(i);
    std::vector<std::size_t> tr, te, va;
    for (auto& [c, rows] : by_class) {
        if (rows.size() < 3)
            throw InputError("stratified_split: class " + std::to_string(c) + " has fewer than 3 samples");
        std::shuffle(rows.begin(), rows.end(), rng);
        const double n = static_cast<double>(rows.size());
        std::size_t n_train = static_cast<std::size_t>(std::llround(n * train));
        std::size_t n_test = static_cast<std::size_t>(std::llround(n * test));
        n_train = std::min(n_train, rows.size());
        n_test = std::min(n_test, rows.size() - n_train);
        tr.insert(tr.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        te.insert(te.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                  rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
        va.insert(va.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_test), rows.end());
    }
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    std::sort(va.begin(), va.end());
    return {batch.select(tr), batch.select(te), batch.select(va)};
}

// ---- CSV -------------------------------------------------------------------------

namespace {

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

bool parse_real(const std::string& cell, double& out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    const char* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

}  // namespace

DomainBatch load_csv_domain(const std::filesystem::path& path, bool has_labels, std::string domain_id) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::vector<double> values;
    std::vector<Label> labels;
    std::size_t width = 0, rows = 0, line_no = 0;
    std::string line;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_cells(line);
        std::vector<double> parsed(cells.size());
        bool numeric = true;
        for (std::size_t i = 0; i < cells.size() && numeric; ++i) numeric = parse_real(cells[i], parsed[i]);
        if (first_content) {
            first_content = false;
            if (!numeric) continue;  // header row
        }
        if (!numeric)
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": non-numeric cell");
        if (width == 0) {
            width = cells.size();
            if (has_labels && width < 2)
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": need a feature and a label column");
        } else if (cells.size() != width) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                             " cells, found " + std::to_string(cells.size()));
        }
        const std::size_t nf = has_labels ? width - 1 : width;
        values.insert(values.end(), parsed.begin(), parsed.begin() + static_cast<std::ptrdiff_t>(nf));
        if (has_labels) {
            const double lab = parsed.back();
            if (lab != std::floor(lab) || lab < 0 || lab > std::numeric_limits<Label>::max())
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": label is not a class index");
            labels.push_back(static_cast<Label>(lab));
        }
        ++rows;
    }
    if (rows == 0) throw InputError("'" + path.string() + "' contains no data rows");
    const std::size_t nf = has_labels ? width - 1 : width;
    DomainBatch out{Matrix(rows, nf, std::move(values)), std::nullopt,
                    domain_id.empty() ? path.stem().string() : std::move(domain_id), 0};
    if (has_labels) out.labels = std::move(labels);
    return out;
}

void write_csv_domain(const std::filesystem::path& path, const DomainBatch& batch) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = batch.features.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
        if (batch.labels) out << ',' << (*batch.labels)[i];
        out << '\n';
    }
}

}  // namespace alen
