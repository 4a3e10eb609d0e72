#include "alen/metrics.hpp"

#include "alen/errors.hpp"

namespace alen {

double accuracy(std::span<const Label> predictions, std::span<const Label> labels) {
    if (predictions.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
    if (labels.empty()) throw InputError("accuracy: no samples");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

void AccuracyMatrix::append_row(std::vector<double> row) {
    if (row.size() != rows_.size() + 1)
        throw ShapeError("accuracy matrix: row " + std::to_string(rows_.size()) + " must have " +
                         std::to_string(rows_.size() + 1) + " entries");
    for (double a : row)
        if (!(a >= 0.0 && a <= 1.0)) throw InputError("accuracy matrix: entries must lie in [0, 1]");
    rows_.push_back(std::move(row));
}

double AccuracyMatrix::at(std::size_t i, std::size_t j) const {
    if (i >= rows_.size() || j > i) throw RangeError("accuracy matrix: entry is undefined");
    return rows_[i][j];
}

double average_accuracy(const AccuracyMatrix& m) {
    if (m.increments() == 0) throw InputError("average_accuracy: empty matrix");
    const auto& last = m.row(m.increments() - 1);
    double s = 0.0;
    for (double a : last) s += a;
    return s / static_cast<double>(last.size());
}

double forgetting(const AccuracyMatrix& m) {
    if (m.increments() < 2) throw InputError("forgetting: undefined for fewer than 2 increments");
    const std::size_t last = m.increments() - 1;
    double s = 0.0;
    for (std::size_t j = 0; j < last; ++j) s += m.at(j, j) - m.at(last, j);
    return s / static_cast<double>(last) * 100.0;
}

}  // namespace alen
