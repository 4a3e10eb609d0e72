#pragma once

#include <span>
#include <vector>

#include "alen/loss.hpp"

namespace alen {

/// Fraction of predictions equal to the label. OOD predictions count as errors.
double accuracy(std::span<const Label> predictions, std::span<const Label> labels);

/// A[i][j] = accuracy after increment i on domain j's test split, defined for j <= i.
class AccuracyMatrix {
public:
    void append_row(std::vector<double> row);

    std::size_t increments() const noexcept { return rows_.size(); }
    const std::vector<double>& row(std::size_t i) const { return rows_.at(i); }
    double at(std::size_t i, std::size_t j) const;
    const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }

private:
    std::vector<std::vector<double>> rows_;
};

/// Mean of the final row's entries.
double average_accuracy(const AccuracyMatrix& m);

/// mean over j < T of (A[j][j] - A[T][j]) * 100, T the last increment.
/// Negative values indicate backward transfer.
double forgetting(const AccuracyMatrix& m);

}  // namespace alen
