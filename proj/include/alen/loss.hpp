#pragma once

#include <span>
#include <vector>

#include "alen/matrix.hpp"

namespace alen {

using Label = int;

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad;  // d loss / d input, same shape as the input
};

/// Row-averaged softmax cross-entropy with max-subtraction.
LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const Label> labels);

/// Row-wise softmax probabilities.
Matrix softmax(const Matrix& logits);

/// Row-wise argmax over all columns.
std::vector<Label> argmax_rows(const Matrix& scores);

}  // namespace alen
