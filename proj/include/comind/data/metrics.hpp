#pragma once

#include "comind/linalg/stats.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace comind::data {

using linalg::Matrix;

/// Sum of per-dimension correlations between two representations, each
/// whitened with its own (evaluation-set) statistics.
double total_cross_correlation(const Matrix& z1, const Matrix& z2);

enum class ClassifierKind {
  Logistic,  // multinomial logistic regression
  Hinge,     // one-vs-rest squared hinge
};

struct ClassifierOptions {
  ClassifierKind kind = ClassifierKind::Logistic;
  double l2 = 1e-3;
  double gradient_tolerance = 1e-6;
  int max_iterations = 50000;
};

/// Linear multi-class classifier fitted by full-batch accelerated gradient
/// descent (Nesterov momentum with gradient restarts, step 1/L).
class LinearClassifier {
 public:
  static LinearClassifier fit(const Matrix& x, std::span<const int> labels, int classes,
                              const ClassifierOptions& options);

  std::vector<int> predict(const Matrix& x) const;
  bool converged() const { return converged_; }
  int iterations() const { return iterations_; }
  double final_gradient_norm() const { return gradient_norm_; }
  const Matrix& weights() const { return weights_; }

 private:
  Matrix weights_;  // d x classes
  Eigen::RowVectorXd bias_;
  bool converged_ = false;
  int iterations_ = 0;
  double gradient_norm_ = 0.0;
};

struct RecognitionOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  ClassifierOptions classifier;
};

struct RecognitionResult {
  double mean_accuracy = 0.0;  // percent
  std::vector<double> fold_accuracy;
  bool all_converged = true;
};

/// Cross-modality recognition: k-fold cross-validation where each fold fits
/// the classifier on view-1 representations of the training folds and scores
/// it on view-2 representations of the held-out fold.
RecognitionResult recognition_accuracy(const Matrix& z1, const Matrix& z2, std::span<const int> labels,
                                       const RecognitionOptions& options = {});

}  // namespace comind::data
