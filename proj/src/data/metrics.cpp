#include "comind/data/metrics.hpp"

#include "comind/error.hpp"
#include "comind/util/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace comind::data {

double total_cross_correlation(const Matrix& z1, const Matrix& z2) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) {
    throw ShapeError("total_cross_correlation: shapes differ (" + std::to_string(z1.rows()) + "x" +
                     std::to_string(z1.cols()) + " vs " + std::to_string(z2.rows()) + "x" +
                     std::to_string(z2.cols()) + ")");
  }
  const Matrix w1 = linalg::whiten(z1).values;
  const Matrix w2 = linalg::whiten(z2).values;
  return (w1.array() * w2.array()).colwise().sum().sum() / static_cast<double>(z1.rows());
}

namespace {

struct Problem {
  const Matrix& x;
  std::span<const int> labels;
  int classes;
  const ClassifierOptions& options;

  // Returns the gradient of the objective at (w, b).
  void gradient(const Matrix& w, const Eigen::RowVectorXd& b, Matrix& gw, Eigen::RowVectorXd& gb) const {
    const double n = static_cast<double>(x.rows());
    Matrix scores = x * w;
    scores.rowwise() += b;
    Matrix residual(scores.rows(), scores.cols());
    if (options.kind == ClassifierKind::Logistic) {
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double top = scores.row(i).maxCoeff();
        Eigen::RowVectorXd p = (scores.row(i).array() - top).exp();
        p /= p.sum();
        p(labels[static_cast<std::size_t>(i)]) -= 1.0;
        residual.row(i) = p;
      }
    } else {
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        for (Eigen::Index c = 0; c < scores.cols(); ++c) {
          const double y = labels[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
          const double slack = 1.0 - y * scores(i, c);
          residual(i, c) = slack > 0.0 ? -2.0 * y * slack : 0.0;
        }
      }
    }
    gw.noalias() = x.transpose() * residual / n;
    gw += options.l2 * w;
    gb = residual.colwise().sum() / n;
  }
};

double largest_eigenvalue(const Matrix& x) {
  Matrix augmented(x.rows(), x.cols() + 1);
  augmented.leftCols(x.cols()) = x;
  augmented.col(x.cols()).setOnes();
  const Eigen::MatrixXd gram = augmented.transpose() * augmented / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

}  // namespace

LinearClassifier LinearClassifier::fit(const Matrix& x, std::span<const int> labels, int classes,
                                       const ClassifierOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw DataError("classifier: label count mismatch");
  if (classes < 2) throw DataError("classifier needs at least two classes");
  for (int y : labels) {
    if (y < 0 || y >= classes) throw DataError("classifier: label " + std::to_string(y) + " out of range");
  }
  const Problem problem{x, labels, classes, options};
  const double curvature = options.kind == ClassifierKind::Logistic ? 0.5 : 2.0;
  const double lipschitz = curvature * largest_eigenvalue(x) + options.l2;
  const double step = 1.0 / lipschitz;

  const Eigen::Index d = x.cols();
  Matrix w = Matrix::Zero(d, classes);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
  Matrix yw = w;
  Eigen::RowVectorXd yb = b;
  Matrix gw(d, classes);
  Eigen::RowVectorXd gb(classes);
  double t = 1.0;

  LinearClassifier out;
  problem.gradient(w, b, gw, gb);
  double gnorm = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
  int it = 0;
  while (gnorm >= options.gradient_tolerance && it < options.max_iterations) {
    ++it;
    problem.gradient(yw, yb, gw, gb);
    const Matrix w_next = yw - step * gw;
    const Eigen::RowVectorXd b_next = yb - step * gb;
    const double alignment = (gw.array() * (w_next - w).array()).sum() + gb.dot(b_next - b);
    if (alignment > 0.0) {
      t = 1.0;
      yw = w_next;
      yb = b_next;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double momentum = (t - 1.0) / t_next;
      yw = w_next + momentum * (w_next - w);
      yb = b_next + momentum * (b_next - b);
      t = t_next;
    }
    w = w_next;
    b = b_next;
    problem.gradient(w, b, gw, gb);
    gnorm = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
  }
  out.weights_ = std::move(w);
  out.bias_ = std::move(b);
  out.iterations_ = it;
  out.gradient_norm_ = gnorm;
  out.converged_ = gnorm < options.gradient_tolerance;
  return out;
}

std::vector<int> LinearClassifier::predict(const Matrix& x) const {
  Matrix scores = x * weights_;
  scores.rowwise() += bias_;
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

RecognitionResult recognition_accuracy(const Matrix& z1, const Matrix& z2, std::span<const int> labels,
                                       const RecognitionOptions& options) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ShapeError("recognition: representation shapes differ");
  if (labels.empty()) throw DataError("recognition accuracy needs labels");
  const auto n = static_cast<std::size_t>(z1.rows());
  if (labels.size() != n) throw DataError("recognition: label count does not match representations");
  if (options.folds < 2) throw ConfigError("recognition needs at least 2 folds");
  if (n < static_cast<std::size_t>(options.folds)) throw DataError("fewer samples than folds");

  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  util::Rng rng(util::mix_seed(options.seed, 0x5f0d));
  const std::vector<std::size_t> order = util::permutation(n, rng);
  const auto folds = static_cast<std::size_t>(options.folds);

  RecognitionResult result;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t begin = f * n / folds;
    const std::size_t end = (f + 1) * n / folds;
    Matrix train(static_cast<Eigen::Index>(n - (end - begin)), z1.cols());
    Matrix held(static_cast<Eigen::Index>(end - begin), z2.cols());
    std::vector<int> train_labels;
    std::vector<int> held_labels;
    for (std::size_t pos = 0; pos < n; ++pos) {
      const auto src = static_cast<Eigen::Index>(order[pos]);
      if (pos >= begin && pos < end) {
        held.row(static_cast<Eigen::Index>(held_labels.size())) = z2.row(src);
        held_labels.push_back(labels[order[pos]]);
      } else {
        train.row(static_cast<Eigen::Index>(train_labels.size())) = z1.row(src);
        train_labels.push_back(labels[order[pos]]);
      }
    }
    const LinearClassifier clf = LinearClassifier::fit(train, train_labels, classes, options.classifier);
    result.all_converged = result.all_converged && clf.converged();
    const std::vector<int> predicted = clf.predict(held);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == held_labels[i] ? 1 : 0;
    result.fold_accuracy.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(predicted.size()));
  }
  double total = 0.0;
  for (double a : result.fold_accuracy) total += a;
  result.mean_accuracy = total / static_cast<double>(folds);
  return result;
}

}  // namespace comind::data
