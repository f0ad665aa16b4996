#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lgml/expr.hpp"

namespace lgml {

enum class Activation { Tanh, Relu };

std::string_view to_string(Activation a);
/// Accepts "tanh" / "relu". Throws InvalidArgument.
Activation parse_activation(std::string_view s);

struct MlpConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden{3, 3};
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
  double learning_rate = 1e-2;
  std::size_t max_epochs = 200000;
  /// Target for the maximum absolute training residual.
  double fit_tol = 1e-3;
  std::size_t restarts = 5;
  /// A restart stops early once the training loss has not improved by a
  /// relative 1e-6 for this many epochs. 0 disables the rule.
  std::size_t patience = 20000;
  /// Train in coordinates rescaled from the data's ranges and fold the
  /// affine maps back into the first and last layer afterwards.
  bool standardize = true;

  /// Throws InvalidArgument on an invalid configuration.
  void validate() const;

  bool operator==(const MlpConfig&) const = default;
};

struct LabeledPoint {
  std::vector<double> x;
  double y = 0.0;
};

/// Ordered labeled points over named features.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<std::string> features);

  const std::vector<std::string>& features() const { return features_; }
  std::size_t dim() const { return features_.size(); }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<LabeledPoint>& points() const { return points_; }
  const LabeledPoint& operator[](std::size_t i) const { return points_[i]; }

  /// Throws InvalidArgument for a wrong dimension, non-finite values, or an
  /// x already present with a different y. An exact duplicate is ignored
  /// and reported by returning false.
  bool add(std::vector<double> x, double y);

  /// True if some stored x lies within `tol` (max-norm) of `x`.
  bool contains_near(std::span<const double> x, double tol) const;

  /// CSV with header `x1,...,xn,y` (the last column is the label).
  static Dataset read_csv(std::istream& in);
  static Dataset read_csv_file(const std::string& path);
  void write_csv(std::ostream& out) const;

 private:
  std::vector<std::string> features_;
  std::vector<LabeledPoint> points_;
};

struct Layer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  /// Row-major, outputs x inputs.
  std::vector<double> weights;
  std::vector<double> bias;

  double& w(std::size_t out, std::size_t in) { return weights[out * inputs + in]; }
  double w(std::size_t out, std::size_t in) const { return weights[out * inputs + in]; }
};

/// Fully connected network: hidden layers with a shared activation and a
/// linear output layer of width one.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialised network. Feature names default to x1..xn.
  Mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, Activation activation);
  /// Throws InvalidArgument if dimensions do not chain to a width-1 output.
  Mlp(std::vector<Layer> layers, Activation activation, std::vector<std::string> features = {});

  std::size_t input_dim() const { return layers_.front().inputs; }
  Activation activation() const { return activation_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<std::string>& features() const { return features_; }
  void set_features(std::vector<std::string> features);
  std::size_t parameter_count() const;

  double predict(std::span<const double> x) const;
  /// Analytic input gradient by reverse-mode accumulation.
  std::vector<double> predict_gradient(std::span<const double> x) const;

  /// JSON checkpoint: {"kind":"mlp","activation":..,"features":[..],
  /// "layers":[{"inputs":n,"outputs":m,"weights":[row-major],"bias":[..]}]}
  std::string to_json() const;
  static Mlp from_json(std::string_view text);

  bool operator==(const Mlp&) const;

 private:
  void check() const;
  std::vector<Layer> layers_;
  Activation activation_ = Activation::Tanh;
  std::vector<std::string> features_;
};

struct FitResult {
  Mlp model;
  double max_residual = 0.0;
  /// Residual is above fit_tol after all restarts.
  bool underfit = false;
  std::size_t restart = 0;
  std::size_t epochs = 0;
  std::size_t diverged_restarts = 0;
};

/// Full-batch Adam on mean squared error. Restarts run in order until one
/// reaches fit_tol; otherwise the lowest-residual restart (earliest on ties)
/// is returned flagged as under-fit. Deterministic for a given seed.
/// Throws TrainingError if every restart diverges and InvalidArgument for
/// an empty or mismatched dataset.
FitResult train(const MlpConfig& config, const Dataset& data);

double max_abs_residual(const Mlp& m, const Dataset& data);
/// sqrt of the mean squared residual. Throws InvalidArgument on empty data.
double rmse(const Mlp& m, const Dataset& data);

/// Symbolic forward pass (constant-folded) and its per-feature gradient.
/// ReLU units are written as 0.5 * (z + abs(z)).
SymbolicModel to_expr(const Mlp& m);

}  // namespace lgml
