#include "lgml/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "lgml/error.hpp"

namespace lgml {

using nlohmann::json;

namespace {

double activate(Activation a, double z) { return a == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0); }

// Derivative expressed through the activation output.
double activate_slope(Activation a, double out) { return a == Activation::Tanh ? 1.0 - out * out : (out > 0.0 ? 1.0 : 0.0); }

std::vector<std::string> default_features(std::size_t n) {
  std::vector<std::string> f;
  for (std::size_t i = 0; i < n; ++i) f.push_back("x" + std::to_string(i + 1));
  return f;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Per-feature affine rescaling: xn = (x - center) / scale.
struct Affine {
  double center = 0.0;
  double scale = 1.0;
};

Affine range_affine(double lo, double hi) {
  const double half = 0.5 * (hi - lo);
  return {lo + half, half > 0.0 ? half : 1.0};
}

// Flat-parameter network used during optimisation.
class Trainer {
 public:
  Trainer(const MlpConfig& cfg, const Dataset& data) : cfg_(cfg), n_(data.size()) {
    std::size_t in = cfg.input_dim;
    std::vector<std::size_t> widths = cfg.hidden;
    widths.push_back(1);
    for (std::size_t out : widths) {
      shapes_.push_back({in, out, nparams_, nparams_ + in * out});
      nparams_ += in * out + out;
      units_ += out;
      in = out;
    }
    x_affine_.resize(cfg.input_dim);
    for (std::size_t i = 0; i < cfg.input_dim; ++i) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto& p : data.points()) {
        lo = std::min(lo, p.x[i]);
        hi = std::max(hi, p.x[i]);
      }
      x_affine_[i] = cfg.standardize ? range_affine(lo, hi) : Affine{};
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : data.points()) {
      lo = std::min(lo, p.y);
      hi = std::max(hi, p.y);
    }
    y_affine_ = cfg.standardize ? range_affine(lo, hi) : Affine{};

    xs_.reserve(n_ * cfg.input_dim);
    for (const auto& p : data.points()) {
      for (std::size_t i = 0; i < cfg.input_dim; ++i) xs_.push_back((p.x[i] - x_affine_[i].center) / x_affine_[i].scale);
      ys_.push_back((p.y - y_affine_.center) / y_affine_.scale);
    }
    acts_.resize(units_);
    grad_.resize(nparams_);
    delta_.resize(units_);
  }

  std::size_t nparams() const { return nparams_; }

  std::vector<double> initial_parameters(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<double> p(nparams_);
    for (const auto& s : shapes_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
      std::uniform_real_distribution<double> w(-limit, limit);
      std::uniform_real_distribution<double> b(-0.5, 0.5);
      for (std::size_t k = 0; k < s.in * s.out; ++k) p[s.w + k] = w(rng);
      for (std::size_t k = 0; k < s.out; ++k) p[s.b + k] = b(rng);
    }
    return p;
  }

  // Fills grad_ with d(loss)/d(params), loss = mean(0.5 r^2). Returns the
  // loss and writes the max absolute normalised residual.
  double loss_and_gradient(const std::vector<double>& p, double& max_res) {
    std::fill(grad_.begin(), grad_.end(), 0.0);
    double loss = 0.0;
    max_res = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t pt = 0; pt < n_; ++pt) {
      const double* a_prev = &xs_[pt * cfg_.input_dim];
      std::size_t unit = 0;
      for (std::size_t l = 0; l < shapes_.size(); ++l) {
        const auto& s = shapes_[l];
        const bool last = l + 1 == shapes_.size();
        for (std::size_t o = 0; o < s.out; ++o) {
          double z = p[s.b + o];
          const double* w = &p[s.w + o * s.in];
          for (std::size_t i = 0; i < s.in; ++i) z += w[i] * a_prev[i];
          acts_[unit + o] = last ? z : activate(cfg_.activation, z);
        }
        a_prev = &acts_[unit];
        unit += s.out;
      }
      const double r = acts_[units_ - 1] - ys_[pt];
      loss += 0.5 * r * r;
      max_res = std::max(max_res, std::abs(r));

      // Backward pass.
      delta_[units_ - 1] = r * inv_n;
      std::size_t out_start = units_ - 1;
      for (std::size_t l = shapes_.size(); l-- > 0;) {
        const auto& s = shapes_[l];
        const std::size_t in_start = out_start - s.in;
        const double* a_in = l == 0 ? &xs_[pt * cfg_.input_dim] : &acts_[in_start];
        for (std::size_t o = 0; o < s.out; ++o) {
          const double d = delta_[out_start + o];
          grad_[s.b + o] += d;
          double* g = &grad_[s.w + o * s.in];
          for (std::size_t i = 0; i < s.in; ++i) g[i] += d * a_in[i];
        }
        if (l == 0) break;
        for (std::size_t i = 0; i < s.in; ++i) {
          double acc = 0.0;
          for (std::size_t o = 0; o < s.out; ++o) acc += p[s.w + o * s.in + i] * delta_[out_start + o];
          delta_[in_start + i] = acc * activate_slope(cfg_.activation, acts_[in_start + i]);
        }
        out_start = in_start;
      }
    }
    return loss * inv_n;
  }

  const std::vector<double>& gradient() const { return grad_; }
  double y_scale() const { return y_affine_.scale; }

  // Builds the network in original units from normalised parameters.
  Mlp fold(const std::vector<double>& p, const std::vector<std::string>& features) const {
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
      const auto& s = shapes_[l];
      Layer layer{s.in, s.out, std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(s.w),
                                                   p.begin() + static_cast<std::ptrdiff_t>(s.w + s.in * s.out)),
                  std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(s.b),
                                      p.begin() + static_cast<std::ptrdiff_t>(s.b + s.out))};
      if (l == 0) {
        for (std::size_t o = 0; o < s.out; ++o) {
          for (std::size_t i = 0; i < s.in; ++i) {
            const double w = layer.w(o, i) / x_affine_[i].scale;
            layer.w(o, i) = w;
            layer.bias[o] -= w * x_affine_[i].center;
          }
        }
      }
      if (l + 1 == shapes_.size()) {
        for (auto& w : layer.weights) w *= y_affine_.scale;
        layer.bias[0] = layer.bias[0] * y_affine_.scale + y_affine_.center;
      }
      layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers), cfg_.activation, features);
  }

 private:
  struct Shape {
    std::size_t in, out, w, b;
  };
  const MlpConfig& cfg_;
  std::size_t n_;
  std::vector<Shape> shapes_;
  std::size_t nparams_ = 0;
  std::size_t units_ = 0;
  std::vector<Affine> x_affine_;
  Affine y_affine_;
  std::vector<double> xs_, ys_;
  std::vector<double> acts_, grad_, delta_;
};

std::uint64_t restart_seed(std::uint64_t seed, std::size_t restart) {
  // splitmix64 step over (seed, restart)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (restart + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw InvalidArgument("unknown activation '" + std::string(s) + "' (expected tanh or relu)");
}

void MlpConfig::validate() const {
  if (input_dim == 0) throw InvalidArgument("input_dim must be positive");
  if (hidden.empty()) throw InvalidArgument("at least one hidden layer is required");
  for (auto h : hidden) {
    if (h == 0) throw InvalidArgument("hidden layer widths must be positive");
  }
  if (!(fit_tol > 0.0)) throw InvalidArgument("fit_tol must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (restarts == 0) throw InvalidArgument("restarts must be at least 1");
}

// ---------------------------------------------------------------------------

Dataset::Dataset(std::vector<std::string> features) : features_(std::move(features)) {
  if (features_.empty()) throw InvalidArgument("dataset needs at least one feature");
}

bool Dataset::add(std::vector<double> x, double y) {
  if (x.size() != features_.size()) {
    throw InvalidArgument("point has " + std::to_string(x.size()) + " features, dataset has " +
                          std::to_string(features_.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite feature value");
  }
  if (!std::isfinite(y)) throw InvalidArgument("non-finite label");
  for (const auto& p : points_) {
    if (p.x == x) {
      if (p.y != y) throw InvalidArgument("conflicting labels for the same input");
      return false;
    }
  }
  points_.push_back({std::move(x), y});
  return true;
}

bool Dataset::contains_near(std::span<const double> x, double tol) const {
  for (const auto& p : points_) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size() && i < p.x.size(); ++i) d = std::max(d, std::abs(p.x[i] - x[i]));
    if (d <= tol) return true;
  }
  return false;
}

Dataset Dataset::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("empty CSV");
  auto header = split_csv_line(line);
  if (header.size() < 2) throw InvalidArgument("CSV header needs at least one feature and a label column");
  header.pop_back();
  Dataset data(header);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size() + 1) {
      throw InvalidArgument("CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " columns");
    }
    std::vector<double> values;
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || c.empty()) {
        throw InvalidArgument("CSV row " + std::to_string(row) + ": invalid number '" + c + "'");
      }
      values.push_back(v);
    }
    const double y = values.back();
    values.pop_back();
    data.add(std::move(values), y);
  }
  return data;
}

Dataset Dataset::read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return read_csv(in);
}

void Dataset::write_csv(std::ostream& out) const {
  const auto old = out.precision(17);
  for (const auto& f : features_) out << f << ',';
  out << "y\n";
  for (const auto& p : points_) {
    for (double v : p.x) out << v << ',';
    out << p.y << '\n';
  }
  out.precision(old);
}

// ---------------------------------------------------------------------------

Mlp::Mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, Activation activation)
    : activation_(activation), features_(default_features(input_dim)) {
  std::size_t in = input_dim;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(1);
  for (std::size_t out : widths) {
    layers_.push_back({in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0)});
    in = out;
  }
  check();
}

Mlp::Mlp(std::vector<Layer> layers, Activation activation, std::vector<std::string> features)
    : layers_(std::move(layers)), activation_(activation), features_(std::move(features)) {
  if (layers_.empty()) throw InvalidArgument("network has no layers");
  if (features_.empty()) features_ = default_features(layers_.front().inputs);
  check();
}

void Mlp::check() const {
  if (layers_.size() < 2) throw InvalidArgument("network needs at least one hidden layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.inputs == 0 || L.outputs == 0) throw InvalidArgument("layer " + std::to_string(l) + " has zero width");
    if (L.weights.size() != L.inputs * L.outputs || L.bias.size() != L.outputs) {
      throw InvalidArgument("layer " + std::to_string(l) + " has inconsistent parameter sizes");
    }
    if (l > 0 && layers_[l - 1].outputs != L.inputs) {
      throw InvalidArgument("layer " + std::to_string(l) + " input width does not match previous layer");
    }
  }
  if (layers_.back().outputs != 1) throw InvalidArgument("output layer must have width 1");
  if (features_.size() != layers_.front().inputs) throw InvalidArgument("feature names do not match input width");
}

void Mlp::set_features(std::vector<std::string> features) {
  if (features.size() != input_dim()) throw InvalidArgument("feature names do not match input width");
  features_ = std::move(features);
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += L.weights.size() + L.bias.size();
  return n;
}

double Mlp::predict(std::span<const double> x) const {
  if (x.size() != input_dim()) throw InvalidArgument("input dimension mismatch");
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const bool last = l + 1 == layers_.size();
    next.assign(L.outputs, 0.0);
    for (std::size_t o = 0; o < L.outputs; ++o) {
      double z = L.bias[o];
      for (std::size_t i = 0; i < L.inputs; ++i) z += L.w(o, i) * a[i];
      next[o] = last ? z : activate(activation_, z);
    }
    a.swap(next);
  }
  return a[0];
}

std::vector<double> Mlp::predict_gradient(std::span<const double> x) const {
  if (x.size() != input_dim()) throw InvalidArgument("input dimension mismatch");
  std::vector<std::vector<double>> acts{std::vector<double>(x.begin(), x.end())};
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const bool last = l + 1 == layers_.size();
    std::vector<double> out(L.outputs);
    for (std::size_t o = 0; o < L.outputs; ++o) {
      double z = L.bias[o];
      for (std::size_t i = 0; i < L.inputs; ++i) z += L.w(o, i) * acts.back()[i];
      out[o] = last ? z : activate(activation_, z);
    }
    acts.push_back(std::move(out));
  }
  std::vector<double> delta{1.0};
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& L = layers_[l];
    std::vector<double> prev(L.inputs, 0.0);
    for (std::size_t i = 0; i < L.inputs; ++i) {
      for (std::size_t o = 0; o < L.outputs; ++o) prev[i] += L.w(o, i) * delta[o];
      if (l > 0) prev[i] *= activate_slope(activation_, acts[l][i]);
    }
    delta.swap(prev);
  }
  return delta;
}

std::string Mlp::to_json() const {
  json j;
  j["kind"] = "mlp";
  j["activation"] = std::string(lgml::to_string(activation_));
  j["features"] = features_;
  j["layers"] = json::array();
  for (const auto& L : layers_) {
    j["layers"].push_back({{"inputs", L.inputs}, {"outputs", L.outputs}, {"weights", L.weights}, {"bias", L.bias}});
  }
  return j.dump(2);
}

Mlp Mlp::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.value("kind", "mlp") != "mlp") throw InvalidArgument("checkpoint is not an mlp");
    std::vector<Layer> layers;
    for (const auto& jl : j.at("layers")) {
      layers.push_back({jl.at("inputs").get<std::size_t>(), jl.at("outputs").get<std::size_t>(),
                        jl.at("weights").get<std::vector<double>>(), jl.at("bias").get<std::vector<double>>()});
    }
    std::vector<std::string> features;
    if (j.contains("features")) features = j.at("features").get<std::vector<std::string>>();
    return Mlp(std::move(layers), parse_activation(j.at("activation").get<std::string>()), std::move(features));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed model checkpoint: ") + e.what());
  }
}

bool Mlp::operator==(const Mlp& o) const {
  if (activation_ != o.activation_ || features_ != o.features_ || layers_.size() != o.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weights != o.layers_[l].weights || layers_[l].bias != o.layers_[l].bias) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

double max_abs_residual(const Mlp& m, const Dataset& data) {
  double r = 0.0;
  for (const auto& p : data.points()) r = std::max(r, std::abs(m.predict(p.x) - p.y));
  return r;
}

double rmse(const Mlp& m, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("rmse of an empty dataset");
  double sum = 0.0;
  for (const auto& p : data.points()) {
    const double r = m.predict(p.x) - p.y;
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(data.size()));
}

FitResult train(const MlpConfig& config, const Dataset& data) {
  config.validate();
  if (data.empty()) throw InvalidArgument("cannot train on an empty dataset");
  if (data.dim() != config.input_dim) {
    throw InvalidArgument("dataset has " + std::to_string(data.dim()) + " features, config expects " +
                          std::to_string(config.input_dim));
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double adam_eps = 1e-8;

  Trainer trainer(config, data);
  // Stop in normalised units slightly inside the tolerance so that folding
  // rounding cannot push the residual above fit_tol.
  const double stop_at = config.fit_tol * (1.0 - 1e-6) / trainer.y_scale();

  bool have_best = false;
  FitResult best;
  std::size_t diverged = 0;
  for (std::size_t restart = 0; restart < config.restarts; ++restart) {
    std::vector<double> p = trainer.initial_parameters(restart_seed(config.seed, restart));
    std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0);
    std::vector<double> best_p = p;
    double best_res = std::numeric_limits<double>::infinity();
    double plateau_loss = std::numeric_limits<double>::infinity();
    std::size_t plateau_epoch = 0;
    double b1t = 1.0, b2t = 1.0;
    bool failed = false;
    std::size_t epoch = 0;
    for (; epoch < config.max_epochs; ++epoch) {
      double res = 0.0;
      const double loss = trainer.loss_and_gradient(p, res);
      if (!std::isfinite(loss)) {
        failed = true;
        break;
      }
      if (res < best_res) {
        best_res = res;
        best_p = p;
      }
      if (res <= stop_at) break;
      if (loss < plateau_loss * (1.0 - 1e-6)) {
        plateau_loss = loss;
        plateau_epoch = epoch;
      } else if (config.patience > 0 && epoch - plateau_epoch >= config.patience) {
        break;
      }
      const auto& g = trainer.gradient();
      b1t *= beta1;
      b2t *= beta2;
      const double step = config.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
        p[k] -= step * m[k] / (std::sqrt(v[k]) + adam_eps);
      }
    }
    if (failed && !std::isfinite(best_res)) {
      ++diverged;
      continue;
    }
    Mlp model = trainer.fold(best_p, data.features());
    const double residual = max_abs_residual(model, data);
    if (!have_best || residual < best.max_residual) {
      best = {std::move(model), residual, residual > config.fit_tol, restart, epoch, 0};
      have_best = true;
    }
    if (residual <= config.fit_tol) break;
  }
  if (!have_best) {
    throw TrainingError("training diverged in all " + std::to_string(config.restarts) + " restart(s)");
  }
  best.diverged_restarts = diverged;
  return best;
}

// ---------------------------------------------------------------------------

SymbolicModel to_expr(const Mlp& m) {
  std::vector<Expr> a;
  for (const auto& f : m.features()) a.push_back(Expr::var(f));
  const auto& layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const bool last = l + 1 == layers.size();
    std::vector<Expr> next;
    for (std::size_t o = 0; o < L.outputs; ++o) {
      Expr z = sym::num(0.0);
      for (std::size_t i = 0; i < L.inputs; ++i) z = sym::add(z, sym::mul(sym::num(L.w(o, i)), a[i]));
      z = sym::add(z, sym::num(L.bias[o]));
      if (!last) {
        z = m.activation() == Activation::Tanh ? sym::tanh(z)
                                               : sym::mul(sym::num(0.5), sym::add(z, sym::abs(z)));
      }
      next.push_back(std::move(z));
    }
    a = std::move(next);
  }
  return SymbolicModel::from_value(m.features(), a[0]);
}

}  // namespace lgml
