#include "seqdesign/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "seqdesign/config_io.hpp"
#include "seqdesign/errors.hpp"
#include "seqdesign/rng.hpp"

namespace seqdesign::nn {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'M', 'L', 'P', '0', '0', '1'};

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::Relu:
      return z.cwiseMax(0.0);
    case Activation::Linear:
      return z;
    case Activation::Softmax: {
      Eigen::MatrixXd out(z.rows(), z.cols());
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const Eigen::VectorXd e = (z.col(j).array() - z.col(j).maxCoeff()).exp();
        out.col(j) = e / e.sum();
      }
      return out;
    }
  }
  throw UsageError("unknown activation");
}

// Maps dL/d(output) to dL/d(pre-activation).
Eigen::MatrixXd activation_backward(const Eigen::MatrixXd& out, const Eigen::MatrixXd& grad,
                                    Activation a) {
  switch (a) {
    case Activation::Relu:
      return (out.array() > 0.0).cast<double>() * grad.array();
    case Activation::Linear:
      return grad;
    case Activation::Softmax: {
      // J^T g = s .* (g - <s, g>)
      Eigen::MatrixXd dz(out.rows(), out.cols());
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double dot = out.col(j).dot(grad.col(j));
        dz.col(j) = out.col(j).array() * (grad.col(j).array() - dot);
      }
      return dz;
    }
  }
  throw UsageError("unknown activation");
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("truncated network file " + path.string());
  }
  return v;
}

}  // namespace

Mlp::Mlp(const std::vector<int>& sizes, Activation output, std::uint64_t seed) {
  if (sizes.size() < 2) throw ConfigError("network needs at least input and output sizes");
  for (int s : sizes) {
    if (s < 1) throw ConfigError("layer sizes must be positive");
  }
  RandomStream rng({seed, 0x6e6eULL});
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Layer layer;
    const int in = sizes[l], out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / in);
    layer.weight.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = l + 2 == sizes.size() ? output : Activation::Relu;
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("network has no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows() ||
        (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows())) {
      throw ConfigError("inconsistent shapes at layer " + std::to_string(l));
    }
  }
}

int Mlp::inputs() const { return static_cast<int>(layers_.front().weight.cols()); }
int Mlp::outputs() const { return static_cast<int>(layers_.back().weight.rows()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (const auto& l : layers_) {
    a = activate((l.weight * a).colwise() + l.bias, l.activation);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (x.rows() != inputs()) {
    throw UsageError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(inputs()));
  }
  cache.activations.clear();
  cache.activations.push_back(x);
  for (const auto& l : layers_) {
    cache.activations.push_back(
        activate((l.weight * cache.activations.back()).colwise() + l.bias, l.activation));
  }
  return cache.activations.back();
}

Gradients Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_output) const {
  if (cache.activations.size() != layers_.size() + 1) throw UsageError("stale forward cache");
  Gradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Eigen::MatrixXd grad = grad_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd dz = activation_backward(cache.activations[l + 1], grad, layers_[l].activation);
    g.weight[l] = dz * cache.activations[l].transpose();
    g.bias[l] = dz.rowwise().sum();
    if (l > 0) grad = layers_[l].weight.transpose() * dz;
  }
  return g;
}

Eigen::VectorXd Mlp::flat() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out[k++] = l.weight(r, c);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out[k++] = l.bias[r];
  }
  return out;
}

void Mlp::set_flat(const Eigen::VectorXd& params) {
  if (params.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw UsageError("parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = params[k++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = params[k++];
  }
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
        a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

Eigen::VectorXd flatten(const Gradients& g) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < g.weight.size(); ++l) n += g.weight[l].size() + g.bias[l].size();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    for (Eigen::Index r = 0; r < g.weight[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < g.weight[l].cols(); ++c) out[k++] = g.weight[l](r, c);
    }
    for (Eigen::Index r = 0; r < g.bias[l].size(); ++r) out[k++] = g.bias[l][r];
  }
  return out;
}

void require_finite(const Gradients& g) {
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    if (!g.weight[l].allFinite() || !g.bias[l].allFinite()) {
      throw NumericalError("non-finite gradient in layer " + std::to_string(l));
    }
  }
}

Adam::Adam(const Mlp& net, AdamOptions options) : options_(options) {
  for (const auto& l : net.layers()) {
    m_.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    m_.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  v_ = m_;
}

void Adam::step(Mlp& net, const Gradients& grad) {
  require_finite(grad);
  if (grad.weight.size() != m_.weight.size()) throw UsageError("gradient shape mismatch");
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = options_.learning_rate, eps = options_.epsilon;
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < grad.weight.size(); ++l) {
    auto& layer = net.layers()[l];
    update(layer.weight, m_.weight[l], v_.weight[l], grad.weight[l]);
    update(layer.bias, m_.bias[l], v_.bias[l], grad.bias[l]);
  }
}

void save(const Mlp& net, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  write_pod(os, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    write_pod(os, static_cast<std::uint32_t>(l.weight.rows()));
    write_pod(os, static_cast<std::uint32_t>(l.weight.cols()));
    write_pod(os, static_cast<std::uint8_t>(l.activation));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) write_pod(os, l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) write_pod(os, l.bias[r]);
  }
  if (!os) throw DataError("failed writing " + path.string());
}

Mlp load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(path.string() + " is not a network file");
  }
  const auto count = read_pod<std::uint32_t>(is, path);
  if (count == 0 || count > 1024) throw DataError("implausible layer count in " + path.string());
  std::vector<Layer> layers(count);
  for (auto& l : layers) {
    const auto rows = read_pod<std::uint32_t>(is, path);
    const auto cols = read_pod<std::uint32_t>(is, path);
    const auto act = read_pod<std::uint8_t>(is, path);
    if (act > 2) throw DataError("unknown activation code in " + path.string());
    if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) {
      throw DataError("implausible layer shape in " + path.string());
    }
    l.activation = static_cast<Activation>(act);
    l.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = read_pod<double>(is, path);
    }
    l.bias.resize(rows);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = read_pod<double>(is, path);
  }
  try {
    return Mlp(std::move(layers));
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string to_csv(const Mlp& net) {
  std::ostringstream os;
  os << "layer,kind,row,col,value\n";
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        os << l << ",weight," << r << ',' << c << ',' << format_double(layer.weight(r, c)) << '\n';
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      os << l << ",bias," << r << ",0," << format_double(layer.bias[r]) << '\n';
    }
  }
  return os.str();
}

}  // namespace seqdesign::nn
