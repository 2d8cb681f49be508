#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace seqdesign::nn {

enum class Activation : std::uint8_t { Relu = 0, Linear = 1, Softmax = 2 };

struct Layer {
  Eigen::MatrixXd weight;  // outputs x inputs
  Eigen::VectorXd bias;
  Activation activation = Activation::Linear;
};

// Per-layer gradients, shaped like the parameters.
struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

// Activations of one forward pass; input first, output last.
struct Cache {
  std::vector<Eigen::MatrixXd> activations;
};

// Feedforward network. Batches are column-major: one column per sample.
class Mlp {
 public:
  Mlp() = default;
  // sizes = {inputs, hidden..., outputs}; hidden layers use ReLU. Weights are
  // drawn uniformly with fan-in scaling from the given seed; biases start at 0.
  Mlp(const std::vector<int>& sizes, Activation output, std::uint64_t seed);
  explicit Mlp(std::vector<Layer> layers);

  int inputs() const;
  int outputs() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::size_t parameter_count() const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;
  // Gradients of sum(grad_output .* output) with respect to every parameter.
  Gradients backward(const Cache& cache, const Eigen::MatrixXd& grad_output) const;

  // Flat parameter vector (per layer: weights row-major, then bias).
  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& params);

  bool operator==(const Mlp& other) const;

 private:
  std::vector<Layer> layers_;
};

Eigen::VectorXd flatten(const Gradients& g);

// Throws NumericalError naming the first layer with a NaN or infinite entry.
void require_finite(const Gradients& g);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const Mlp& net, AdamOptions options);
  void step(Mlp& net, const Gradients& grad);  // gradient descent step
  long steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

 private:
  AdamOptions options_;
  Gradients m_;
  Gradients v_;
  long steps_ = 0;
};

// Binary layout, little-endian host order:
//   8 bytes  magic "SDMLP001"
//   uint32   layer count
//   per layer: uint32 rows, uint32 cols, uint8 activation,
//              rows*cols float64 weights (row-major), rows float64 biases
void save(const Mlp& net, const std::filesystem::path& path);
Mlp load(const std::filesystem::path& path);

// layer,kind,row,col,value
std::string to_csv(const Mlp& net);

}  // namespace seqdesign::nn
