#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "einn/dual_tower.hpp"

namespace einn {

/// A vector-valued function built from a closed set of primitives:
/// affine maps (constant or parameterized), elementwise tanh, sums,
/// elementwise products, and scalar scaling.
///
/// Evaluation runs on DualTower values, so every directional derivative up to
/// third order is available, and the reverse sweep pulls covectors on tower
/// outputs back to parameters and tower inputs. Parameterized affine nodes
/// read their weights from a flat parameter vector, row-major W then bias.
class Composition {
 public:
  enum class Op { Input, Affine, Tanh, Add, Mul, Scale };

  struct Node {
    Op op = Op::Input;
    int a = -1;
    int b = -1;
    int dim = 0;
    // Affine: parameterized slice or constant matrix/bias.
    bool parameterized = false;
    bool has_bias = false;
    std::size_t offset = 0;
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
    double factor = 1.0;
  };

  class Builder {
   public:
    explicit Builder(int input_dim);

    int input() const { return 0; }
    int affine(int src, int out_dim, bool with_bias = true);
    int affine_const(int src, Eigen::MatrixXd weight, Eigen::VectorXd bias);
    int tanh(int src);
    int add(int lhs, int rhs);
    int mul(int lhs, int rhs);
    int scale(int src, double factor);

    /// Generic entry point by primitive name; unknown names throw
    /// std::invalid_argument. `args` are node ids, `width` is the affine
    /// output width and `factor` the scale factor.
    int apply(std::string_view primitive, std::span<const int> args, int width = 0,
              double factor = 1.0);

    Composition build(int output) &&;

   private:
    int push(Node node);
    int dim_of(int id) const;
    std::vector<Node> nodes_;
    std::size_t params_ = 0;
  };

  int input_dim() const { return nodes_.front().dim; }
  int output_dim() const { return nodes_[static_cast<std::size_t>(output_)].dim; }
  std::size_t param_count() const { return param_count_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  using Towers = std::vector<DualTower>;

  /// Evaluates on tower inputs (all of one level); returns one tower per output.
  Towers evaluate(const Towers& x, std::span<const double> params) const;

  /// Plain evaluation.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& x, std::span<const double> params) const;

  struct Pullback {
    Eigen::VectorXd params;
    Towers inputs;
  };

  /// Reverse sweep: given covectors on every output tower coefficient,
  /// returns the covector on parameters and on every input tower coefficient.
  Pullback pullback(const Towers& x, std::span<const double> params,
                    const Towers& output_bar) const;

 private:
  Composition(std::vector<Node> nodes, int output, std::size_t param_count)
      : nodes_(std::move(nodes)), output_(output), param_count_(param_count) {}

  std::vector<Towers> forward(const Towers& x, std::span<const double> params) const;
  void check_params(std::span<const double> params) const;

  std::vector<Node> nodes_;
  int output_ = 0;
  std::size_t param_count_ = 0;
};

/// d^order/d eps^order fn(point + eps * direction) at eps = 0, order in 1..3.
Eigen::VectorXd directional_derivative(const Composition& fn, std::span<const double> params,
                                       const Eigen::VectorXd& point,
                                       const Eigen::VectorXd& direction, int order);

/// Mixed derivative D_{u_1} ... D_{u_k} fn(point), one direction per nesting level.
Eigen::VectorXd mixed_derivative(const Composition& fn, std::span<const double> params,
                                 const Eigen::VectorXd& point,
                                 std::span<const Eigen::VectorXd> directions);

/// J(i, j) = d fn_i / d x_j, assembled from one first-order pass per column.
Eigen::MatrixXd jacobian(const Composition& fn, std::span<const double> params,
                         const Eigen::VectorXd& point);

/// grad(div fn) for fn: R^d -> R^d, from second-order nested passes.
Eigen::VectorXd grad_divergence(const Composition& fn, std::span<const double> params,
                                const Eigen::VectorXd& point);

/// covector^T d fn / d theta at (point, params).
Eigen::VectorXd param_vjp(const Composition& fn, const Eigen::VectorXd& point,
                          std::span<const double> params, const Eigen::VectorXd& covector);

}  // namespace einn
