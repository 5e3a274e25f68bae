#include "einn/composition.hpp"

#include <stdexcept>
#include <string>

namespace einn {

namespace {

using Towers = Composition::Towers;

Towers zeros_like(const Towers& x, std::size_t n) {
  const int level = x.empty() ? 0 : x.front().level();
  return Towers(n, DualTower(level, 0.0));
}

}  // namespace

Composition::Builder::Builder(int input_dim) {
  if (input_dim < 1) throw std::invalid_argument("Composition: input_dim must be >= 1");
  Node in;
  in.op = Op::Input;
  in.dim = input_dim;
  nodes_.push_back(std::move(in));
}

int Composition::Builder::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

int Composition::Builder::dim_of(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("Composition: unknown node id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)].dim;
}

int Composition::Builder::affine(int src, int out_dim, bool with_bias) {
  const int in_dim = dim_of(src);
  if (out_dim < 1) throw std::invalid_argument("Composition: affine width must be >= 1");
  Node n;
  n.op = Op::Affine;
  n.a = src;
  n.dim = out_dim;
  n.parameterized = true;
  n.has_bias = with_bias;
  n.offset = params_;
  params_ += static_cast<std::size_t>(out_dim) * static_cast<std::size_t>(in_dim) +
             (with_bias ? static_cast<std::size_t>(out_dim) : 0);
  return push(std::move(n));
}

int Composition::Builder::affine_const(int src, Eigen::MatrixXd weight, Eigen::VectorXd bias) {
  const int in_dim = dim_of(src);
  if (weight.cols() != in_dim || bias.size() != weight.rows()) {
    throw std::invalid_argument("Composition: affine_const shape mismatch");
  }
  Node n;
  n.op = Op::Affine;
  n.a = src;
  n.dim = static_cast<int>(weight.rows());
  n.has_bias = true;
  n.weight = std::move(weight);
  n.bias = std::move(bias);
  return push(std::move(n));
}

int Composition::Builder::tanh(int src) {
  Node n;
  n.op = Op::Tanh;
  n.a = src;
  n.dim = dim_of(src);
  return push(std::move(n));
}

int Composition::Builder::add(int lhs, int rhs) {
  if (dim_of(lhs) != dim_of(rhs)) throw std::invalid_argument("Composition: add dim mismatch");
  Node n;
  n.op = Op::Add;
  n.a = lhs;
  n.b = rhs;
  n.dim = dim_of(lhs);
  return push(std::move(n));
}

int Composition::Builder::mul(int lhs, int rhs) {
  if (dim_of(lhs) != dim_of(rhs)) throw std::invalid_argument("Composition: mul dim mismatch");
  Node n;
  n.op = Op::Mul;
  n.a = lhs;
  n.b = rhs;
  n.dim = dim_of(lhs);
  return push(std::move(n));
}

int Composition::Builder::scale(int src, double factor) {
  Node n;
  n.op = Op::Scale;
  n.a = src;
  n.dim = dim_of(src);
  n.factor = factor;
  return push(std::move(n));
}

int Composition::Builder::apply(std::string_view primitive, std::span<const int> args, int width,
                                double factor) {
  auto need = [&](std::size_t k) {
    if (args.size() != k) {
      throw std::invalid_argument("Composition: primitive '" + std::string(primitive) +
                                  "' takes " + std::to_string(k) + " argument(s)");
    }
  };
  if (primitive == "affine") {
    need(1);
    return affine(args[0], width);
  }
  if (primitive == "tanh") {
    need(1);
    return tanh(args[0]);
  }
  if (primitive == "add") {
    need(2);
    return add(args[0], args[1]);
  }
  if (primitive == "mul") {
    need(2);
    return mul(args[0], args[1]);
  }
  if (primitive == "scale") {
    need(1);
    return scale(args[0], factor);
  }
  throw std::invalid_argument("Composition: unsupported primitive '" + std::string(primitive) +
                              "'");
}

Composition Composition::Builder::build(int output) && {
  dim_of(output);
  return Composition(std::move(nodes_), output, params_);
}

void Composition::check_params(std::span<const double> params) const {
  if (params.size() != param_count_) {
    throw std::invalid_argument("Composition: expected " + std::to_string(param_count_) +
                                " parameters, got " + std::to_string(params.size()));
  }
}

std::vector<Towers> Composition::forward(const Towers& x, std::span<const double> params) const {
  check_params(params);
  if (static_cast<int>(x.size()) != input_dim()) {
    throw std::invalid_argument("Composition: input dimension mismatch");
  }
  const int level = x.empty() ? 0 : x.front().level();
  for (const DualTower& t : x) {
    if (t.level() != level) throw std::invalid_argument("DualTower: cannot mix nesting levels");
  }

  std::vector<Towers> vals(nodes_.size());
  vals[0] = x;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const Towers& a = vals[static_cast<std::size_t>(n.a)];
    Towers out;
    out.reserve(static_cast<std::size_t>(n.dim));
    switch (n.op) {
      case Op::Affine: {
        const int in = static_cast<int>(a.size());
        for (int r = 0; r < n.dim; ++r) {
          double bias = 0.0;
          if (n.parameterized) {
            if (n.has_bias) {
              bias = params[n.offset + static_cast<std::size_t>(n.dim * in + r)];
            }
          } else {
            bias = n.bias(r);
          }
          DualTower acc(level, bias);
          for (int c = 0; c < in; ++c) {
            const double w = n.parameterized
                                 ? params[n.offset + static_cast<std::size_t>(r * in + c)]
                                 : n.weight(r, c);
            acc += w * a[static_cast<std::size_t>(c)];
          }
          out.push_back(acc);
        }
        break;
      }
      case Op::Tanh:
        for (const DualTower& t : a) out.push_back(einn::tanh(t));
        break;
      case Op::Add: {
        const Towers& b = vals[static_cast<std::size_t>(n.b)];
        for (std::size_t k = 0; k < a.size(); ++k) out.push_back(a[k] + b[k]);
        break;
      }
      case Op::Mul: {
        const Towers& b = vals[static_cast<std::size_t>(n.b)];
        for (std::size_t k = 0; k < a.size(); ++k) out.push_back(a[k] * b[k]);
        break;
      }
      case Op::Scale:
        for (const DualTower& t : a) out.push_back(n.factor * t);
        break;
      case Op::Input:
        throw std::logic_error("Composition: input node in body");
    }
    vals[i] = std::move(out);
  }
  return vals;
}

Towers Composition::evaluate(const Towers& x, std::span<const double> params) const {
  return forward(x, params)[static_cast<std::size_t>(output_)];
}

Eigen::VectorXd Composition::evaluate(const Eigen::VectorXd& x,
                                      std::span<const double> params) const {
  Towers in;
  for (Eigen::Index i = 0; i < x.size(); ++i) in.emplace_back(0, x(i));
  const Towers out = evaluate(in, params);
  Eigen::VectorXd r(static_cast<Eigen::Index>(out.size()));
  for (std::size_t i = 0; i < out.size(); ++i) r(static_cast<Eigen::Index>(i)) = out[i].value();
  return r;
}

Composition::Pullback Composition::pullback(const Towers& x, std::span<const double> params,
                                            const Towers& output_bar) const {
  const std::vector<Towers> vals = forward(x, params);
  if (output_bar.size() != vals[static_cast<std::size_t>(output_)].size()) {
    throw std::invalid_argument("Composition: covector dimension mismatch");
  }
  std::vector<Towers> bars(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    bars[i] = zeros_like(x, vals[i].size());
  }
  for (std::size_t k = 0; k < output_bar.size(); ++k) {
    bars[static_cast<std::size_t>(output_)][k] += output_bar[k];
  }

  Pullback result;
  result.params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count_));

  for (std::size_t i = nodes_.size(); i-- > 1;) {
    const Node& n = nodes_[i];
    const Towers& zb = bars[i];
    const Towers& a = vals[static_cast<std::size_t>(n.a)];
    Towers& ab = bars[static_cast<std::size_t>(n.a)];
    switch (n.op) {
      case Op::Affine: {
        const int in = static_cast<int>(a.size());
        for (int r = 0; r < n.dim; ++r) {
          const DualTower& g = zb[static_cast<std::size_t>(r)];
          if (n.parameterized && n.has_bias) {
            result.params(static_cast<Eigen::Index>(n.offset) + n.dim * in + r) += g.value();
          }
          for (int c = 0; c < in; ++c) {
            const DualTower& ac = a[static_cast<std::size_t>(c)];
            if (n.parameterized) {
              double dw = 0.0;
              for (unsigned m = 0; m < g.size(); ++m) dw += g[m] * ac[m];
              result.params(static_cast<Eigen::Index>(n.offset) + r * in + c) += dw;
            }
            const double w = n.parameterized
                                 ? params[n.offset + static_cast<std::size_t>(r * in + c)]
                                 : n.weight(r, c);
            ab[static_cast<std::size_t>(c)] += w * g;
          }
        }
        break;
      }
      case Op::Tanh:
        for (std::size_t k = 0; k < a.size(); ++k) {
          const auto d = tanh_derivatives(a[k].value());
          tower_detail::scalar_pullback(a[k], d, zb[k], ab[k]);
        }
        break;
      case Op::Add: {
        Towers& bb = bars[static_cast<std::size_t>(n.b)];
        for (std::size_t k = 0; k < a.size(); ++k) {
          ab[k] += zb[k];
          bb[k] += zb[k];
        }
        break;
      }
      case Op::Mul: {
        const Towers& b = vals[static_cast<std::size_t>(n.b)];
        // Self-products (a == b) are safe: both rules accumulate into the same buffer.
        Towers la = zeros_like(x, a.size());
        Towers lb = zeros_like(x, a.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
          tower_detail::product_pullback(a[k], b[k], zb[k], la[k], lb[k]);
        }
        Towers& bb = bars[static_cast<std::size_t>(n.b)];
        for (std::size_t k = 0; k < a.size(); ++k) {
          ab[k] += la[k];
          bb[k] += lb[k];
        }
        break;
      }
      case Op::Scale:
        for (std::size_t k = 0; k < a.size(); ++k) ab[k] += n.factor * zb[k];
        break;
      case Op::Input:
        break;
    }
  }
  result.inputs = std::move(bars[0]);
  return result;
}

namespace {

Towers seed_towers(const Eigen::VectorXd& point, std::span<const Eigen::VectorXd> directions) {
  const int level = static_cast<int>(directions.size());
  Towers in;
  std::vector<double> seeds(directions.size());
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    for (std::size_t k = 0; k < directions.size(); ++k) seeds[k] = directions[k](i);
    in.push_back(DualTower::variable(level, point(i), seeds));
  }
  return in;
}

}  // namespace

Eigen::VectorXd mixed_derivative(const Composition& fn, std::span<const double> params,
                                 const Eigen::VectorXd& point,
                                 std::span<const Eigen::VectorXd> directions) {
  if (directions.empty() || directions.size() > DualTower::kMaxLevel) {
    throw std::invalid_argument("mixed_derivative: need 1..3 directions");
  }
  if (point.size() != fn.input_dim()) {
    throw std::invalid_argument("mixed_derivative: point dimension mismatch");
  }
  for (const auto& d : directions) {
    if (d.size() != point.size()) {
      throw std::invalid_argument("mixed_derivative: direction dimension mismatch");
    }
    if (!d.allFinite()) throw std::invalid_argument("mixed_derivative: non-finite direction");
  }
  const Towers out = fn.evaluate(seed_towers(point, directions), params);
  Eigen::VectorXd r(static_cast<Eigen::Index>(out.size()));
  for (std::size_t i = 0; i < out.size(); ++i) r(static_cast<Eigen::Index>(i)) = out[i].top();
  return r;
}

Eigen::VectorXd directional_derivative(const Composition& fn, std::span<const double> params,
                                       const Eigen::VectorXd& point,
                                       const Eigen::VectorXd& direction, int order) {
  if (order < 1 || order > DualTower::kMaxLevel) {
    throw std::invalid_argument("directional_derivative: order must be in 1..3");
  }
  std::vector<Eigen::VectorXd> dirs(static_cast<std::size_t>(order), direction);
  return mixed_derivative(fn, params, point, dirs);
}

Eigen::MatrixXd jacobian(const Composition& fn, std::span<const double> params,
                         const Eigen::VectorXd& point) {
  if (point.size() != fn.input_dim()) {
    throw std::invalid_argument("jacobian: point dimension mismatch");
  }
  const Eigen::Index n = point.size();
  Eigen::MatrixXd jac(fn.output_dim(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    jac.col(j) = directional_derivative(fn, params, point, Eigen::VectorXd::Unit(n, j), 1);
  }
  return jac;
}

Eigen::VectorXd grad_divergence(const Composition& fn, std::span<const double> params,
                                const Eigen::VectorXd& point) {
  if (point.size() != fn.input_dim() || fn.output_dim() != fn.input_dim()) {
    throw std::invalid_argument("grad_divergence: needs fn: R^d -> R^d");
  }
  const Eigen::Index d = point.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const Eigen::VectorXd dirs[2] = {Eigen::VectorXd::Unit(d, k), Eigen::VectorXd::Unit(d, j)};
      out(k) += mixed_derivative(fn, params, point, dirs)(j);
    }
  }
  return out;
}

Eigen::VectorXd param_vjp(const Composition& fn, const Eigen::VectorXd& point,
                          std::span<const double> params, const Eigen::VectorXd& covector) {
  if (covector.size() != fn.output_dim() || point.size() != fn.input_dim()) {
    throw std::invalid_argument("param_vjp: shape mismatch");
  }
  Towers in;
  for (Eigen::Index i = 0; i < point.size(); ++i) in.emplace_back(0, point(i));
  Towers bar;
  for (Eigen::Index i = 0; i < covector.size(); ++i) bar.emplace_back(0, covector(i));
  return fn.pullback(in, params, bar).params;
}

}  // namespace einn
