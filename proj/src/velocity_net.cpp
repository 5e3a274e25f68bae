#include "einn/velocity_net.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <string>

#include "einn/io.hpp"
#include "einn/rng.hpp"

namespace einn {

namespace {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Eigen has no packet tanh for double; its exp is vectorized
template <typename Derived>
ArrayXXd tanh_of(const Eigen::ArrayBase<Derived>& z) {
  const ArrayXXd e = (-2.0 * z.abs()).exp();
  return z.sign() * (1.0 - e) / (1.0 + e);
}

void check_points(const NetParams& params, const MatrixXd& xs) {
  if (xs.rows() != params.arch.spatial_dim()) {
    throw std::invalid_argument("velocity net: point dimension " + std::to_string(xs.rows()) +
                                " does not match network dimension " +
                                std::to_string(params.arch.spatial_dim()));
  }
  if (!xs.allFinite()) throw std::invalid_argument("velocity net: non-finite input point");
}

/// Offsets of each layer's weight block inside theta.
std::vector<std::size_t> layer_offsets(const Arch& arch) {
  std::vector<std::size_t> offs;
  std::size_t off = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    offs.push_back(off);
    const auto in = static_cast<std::size_t>(arch.widths[static_cast<std::size_t>(l)]);
    const auto out = static_cast<std::size_t>(arch.widths[static_cast<std::size_t>(l) + 1]);
    off += (in + 1) * out;
  }
  return offs;
}

}  // namespace

Arch Arch::mlp(int dim, int hidden_layers, int width) {
  Arch a;
  a.widths.push_back(dim + 1);
  for (int i = 0; i < hidden_layers; ++i) a.widths.push_back(width);
  a.widths.push_back(dim);
  a.validate();
  return a;
}

std::size_t Arch::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    n += static_cast<std::size_t>(widths[l] + 1) * static_cast<std::size_t>(widths[l + 1]);
  }
  return n;
}

void Arch::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("Arch: need at least input and output width");
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("Arch: widths must be >= 1");
  }
  if (widths.front() != widths.back() + 1) {
    throw std::invalid_argument("Arch: input width must equal spatial dimension + 1");
  }
}

void NetParams::validate() const {
  arch.validate();
  if (static_cast<std::size_t>(theta.size()) != arch.param_count()) {
    throw std::invalid_argument("NetParams: theta has " + std::to_string(theta.size()) +
                                " entries, arch needs " + std::to_string(arch.param_count()));
  }
}

NetParams init_params(const Arch& arch, std::uint64_t seed) {
  arch.validate();
  NetParams p{arch, VectorXd::Zero(static_cast<Index>(arch.param_count()))};
  Rng rng(seed, 0x6e6574ULL);
  std::size_t off = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int in = arch.widths[static_cast<std::size_t>(l)];
    const int out = arch.widths[static_cast<std::size_t>(l) + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (int k = 0; k < in * out; ++k) {
      p.theta(static_cast<Index>(off) + k) = limit * (2.0 * rng.uniform() - 1.0);
    }
    off += static_cast<std::size_t>((in + 1) * out);
  }
  return p;
}

std::uint64_t params_hash(const NetParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (int w : params.arch.widths) mix(&w, sizeof w);
  mix(params.theta.data(), static_cast<std::size_t>(params.theta.size()) * sizeof(double));
  return h;
}

Composition net_composition(const Arch& arch) {
  arch.validate();
  Composition::Builder b(arch.input_dim());
  int node = b.input();
  for (int l = 0; l < arch.layer_count(); ++l) {
    node = b.affine(node, arch.widths[static_cast<std::size_t>(l) + 1]);
    if (l + 1 < arch.layer_count()) node = b.tanh(node);
  }
  return std::move(b).build(node);
}

FieldJet evaluate_batch(const NetParams& params, double t, const MatrixXd& xs, JetOrder order) {
  check_points(params, xs);
  if (!std::isfinite(t)) throw std::invalid_argument("velocity net: non-finite time");
  const Arch& arch = params.arch;
  const int d = arch.spatial_dim();
  const Index P = xs.cols();
  const int n_first = order >= JetOrder::Jacobian ? d : 0;
  const int n_pairs = order == JetOrder::Full ? d * (d + 1) / 2 : 0;
  const Index C = 1 + n_first + n_pairs;

  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < d && n_pairs > 0; ++j) {
    for (int k = j; k < d; ++k) pairs.emplace_back(j, k);
  }
  auto pair_col = [&](std::size_t idx) { return (1 + n_first + static_cast<Index>(idx)) * P; };

  MatrixXd H = MatrixXd::Zero(d + 1, C * P);
  H.block(0, 0, 1, P).setConstant(t);
  H.block(1, 0, d, P) = xs;
  for (int j = 0; j < n_first; ++j) H.block(j + 1, (1 + j) * P, 1, P).setOnes();

  std::size_t off = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int in = arch.widths[static_cast<std::size_t>(l)];
    const int out = arch.widths[static_cast<std::size_t>(l) + 1];
    Eigen::Map<const RowMat> W(params.theta.data() + off, out, in);
    off += static_cast<std::size_t>(out * in);
    Eigen::Map<const VectorXd> b(params.theta.data() + off, out);
    off += static_cast<std::size_t>(out);

    MatrixXd Z = W * H;
    Z.leftCols(P).colwise() += b;
    if (l + 1 == arch.layer_count()) {
      H = std::move(Z);
      break;
    }
    const ArrayXXd s0 = tanh_of(Z.leftCols(P).array());
    const ArrayXXd s1 = 1.0 - s0.square();
    MatrixXd Hn(out, C * P);
    Hn.leftCols(P) = s0.matrix();
    for (int j = 0; j < n_first; ++j) {
      Hn.middleCols((1 + j) * P, P) = (s1 * Z.middleCols((1 + j) * P, P).array()).matrix();
    }
    if (n_pairs > 0) {
      const ArrayXXd s2 = -2.0 * s0 * s1;
      for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        const auto [j, k] = pairs[idx];
        const auto zj = Z.middleCols((1 + j) * P, P).array();
        const auto zk = Z.middleCols((1 + k) * P, P).array();
        Hn.middleCols(pair_col(idx), P) =
            (s2 * zj * zk + s1 * Z.middleCols(pair_col(idx), P).array()).matrix();
      }
    }
    H = std::move(Hn);
  }

  FieldJet jet;
  jet.value = H.leftCols(P);
  if (n_first > 0) {
    jet.jac.resize(d * d, P);
    jet.div = VectorXd::Zero(P);
    for (int j = 0; j < d; ++j) {
      jet.jac.middleRows(d * j, d) = H.middleCols((1 + j) * P, P);
      jet.div += H.block(j, (1 + j) * P, 1, P).transpose();
    }
  }
  if (n_pairs > 0) {
    jet.grad_div = MatrixXd::Zero(d, P);
    for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
      const auto [j, k] = pairs[idx];
      // d_k d_j f_j contributes to grad_div_k; the symmetric partner d_j d_k f_k to grad_div_j.
      jet.grad_div.row(k) += H.block(j, pair_col(idx), 1, P);
      if (j != k) jet.grad_div.row(j) += H.block(k, pair_col(idx), 1, P);
    }
  }
  return jet;
}

void pullback_batch(const NetParams& params, double t, const MatrixXd& xs,
                    const FieldCovectors& cov, MatrixXd* x_bar, VectorXd* theta_bar,
                    MatrixXd* jac_beta) {
  check_points(params, xs);
  const Arch& arch = params.arch;
  const int d = arch.spatial_dim();
  const Index P = xs.cols();
  const int L = arch.layer_count();
  const bool need_beta = cov.beta != nullptr;
  const bool need_first = need_beta || cov.lambda != nullptr || jac_beta != nullptr;
  if (need_beta && cov.scores == nullptr) {
    throw std::invalid_argument("pullback_batch: beta covector requires scores");
  }
  auto check_shape = [&](const MatrixXd* m, const char* what) {
    if (m && (m->rows() != d || m->cols() != P)) {
      throw std::invalid_argument(std::string("pullback_batch: bad shape for ") + what);
    }
  };
  check_shape(cov.alpha, "alpha");
  check_shape(cov.beta, "beta");
  check_shape(cov.scores, "scores");
  if (cov.lambda && cov.lambda->size() != P) {
    throw std::invalid_argument("pullback_batch: bad shape for lambda");
  }
  if (theta_bar && static_cast<std::size_t>(theta_bar->size()) != arch.param_count()) {
    throw std::invalid_argument("pullback_batch: theta_bar has wrong length");
  }
  if (jac_beta && !need_beta) {
    throw std::invalid_argument("pullback_batch: jac_beta requires beta");
  }

  // Jet components: value, d_j (j < d), D_beta, D_beta d_j.
  const Index n_first = need_first ? d : 0;
  const Index C = 1 + n_first + (need_beta ? 1 + d : 0);
  auto col_p = [&](int j) { return (1 + static_cast<Index>(j)) * P; };
  const Index col_q = (1 + d) * P;
  auto col_r = [&](int j) { return (2 + d + static_cast<Index>(j)) * P; };

  const std::vector<std::size_t> offs = layer_offsets(arch);
  std::vector<MatrixXd> Hs(static_cast<std::size_t>(L));
  std::vector<MatrixXd> Zs(static_cast<std::size_t>(L));
  std::vector<ArrayXXd> S1(static_cast<std::size_t>(L)), S2(static_cast<std::size_t>(L)),
      S3(static_cast<std::size_t>(L));

  MatrixXd H = MatrixXd::Zero(d + 1, C * P);
  H.block(0, 0, 1, P).setConstant(t);
  H.block(1, 0, d, P) = xs;
  for (int j = 0; j < n_first; ++j) H.block(j + 1, col_p(j), 1, P).setOnes();
  if (need_beta) H.block(1, col_q, d, P) = *cov.beta;

  for (int l = 0; l < L; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    const int in = arch.widths[ul];
    const int out = arch.widths[ul + 1];
    Eigen::Map<const RowMat> W(params.theta.data() + offs[ul], out, in);
    Eigen::Map<const VectorXd> b(params.theta.data() + offs[ul] + static_cast<std::size_t>(out * in),
                                 out);
    MatrixXd Z = W * H;
    Z.leftCols(P).colwise() += b;
    Hs[ul] = std::move(H);
    if (l + 1 == L) {
      Zs[ul] = std::move(Z);
      break;
    }
    const ArrayXXd s0 = tanh_of(Z.leftCols(P).array());
    ArrayXXd s1 = 1.0 - s0.square();
    ArrayXXd s2 = -2.0 * s0 * s1;
    ArrayXXd s3 = -2.0 * s1.square() + 4.0 * s0.square() * s1;
    MatrixXd Hn(out, C * P);
    Hn.leftCols(P) = s0.matrix();
    for (int j = 0; j < n_first; ++j) {
      Hn.middleCols(col_p(j), P) = (s1 * Z.middleCols(col_p(j), P).array()).matrix();
    }
    if (need_beta) {
      const auto zq = Z.middleCols(col_q, P).array();
      Hn.middleCols(col_q, P) = (s1 * zq).matrix();
      for (int j = 0; j < d; ++j) {
        Hn.middleCols(col_r(j), P) = (s2 * zq * Z.middleCols(col_p(j), P).array() +
                                      s1 * Z.middleCols(col_r(j), P).array())
                                         .matrix();
      }
    }
    S1[ul] = std::move(s1);
    S2[ul] = std::move(s2);
    S3[ul] = std::move(s3);
    Zs[ul] = std::move(Z);
    H = std::move(Hn);
  }

  const MatrixXd& Zout = Zs[static_cast<std::size_t>(L - 1)];
  if (jac_beta) *jac_beta = Zout.middleCols(col_q, P);

  MatrixXd Zbar = MatrixXd::Zero(d, C * P);
  if (cov.alpha) Zbar.leftCols(P) = *cov.alpha;
  if (cov.lambda) {
    for (int j = 0; j < d; ++j) Zbar.block(j, col_p(j), 1, P) = -cov.lambda->transpose();
  }
  if (need_beta) {
    Zbar.middleCols(col_q, P) = -*cov.scores;
    for (int j = 0; j < d; ++j) Zbar.block(j, col_r(j), 1, P).setConstant(-1.0);
  }

  for (int l = L - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const int in = arch.widths[ul];
    const int out = arch.widths[ul + 1];
    Eigen::Map<const RowMat> W(params.theta.data() + offs[ul], out, in);
    if (theta_bar) {
      Eigen::Map<RowMat> Wb(theta_bar->data() + offs[ul], out, in);
      Wb.noalias() += Zbar * Hs[ul].transpose();
      Eigen::Map<VectorXd> bb(theta_bar->data() + offs[ul] + static_cast<std::size_t>(out * in),
                              out);
      bb += Zbar.leftCols(P).rowwise().sum();
    }
    MatrixXd Hbar = W.transpose() * Zbar;
    if (l == 0) {
      if (x_bar) *x_bar += Hbar.block(1, 0, d, P);
      break;
    }
    // Hbar is the covector on the tanh jets produced by layer l - 1.
    const auto up = ul - 1;
    const MatrixXd& Z = Zs[up];
    const ArrayXXd& s1 = S1[up];
    const ArrayXXd& s2 = S2[up];
    const ArrayXXd& s3 = S3[up];
    MatrixXd Zb(in, C * P);
    ArrayXXd zb_v = s1 * Hbar.leftCols(P).array();
    for (int j = 0; j < n_first; ++j) {
      const auto hb = Hbar.middleCols(col_p(j), P).array();
      Zb.middleCols(col_p(j), P) = (s1 * hb).matrix();
      zb_v += s2 * Z.middleCols(col_p(j), P).array() * hb;
    }
    if (need_beta) {
      const auto zq = Z.middleCols(col_q, P).array();
      const auto hb_q = Hbar.middleCols(col_q, P).array();
      ArrayXXd zb_q = s1 * hb_q;
      zb_v += s2 * zq * hb_q;
      for (int j = 0; j < d; ++j) {
        const auto hb_r = Hbar.middleCols(col_r(j), P).array();
        const auto zp = Z.middleCols(col_p(j), P).array();
        Zb.middleCols(col_p(j), P).array() += s2 * zq * hb_r;
        zb_q += s2 * zp * hb_r;
        Zb.middleCols(col_r(j), P) = (s1 * hb_r).matrix();
        zb_v += (s3 * zq * zp + s2 * Z.middleCols(col_r(j), P).array()) * hb_r;
      }
      Zb.middleCols(col_q, P) = zb_q.matrix();
    }
    Zb.leftCols(P) = zb_v.matrix();
    Zbar = std::move(Zb);
  }
}

NetEval eval_full(const NetParams& params, double t, const VectorXd& x) {
  params.validate();
  const FieldJet jet = evaluate_batch(params, t, x, JetOrder::Full);
  const int d = params.arch.spatial_dim();
  NetEval e;
  e.value = jet.value.col(0);
  e.jac = Eigen::Map<const MatrixXd>(jet.jac.data(), d, d);
  e.div = jet.div(0);
  e.grad_div = jet.grad_div.col(0);
  return e;
}

VectorXd score_rhs(const NetParams& params, double t, const VectorXd& x, const VectorXd& xi) {
  if (xi.size() != x.size()) throw std::invalid_argument("score_rhs: xi dimension mismatch");
  const NetEval e = eval_full(params, t, x);
  return -e.grad_div - e.jac.transpose() * xi;
}

void save_checkpoint(const std::filesystem::path& path, const NetParams& params) {
  params.validate();
  std::ostringstream out;
  out << "einn-checkpoint 1\narch";
  for (int w : params.arch.widths) out << ' ' << w;
  out << "\ncount " << params.theta.size() << '\n';
  for (Index i = 0; i < params.theta.size(); ++i) out << format_double(params.theta(i)) << '\n';
  write_file_atomic(path, out.str());
}

NetParams load_checkpoint(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "einn-checkpoint" || version != 1) {
    throw std::runtime_error("load_checkpoint: not an einn checkpoint: " + path.string());
  }
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::istringstream arch_line(line);
  arch_line >> tag;
  if (tag != "arch") throw std::runtime_error("load_checkpoint: missing arch line");
  NetParams p;
  for (int w; arch_line >> w;) p.arch.widths.push_back(w);
  long long count = 0;
  in >> tag >> count;
  if (tag != "count" || count < 0) throw std::runtime_error("load_checkpoint: missing count");
  p.theta.resize(count);
  for (long long i = 0; i < count; ++i) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("load_checkpoint: truncated parameter list");
    p.theta(i) = std::stod(tok);
  }
  p.validate();
  return p;
}

}  // namespace einn
