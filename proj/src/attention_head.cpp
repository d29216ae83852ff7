#include "attention_head.hpp"

#include <cmath>
#include <vector>

namespace mtre::detail {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using CMap = Eigen::Map<const MatrixXd>;
using CVec = Eigen::Map<const VectorXd>;
using Map = Eigen::Map<MatrixXd>;
using Vec = Eigen::Map<VectorXd>;

constexpr double kLayerNormEps = 1e-5;

// Flat parameter layout (column-major blocks, out x in):
//   w_in [E x c], b_in [E]
//   per layer: wq, wk, wv, wo [E x E], bq, bk, bv, bo [E], gamma, beta [E]
//   w1 [M x E], b1 [M], w2 [E x M], b2 [E], w_out [E], b_out [1]
struct LayerOffsets {
  Index wq, wk, wv, wo, bq, bk, bv, bo, gamma, beta;
};

struct Layout {
  int seq = 1;
  int chunk = 1;
  int embed = 1;
  int heads = 1;
  int mlp = 1;
  Index w_in = 0, b_in = 0;
  std::vector<LayerOffsets> layers;
  Index w1 = 0, b1 = 0, w2 = 0, b2 = 0, w_out = 0, b_out = 0;
  Index total = 0;

  Layout(int input_dim, const AttentionArch& arch)
      : seq(arch.sequence_chunks),
        chunk((input_dim + arch.sequence_chunks - 1) / arch.sequence_chunks),
        embed(arch.embed_dim),
        heads(arch.num_heads),
        mlp(arch.mlp_dim) {
    const Index e = embed;
    Index at = 0;
    auto take = [&at](Index n) {
      const Index start = at;
      at += n;
      return start;
    };
    w_in = take(e * chunk);
    b_in = take(e);
    for (int l = 0; l < arch.num_layers; ++l) {
      LayerOffsets o{};
      o.wq = take(e * e);
      o.wk = take(e * e);
      o.wv = take(e * e);
      o.wo = take(e * e);
      o.bq = take(e);
      o.bk = take(e);
      o.bv = take(e);
      o.bo = take(e);
      o.gamma = take(e);
      o.beta = take(e);
      layers.push_back(o);
    }
    w1 = take(Index{mlp} * e);
    b1 = take(mlp);
    w2 = take(e * mlp);
    b2 = take(e);
    w_out = take(e);
    b_out = take(1);
    total = at;
  }
};

// Input vector reshaped to [seq x chunk], zero-padded at the tail.
MatrixXd chunked(const Eigen::Ref<const VectorXd>& x, const Layout& lay) {
  MatrixXd out = MatrixXd::Zero(lay.seq, lay.chunk);
  for (Index i = 0; i < x.size(); ++i) out(i / lay.chunk, i % lay.chunk) = x(i);
  return out;
}

void row_softmax(MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// Inverted-dropout multiplier matrix: entries 0 or 1/(1-rate).
MatrixXd dropout_mask(Index rows, Index cols, Rng* rng, double rate) {
  MatrixXd m = MatrixXd::Ones(rows, cols);
  if (rng == nullptr || rate <= 0.0) return m;
  const double keep = 1.0 / (1.0 - rate);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = rng->bernoulli(rate) ? 0.0 : keep;
  }
  return m;
}

struct LayerCache {
  MatrixXd input;  // H before the layer [S x E]
  MatrixXd q, k, v;
  std::vector<MatrixXd> probs;  // per head [S x S]
  MatrixXd concat;              // attention output before w_o [S x E]
  MatrixXd drop;                // dropout multipliers on the attention output
  MatrixXd xhat;                // normalized residual sum
  VectorXd inv_std;             // per row
};

struct Forward {
  MatrixXd xs;
  std::vector<LayerCache> layers;
  VectorXd pooled;
  VectorXd u1, d1, m1;
  VectorXd u2, d2, m2;
  double z = 0.0;
};

Forward forward(const VectorXd& p, const Layout& lay, const Eigen::Ref<const VectorXd>& x,
                Rng* dropout, double rate) {
  const Index e = lay.embed;
  const Index s = lay.seq;
  const int dh = lay.embed / lay.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Forward f;
  f.xs = chunked(x, lay);
  MatrixXd h = f.xs * CMap(p.data() + lay.w_in, e, lay.chunk).transpose();
  h.rowwise() += CVec(p.data() + lay.b_in, e).transpose();

  for (const auto& o : lay.layers) {
    LayerCache c;
    c.input = h;
    c.q = h * CMap(p.data() + o.wq, e, e).transpose();
    c.k = h * CMap(p.data() + o.wk, e, e).transpose();
    c.v = h * CMap(p.data() + o.wv, e, e).transpose();
    c.q.rowwise() += CVec(p.data() + o.bq, e).transpose();
    c.k.rowwise() += CVec(p.data() + o.bk, e).transpose();
    c.v.rowwise() += CVec(p.data() + o.bv, e).transpose();

    c.concat.resize(s, e);
    for (int hd = 0; hd < lay.heads; ++hd) {
      MatrixXd scores = c.q.middleCols(hd * dh, dh) * c.k.middleCols(hd * dh, dh).transpose();
      scores *= scale;
      row_softmax(scores);
      c.concat.middleCols(hd * dh, dh) = scores * c.v.middleCols(hd * dh, dh);
      c.probs.push_back(std::move(scores));
    }
    MatrixXd attn = c.concat * CMap(p.data() + o.wo, e, e).transpose();
    attn.rowwise() += CVec(p.data() + o.bo, e).transpose();
    c.drop = dropout_mask(s, e, dropout, rate);
    MatrixXd resid = h + attn.cwiseProduct(c.drop);

    c.xhat.resize(s, e);
    c.inv_std.resize(s);
    for (Index r = 0; r < s; ++r) {
      const double mean = resid.row(r).mean();
      const double var = (resid.row(r).array() - mean).square().mean();
      c.inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
      c.xhat.row(r) = (resid.row(r).array() - mean) * c.inv_std(r);
    }
    h = c.xhat.array().rowwise() * CVec(p.data() + o.gamma, e).transpose().array();
    h.rowwise() += CVec(p.data() + o.beta, e).transpose();
    f.layers.push_back(std::move(c));
  }

  f.pooled = h.colwise().mean().transpose();

  f.u1 = CMap(p.data() + lay.w1, lay.mlp, e) * f.pooled + CVec(p.data() + lay.b1, lay.mlp);
  f.m1 = dropout_mask(lay.mlp, 1, dropout, rate);
  f.d1 = f.u1.cwiseMax(0.0).cwiseProduct(f.m1);
  f.u2 = CMap(p.data() + lay.w2, e, lay.mlp) * f.d1 + CVec(p.data() + lay.b2, e);
  f.m2 = dropout_mask(e, 1, dropout, rate);
  f.d2 = f.u2.cwiseMax(0.0).cwiseProduct(f.m2);
  f.z = CVec(p.data() + lay.w_out, e).dot(f.d2) + p(lay.b_out);
  return f;
}

void backward(const VectorXd& p, const Layout& lay, const Forward& f, double gz, VectorXd& g) {
  const Index e = lay.embed;
  const Index s = lay.seq;
  const int dh = lay.embed / lay.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Vec(g.data() + lay.w_out, e) += gz * f.d2;
  g(lay.b_out) += gz;
  VectorXd g_u2 = (gz * CVec(p.data() + lay.w_out, e)).cwiseProduct(f.m2);
  g_u2 = (f.u2.array() > 0.0).select(g_u2, 0.0);

  Map(g.data() + lay.w2, e, lay.mlp) += g_u2 * f.d1.transpose();
  Vec(g.data() + lay.b2, e) += g_u2;
  VectorXd g_u1 = (CMap(p.data() + lay.w2, e, lay.mlp).transpose() * g_u2).cwiseProduct(f.m1);
  g_u1 = (f.u1.array() > 0.0).select(g_u1, 0.0);

  Map(g.data() + lay.w1, lay.mlp, e) += g_u1 * f.pooled.transpose();
  Vec(g.data() + lay.b1, lay.mlp) += g_u1;
  const VectorXd g_pooled = CMap(p.data() + lay.w1, lay.mlp, e).transpose() * g_u1;

  MatrixXd g_h = (g_pooled / static_cast<double>(s)).transpose().replicate(s, 1);

  for (std::size_t li = lay.layers.size(); li-- > 0;) {
    const auto& o = lay.layers[li];
    const auto& c = f.layers[li];
    const auto gamma = CVec(p.data() + o.gamma, e);

    // Layer norm.
    Vec(g.data() + o.gamma, e) += g_h.cwiseProduct(c.xhat).colwise().sum().transpose();
    Vec(g.data() + o.beta, e) += g_h.colwise().sum().transpose();
    const MatrixXd g_xhat = g_h.array().rowwise() * gamma.transpose().array();
    MatrixXd g_resid(s, e);
    for (Index r = 0; r < s; ++r) {
      const double mean_g = g_xhat.row(r).mean();
      const double mean_gx = g_xhat.row(r).dot(c.xhat.row(r)) / static_cast<double>(e);
      g_resid.row(r) =
          c.inv_std(r) * (g_xhat.row(r).array() - mean_g - c.xhat.row(r).array() * mean_gx);
    }

    // Residual branch and attention output projection.
    const MatrixXd g_attn = g_resid.cwiseProduct(c.drop);
    Map(g.data() + o.wo, e, e) += g_attn.transpose() * c.concat;
    Vec(g.data() + o.bo, e) += g_attn.colwise().sum().transpose();
    const MatrixXd g_concat = g_attn * CMap(p.data() + o.wo, e, e);

    MatrixXd g_q(s, e), g_k(s, e), g_v(s, e);
    for (int hd = 0; hd < lay.heads; ++hd) {
      const MatrixXd& prob = c.probs[static_cast<std::size_t>(hd)];
      const auto g_out = g_concat.middleCols(hd * dh, dh);
      const MatrixXd g_prob = g_out * c.v.middleCols(hd * dh, dh).transpose();
      g_v.middleCols(hd * dh, dh) = prob.transpose() * g_out;
      const Eigen::VectorXd row_dot = g_prob.cwiseProduct(prob).rowwise().sum();
      const MatrixXd g_scores =
          prob.cwiseProduct(g_prob - row_dot.replicate(1, prob.cols())) * scale;
      g_q.middleCols(hd * dh, dh) = g_scores * c.k.middleCols(hd * dh, dh);
      g_k.middleCols(hd * dh, dh) = g_scores.transpose() * c.q.middleCols(hd * dh, dh);
    }
    Map(g.data() + o.wq, e, e) += g_q.transpose() * c.input;
    Map(g.data() + o.wk, e, e) += g_k.transpose() * c.input;
    Map(g.data() + o.wv, e, e) += g_v.transpose() * c.input;
    Vec(g.data() + o.bq, e) += g_q.colwise().sum().transpose();
    Vec(g.data() + o.bk, e) += g_k.colwise().sum().transpose();
    Vec(g.data() + o.bv, e) += g_v.colwise().sum().transpose();

    g_h = g_resid + g_q * CMap(p.data() + o.wq, e, e) + g_k * CMap(p.data() + o.wk, e, e) +
          g_v * CMap(p.data() + o.wv, e, e);
  }

  Map(g.data() + lay.w_in, e, lay.chunk) += g_h.transpose() * f.xs;
  Vec(g.data() + lay.b_in, e) += g_h.colwise().sum().transpose();
}

}  // namespace

Index attention_parameter_count(int input_dim, const AttentionArch& arch) {
  return Layout(input_dim, arch).total;
}

VectorXd attention_init(int input_dim, const AttentionArch& arch, std::uint64_t seed) {
  const Layout lay(input_dim, arch);
  VectorXd p(lay.total);
  Rng rng(seed);
  auto fill = [&](Index offset, Index count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Index i = 0; i < count; ++i) p(offset + i) = rng.uniform(-bound, bound);
  };
  const Index e = lay.embed;
  fill(lay.w_in, e * lay.chunk, lay.chunk);
  fill(lay.b_in, e, lay.chunk);
  for (const auto& o : lay.layers) {
    for (Index w : {o.wq, o.wk, o.wv, o.wo}) fill(w, e * e, lay.embed);
    for (Index b : {o.bq, o.bk, o.bv, o.bo}) fill(b, e, lay.embed);
    p.segment(o.gamma, e).setOnes();
    p.segment(o.beta, e).setZero();
  }
  fill(lay.w1, Index{lay.mlp} * e, lay.embed);
  fill(lay.b1, lay.mlp, lay.embed);
  fill(lay.w2, e * lay.mlp, lay.mlp);
  fill(lay.b2, e, lay.mlp);
  fill(lay.w_out, e, lay.embed);
  fill(lay.b_out, 1, lay.embed);
  return p;
}

double attention_logit(const VectorXd& params, int input_dim, const AttentionArch& arch,
                       const Eigen::Ref<const VectorXd>& x) {
  return forward(params, Layout(input_dim, arch), x, nullptr, 0.0).z;
}

double attention_example_loss(const VectorXd& params, int input_dim, const AttentionArch& arch,
                              const Eigen::Ref<const VectorXd>& x, double label, Rng* dropout,
                              double dropout_rate, VectorXd* grad, double scale) {
  const Layout lay(input_dim, arch);
  const Forward f = forward(params, lay, x, dropout, dropout_rate);
  if (grad != nullptr) {
    const double gz = clamped_bce_grad(f.z, label) * scale;
    if (gz != 0.0) backward(params, lay, f, gz, *grad);
  }
  return clamped_bce(f.z, label);
}

}  // namespace mtre::detail
