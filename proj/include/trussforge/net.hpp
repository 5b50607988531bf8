// Attention-based policy and soft-Q networks for the refinement stage.
// Node and bar rows pass through per-type embedders into a self-attention
// encoder whose node-bar attention is biased by the adjacency matrix; an
// attention decoder turns the pending-target embedding (and, for Q values,
// the action embedding) into head inputs.
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "trussforge/ad.hpp"
#include "trussforge/case_config.hpp"
#include "trussforge/model.hpp"
#include "trussforge/rng.hpp"

namespace trussforge::rl {

using ad::Mat;
using ad::Param;
using ad::Tape;
using ad::Var;

enum class TargetKind { kNode, kBar };

struct RefineTarget {
  TargetKind kind = TargetKind::kNode;
  int index = 0;
};

enum class PayloadKind { kMove, kArea, kSection };

inline int payload_dim(PayloadKind k, int dimension) {
  switch (k) {
    case PayloadKind::kMove: return dimension;
    case PayloadKind::kArea: return 1;
    case PayloadKind::kSection: return 2;
  }
  return 0;
}

// Fixed feature widths keep the networks independent of the case dimension.
constexpr int kNodeFeat = 7;   // pos(3), support(1), load(3)
constexpr int kBarFeat = 8;    // pos_u(3), pos_v(3), section(2)
constexpr int kIdFeat = 2 + kBarFeat;
constexpr int kActFeat = 3 + 3;  // payload one-hot, normalized action padded

struct ObsScales {
  Vec3 pos_lo = Vec3::Zero();
  Vec3 pos_extent = Vec3::Ones();
  double load_scale = 1.0;
  double area_max = 1.0;
  double d_max = 1.0;
  double t_max = 1.0;

  static ObsScales for_case(const CaseConfig& cfg) {
    ObsScales s;
    s.pos_lo = cfg.node_proposal_box.first;
    s.pos_extent = (cfg.node_proposal_box.second - cfg.node_proposal_box.first)
                       .cwiseMax(1e-9);
    double max_load = 0.0;
    for (const NodeSpec& n : cfg.fixed_nodes) {
      max_load = std::max(max_load, n.load.cwiseAbs().maxCoeff());
    }
    s.load_scale = std::max(max_load, 1.0);
    s.area_max = std::max(cfg.bounds.area_max, 1e-12);
    if (cfg.section_mode == SectionMode::kCatalog && !cfg.catalog.empty()) {
      s.d_max = cfg.catalog.entries.back().outer_diameter;
      double t_hi = 0.0;
      for (const auto& e : cfg.catalog.entries) t_hi = std::max(t_hi, e.thickness);
      s.t_max = std::max(t_hi, 1e-12);
    }
    return s;
  }
};

/// Network-ready view of a layout and the pending refinement target.
struct Observation {
  Mat node_feats;  // |V| x kNodeFeat
  Mat bar_feats;   // |E| x kBarFeat
  Mat adjacency;   // |V| x |E|, 1 when node i is an endpoint of bar j
  Mat id_feat;     // 1 x kIdFeat
  RefineTarget target;
  PayloadKind payload = PayloadKind::kMove;
  int payload_dims = 0;
  Eigen::VectorXd box_lo, box_hi;  // physical action box per payload dim
};

inline Observation build_observation(const TrussLayout& g, const CaseConfig& cfg,
                                     const ObsScales& scales, const RefineTarget& target) {
  Observation obs;
  const int nv = static_cast<int>(g.nodes.size());
  const int ne = static_cast<int>(g.bars.size());
  obs.node_feats = Mat::Zero(nv, kNodeFeat);
  for (int i = 0; i < nv; ++i) {
    const NodeSpec& n = g.nodes[static_cast<std::size_t>(i)];
    for (int a = 0; a < 3; ++a) {
      obs.node_feats(i, a) = (n.position[a] - scales.pos_lo[a]) / scales.pos_extent[a];
      obs.node_feats(i, 4 + a) = n.load[a] / scales.load_scale;
    }
    obs.node_feats(i, 3) = n.is_support ? 1.0 : 0.0;
  }
  obs.bar_feats = Mat::Zero(ne, kBarFeat);
  obs.adjacency = Mat::Zero(nv, ne);
  for (int j = 0; j < ne; ++j) {
    const Bar& b = g.bars[static_cast<std::size_t>(j)];
    for (int a = 0; a < 3; ++a) {
      obs.bar_feats(j, a) =
          (g.nodes[static_cast<std::size_t>(b.u)].position[a] - scales.pos_lo[a]) /
          scales.pos_extent[a];
      obs.bar_feats(j, 3 + a) =
          (g.nodes[static_cast<std::size_t>(b.v)].position[a] - scales.pos_lo[a]) /
          scales.pos_extent[a];
    }
    if (const auto* flat = std::get_if<Flat2D>(&b.section)) {
      obs.bar_feats(j, 6) = flat->area / scales.area_max;
    } else {
      const auto& tube = std::get<Tube3D>(b.section);
      obs.bar_feats(j, 6) = tube.outer_diameter / scales.d_max;
      obs.bar_feats(j, 7) = tube.thickness / scales.t_max;
    }
    obs.adjacency(b.u, j) = 1.0;
    obs.adjacency(b.v, j) = 1.0;
  }
  obs.target = target;
  obs.id_feat = Mat::Zero(1, kIdFeat);
  if (target.kind == TargetKind::kNode) {
    obs.id_feat(0, 0) = 1.0;
    obs.id_feat.block(0, 2, 1, kNodeFeat) = obs.node_feats.row(target.index);
  } else {
    obs.id_feat(0, 1) = 1.0;
    obs.id_feat.block(0, 2, 1, kBarFeat) = obs.bar_feats.row(target.index);
  }
  return obs;
}

/// Additive attention bias: free attention inside the node block and inside
/// the bar block, adjacency-gated attention across node-bar pairs.
inline Mat attention_bias(const Mat& adjacency) {
  const Eigen::Index nv = adjacency.rows();
  const Eigen::Index ne = adjacency.cols();
  constexpr double kBlocked = -1e9;
  Mat bias = Mat::Zero(nv + ne, nv + ne);
  for (Eigen::Index i = 0; i < nv; ++i) {
    for (Eigen::Index j = 0; j < ne; ++j) {
      if (adjacency(i, j) == 0.0) {
        bias(i, nv + j) = kBlocked;
        bias(nv + j, i) = kBlocked;
      }
    }
  }
  return bias;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct NetConfig {
  int width = 256;
  int embed_hidden = 128;
  int encoder_layers = 6;
  int decoder_layers = 6;
  int heads = 4;
  int ffn_hidden = 256;
  int head_hidden1 = 256;
  int head_hidden2 = 512;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double log_std_init = -1.2;

  /// Small configuration for quick runs and numerical tests.
  static NetConfig desk() {
    NetConfig c;
    c.width = 32;
    c.embed_hidden = 32;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.heads = 2;
    c.ffn_hidden = 32;
    c.head_hidden1 = 32;
    c.head_hidden2 = 64;
    return c;
  }
};

namespace init {
inline void uniform(Param& p, double limit, Rng& rng) {
  for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
      p.value(i, j) = rng.uniform(-limit, limit);
    }
  }
}
inline void kaiming(Param& p, Rng& rng) {
  uniform(p, std::sqrt(6.0 / static_cast<double>(p.value.rows())), rng);
}
}  // namespace init

struct Dense {
  Param w, b;
  Dense() = default;
  Dense(int in, int out, Rng& rng, const std::string& name)
      : w(in, out, name + ".w"), b(1, out, name + ".b") {
    init::kaiming(w, rng);
  }
  Var operator()(Tape& t, Var x, bool trainable) {
    return add_rowvec(matmul(x, t.leaf(w, trainable)), t.leaf(b, trainable));
  }
  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

struct Mlp2 {
  Dense l1, l2;
  Mlp2() = default;
  Mlp2(int in, int hidden, int out, Rng& rng, const std::string& name)
      : l1(in, hidden, rng, name + ".l1"), l2(hidden, out, rng, name + ".l2") {}
  Var operator()(Tape& t, Var x, bool trainable) {
    return l2(t, relu(l1(t, x, trainable)), trainable);
  }
  void collect(std::vector<Param*>& out) {
    l1.collect(out);
    l2.collect(out);
  }
};

struct Mlp3 {
  Dense l1, l2, l3;
  Mlp3() = default;
  Mlp3(int in, int h1, int h2, int out, Rng& rng, const std::string& name)
      : l1(in, h1, rng, name + ".l1"),
        l2(h1, h2, rng, name + ".l2"),
        l3(h2, out, rng, name + ".l3") {}
  Var operator()(Tape& t, Var x, bool trainable) {
    return l3(t, relu(l2(t, relu(l1(t, x, trainable)), trainable)), trainable);
  }
  void collect(std::vector<Param*>& out) {
    l1.collect(out);
    l2.collect(out);
    l3.collect(out);
  }
};

struct LayerNorm {
  Param gain, bias;
  LayerNorm() = default;
  LayerNorm(int width, const std::string& name)
      : gain(1, width, name + ".g"), bias(1, width, name + ".b") {
    gain.value.setOnes();
  }
  Var operator()(Tape& t, Var x, bool trainable) {
    return layernorm_rows(x, t.leaf(gain, trainable), t.leaf(bias, trainable));
  }
  void collect(std::vector<Param*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

struct Attention {
  Dense q, k, v, o;
  LayerNorm ln;
  int heads = 1;
  Attention() = default;
  Attention(int width, int n_heads, Rng& rng, const std::string& name)
      : q(width, width, rng, name + ".q"),
        k(width, width, rng, name + ".k"),
        v(width, width, rng, name + ".v"),
        o(width, width, rng, name + ".o"),
        ln(width, name + ".ln"),
        heads(n_heads) {}

  /// Pre-norm residual attention block. `memory` supplies keys and values;
  /// pass x itself for self-attention. `bias` (queries x keys) is optional.
  Var operator()(Tape& t, Var x, Var memory, const Mat* bias, bool trainable) {
    Var xn = ln(t, x, trainable);
    Var qs = q(t, xn, trainable);
    Var ks = k(t, memory, trainable);
    Var vs = v(t, memory, trainable);
    const int width = static_cast<int>(qs.cols());
    const int dk = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Var qh = slice_cols(qs, h * dk, dk);
      Var kh = slice_cols(ks, h * dk, dk);
      Var vh = slice_cols(vs, h * dk, dk);
      Var scores = affine(matmul(qh, transpose(kh)), scale, 0.0);
      if (bias != nullptr) scores = add(scores, t.constant(*bias));
      head_outs.push_back(matmul(softmax_rows(scores), vh));
    }
    Var merged = heads == 1 ? head_outs.front() : ad::concat_cols(head_outs);
    return add(x, o(t, merged, trainable));
  }

  void collect(std::vector<Param*>& out) {
    q.collect(out);
    k.collect(out);
    v.collect(out);
    o.collect(out);
    ln.collect(out);
  }
};

struct FeedForward {
  Dense l1, l2;
  LayerNorm ln;
  FeedForward() = default;
  FeedForward(int width, int hidden, Rng& rng, const std::string& name)
      : l1(width, hidden, rng, name + ".l1"),
        l2(hidden, width, rng, name + ".l2"),
        ln(width, name + ".ln") {}
  Var operator()(Tape& t, Var x, bool trainable) {
    return add(x, l2(t, relu(l1(t, ln(t, x, trainable), trainable)), trainable));
  }
  void collect(std::vector<Param*>& out) {
    l1.collect(out);
    l2.collect(out);
    ln.collect(out);
  }
};

struct EncoderLayer {
  Attention attn;
  FeedForward ffn;
  EncoderLayer() = default;
  EncoderLayer(const NetConfig& c, Rng& rng, const std::string& name)
      : attn(c.width, c.heads, rng, name + ".attn"),
        ffn(c.width, c.ffn_hidden, rng, name + ".ffn") {}
  Var operator()(Tape& t, Var x, const Mat* bias, bool trainable) {
    return ffn(t, attn(t, x, x, bias, trainable), trainable);
  }
  void collect(std::vector<Param*>& out) {
    attn.collect(out);
    ffn.collect(out);
  }
};

struct DecoderLayer {
  Attention self_attn;
  Attention cross_attn;
  FeedForward ffn;
  DecoderLayer() = default;
  DecoderLayer(const NetConfig& c, Rng& rng, const std::string& name)
      : self_attn(c.width, c.heads, rng, name + ".self"),
        cross_attn(c.width, c.heads, rng, name + ".cross"),
        ffn(c.width, c.ffn_hidden, rng, name + ".ffn") {}
  Var operator()(Tape& t, Var x, Var memory, bool trainable) {
    Var y = self_attn(t, x, x, nullptr, trainable);
    y = cross_attn(t, y, memory, nullptr, trainable);
    return ffn(t, y, trainable);
  }
  void collect(std::vector<Param*>& out) {
    self_attn.collect(out);
    cross_attn.collect(out);
    ffn.collect(out);
  }
};

// ---------------------------------------------------------------------------
// Shared trunk: embedders, encoder stack, decoder stack.
// ---------------------------------------------------------------------------

struct Trunk {
  NetConfig config;
  Mlp2 node_embed, bar_embed, id_embed;
  std::vector<EncoderLayer> encoder;
  LayerNorm encoder_ln;
  std::vector<DecoderLayer> decoder;
  LayerNorm decoder_ln;

  Trunk() = default;
  Trunk(const NetConfig& c, Rng& rng, const std::string& name)
      : config(c),
        node_embed(kNodeFeat, c.embed_hidden, c.width, rng, name + ".node_embed"),
        bar_embed(kBarFeat, c.embed_hidden, c.width, rng, name + ".bar_embed"),
        id_embed(kIdFeat, c.embed_hidden, c.width, rng, name + ".id_embed"),
        encoder_ln(c.width, name + ".enc_ln"),
        decoder_ln(c.width, name + ".dec_ln") {
    for (int i = 0; i < c.encoder_layers; ++i) {
      encoder.emplace_back(c, rng, name + ".enc" + std::to_string(i));
    }
    for (int i = 0; i < c.decoder_layers; ++i) {
      decoder.emplace_back(c, rng, name + ".dec" + std::to_string(i));
    }
  }

  Var encode(Tape& t, const Observation& obs, bool trainable) {
    Var nodes = node_embed(t, t.constant(obs.node_feats), trainable);
    Var bars = obs.bar_feats.rows() > 0
                   ? bar_embed(t, t.constant(obs.bar_feats), trainable)
                   : Var{};
    Var seq = bars.tape ? ad::concat_rows({nodes, bars}) : nodes;
    const Mat bias = attention_bias(obs.adjacency);
    for (EncoderLayer& layer : encoder) seq = layer(t, seq, &bias, trainable);
    return encoder_ln(t, seq, trainable);
  }

  /// Runs the decoder over the given target tokens against the encoded
  /// sequence and returns the normalized token states.
  Var decode(Tape& t, Var tokens, Var memory, bool trainable) {
    for (DecoderLayer& layer : decoder) tokens = layer(t, tokens, memory, trainable);
    return decoder_ln(t, tokens, trainable);
  }

  void collect(std::vector<Param*>& out) {
    node_embed.collect(out);
    bar_embed.collect(out);
    id_embed.collect(out);
    for (auto& l : encoder) l.collect(out);
    encoder_ln.collect(out);
    for (auto& l : decoder) l.collect(out);
    decoder_ln.collect(out);
  }
};

// ---------------------------------------------------------------------------
// Policy network: squashed-Gaussian action heads per payload kind.
// ---------------------------------------------------------------------------

struct PolicySample {
  Var action;    // 1 x k in (-1, 1)
  Var log_prob;  // 1 x 1
  Var mean;
  Var log_std;
};

class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(const NetConfig& c, int dimension, Rng& rng)
      : dimension_(dimension), trunk_(c, rng, "pi") {
    add_head(PayloadKind::kMove, c, rng);
    if (dimension == 2) {
      add_head(PayloadKind::kArea, c, rng);
    } else {
      add_head(PayloadKind::kSection, c, rng);
    }
  }

  /// Distribution parameters for the pending target's payload.
  std::pair<Var, Var> forward(Tape& t, const Observation& obs, bool trainable) {
    Var memory = trunk_.encode(t, obs, trainable);
    Var id_tok = trunk_.id_embed(t, t.constant(obs.id_feat), trainable);
    Var h_id = trunk_.decode(t, id_tok, memory, trainable);
    Mlp3& head = heads_.at(obs.payload);
    Var out = head(t, h_id, trainable);
    const int k = payload_dim(obs.payload, dimension_);
    Var mean = slice_cols(out, 0, k);
    Var log_std = clamp(slice_cols(out, k, k), trunk_.config.log_std_min,
                        trunk_.config.log_std_max);
    return {mean, log_std};
  }

  /// Reparameterized tanh-Gaussian sample with its log density.
  PolicySample sample(Tape& t, const Observation& obs, const Eigen::VectorXd& eps,
                      bool trainable) {
    auto [mean, log_std] = forward(t, obs, trainable);
    const int k = static_cast<int>(mean.cols());
    Mat eps_row = eps.transpose();
    Var std = exp_op(log_std);
    Var u = add(mean, cmul(std, t.constant(eps_row)));
    Var act = tanh_op(u);
    // log N(u) = sum(-0.5 eps^2 - log_std - 0.5 log 2 pi); eps is constant.
    const double const_part =
        -0.5 * eps.squaredNorm() - 0.5 * k * std::log(2.0 * M_PI);
    Var gauss = affine(sum_all(log_std), -1.0, const_part);
    Var correction = sum_all(log_op(affine(square(act), -1.0, 1.0 + 1e-6)));
    PolicySample s;
    s.action = act;
    s.log_prob = sub(gauss, correction);
    s.mean = mean;
    s.log_std = log_std;
    return s;
  }

  std::vector<Param*> parameters() {
    std::vector<Param*> out;
    trunk_.collect(out);
    for (auto& [kind, head] : heads_) head.collect(out);
    return out;
  }

  /// Mean and standard deviation of the pre-squash Gaussian, as plain values.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> distribution(const Observation& obs) {
    Tape t;
    auto [mean, log_std] = forward(t, obs, false);
    return {mean.value().row(0).transpose(),
            log_std.value().row(0).array().exp().matrix().transpose()};
  }

  /// Log density of a given normalized action under the tanh-Gaussian head.
  double log_prob_of(const Observation& obs, const Eigen::VectorXd& action) {
    const auto [mean, std] = distribution(obs);
    double logp = 0.0;
    for (Eigen::Index i = 0; i < action.size(); ++i) {
      const double a = std::clamp(action(i), -1.0 + 1e-12, 1.0 - 1e-12);
      const double u = std::atanh(a);
      const double zscore = (u - mean(i)) / std(i);
      logp += -0.5 * zscore * zscore - std::log(std(i)) - 0.5 * std::log(2.0 * M_PI);
      logp -= std::log(1.0 - a * a + 1e-6);
    }
    return logp;
  }

  int dimension() const { return dimension_; }
  const NetConfig& config() const { return trunk_.config; }

 private:
  void add_head(PayloadKind kind, const NetConfig& c, Rng& rng) {
    const int k = payload_dim(kind, dimension_);
    Mlp3 head(c.width, c.head_hidden1, c.head_hidden2, 2 * k, rng,
              "pi.head" + std::to_string(static_cast<int>(kind)));
    // Small output layer and a pulled-in spread so fresh policies make mild
    // adjustments near the identity action.
    head.l3.w.value *= 0.01;
    head.l3.b.value.rightCols(k).setConstant(trunk_.config.log_std_init);
    heads_.emplace(kind, std::move(head));
  }

  int dimension_ = 2;
  Trunk trunk_;
  std::map<PayloadKind, Mlp3> heads_;
};

// ---------------------------------------------------------------------------
// Soft-Q network: decodes [target, action] tokens; the action token's state
// feeds the value head.
// ---------------------------------------------------------------------------

class QNet {
 public:
  QNet() = default;
  QNet(const NetConfig& c, int dimension, Rng& rng, const std::string& name)
      : dimension_(dimension),
        trunk_(c, rng, name),
        act_embed_(kActFeat, c.embed_hidden, c.width, rng, name + ".act_embed"),
        q_head_(c.width, c.head_hidden1, c.head_hidden2, 1, rng, name + ".q_head") {}

  /// Q(s, a) for an action given as a Var row (gradients can flow into the
  /// action input, which the policy update exploits).
  Var forward(Tape& t, const Observation& obs, Var action_norm, bool trainable) {
    Var memory = trunk_.encode(t, obs, trainable);
    Var id_tok = trunk_.id_embed(t, t.constant(obs.id_feat), trainable);
    Var act_feat = action_feature(t, obs, action_norm);
    Var act_tok = act_embed_(t, act_feat, trainable);
    Var tokens = ad::concat_rows({id_tok, act_tok});
    Var h = trunk_.decode(t, tokens, memory, trainable);
    Var h_a = slice_rows(h, 1, 1);
    return q_head_(t, h_a, trainable);
  }

  Var forward(Tape& t, const Observation& obs, const Eigen::VectorXd& action_norm,
              bool trainable) {
    return forward(t, obs, t.constant(action_norm.transpose()), trainable);
  }

  std::vector<Param*> parameters() {
    std::vector<Param*> out;
    trunk_.collect(out);
    act_embed_.collect(out);
    q_head_.collect(out);
    return out;
  }

 private:
  Var action_feature(Tape& t, const Observation& obs, Var action_norm) {
    Mat onehot = Mat::Zero(1, 3);
    onehot(0, static_cast<int>(obs.payload)) = 1.0;
    const int k = static_cast<int>(action_norm.cols());
    std::vector<Var> parts{t.constant(onehot), action_norm};
    if (k < 3) parts.push_back(t.constant(Mat::Zero(1, 3 - k)));
    return ad::concat_cols(parts);
  }

  int dimension_ = 2;
  Trunk trunk_;
  Mlp2 act_embed_;
  Mlp3 q_head_;
};

// ---------------------------------------------------------------------------
// Parameter bookkeeping shared by trainers and checkpoints.
// ---------------------------------------------------------------------------

inline void copy_values(const std::vector<Param*>& dst, const std::vector<Param*>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

inline void soft_update(const std::vector<Param*>& target,
                        const std::vector<Param*>& src, double tau) {
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i]->value = (1.0 - tau) * target[i]->value + tau * src[i]->value;
  }
}

inline void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

}  // namespace trussforge::rl
