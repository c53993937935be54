#include "lightvit/roi.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace lightvit {

void MgnetConfig::validate() const {
  if (patch_size < 1) throw std::invalid_argument("MgnetConfig: bad patch size");
  if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0)
    throw std::invalid_argument("MgnetConfig: embed dim " + std::to_string(embed_dim) +
                                " does not split into " + std::to_string(n_heads) + " heads");
  if (ffn_ratio < 1) throw std::invalid_argument("MgnetConfig: ffn ratio must be positive");
  if (!(region_threshold > 0.0 && region_threshold < 1.0))
    throw std::invalid_argument("MgnetConfig: region threshold outside (0, 1)");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

PatchMask patch_mask_from_bits(std::vector<uint8_t> bits) {
  PatchMask m;
  m.bits = std::move(bits);
  if (!m.bits.empty()) {
    size_t zeros = 0;
    for (uint8_t b : m.bits)
      if (!b) ++zeros;
    m.skip_ratio = static_cast<double>(zeros) / static_cast<double>(m.bits.size());
  }
  return m;
}

// ===== forward =====

namespace {

void want_shape(const Tensor& t, int64_t r, int64_t c, const std::string& what) {
  if (t.shape.size() != 2 || t.rows() != r || t.cols() != c)
    throw std::invalid_argument("mgnet " + what + ": expected " + std::to_string(r) + "x" +
                                std::to_string(c) + ", got " + shape_str(t.shape));
}

/// Shared matmul hook: electronic MAC counting by default, the optical
/// tiled path (8-bit operands) when a core is wired in.
struct MatmulRoute {
  OpticalCore* core = nullptr;
  uint64_t* elec_ops = nullptr;
  TileStats* optical = nullptr;

  Tensor operator()(const Tensor& a, const Tensor& b) const {
    if (!core) {
      *elec_ops += static_cast<uint64_t>(a.rows()) * a.cols() * b.cols();
      return matmul(a, b);
    }
    QuantTensor qa = quantize_symmetric(a, 8);
    QuantTensor qb = quantize_symmetric(b, 8);
    MatmulResult res = core->tiled_matmul(qa, qb);
    *optical += res.stats;
    return res.out.dequantize();
  }
};

}  // namespace

MgnetRun mgnet_forward(const MgnetConfig& cfg, const MgnetWeights& w, const Tensor& patches,
                       OpticalCore* core) {
  cfg.validate();
  if (!patches.is_matrix() || patches.rows() < 1)
    throw std::invalid_argument("mgnet_forward: patches must be a nonempty matrix, got " +
                                shape_str(patches.shape));
  const int64_t n = patches.rows();
  const int64_t L = cfg.embed_dim;
  const int64_t dh = cfg.d_head();
  const int64_t seq = n + 1;

  want_shape(w.patch_embed, patches.cols(), L, "patch_embed");
  want_shape(w.class_token, 1, L, "class_token");
  want_shape(w.pos_embed, seq, L, "pos_embed");
  if (static_cast<int>(w.wq.size()) != cfg.n_heads || w.wk.size() != w.wq.size() ||
      w.wv.size() != w.wq.size())
    throw std::invalid_argument("mgnet: expected " + std::to_string(cfg.n_heads) +
                                " heads of q/k/v weights");
  for (int h = 0; h < cfg.n_heads; ++h) {
    want_shape(w.wq[static_cast<size_t>(h)], L, dh, "wq");
    want_shape(w.wk[static_cast<size_t>(h)], L, dh, "wk");
    want_shape(w.wv[static_cast<size_t>(h)], L, dh, "wv");
  }
  want_shape(w.wo, L, L, "wo");
  want_shape(w.ffn1, L, static_cast<int64_t>(cfg.ffn_ratio) * L, "ffn1");
  want_shape(w.ffn2, static_cast<int64_t>(cfg.ffn_ratio) * L, L, "ffn2");
  want_shape(w.wq_cls, L, L, "wq_cls");
  want_shape(w.wk_cls, L, L, "wk_cls");
  want_shape(w.region_w, n, n, "region_w");
  if (static_cast<int64_t>(w.region_b.size()) != n)
    throw std::invalid_argument("mgnet region bias: expected " + std::to_string(n) + " values");

  MgnetRun run;
  MatmulRoute mm{core, &run.elec_ops, &run.optical};
  auto pass = [&](int64_t elems) { run.elec_ops += static_cast<uint64_t>(elems); };

  // Embedding with class token and positions.
  Tensor emb = mm(patches, w.patch_embed);
  Tensor X = Tensor::matrix(seq, L);
  for (int64_t c = 0; c < L; ++c) X.at(0, c) = w.class_token.at(0, c) + w.pos_embed.at(0, c);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < L; ++c) X.at(r + 1, c) = emb.at(r, c) + w.pos_embed.at(r + 1, c);
  pass(seq * L);

  // One pre-LN encoder block.
  Tensor h1 = layernorm(X, w.ln1_gamma, w.ln1_beta);
  pass(seq * L);
  Tensor cat = Tensor::matrix(seq, L);
  for (int hd = 0; hd < cfg.n_heads; ++hd) {
    Tensor Q = mm(h1, w.wq[static_cast<size_t>(hd)]);
    Tensor K = mm(h1, w.wk[static_cast<size_t>(hd)]);
    Tensor V = mm(h1, w.wv[static_cast<size_t>(hd)]);
    Tensor Lg = mm(Q, K.transposed());
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    for (double& v : Lg.data) v *= inv;
    pass(seq * seq);
    Tensor S = softmax_rows(Lg);
    pass(seq * seq);
    Tensor O = mm(S, V);
    for (int64_t r = 0; r < seq; ++r)
      for (int64_t k = 0; k < dh; ++k) cat.at(r, hd * dh + k) = O.at(r, k);
  }
  X = add(X, mm(cat, w.wo));
  pass(seq * L);
  Tensor h2 = layernorm(X, w.ln2_gamma, w.ln2_beta);
  pass(seq * L);
  Tensor f = gelu(mm(h2, w.ffn1));
  pass(seq * static_cast<int64_t>(cfg.ffn_ratio) * L);
  X = add(X, mm(f, w.ffn2));
  pass(seq * L);

  // Class attention over the patch tokens only.
  Tensor cls = Tensor::matrix(1, L);
  for (int64_t c = 0; c < L; ++c) cls.at(0, c) = X.at(0, c);
  Tensor q_cls = mm(cls, w.wq_cls);  // 1 x L
  Tensor toks = Tensor::matrix(n, L);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < L; ++c) toks.at(r, c) = X.at(r + 1, c);
  Tensor K_cls = mm(toks, w.wk_cls);           // n x L
  Tensor attn = mm(q_cls, K_cls.transposed()); // 1 x n
  const double inv = 1.0 / std::sqrt(static_cast<double>(L));
  run.scores.s_cls_attn.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) run.scores.s_cls_attn[static_cast<size_t>(i)] = attn.at(0, i) * inv;
  pass(n);

  // Patch-score projection.
  Tensor sv = Tensor::matrix(1, n);
  for (int64_t i = 0; i < n; ++i) sv.at(0, i) = run.scores.s_cls_attn[static_cast<size_t>(i)];
  Tensor sr = mm(sv, w.region_w);
  run.scores.s_region.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    run.scores.s_region[static_cast<size_t>(i)] = sr.at(0, i) + w.region_b[static_cast<size_t>(i)];
  pass(n);
  return run;
}

// ===== masks =====

PatchMask make_mask(const RegionScores& scores, double t_reg) {
  if (!(t_reg > 0.0 && t_reg < 1.0))
    throw std::invalid_argument("make_mask: threshold " + std::to_string(t_reg) +
                                " outside (0, 1)");
  std::vector<uint8_t> bits(scores.s_region.size(), 0);
  for (size_t i = 0; i < bits.size(); ++i)
    bits[i] = sigmoid(scores.s_region[i]) >= t_reg ? 1 : 0;
  return patch_mask_from_bits(std::move(bits));
}

PatchMask ground_truth_mask(const std::vector<BBox>& boxes, int image_size, int patch_size) {
  if (image_size < 1 || patch_size < 1 || image_size % patch_size != 0)
    throw std::invalid_argument("ground_truth_mask: image " + std::to_string(image_size) +
                                " is not a multiple of patch " + std::to_string(patch_size));
  const int side = image_size / patch_size;
  std::vector<uint8_t> bits(static_cast<size_t>(side) * side, 0);
  for (const BBox& b : boxes) {
    if (!(b.w > 0.0 && b.h > 0.0)) continue;  // degenerate boxes are ignored
    for (int r = 0; r < side; ++r) {
      const double py0 = static_cast<double>(r) * patch_size, py1 = py0 + patch_size;
      if (!(std::max(b.y, py0) < std::min(b.y + b.h, py1))) continue;
      for (int c = 0; c < side; ++c) {
        const double px0 = static_cast<double>(c) * patch_size, px1 = px0 + patch_size;
        if (std::max(b.x, px0) < std::min(b.x + b.w, px1))
          bits[static_cast<size_t>(r) * side + c] = 1;
      }
    }
  }
  return patch_mask_from_bits(std::move(bits));
}

double miou(const PatchMask& a, const PatchMask& b) {
  if (a.bits.size() != b.bits.size())
    throw std::invalid_argument("miou: mask lengths differ, " + std::to_string(a.bits.size()) +
                                " vs " + std::to_string(b.bits.size()));
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 1.0;  // two empty masks agree perfectly
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MaskedSequence apply_mask(const Tensor& seq, const PatchMask& mask) {
  const int64_t n = static_cast<int64_t>(mask.bits.size());
  if (!seq.is_matrix() || (seq.rows() != n && seq.rows() != n + 1))
    throw std::invalid_argument("apply_mask: sequence has " +
                                (seq.is_matrix() ? std::to_string(seq.rows()) : shape_str(seq.shape)) +
                                " rows for a " + std::to_string(n) + "-patch mask");
  const bool with_class = seq.rows() == n + 1;

  MaskedSequence out;
  if (with_class) out.index_map.push_back(0);
  for (int64_t i = 0; i < n; ++i)
    if (mask.bits[static_cast<size_t>(i)]) out.index_map.push_back(with_class ? i + 1 : i);

  out.sequence = Tensor::matrix(static_cast<int64_t>(out.index_map.size()), seq.cols());
  for (size_t r = 0; r < out.index_map.size(); ++r)
    for (int64_t c = 0; c < seq.cols(); ++c)
      out.sequence.at(static_cast<int64_t>(r), c) = seq.at(out.index_map[r], c);
  return out;
}

std::vector<int64_t> mask_keep_indices(const PatchMask& mask) {
  std::vector<int64_t> keep;
  for (size_t i = 0; i < mask.bits.size(); ++i)
    if (mask.bits[i]) keep.push_back(static_cast<int64_t>(i));
  return keep;
}

// ===== toy weights =====

MgnetWeights random_mgnet_weights(const MgnetConfig& cfg, int image_size, uint64_t seed) {
  cfg.validate();
  if (image_size < 1 || image_size % cfg.patch_size != 0)
    throw std::invalid_argument("random_mgnet_weights: image " + std::to_string(image_size) +
                                " is not a multiple of patch " + std::to_string(cfg.patch_size));
  const int side = image_size / cfg.patch_size;
  const int64_t n = static_cast<int64_t>(side) * side;
  const int64_t L = cfg.embed_dim, dh = cfg.d_head();
  std::mt19937_64 rng(seed);
  auto mat = [&](int64_t r, int64_t c, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t = Tensor::matrix(r, c);
    for (double& v : t.data) v = dist(rng);
    return t;
  };

  MgnetWeights w;
  const double se = 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim()));
  const double sl = 1.0 / std::sqrt(static_cast<double>(L));
  w.patch_embed = mat(cfg.patch_dim(), L, se);
  w.class_token = mat(1, L, 0.5);
  w.pos_embed = mat(n + 1, L, 0.1);
  for (int h = 0; h < cfg.n_heads; ++h) {
    w.wq.push_back(mat(L, dh, sl));
    w.wk.push_back(mat(L, dh, sl));
    w.wv.push_back(mat(L, dh, sl));
  }
  w.wo = mat(L, L, sl);
  w.ffn1 = mat(L, static_cast<int64_t>(cfg.ffn_ratio) * L, sl);
  w.ffn2 = mat(static_cast<int64_t>(cfg.ffn_ratio) * L, L,
               1.0 / std::sqrt(static_cast<double>(cfg.ffn_ratio) * static_cast<double>(L)));
  w.ln1_gamma.assign(static_cast<size_t>(L), 1.0);
  w.ln1_beta.assign(static_cast<size_t>(L), 0.0);
  w.ln2_gamma.assign(static_cast<size_t>(L), 1.0);
  w.ln2_beta.assign(static_cast<size_t>(L), 0.0);
  w.wq_cls = mat(L, L, sl);
  w.wk_cls = mat(L, L, sl);
  w.region_w = mat(n, n, 1.0 / std::sqrt(static_cast<double>(n)));
  w.region_b.assign(static_cast<size_t>(n), 0.0);
  return w;
}

}  // namespace lightvit
