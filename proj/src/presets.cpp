#include <cmath>
#include <random>
#include <stdexcept>

#include "lightvit/pipeline.hpp"

namespace lightvit {

ViTConfig vit_preset(const std::string& name, int image_size) {
  ViTConfig cfg;
  cfg.image_size = image_size;
  if (name == "tiny") {
    cfg.embed_dim = 192;
    cfg.n_heads = 3;
    cfg.n_blocks = 12;
  } else if (name == "small") {
    cfg.embed_dim = 384;
    cfg.n_heads = 6;
    cfg.n_blocks = 12;
  } else if (name == "base") {
    cfg.embed_dim = 768;
    cfg.n_heads = 12;
    cfg.n_blocks = 12;
  } else if (name == "large") {
    cfg.embed_dim = 1024;
    cfg.n_heads = 16;
    cfg.n_blocks = 24;
  } else {
    throw std::invalid_argument("vit_preset: unknown preset '" + name +
                                "' (expected tiny, small, base or large)");
  }
  cfg.validate();
  return cfg;
}

namespace {

/// Codes drawn flat over the symmetric range; the scale puts values at a
/// He-style magnitude so activations stay O(1) through the depth.
QuantTensor random_qmatrix(std::mt19937_64& rng, int64_t r, int64_t c, int bits, int64_t fan_in) {
  QuantTensor t;
  t.shape = {r, c};
  t.bits = bits;
  const int32_t lim = code_limit(bits);
  std::uniform_int_distribution<int32_t> dist(-lim, lim);
  t.codes.resize(static_cast<size_t>(r * c));
  for (int16_t& code : t.codes) code = static_cast<int16_t>(dist(rng));
  t.scale = 2.0 / (static_cast<double>(lim) * std::sqrt(static_cast<double>(fan_in)));
  return t;
}

Tensor random_matrix(std::mt19937_64& rng, int64_t r, int64_t c, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data) v = dist(rng);
  return t;
}

}  // namespace

ModelWeights random_weights(const ViTConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const int64_t d = cfg.embed_dim, dh = cfg.d_head(), fd = cfg.ffn_dim();

  ModelWeights w;
  w.patch_embed = random_qmatrix(rng, cfg.patch_dim(), d, cfg.bits, cfg.patch_dim());
  w.class_token = random_matrix(rng, 1, d, 0.5);
  w.pos_embed = random_matrix(rng, cfg.seq_len(), d, 0.1);

  w.blocks.resize(static_cast<size_t>(cfg.n_blocks));
  for (BlockWeights& bw : w.blocks) {
    bw.heads.resize(static_cast<size_t>(cfg.n_heads));
    for (AttentionWeights& aw : bw.heads) {
      aw.wq = random_qmatrix(rng, d, dh, cfg.bits, d);
      aw.wk = random_qmatrix(rng, d, dh, cfg.bits, d);
      aw.wv = random_qmatrix(rng, d, dh, cfg.bits, d);
    }
    bw.wo = random_qmatrix(rng, d, d, cfg.bits, d);
    bw.ffn1 = random_qmatrix(rng, d, fd, cfg.bits, d);
    bw.ffn2 = random_qmatrix(rng, fd, d, cfg.bits, fd);
    bw.ln1_gamma.assign(static_cast<size_t>(d), 1.0);
    bw.ln1_beta.assign(static_cast<size_t>(d), 0.0);
    bw.ln2_gamma.assign(static_cast<size_t>(d), 1.0);
    bw.ln2_beta.assign(static_cast<size_t>(d), 0.0);
  }

  w.final_gamma.assign(static_cast<size_t>(d), 1.0);
  w.final_beta.assign(static_cast<size_t>(d), 0.0);
  w.classifier_w = random_matrix(rng, d, cfg.n_classes, 1.0 / std::sqrt(static_cast<double>(d)));
  w.classifier_b.assign(static_cast<size_t>(cfg.n_classes), 0.0);
  return w;
}

Tensor random_patches(const ViTConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5a5a5a5a5ull);
  return random_matrix(rng, cfg.n_patches(), cfg.patch_dim(), 1.0);
}

}  // namespace lightvit
