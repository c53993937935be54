#pragma once
// Region-of-interest masking: a one-block mask network scoring patch
// relevance through class attention, threshold masks, bounding-box ground
// truth and the mIoU metric. Masks gate the backbone before its first
// block, so skipped patches never cost anything downstream.

#include <cstdint>
#include <vector>

#include "lightvit/optical_core.hpp"
#include "lightvit/quant.hpp"
#include "lightvit/tensor.hpp"

namespace lightvit {

struct MgnetConfig {
  int patch_size = 16;
  int embed_dim = 192;  // the detection profile doubles this to 384
  int n_heads = 3;      //                           and this to 6
  int ffn_ratio = 4;
  double region_threshold = 0.5;  // t_reg in (0, 1)

  int d_head() const { return embed_dim / n_heads; }
  int patch_dim(int in_channels = 3) const { return patch_size * patch_size * in_channels; }
  void validate() const;
};

/// Everything stays in real form: the mask network is electronic by
/// default, and the optical option quantizes on the fly.
struct MgnetWeights {
  Tensor patch_embed;  // patch_dim x embed_dim
  Tensor class_token;  // 1 x embed_dim
  Tensor pos_embed;    // (n_patches + 1) x embed_dim
  // The single encoder block.
  std::vector<Tensor> wq, wk, wv;  // per head, embed_dim x d_head
  Tensor wo;                       // embed_dim x embed_dim
  Tensor ffn1, ffn2;
  std::vector<double> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  // Class attention: one full-width head scoring every patch token.
  Tensor wq_cls, wk_cls;  // embed_dim x embed_dim
  // Patch-score projection, one output per patch.
  Tensor region_w;  // n_patches x n_patches
  std::vector<double> region_b;
};

struct RegionScores {
  std::vector<double> s_region;    // pre-sigmoid, one per patch
  std::vector<double> s_cls_attn;  // raw class-attention scores, one per patch
};

/// bits[i] = 1 keeps patch i. The class token is not part of the mask and
/// is always processed.
struct PatchMask {
  std::vector<uint8_t> bits;
  double skip_ratio = 0.0;  // zeros / length, exactly
};

PatchMask patch_mask_from_bits(std::vector<uint8_t> bits);

struct MgnetRun {
  RegionScores scores;
  uint64_t elec_ops = 0;  // electronic work items (MACs and element passes)
  TileStats optical;      // nonzero only when routed through a core
};

/// Scores one image: patch embedding, one encoder block, class attention
/// q_cls K^T / sqrt(d), then the patch-score projection. Passing a core
/// routes every matmul through the optical path at 8-bit operands; the
/// elementwise glue stays electronic either way.
MgnetRun mgnet_forward(const MgnetConfig& cfg, const MgnetWeights& w, const Tensor& patches,
                       OpticalCore* core = nullptr);

/// bit_i = 1 iff sigmoid(s_region_i) >= t_reg; the boundary keeps.
PatchMask make_mask(const RegionScores& scores, double t_reg);

struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
};

/// Patch bit = 1 iff the patch footprint overlaps any positive-area box,
/// partially or fully. Zero-area boxes contribute nothing.
PatchMask ground_truth_mask(const std::vector<BBox>& boxes, int image_size, int patch_size);

/// Intersection over union of the kept sets; two empty masks agree at 1.
/// Throws on length mismatch.
double miou(const PatchMask& a, const PatchMask& b);

struct MaskedSequence {
  Tensor sequence;                // kept rows, original order
  std::vector<int64_t> index_map; // row -> original row index
};

/// Prunes a patch sequence. Accepts n_patches rows (patches only) or
/// n_patches + 1 rows with the class token in row 0, which is kept
/// unconditionally.
MaskedSequence apply_mask(const Tensor& seq, const PatchMask& mask);

/// Kept patch indices, the form Simulator::forward takes.
std::vector<int64_t> mask_keep_indices(const PatchMask& mask);

double sigmoid(double x);

MgnetWeights random_mgnet_weights(const MgnetConfig& cfg, int image_size, uint64_t seed);

}  // namespace lightvit
