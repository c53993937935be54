#pragma once
// Five-core transformer pipeline: attention decomposed onto the cores, the
// block dataflow with electronic glue, trace emission for one input and the
// overlap-vs-serial multi-input schedule study.

#include <cstdint>
#include <string>
#include <vector>

#include "lightvit/cost.hpp"
#include "lightvit/optical_core.hpp"
#include "lightvit/trace.hpp"

namespace lightvit {

// ===== model description =====

struct ViTConfig {
  int image_size = 224;
  int patch_size = 16;
  int in_channels = 3;
  int embed_dim = 768;
  int n_heads = 12;
  int n_blocks = 12;
  int ffn_ratio = 4;
  int n_classes = 1000;
  int bits = 8;  // operand width for every optical matmul
  GeluKind gelu = GeluKind::TanhApprox;

  int d_head() const { return embed_dim / n_heads; }
  int grid_side() const { return image_size / patch_size; }
  int n_patches() const { return grid_side() * grid_side(); }
  int seq_len() const { return n_patches() + 1; }  // class token in row 0
  int patch_dim() const { return patch_size * patch_size * in_channels; }
  int ffn_dim() const { return ffn_ratio * embed_dim; }

  void validate() const;  // throws std::invalid_argument
};

/// tiny | small | base | large at the usual 16 px patch.
ViTConfig vit_preset(const std::string& name, int image_size = 224);

struct AttentionWeights {
  QuantTensor wq, wk, wv;  // embed_dim x d_head each
};

struct BlockWeights {
  std::vector<AttentionWeights> heads;
  QuantTensor wo;    // embed_dim x embed_dim
  QuantTensor ffn1;  // embed_dim x ffn_dim
  QuantTensor ffn2;  // ffn_dim x embed_dim
  std::vector<double> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

/// Pre-LN encoder. The classifier head stays electronic, so its weights are
/// kept in real form.
struct ModelWeights {
  QuantTensor patch_embed;  // patch_dim x embed_dim
  Tensor class_token;       // 1 x embed_dim
  Tensor pos_embed;         // seq_len x embed_dim
  std::vector<BlockWeights> blocks;
  std::vector<double> final_gamma, final_beta;
  Tensor classifier_w;  // embed_dim x n_classes
  std::vector<double> classifier_b;
};

ModelWeights random_weights(const ViTConfig& cfg, uint64_t seed);
Tensor random_patches(const ViTConfig& cfg, uint64_t seed);

// ===== forward results =====

/// One optical matmul as it ran, for billing and offline analysis.
struct OpLog {
  std::string name;  // e.g. "blk3.h1.scores"
  std::string core;  // "C1".."C5"
  int attention_stage = 1;  // 2 = weights exist only after this input's softmax
  TileStats stats;
  std::vector<TileSegment> segments;
};

struct ForwardStats {
  TileStats optical;              // summed over all optical ops
  uint64_t electronic_elems = 0;  // work items of every electronic pass
};

struct ForwardResult {
  Tensor logits;    // 1 x n_classes, read off the class token
  Tensor features;  // seq x embed_dim after the final layernorm
  ForwardStats totals;
  std::vector<OpLog> ops;  // execution order
  ScheduleTrace trace;     // one-input timed trace
};

// ===== pipelined schedule study =====

struct PipelineReport {
  int n_inputs = 0;
  bool overlap = true;
  double makespan = 0.0;
  double steady_interval = 0.0;  // per-input completion spacing once warm
  ScheduleTrace trace;
};

/// Replays a one-input trace for n_inputs back-to-back inputs. With overlap
/// the cores accept input t+1 as soon as resources and data allow (tuning
/// for t+1 hides behind the attention tail of t); without it every input
/// waits for the previous one to finish completely.
PipelineReport schedule_pipeline(const ScheduleTrace& single_input, int n_inputs, bool overlap,
                                 const Durations& lat);

// ===== the simulator =====

/// Attention runs per head on five cores:
///   C1  Q  = X Wq                     static weights
///   C2  T  = Q fold(Wk^T)             static weights, 1/sqrt(d_head) folded
///   C3  L  = T X^T                    weights arrive with the input
///   C4  V  = X Wv                     static weights
///   C5  O^T = V^T S^T                 weights exist after softmax (stage 2)
/// The projection Wo rides on C1, FFN matmuls on C2 and C3. Softmax, GELU,
/// layernorm, residuals, requantization and the classifier are electronic.
class Simulator {
 public:
  Simulator(ViTConfig cfg, ModelWeights weights, OpticalCoreConfig core_cfg = {},
            Durations lat = {});

  /// Runs one image. `keep`, when given, lists the patch indices that
  /// survive masking (class token implicit); rows are dropped before the
  /// patch embedding, so every downstream stage shrinks with it.
  ForwardResult forward(const Tensor& patches, const std::vector<int64_t>* keep = nullptr) const;

  const ViTConfig& config() const { return cfg_; }
  const ModelWeights& model() const { return w_; }
  const OpticalCoreConfig& core_config() const { return core_cfg_; }
  const Durations& durations() const { return lat_; }

 private:
  ViTConfig cfg_;
  ModelWeights w_;
  OpticalCoreConfig core_cfg_;
  Durations lat_;
  std::vector<std::vector<QuantTensor>> folded_k_;  // [block][head], fold(Wk^T)
};

}  // namespace lightvit
