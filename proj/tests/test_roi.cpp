#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lightvit/pipeline.hpp"
#include "lightvit/roi.hpp"

using namespace lightvit;

namespace {

MgnetConfig toy_cfg() {
  MgnetConfig cfg;
  cfg.patch_size = 4;
  cfg.embed_dim = 6;
  cfg.n_heads = 2;
  cfg.ffn_ratio = 2;
  return cfg;
}

Tensor random_mat(int64_t r, int64_t c, uint64_t seed, double stddev = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data) v = dist(rng);
  return t;
}

uint64_t stats_total(const TileStats& s) {
  return s.optical_cycles + s.tuning_events + s.mr_writes + s.adc_conversions +
         s.dac_conversions + s.vcsel_symbols + s.bpd_samples + s.electronic_adds +
         s.memory_read_bytes + s.memory_write_bytes + s.adc_saturations;
}

// Plain-loop reference for the whole scoring network, written against the
// documented formulas rather than the library helpers.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(static_cast<size_t>(t.rows()), std::vector<double>(static_cast<size_t>(t.cols())));
  for (int64_t r = 0; r < t.rows(); ++r)
    for (int64_t c = 0; c < t.cols(); ++c) m[static_cast<size_t>(r)][static_cast<size_t>(c)] = t.at(r, c);
  return m;
}

Mat ref_mm(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t k = 0; k < b.size(); ++k)
      for (size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat ref_ln(const Mat& x, const std::vector<double>& g, const std::vector<double>& b) {
  Mat out = x;
  for (auto& row : out) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    const double inv = 1.0 / std::sqrt(var + 1e-10);
    for (size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean) * inv * g[j] + b[j];
  }
  return out;
}

Mat ref_softmax(const Mat& x) {
  Mat out = x;
  for (auto& row : out) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

double ref_gelu(double x) {
  const double k = std::sqrt(2.0 / 3.14159265358979323846);
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

RegionScores ref_scores(const MgnetConfig& cfg, const MgnetWeights& w, const Tensor& patches) {
  const size_t n = static_cast<size_t>(patches.rows());
  const size_t L = static_cast<size_t>(cfg.embed_dim);
  const size_t dh = static_cast<size_t>(cfg.d_head());
  Mat emb = ref_mm(to_mat(patches), to_mat(w.patch_embed));
  Mat X(n + 1, std::vector<double>(L));
  for (size_t c = 0; c < L; ++c) X[0][c] = w.class_token.at(0, 0 + static_cast<int64_t>(c)) +
                                           w.pos_embed.at(0, static_cast<int64_t>(c));
  for (size_t r = 0; r < n; ++r)
    for (size_t c = 0; c < L; ++c)
      X[r + 1][c] = emb[r][c] + w.pos_embed.at(static_cast<int64_t>(r) + 1, static_cast<int64_t>(c));

  Mat h1 = ref_ln(X, w.ln1_gamma, w.ln1_beta);
  Mat cat(n + 1, std::vector<double>(L, 0.0));
  for (int hd = 0; hd < cfg.n_heads; ++hd) {
    Mat Q = ref_mm(h1, to_mat(w.wq[static_cast<size_t>(hd)]));
    Mat K = ref_mm(h1, to_mat(w.wk[static_cast<size_t>(hd)]));
    Mat V = ref_mm(h1, to_mat(w.wv[static_cast<size_t>(hd)]));
    Mat S(n + 1, std::vector<double>(n + 1));
    for (size_t i = 0; i <= n; ++i)
      for (size_t j = 0; j <= n; ++j) {
        double dot = 0.0;
        for (size_t k = 0; k < dh; ++k) dot += Q[i][k] * K[j][k];
        S[i][j] = dot / std::sqrt(static_cast<double>(dh));
      }
    S = ref_softmax(S);
    Mat O = ref_mm(S, V);
    for (size_t r = 0; r <= n; ++r)
      for (size_t k = 0; k < dh; ++k) cat[r][static_cast<size_t>(hd) * dh + k] = O[r][k];
  }
  Mat proj = ref_mm(cat, to_mat(w.wo));
  for (size_t r = 0; r <= n; ++r)
    for (size_t c = 0; c < L; ++c) X[r][c] += proj[r][c];
  Mat h2 = ref_ln(X, w.ln2_gamma, w.ln2_beta);
  Mat f = ref_mm(h2, to_mat(w.ffn1));
  for (auto& row : f)
    for (double& v : row) v = ref_gelu(v);
  Mat back = ref_mm(f, to_mat(w.ffn2));
  for (size_t r = 0; r <= n; ++r)
    for (size_t c = 0; c < L; ++c) X[r][c] += back[r][c];

  Mat q_cls = ref_mm({X[0]}, to_mat(w.wq_cls));
  Mat K_cls(n, std::vector<double>(L));
  {
    Mat toks(n, std::vector<double>(L));
    for (size_t r = 0; r < n; ++r) toks[r] = X[r + 1];
    K_cls = ref_mm(toks, to_mat(w.wk_cls));
  }
  RegionScores s;
  s.s_cls_attn.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (size_t c = 0; c < L; ++c) dot += q_cls[0][c] * K_cls[i][c];
    s.s_cls_attn[i] = dot / std::sqrt(static_cast<double>(L));
  }
  s.s_region.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double acc = w.region_b[i];
    for (size_t j = 0; j < n; ++j) acc += s.s_cls_attn[j] * w.region_w.at(static_cast<int64_t>(j), static_cast<int64_t>(i));
    s.s_region[i] = acc;
  }
  return s;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(MgnetConfig{}.validate());
  MgnetConfig det;
  det.embed_dim = 384;
  det.n_heads = 6;
  CHECK_NOTHROW(det.validate());
  CHECK(det.d_head() == 64);
  CHECK(MgnetConfig{}.patch_dim() == 768);

  MgnetConfig bad = toy_cfg();
  bad.embed_dim = 7;  // not divisible by 2 heads
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = toy_cfg();
  bad.region_threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = toy_cfg();
  bad.region_threshold = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("zero weights score every patch the same") {
  const MgnetConfig cfg = toy_cfg();
  MgnetWeights w = random_mgnet_weights(cfg, 8, 1);
  for (Tensor* t : {&w.patch_embed, &w.class_token, &w.pos_embed, &w.wo, &w.ffn1, &w.ffn2,
                    &w.wq_cls, &w.wk_cls, &w.region_w})
    std::fill(t->data.begin(), t->data.end(), 0.0);
  for (auto* v : {&w.wq, &w.wk, &w.wv})
    for (Tensor& t : *v) std::fill(t.data.begin(), t.data.end(), 0.0);
  std::fill(w.region_b.begin(), w.region_b.end(), 0.0);

  const Tensor patches = random_mat(4, cfg.patch_dim(), 2);
  const MgnetRun run = mgnet_forward(cfg, w, patches);
  REQUIRE(run.scores.s_region.size() == 4);
  REQUIRE(run.scores.s_cls_attn.size() == 4);
  for (double s : run.scores.s_region) CHECK(s == 0.0);
  for (double s : run.scores.s_cls_attn) CHECK(s == 0.0);

  // sigmoid(0) = 0.5 sits exactly on the default threshold: the boundary keeps.
  const PatchMask m = make_mask(run.scores, 0.5);
  for (uint8_t b : m.bits) CHECK(b == 1);
  CHECK(m.skip_ratio == 0.0);
}

TEST_CASE("forward matches a plain-loop reference") {
  const MgnetConfig cfg = toy_cfg();
  const MgnetWeights w = random_mgnet_weights(cfg, 8, 7);
  const Tensor patches = random_mat(4, cfg.patch_dim(), 9);

  const MgnetRun run = mgnet_forward(cfg, w, patches);
  const RegionScores ref = ref_scores(cfg, w, patches);
  REQUIRE(run.scores.s_region.size() == ref.s_region.size());
  for (size_t i = 0; i < ref.s_region.size(); ++i) {
    CHECK(run.scores.s_cls_attn[i] == doctest::Approx(ref.s_cls_attn[i]).epsilon(1e-9));
    CHECK(run.scores.s_region[i] == doctest::Approx(ref.s_region[i]).epsilon(1e-9));
  }

  // Electronic by default: the optical counters never move.
  CHECK(stats_total(run.optical) == 0);
  CHECK(run.elec_ops > 0);
}

TEST_CASE("electronic op accounting splits MACs from element passes") {
  const MgnetConfig cfg = toy_cfg();
  const MgnetWeights w = random_mgnet_weights(cfg, 8, 3);
  const Tensor patches = random_mat(4, cfg.patch_dim(), 4);

  const uint64_t n = 4, seq = n + 1;
  const uint64_t L = static_cast<uint64_t>(cfg.embed_dim);
  const uint64_t dh = static_cast<uint64_t>(cfg.d_head());
  const uint64_t f = static_cast<uint64_t>(cfg.ffn_ratio) * L;
  const uint64_t pd = static_cast<uint64_t>(cfg.patch_dim());

  const uint64_t macs = n * pd * L                                           // embed
                        + static_cast<uint64_t>(cfg.n_heads) *
                              (3 * seq * L * dh + 2 * seq * seq * dh)        // q/k/v, scores, mix
                        + seq * L * L                                        // wo
                        + 2 * seq * L * f                                    // ffn
                        + L * L + n * L * L + L * n                          // class attention
                        + n * n;                                             // region projection
  const uint64_t passes = seq * L                                            // embedding assembly
                          + 4 * seq * L                                      // ln1, residuals, ln2
                          + static_cast<uint64_t>(cfg.n_heads) * 2 * seq * seq
                          + seq * f                                          // gelu
                          + 2 * n;                                           // two score passes

  const MgnetRun elec = mgnet_forward(cfg, w, patches);
  CHECK(elec.elec_ops == macs + passes);

  OpticalCoreConfig occ;
  occ.adc_bits = 0;
  occ.dac_bits = 0;
  OpticalCore core(occ);
  const MgnetRun opt = mgnet_forward(cfg, w, patches, &core);
  CHECK(opt.elec_ops == passes);
  CHECK(opt.optical.optical_cycles > 0);
  CHECK(opt.optical.tuning_events > 0);
}

TEST_CASE("optical routing tracks the electronic scores") {
  const MgnetConfig cfg = toy_cfg();
  const MgnetWeights w = random_mgnet_weights(cfg, 8, 11);
  const Tensor patches = random_mat(4, cfg.patch_dim(), 12);

  const MgnetRun elec = mgnet_forward(cfg, w, patches);
  OpticalCoreConfig occ;  // ideal converters isolate the 8-bit operand grid
  occ.adc_bits = 0;
  occ.dac_bits = 0;
  OpticalCore core(occ);
  const MgnetRun opt = mgnet_forward(cfg, w, patches, &core);

  double mag = 0.0;
  for (double s : elec.scores.s_region) mag = std::max(mag, std::fabs(s));
  for (size_t i = 0; i < elec.scores.s_region.size(); ++i)
    CHECK(std::fabs(opt.scores.s_region[i] - elec.scores.s_region[i]) <=
          0.2 * std::max(1.0, mag));
}

TEST_CASE("scores are equivariant for symmetric region weights") {
  const MgnetConfig cfg = toy_cfg();
  MgnetWeights w = random_mgnet_weights(cfg, 8, 21);
  std::fill(w.pos_embed.data.begin(), w.pos_embed.data.end(), 0.0);
  // W_r = a I + b 11^T commutes with every permutation; a generic dense
  // projection does not, so equivariance is only claimed for this family.
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j) w.region_w.at(i, j) = (i == j ? 0.7 : 0.0) + 0.3;
  std::fill(w.region_b.begin(), w.region_b.end(), 0.1);

  const Tensor patches = random_mat(4, cfg.patch_dim(), 22);
  const std::vector<int64_t> perm = {2, 0, 3, 1};
  Tensor shuffled = Tensor::matrix(4, patches.cols());
  for (int64_t r = 0; r < 4; ++r)
    for (int64_t c = 0; c < patches.cols(); ++c) shuffled.at(r, c) = patches.at(perm[static_cast<size_t>(r)], c);

  const MgnetRun base = mgnet_forward(cfg, w, patches);
  const MgnetRun shuf = mgnet_forward(cfg, w, shuffled);
  for (size_t r = 0; r < perm.size(); ++r) {
    CHECK(shuf.scores.s_region[r] ==
          doctest::Approx(base.scores.s_region[static_cast<size_t>(perm[r])]).epsilon(1e-9));
    CHECK(shuf.scores.s_cls_attn[r] ==
          doctest::Approx(base.scores.s_cls_attn[static_cast<size_t>(perm[r])]).epsilon(1e-9));
  }
}

TEST_CASE("forward rejects malformed inputs") {
  const MgnetConfig cfg = toy_cfg();
  const MgnetWeights w = random_mgnet_weights(cfg, 8, 5);
  CHECK_THROWS_AS(mgnet_forward(cfg, w, random_mat(4, cfg.patch_dim() - 1, 6)),
                  std::invalid_argument);
  CHECK_THROWS_AS(mgnet_forward(cfg, w, Tensor{}), std::invalid_argument);
  // Weights sized for a 4-patch image reject a 9-patch input.
  CHECK_THROWS_AS(mgnet_forward(cfg, w, random_mat(9, cfg.patch_dim(), 6)),
                  std::invalid_argument);
}

TEST_CASE("make_mask thresholds on sigmoid with boundary keeps") {
  RegionScores s;
  s.s_region = {-2.0, -0.1, 0.0, 0.1, 2.0};

  const PatchMask mid = make_mask(s, 0.5);
  CHECK(mid.bits == std::vector<uint8_t>{0, 0, 1, 1, 1});
  CHECK(mid.skip_ratio == doctest::Approx(0.4));

  const PatchMask low = make_mask(s, 0.05);
  CHECK(low.skip_ratio == 0.0);
  const PatchMask high = make_mask(s, 0.95);
  CHECK(high.skip_ratio == 1.0);

  // Brute force across thresholds, and skip ratio is monotone in t.
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  RegionScores r;
  for (int i = 0; i < 64; ++i) r.s_region.push_back(dist(rng));
  double prev = -1.0;
  for (double t = 0.05; t < 1.0; t += 0.05) {
    const PatchMask m = make_mask(r, t);
    for (size_t i = 0; i < r.s_region.size(); ++i)
      CHECK(m.bits[i] == (1.0 / (1.0 + std::exp(-r.s_region[i])) >= t ? 1 : 0));
    CHECK(m.skip_ratio >= prev);
    prev = m.skip_ratio;
  }

  CHECK_THROWS_AS(make_mask(s, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_mask(s, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(make_mask(s, -0.2), std::invalid_argument);
}

TEST_CASE("ground truth masks follow box geometry") {
  // 64 px image, 16 px patches: a 4 x 4 grid.
  const PatchMask empty = ground_truth_mask({}, 64, 16);
  CHECK(empty.bits.size() == 16);
  CHECK(empty.skip_ratio == 1.0);

  const PatchMask full = ground_truth_mask({{0, 0, 64, 64}}, 64, 16);
  CHECK(full.skip_ratio == 0.0);

  // One box exactly on one patch footprint marks exactly that patch.
  const PatchMask single = ground_truth_mask({{16, 16, 16, 16}}, 64, 16);
  int set = 0;
  for (uint8_t b : single.bits) set += b;
  CHECK(set == 1);
  CHECK(single.bits[5] == 1);  // row 1, col 1

  // Footprints are half open, so a box starting at x = 16 misses column 0.
  const PatchMask edge = ground_truth_mask({{16, 0, 16, 16}}, 64, 16);
  CHECK(edge.bits[0] == 0);
  CHECK(edge.bits[1] == 1);

  // Partial overlap counts: one pixel across a patch boundary marks both.
  const PatchMask straddle = ground_truth_mask({{15.5, 0, 1.0, 1.0}}, 64, 16);
  CHECK(straddle.bits[0] == 1);
  CHECK(straddle.bits[1] == 1);

  // Degenerate boxes mark nothing.
  CHECK(ground_truth_mask({{10, 10, 0, 5}}, 64, 16).skip_ratio == 1.0);

  // Adding boxes only grows the mask.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> pos(0.0, 64.0), len(0.0, 32.0);
  std::vector<BBox> boxes;
  PatchMask prev = empty;
  for (int i = 0; i < 12; ++i) {
    boxes.push_back({pos(rng), pos(rng), len(rng), len(rng)});
    const PatchMask cur = ground_truth_mask(boxes, 64, 16);
    for (size_t b = 0; b < cur.bits.size(); ++b) CHECK(cur.bits[b] >= prev.bits[b]);
    prev = cur;
  }

  CHECK_THROWS_AS(ground_truth_mask({}, 60, 16), std::invalid_argument);
}

TEST_CASE("miou is the intersection over union of kept sets") {
  const PatchMask a = patch_mask_from_bits({1, 1, 1, 1, 1});
  const PatchMask b = patch_mask_from_bits({1, 1, 1, 1, 0});
  CHECK(miou(a, a) == 1.0);
  CHECK(miou(a, b) == doctest::Approx(0.8));
  CHECK(miou(b, a) == miou(a, b));

  const PatchMask left = patch_mask_from_bits({1, 1, 0, 0});
  const PatchMask right = patch_mask_from_bits({0, 0, 1, 1});
  CHECK(miou(left, right) == 0.0);

  const PatchMask none = patch_mask_from_bits({0, 0, 0, 0});
  CHECK(miou(none, none) == 1.0);
  CHECK(miou(none, left) == 0.0);

  CHECK_THROWS_AS(miou(a, left), std::invalid_argument);
}

TEST_CASE("apply_mask keeps the class token and builds an index map") {
  Tensor seq = Tensor::matrix(5, 3);
  for (int64_t r = 0; r < 5; ++r)
    for (int64_t c = 0; c < 3; ++c) seq.at(r, c) = 10.0 * static_cast<double>(r) + static_cast<double>(c);

  const PatchMask all = patch_mask_from_bits({1, 1, 1, 1});
  const MaskedSequence kept = apply_mask(seq, all);
  CHECK(kept.sequence.rows() == 5);
  CHECK(kept.index_map == std::vector<int64_t>{0, 1, 2, 3, 4});
  CHECK(kept.sequence.data == seq.data);

  const PatchMask nothing = patch_mask_from_bits({0, 0, 0, 0});
  const MaskedSequence cls_only = apply_mask(seq, nothing);
  CHECK(cls_only.sequence.rows() == 1);
  CHECK(cls_only.index_map == std::vector<int64_t>{0});
  CHECK(cls_only.sequence.at(0, 2) == 2.0);

  const PatchMask half = patch_mask_from_bits({1, 0, 1, 0});
  const MaskedSequence pruned = apply_mask(seq, half);
  CHECK(pruned.index_map == std::vector<int64_t>{0, 1, 3});
  CHECK(pruned.sequence.at(1, 0) == 10.0);
  CHECK(pruned.sequence.at(2, 1) == 31.0);

  // Patch-only input: no class row to pin.
  Tensor patches = Tensor::matrix(4, 3);
  for (int64_t r = 0; r < 4; ++r) patches.at(r, 0) = static_cast<double>(r);
  const MaskedSequence po = apply_mask(patches, half);
  CHECK(po.index_map == std::vector<int64_t>{0, 2});
  CHECK(po.sequence.at(1, 0) == 2.0);

  CHECK_THROWS_AS(apply_mask(Tensor::matrix(3, 3), half), std::invalid_argument);

  // Two thirds of a 196-patch sequence skipped leaves 65 patches plus the
  // class token.
  std::vector<uint8_t> bits(196, 0);
  for (size_t i = 0; i < 65; ++i) bits[i * 3] = 1;
  const PatchMask two_thirds = patch_mask_from_bits(bits);
  CHECK(two_thirds.skip_ratio == doctest::Approx(131.0 / 196.0));
  const MaskedSequence big = apply_mask(Tensor::matrix(197, 2), two_thirds);
  CHECK(big.sequence.rows() == 1 + 65);
}

TEST_CASE("masks drive the backbone through keep indices") {
  const PatchMask mask = patch_mask_from_bits({1, 0, 1, 1});
  CHECK(mask_keep_indices(mask) == std::vector<int64_t>{0, 2, 3});

  ViTConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 16;
  cfg.embed_dim = 64;
  cfg.n_heads = 2;
  cfg.n_blocks = 1;
  cfg.n_classes = 3;
  const ModelWeights weights = random_weights(cfg, 1);
  const Tensor patches = random_patches(cfg, 2);
  Simulator sim(cfg, weights);

  const std::vector<int64_t> keep = mask_keep_indices(mask);
  const ForwardResult pruned = sim.forward(patches, &keep);
  CHECK(pruned.features.rows() == 1 + 3);
  const ForwardResult full = sim.forward(patches);
  CHECK(pruned.totals.optical.optical_cycles < full.totals.optical.optical_cycles);
}
