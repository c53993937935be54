#include "lightvit/pipeline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <utility>

namespace lightvit {

// ===== configuration =====

void ViTConfig::validate() const {
  if (image_size < 1 || patch_size < 1 || image_size % patch_size != 0)
    throw std::invalid_argument("ViTConfig: image " + std::to_string(image_size) +
                                " is not a multiple of patch " + std::to_string(patch_size));
  if (in_channels < 1) throw std::invalid_argument("ViTConfig: need at least one channel");
  if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0)
    throw std::invalid_argument("ViTConfig: embed dim " + std::to_string(embed_dim) +
                                " does not split into " + std::to_string(n_heads) + " heads");
  if (n_blocks < 1) throw std::invalid_argument("ViTConfig: need at least one block");
  if (ffn_ratio < 1) throw std::invalid_argument("ViTConfig: ffn ratio must be positive");
  if (n_classes < 1) throw std::invalid_argument("ViTConfig: need at least one class");
  if (bits < kMinBits || bits > kMaxBits)
    throw std::invalid_argument("ViTConfig: operand width " + std::to_string(bits) +
                                " outside [" + std::to_string(kMinBits) + ", " +
                                std::to_string(kMaxBits) + "]");
}

// ===== weight validation =====

namespace {

void want_shape(const QuantTensor& t, int64_t r, int64_t c, const std::string& what) {
  if (t.shape.size() != 2 || t.rows() != r || t.cols() != c)
    throw std::invalid_argument(what + ": expected " + std::to_string(r) + "x" +
                                std::to_string(c) + ", got " + shape_str(t.shape));
}

void want_shape(const Tensor& t, int64_t r, int64_t c, const std::string& what) {
  if (t.shape.size() != 2 || t.rows() != r || t.cols() != c)
    throw std::invalid_argument(what + ": expected " + std::to_string(r) + "x" +
                                std::to_string(c) + ", got " + shape_str(t.shape));
}

void want_len(const std::vector<double>& v, int64_t n, const std::string& what) {
  if (static_cast<int64_t>(v.size()) != n)
    throw std::invalid_argument(what + ": expected " + std::to_string(n) + " values, got " +
                                std::to_string(v.size()));
}

void check_model(const ViTConfig& cfg, const ModelWeights& w) {
  const int64_t d = cfg.embed_dim, dh = cfg.d_head();
  want_shape(w.patch_embed, cfg.patch_dim(), d, "patch_embed");
  want_shape(w.class_token, 1, d, "class_token");
  want_shape(w.pos_embed, cfg.seq_len(), d, "pos_embed");
  if (static_cast<int>(w.blocks.size()) != cfg.n_blocks)
    throw std::invalid_argument("model: " + std::to_string(w.blocks.size()) + " blocks for " +
                                std::to_string(cfg.n_blocks));
  for (size_t b = 0; b < w.blocks.size(); ++b) {
    const std::string bn = "block " + std::to_string(b);
    const BlockWeights& bw = w.blocks[b];
    if (static_cast<int>(bw.heads.size()) != cfg.n_heads)
      throw std::invalid_argument(bn + ": " + std::to_string(bw.heads.size()) + " heads for " +
                                  std::to_string(cfg.n_heads));
    for (size_t h = 0; h < bw.heads.size(); ++h) {
      const std::string hn = bn + " head " + std::to_string(h);
      want_shape(bw.heads[h].wq, d, dh, hn + " wq");
      want_shape(bw.heads[h].wk, d, dh, hn + " wk");
      want_shape(bw.heads[h].wv, d, dh, hn + " wv");
    }
    want_shape(bw.wo, d, d, bn + " wo");
    want_shape(bw.ffn1, d, cfg.ffn_dim(), bn + " ffn1");
    want_shape(bw.ffn2, cfg.ffn_dim(), d, bn + " ffn2");
    want_len(bw.ln1_gamma, d, bn + " ln1 gamma");
    want_len(bw.ln1_beta, d, bn + " ln1 beta");
    want_len(bw.ln2_gamma, d, bn + " ln2 gamma");
    want_len(bw.ln2_beta, d, bn + " ln2 beta");
  }
  want_len(w.final_gamma, d, "final gamma");
  want_len(w.final_beta, d, "final beta");
  want_shape(w.classifier_w, d, cfg.n_classes, "classifier");
  want_len(w.classifier_b, cfg.n_classes, "classifier bias");
}

}  // namespace

// ===== simulator =====

Simulator::Simulator(ViTConfig cfg, ModelWeights weights, OpticalCoreConfig core_cfg,
                     Durations lat)
    : cfg_(cfg), w_(std::move(weights)), core_cfg_(core_cfg), lat_(lat) {
  cfg_.validate();
  check_model(cfg_, w_);
  // 1/sqrt(d_head) lives in the tuned key weights, not in a separate pass.
  folded_k_.resize(static_cast<size_t>(cfg_.n_blocks));
  for (int b = 0; b < cfg_.n_blocks; ++b) {
    folded_k_[static_cast<size_t>(b)].reserve(static_cast<size_t>(cfg_.n_heads));
    for (int h = 0; h < cfg_.n_heads; ++h)
      folded_k_[static_cast<size_t>(b)].push_back(
          fold_scale(w_.blocks[static_cast<size_t>(b)].heads[static_cast<size_t>(h)].wk.transposed(),
                     cfg_.d_head()));
  }
}

ForwardResult Simulator::forward(const Tensor& patches, const std::vector<int64_t>* keep) const {
  if (!patches.is_matrix() || patches.rows() != cfg_.n_patches() ||
      patches.cols() != cfg_.patch_dim())
    throw std::invalid_argument("forward: patches must be " + std::to_string(cfg_.n_patches()) +
                                "x" + std::to_string(cfg_.patch_dim()) + ", got " +
                                shape_str(patches.shape));

  std::vector<int64_t> rows;
  if (keep) {
    rows = *keep;
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    if (rows.empty()) throw std::invalid_argument("forward: keep list is empty");
    if (rows.front() < 0 || rows.back() >= cfg_.n_patches())
      throw std::invalid_argument("forward: keep index outside [0, " +
                                  std::to_string(cfg_.n_patches()) + ")");
  } else {
    rows.resize(static_cast<size_t>(cfg_.n_patches()));
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int64_t>(i);
  }

  const int64_t np = static_cast<int64_t>(rows.size());
  const int64_t seq = np + 1;
  const int64_t d = cfg_.embed_dim;
  const int64_t dh = cfg_.d_head();
  const int64_t fd = cfg_.ffn_dim();

  // Fresh cores each run keep the simulation a pure function of its inputs;
  // per-core seeds decorrelate the stochastic noise streams.
  std::vector<OpticalCore> cores;
  cores.reserve(5);
  for (int i = 0; i < 5; ++i) {
    OpticalCoreConfig cc = core_cfg_;
    cc.noise_seed = core_cfg_.noise_seed + static_cast<uint64_t>(i) * 0x9e3779b97f4a7c15ull;
    cores.emplace_back(cc);
  }

  ForwardResult res;
  TraceBuilder tb(lat_);

  // Electronic pass: one work item per element touched. Partial-sum adds
  // inside tiled matmuls are billed from the optical counters instead.
  auto elec = [&](EventKind kind, std::string name, uint64_t elems, std::vector<int64_t> deps) {
    res.totals.electronic_elems += elems;
    return tb.emit("ELEC", kind, std::move(name), TileStats{}, elems, std::move(deps));
  };

  // One optical matmul: six trace events (reads, tune, stream, partial-sum
  // accumulation, writeback) plus the op log.
  auto run_op = [&](int core_idx, int stage, std::string name, const QuantTensor& x,
                    const QuantTensor& w, int64_t x_dep,
                    int64_t w_dep) -> std::pair<AccumTensor, int64_t> {
    MatmulResult mr = cores[static_cast<size_t>(core_idx)].tiled_matmul(x, w);
    const std::string core = "C" + std::to_string(core_idx + 1);
    TileStats agg[6];
    for (const TileSegment& s : mr.segments) agg[static_cast<int>(s.kind)] += s.counts;

    std::vector<int64_t> wdeps;
    if (w_dep >= 0) wdeps.push_back(w_dep);
    const int64_t rd = tb.emit("MEM", EventKind::Read, name + ".wread", agg[0], 0, std::move(wdeps));
    const int64_t tn = tb.emit(core, EventKind::Tune, name + ".tune", agg[1], 0, {rd});
    std::vector<int64_t> xdeps;
    if (x_dep >= 0) xdeps.push_back(x_dep);
    const int64_t xr = tb.emit("MEM", EventKind::Read, name + ".xread", agg[2], 0, std::move(xdeps));
    int64_t last = tb.emit(core, EventKind::Stream, name + ".stream", agg[3], 0, {tn, xr});
    if (agg[4].electronic_adds)
      last = tb.emit("ELEC", EventKind::Add, name + ".acc", agg[4], 0, {last});
    last = tb.emit("MEM", EventKind::Write, name + ".wb", agg[5], 0, {last});

    res.totals.optical += mr.stats;
    res.ops.push_back(OpLog{name, core, stage, mr.stats, std::move(mr.segments)});
    return {std::move(mr.out), last};
  };

  auto req = [&](const Tensor& t) { return quantize_symmetric(t, cfg_.bits); };

  // ----- patch embedding (C1) -----
  Tensor px = Tensor::matrix(np, cfg_.patch_dim());
  for (int64_t i = 0; i < np; ++i)
    for (int64_t c = 0; c < cfg_.patch_dim(); ++c) px.at(i, c) = patches.at(rows[static_cast<size_t>(i)], c);
  QuantTensor pq = req(px);
  const int64_t q0 = elec(EventKind::Elec, "embed.q", static_cast<uint64_t>(px.numel()), {});
  auto [emb, emb_ev] = run_op(0, 1, "embed", pq, w_.patch_embed, q0, -1);

  Tensor x0 = emb.dequantize();
  Tensor X = Tensor::matrix(seq, d);
  for (int64_t c = 0; c < d; ++c) X.at(0, c) = w_.class_token.at(0, c) + w_.pos_embed.at(0, c);
  for (int64_t i = 0; i < np; ++i)
    for (int64_t c = 0; c < d; ++c)
      X.at(i + 1, c) = x0.at(i, c) + w_.pos_embed.at(rows[static_cast<size_t>(i)] + 1, c);
  int64_t x_ev = elec(EventKind::Add, "embed.pos", static_cast<uint64_t>(seq * d), {emb_ev});

  // ----- encoder blocks -----
  for (int blk = 0; blk < cfg_.n_blocks; ++blk) {
    const std::string bn = "blk" + std::to_string(blk);
    const BlockWeights& bw = w_.blocks[static_cast<size_t>(blk)];

    Tensor h = layernorm(X, bw.ln1_gamma, bw.ln1_beta);
    const int64_t ln_ev = elec(EventKind::Layernorm, bn + ".ln1", static_cast<uint64_t>(seq * d), {x_ev});
    QuantTensor hq = req(h);
    const int64_t hq_ev = elec(EventKind::Elec, bn + ".ln1.req", static_cast<uint64_t>(seq * d), {ln_ev});
    QuantTensor hqT = hq.transposed();
    const int64_t hT_ev = elec(EventKind::Elec, bn + ".xt", static_cast<uint64_t>(seq * d), {hq_ev});

    Tensor heads_out = Tensor::matrix(seq, d);
    std::vector<int64_t> head_evs;
    for (int hd = 0; hd < cfg_.n_heads; ++hd) {
      const std::string hn = bn + ".h" + std::to_string(hd);
      const AttentionWeights& aw = bw.heads[static_cast<size_t>(hd)];

      auto [q_acc, q_ev] = run_op(0, 1, hn + ".q", hq, aw.wq, hq_ev, -1);
      QuantTensor Qq = req(q_acc.dequantize());
      const int64_t qq_ev = elec(EventKind::Elec, hn + ".q.req", static_cast<uint64_t>(seq * dh), {q_ev});

      auto [t_acc, t_ev] =
          run_op(1, 1, hn + ".kt", Qq, folded_k_[static_cast<size_t>(blk)][static_cast<size_t>(hd)],
                 qq_ev, -1);
      QuantTensor Tq = req(t_acc.dequantize());
      const int64_t tq_ev = elec(EventKind::Elec, hn + ".kt.req", static_cast<uint64_t>(seq * d), {t_ev});

      // Scores against the input itself: X^T is this input's weight matrix.
      auto [l_acc, l_ev] = run_op(2, 1, hn + ".scores", Tq, hqT, tq_ev, hT_ev);
      Tensor S = softmax_rows(l_acc.dequantize());
      const int64_t sm_ev =
          elec(EventKind::Softmax, hn + ".softmax", static_cast<uint64_t>(seq * seq), {l_ev});
      QuantTensor Sq = req(S);
      const int64_t sq_ev =
          elec(EventKind::Elec, hn + ".softmax.req", static_cast<uint64_t>(seq * seq), {sm_ev});
      QuantTensor SqT = Sq.transposed();
      const int64_t st_ev = elec(EventKind::Elec, hn + ".st", static_cast<uint64_t>(seq * seq), {sq_ev});

      auto [v_acc, v_ev] = run_op(3, 1, hn + ".v", hq, aw.wv, hq_ev, -1);
      QuantTensor Vq = req(v_acc.dequantize());
      const int64_t vq_ev = elec(EventKind::Elec, hn + ".v.req", static_cast<uint64_t>(seq * dh), {v_ev});
      QuantTensor VqT = Vq.transposed();
      const int64_t vt_ev = elec(EventKind::Elec, hn + ".vt", static_cast<uint64_t>(seq * dh), {vq_ev});

      // Stage 2: the attention map only exists after softmax, so C5's
      // weight load gates on it while other cores race ahead.
      auto [o_acc, o_ev] = run_op(4, 2, hn + ".out", VqT, SqT, vt_ev, st_ev);
      Tensor Ot = o_acc.dequantize();  // d_head x seq
      for (int64_t r = 0; r < seq; ++r)
        for (int64_t k = 0; k < dh; ++k) heads_out.at(r, hd * dh + k) = Ot.at(k, r);
      head_evs.push_back(
          elec(EventKind::Elec, hn + ".ot", static_cast<uint64_t>(seq * dh), {o_ev}));
    }

    QuantTensor cq = req(heads_out);
    const int64_t cq_ev =
        elec(EventKind::Elec, bn + ".cat.req", static_cast<uint64_t>(seq * d), std::move(head_evs));
    auto [p_acc, p_ev] = run_op(0, 1, bn + ".proj", cq, bw.wo, cq_ev, -1);
    X = add(X, p_acc.dequantize());
    x_ev = elec(EventKind::Add, bn + ".res1", static_cast<uint64_t>(seq * d), {p_ev, x_ev});

    Tensor h2 = layernorm(X, bw.ln2_gamma, bw.ln2_beta);
    const int64_t l2_ev = elec(EventKind::Layernorm, bn + ".ln2", static_cast<uint64_t>(seq * d), {x_ev});
    QuantTensor h2q = req(h2);
    const int64_t h2q_ev = elec(EventKind::Elec, bn + ".ln2.req", static_cast<uint64_t>(seq * d), {l2_ev});

    auto [f1_acc, f1_ev] = run_op(1, 1, bn + ".ffn1", h2q, bw.ffn1, h2q_ev, -1);
    Tensor g = gelu(f1_acc.dequantize(), cfg_.gelu);
    const int64_t g_ev = elec(EventKind::Gelu, bn + ".gelu", static_cast<uint64_t>(seq * fd), {f1_ev});
    QuantTensor gq = req(g);
    const int64_t gq_ev = elec(EventKind::Elec, bn + ".gelu.req", static_cast<uint64_t>(seq * fd), {g_ev});

    auto [f2_acc, f2_ev] = run_op(2, 1, bn + ".ffn2", gq, bw.ffn2, gq_ev, -1);
    X = add(X, f2_acc.dequantize());
    x_ev = elec(EventKind::Add, bn + ".res2", static_cast<uint64_t>(seq * d), {f2_ev, x_ev});
  }

  // ----- final norm and electronic classifier -----
  res.features = layernorm(X, w_.final_gamma, w_.final_beta);
  const int64_t f_ev = elec(EventKind::Layernorm, "final.ln", static_cast<uint64_t>(seq * d), {x_ev});

  Tensor cls = Tensor::matrix(1, d);
  for (int64_t c = 0; c < d; ++c) cls.at(0, c) = res.features.at(0, c);
  res.logits = matmul(cls, w_.classifier_w);
  for (int64_t c = 0; c < cfg_.n_classes; ++c) res.logits.at(0, c) += w_.classifier_b[static_cast<size_t>(c)];
  elec(EventKind::Elec, "head", static_cast<uint64_t>(d) * cfg_.n_classes, {f_ev});

  res.trace = tb.take();
  res.trace.meta["seq_len"] = std::to_string(seq);
  res.trace.meta["kept_patches"] = std::to_string(np);
  res.trace.meta["bits"] = std::to_string(cfg_.bits);
  res.trace.meta["stage2_gate"] = "softmax";
  res.trace.validate();
  return res;
}

// ===== multi-input schedule =====

PipelineReport schedule_pipeline(const ScheduleTrace& single_input, int n_inputs, bool overlap,
                                 const Durations& lat) {
  if (n_inputs < 1) throw std::invalid_argument("schedule_pipeline: need at least one input");
  if (single_input.events.empty())
    throw std::invalid_argument("schedule_pipeline: empty input trace");

  TraceBuilder tb(lat);
  const size_t n_events = single_input.events.size();
  std::vector<int64_t> idmap(n_events, -1);
  int64_t barrier = -1;

  for (int t = 0; t < n_inputs; ++t) {
    std::map<std::string, int64_t> last_on_resource;
    for (size_t i = 0; i < n_events; ++i) {
      const TraceEvent& e = single_input.events[i];
      std::vector<int64_t> deps;
      deps.reserve(e.deps.size() + 1);
      for (int64_t dep : e.deps) deps.push_back(idmap[static_cast<size_t>(dep)]);
      if (deps.empty() && barrier >= 0) deps.push_back(barrier);
      const int64_t id = tb.emit_timed(e.resource, e.kind, e.stage, e.t_end - e.t_start, std::move(deps),
                                       t, e.counts, e.elems);
      idmap[i] = id;
      last_on_resource[e.resource] = id;
    }
    if (!overlap && t + 1 < n_inputs) {
      // Full serialization: the next input's roots wait for every resource
      // to drain. The per-resource tail events cover all of input t.
      std::vector<int64_t> sink;
      sink.reserve(last_on_resource.size());
      for (const auto& [r, id] : last_on_resource) sink.push_back(id);
      barrier = tb.emit_timed("SYNC", EventKind::Elec, "barrier." + std::to_string(t), 0.0,
                              std::move(sink), t);
    }
  }

  PipelineReport rep;
  rep.n_inputs = n_inputs;
  rep.overlap = overlap;
  rep.trace = tb.take();
  rep.trace.meta = single_input.meta;
  rep.trace.meta["n_inputs"] = std::to_string(n_inputs);
  rep.trace.meta["overlap"] = overlap ? "1" : "0";
  rep.trace.validate();
  rep.makespan = rep.trace.makespan();

  std::vector<double> done(static_cast<size_t>(n_inputs), 0.0);
  for (const TraceEvent& e : rep.trace.events)
    done[static_cast<size_t>(e.input_index)] = std::max(done[static_cast<size_t>(e.input_index)], e.t_end);
  if (n_inputs == 1) {
    rep.steady_interval = rep.makespan;
  } else {
    // Average spacing over the back half, past the fill transient.
    const int lo = n_inputs / 2;
    rep.steady_interval =
        (done[static_cast<size_t>(n_inputs - 1)] - done[static_cast<size_t>(lo - 1)]) /
        static_cast<double>(n_inputs - lo);
  }
  return rep;
}

}  // namespace lightvit
