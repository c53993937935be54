// lightvit command line front end.
//
//   simulate     one image through the backbone; writes reports + trace
//   analyze-mr   microring resolution surface over (Q, spacing)
//   mask         region masks from images or scores, optional mIoU
//   sweep        model x size x mask energy grid as long-format CSV
//
// Environment: LIGHTVIT_OUT relocates relative outputs, LIGHTVIT_WORKERS
// caps sweep parallelism. Everything else comes from flags or the JSON
// config; flag > environment > config file.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lightvit/cost.hpp"
#include "lightvit/io.hpp"
#include "lightvit/photonics.hpp"
#include "lightvit/pipeline.hpp"
#include "lightvit/roi.hpp"

using namespace lightvit;
namespace fs = std::filesystem;

namespace {

// ===== shared plumbing =====

std::string out_path(const std::string& p) {
  const char* env = std::getenv("LIGHTVIT_OUT");
  if (env && *env && fs::path(p).is_relative()) return (fs::path(env) / p).string();
  return p;
}

std::string fmt_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return nlohmann::json(v).dump();
}

NoiseMode parse_noise(const std::string& s) {
  if (s == "off") return NoiseMode::Off;
  if (s == "worst_case") return NoiseMode::WorstCase;
  if (s == "stochastic") return NoiseMode::Stochastic;
  throw IoError("--noise: '" + s + "' is not one of: off, worst_case, stochastic");
}

MaskSource parse_mask_source(const std::string& s) {
  if (s == "none") return MaskSource::None;
  if (s == "generate") return MaskSource::Generate;
  if (s == "file") return MaskSource::File;
  throw IoError("mask source '" + s + "' is not one of: none, generate, file");
}

/// Flag mirror of RunConfig; only values the user actually passed are
/// applied over the config file.
struct Overrides {
  std::string config_path, model, out_dir, cost_table, weights, patches, noise, mask_source,
      mask_file;
  int image_size = 0, bits = 0, adc_bits = 0, dac_bits = 0;
  uint64_t seed = 0, noise_seed = 0;
  double t_reg = 0.5;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--model", model, "preset name (tiny/small/base/large) or custom");
    cmd->add_option("--image-size", image_size, "input image side in pixels");
    cmd->add_option("--bits", bits, "operand bit width override");
    cmd->add_option("--seed", seed, "seed for generated weights and inputs");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--cost-table", cost_table, "cost table JSON path");
    cmd->add_option("--weights", weights, "model weight container");
    cmd->add_option("--patches", patches, "input image: tensor container or raw stack");
    cmd->add_option("--noise", noise, "crosstalk mode: off, worst_case, stochastic");
    cmd->add_option("--noise-seed", noise_seed, "stochastic crosstalk seed");
    cmd->add_option("--adc-bits", adc_bits, "ADC bits (0 = ideal)");
    cmd->add_option("--dac-bits", dac_bits, "DAC bits (0 = ideal)");
    cmd->add_option("--mask-source", mask_source, "none, generate or file");
    cmd->add_option("--mask-file", mask_file, "mask file for --mask-source file");
    cmd->add_option("--t-reg", t_reg, "region threshold in (0, 1)");
  }

  RunConfig resolve(const CLI::App* cmd) const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (cmd->count("--model")) cfg.model = model;
    if (cmd->count("--image-size")) cfg.image_size = image_size;
    if (cmd->count("--bits")) cfg.bits = bits;
    if (cmd->count("--seed")) cfg.seed = seed;
    if (cmd->count("--cost-table")) cfg.cost_table_path = cost_table;
    if (cmd->count("--weights")) cfg.weights_path = weights;
    if (cmd->count("--patches")) cfg.patches_path = patches;
    if (cmd->count("--noise")) cfg.core.noise = parse_noise(noise);
    if (cmd->count("--noise-seed")) cfg.core.noise_seed = noise_seed;
    if (cmd->count("--adc-bits")) cfg.core.adc_bits = adc_bits;
    if (cmd->count("--dac-bits")) cfg.core.dac_bits = dac_bits;
    if (cmd->count("--mask-source")) cfg.mask_source = parse_mask_source(mask_source);
    if (cmd->count("--mask-file")) cfg.mask_file = mask_file;
    if (cmd->count("--t-reg")) {
      if (!(t_reg > 0.0 && t_reg < 1.0)) throw IoError("--t-reg: expected a value in (0, 1)");
      cfg.t_reg = t_reg;
      cfg.mgnet.region_threshold = t_reg;
    }
    if (const char* env = std::getenv("LIGHTVIT_OUT"); env && *env) cfg.out_dir = env;
    if (cmd->count("--out")) cfg.out_dir = out_dir;
    return cfg;
  }
};

Tensor load_patches_file(const std::string& path, const ViTConfig& vit) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open");
  char magic[4] = {};
  is.read(magic, 4);
  is.close();
  Tensor patches;
  if (std::string(magic, 4) == "LVIM") {
    patches = patchify_frame(load_raw_images(path), 0, vit.patch_size);
  } else {
    TensorFile in(path);
    if (in.names().empty()) throw IoError(path + ": no records");
    patches = in.tensor(in.names().front());
  }
  if (patches.rows() != vit.n_patches() || patches.cols() != vit.patch_dim())
    throw IoError(path + ": patches are " + shape_str(patches.shape) + ", the model expects " +
                  std::to_string(vit.n_patches()) + "x" + std::to_string(vit.patch_dim()));
  return patches;
}

/// One full simulation point, shared by simulate and sweep so a
/// single-point sweep is the simulate result by construction.
struct SimOutcome {
  ForwardResult fwd;
  EnergyReport energy;
  LatencyReport latency;
  CostTable table;
  bool masked = false;
  double savings_fraction = 0.0;
  std::vector<PatchMask> generated_masks;
};

constexpr uint64_t kMgnetSeedSalt = 0x6d61736b6e657431ull;

SimOutcome run_point(const RunConfig& cfg) {
  const ViTConfig vit = cfg.resolve_vit();
  const OpticalCoreConfig core = cfg.resolve_core();
  SimOutcome out;
  out.table =
      cfg.cost_table_path.empty() ? CostTable::defaults() : load_cost_table(cfg.cost_table_path);
  const ModelWeights w = cfg.weights_path.empty() ? random_weights(vit, cfg.seed)
                                                  : load_model_weights(cfg.weights_path, vit);
  const Tensor patches = cfg.patches_path.empty() ? random_patches(vit, cfg.seed)
                                                  : load_patches_file(cfg.patches_path, vit);
  const Simulator sim(vit, w, core, out.table.latency);

  std::vector<int64_t> keep;
  uint64_t mask_net_elems = 0;
  if (cfg.mask_source == MaskSource::Generate) {
    MgnetConfig mg = cfg.mgnet;
    mg.patch_size = vit.patch_size;
    mg.region_threshold = cfg.t_reg;
    const MgnetWeights mgw = random_mgnet_weights(mg, vit.image_size, cfg.seed ^ kMgnetSeedSalt);
    const MgnetRun scored = mgnet_forward(mg, mgw, patches);
    const PatchMask mask = make_mask(scored.scores, cfg.t_reg);
    keep = mask_keep_indices(mask);
    if (keep.empty())
      throw IoError("generated mask kept no patches at t_reg=" + std::to_string(cfg.t_reg) +
                    "; lower the threshold");
    mask_net_elems = scored.elec_ops;
    out.generated_masks.push_back(mask);
    out.masked = true;
  } else if (cfg.mask_source == MaskSource::File) {
    const std::vector<PatchMask> masks = read_mask_file(cfg.mask_file);
    if (masks.empty()) throw IoError(cfg.mask_file + ": no masks");
    if (static_cast<int64_t>(masks.front().bits.size()) != vit.n_patches())
      throw IoError(cfg.mask_file + ": mask covers " + std::to_string(masks.front().bits.size()) +
                    " patches, the model has " + std::to_string(vit.n_patches()));
    keep = mask_keep_indices(masks.front());
    if (keep.empty()) throw IoError(cfg.mask_file + ": mask kept no patches");
    out.masked = true;
  }

  out.fwd = out.masked ? sim.forward(patches, &keep) : sim.forward(patches);
  out.energy = estimate_energy(out.fwd.trace, out.table);
  out.latency = estimate_latency(out.fwd.trace, out.table);
  if (out.masked) {
    add_electronic_overhead(out.energy, out.latency, mask_net_elems, out.table);
    const ForwardResult full = sim.forward(patches);
    const EnergyReport full_energy = estimate_energy(full.trace, out.table);
    out.savings_fraction = savings(out.energy, full_energy);
  }
  return out;
}

// ===== simulate =====

int cmd_simulate(const Overrides& ov, const CLI::App* cmd) {
  const RunConfig cfg = ov.resolve(cmd);
  const SimOutcome out = run_point(cfg);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  std::map<std::string, double> extra;
  if (out.masked) extra["savings_vs_unmasked"] = out.savings_fraction;
  write_text_file((dir / "energy.json").string(), energy_report_json(out.energy, extra));
  write_text_file((dir / "latency.json").string(), latency_report_json(out.latency));
  write_trace_jsonl((dir / "trace.jsonl").string(), out.fwd.trace);
  write_text_file((dir / "logits.json").string(), logits_json(out.fwd.logits));
  write_text_file((dir / "manifest.json").string(), manifest_json(cfg, out.table));
  if (!out.generated_masks.empty())
    write_mask_file((dir / "mask.txt").string(), out.generated_masks);

  std::cout << "model " << cfg.model << " image " << cfg.image_size << ": energy "
            << fmt_num(out.energy.total) << " J, latency " << fmt_num(out.latency.total)
            << " s, " << fmt_num(out.energy.kfps_per_watt) << " kfps/W\n";
  if (out.masked)
    std::cout << "mask kept " << out.fwd.trace.meta.at("kept_patches") << " patches, savings "
              << fmt_num(out.savings_fraction) << "\n";
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}

// ===== analyze-mr =====

struct MrFlags {
  double q_min = 2500, q_max = 7500;
  int q_steps = 11;
  double s_min = 0.5, s_max = 9.6;
  int s_steps = 20;
  int channels = 32;
  double center = 1550.0;
  std::string out = "mr_resolution.csv";
};

int cmd_analyze_mr(const MrFlags& f) {
  if (!(f.q_min > 0) || f.q_max < f.q_min || f.q_steps < 1)
    throw IoError("analyze-mr: need 0 < q-min <= q-max and q-steps >= 1");
  if (!(f.s_min > 0) || f.s_max < f.s_min || f.s_steps < 1)
    throw IoError("analyze-mr: need 0 < spacing-min <= spacing-max and spacing-steps >= 1");
  if (f.channels < 1) throw IoError("analyze-mr: need at least one channel");

  auto axis = [](double lo, double hi, int steps, int i) {
    return steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (steps - 1);
  };
  std::string csv = "q_factor,spacing_nm,resolution_levels,meets_8bit\n";
  for (int qi = 0; qi < f.q_steps; ++qi) {
    const double q = axis(f.q_min, f.q_max, f.q_steps, qi);
    for (int si = 0; si < f.s_steps; ++si) {
      const double s = axis(f.s_min, f.s_max, f.s_steps, si);
      const WavelengthGrid grid{f.channels, f.center, s};
      const double levels = resolution_levels(grid, q);
      csv += fmt_num(q) + "," + fmt_num(s) + "," + fmt_num(levels) + "," +
             (levels >= 256.0 ? "1" : "0") + "\n";
    }
  }
  const std::string path = out_path(f.out);
  write_text_file(path, csv);
  std::cout << "wrote " << path << " (" << f.q_steps * f.s_steps << " points)\n";
  return 0;
}

// ===== mask =====

struct MaskFlags {
  std::string images, scores, boxes;
  double t_reg = 0.5;
  std::string out = "masks.txt";
  std::string stats_out;
  int patch_size = 16;
  int image_size = 0;  // needed for --scores with --boxes
  uint64_t seed = 1;
  int embed_dim = 192, n_heads = 3, ffn_ratio = 4;
};

int cmd_mask(const MaskFlags& f) {
  if (f.images.empty() == f.scores.empty())
    throw IoError("mask: pass exactly one of --images or --scores");
  if (!(f.t_reg > 0.0 && f.t_reg < 1.0)) throw IoError("--t-reg: expected a value in (0, 1)");

  std::vector<PatchMask> masks;
  int gt_image_size = f.image_size;
  if (!f.images.empty()) {
    const RawImages imgs = load_raw_images(f.images);
    if (imgs.height != imgs.width)
      throw IoError(f.images + ": mask generation expects square frames");
    if (gt_image_size == 0) gt_image_size = static_cast<int>(imgs.height);
    MgnetConfig mg;
    mg.patch_size = f.patch_size;
    mg.embed_dim = f.embed_dim;
    mg.n_heads = f.n_heads;
    mg.ffn_ratio = f.ffn_ratio;
    mg.region_threshold = f.t_reg;
    const MgnetWeights w =
        random_mgnet_weights(mg, static_cast<int>(imgs.height), f.seed ^ kMgnetSeedSalt);
    for (uint32_t fr = 0; fr < imgs.frames; ++fr) {
      Tensor patches = patchify_frame(imgs, static_cast<int>(fr), f.patch_size);
      if (imgs.channels == 1) {
        // The embedding expects RGB patch vectors; replicate the channel.
        Tensor rgb = Tensor::matrix(patches.rows(), patches.cols() * 3);
        for (int64_t r = 0; r < patches.rows(); ++r)
          for (int64_t c = 0; c < patches.cols(); ++c)
            for (int64_t ch = 0; ch < 3; ++ch) rgb.at(r, c * 3 + ch) = patches.at(r, c);
        patches = std::move(rgb);
      }
      const MgnetRun run = mgnet_forward(mg, w, patches);
      masks.push_back(make_mask(run.scores, f.t_reg));
    }
  } else {
    for (const std::vector<double>& s : read_scores_file(f.scores)) {
      RegionScores rs;
      rs.s_region = s;
      masks.push_back(make_mask(rs, f.t_reg));
    }
  }
  if (masks.empty()) throw IoError("mask: no frames to score");

  std::vector<double> ious;
  if (!f.boxes.empty()) {
    if (gt_image_size <= 0)
      throw IoError("mask: --image-size is required to rasterize boxes from scores");
    const auto frames = read_bbox_file(f.boxes);
    for (size_t i = 0; i < masks.size(); ++i) {
      const std::vector<BBox> none;
      const std::vector<BBox>& bx = i < frames.size() ? frames[i] : none;
      const PatchMask gt = ground_truth_mask(bx, gt_image_size, f.patch_size);
      ious.push_back(miou(masks[i], gt));
    }
  }

  const std::string path = out_path(f.out);
  write_mask_file(path, masks);
  double skip_sum = 0;
  for (const PatchMask& m : masks) skip_sum += m.skip_ratio;
  const double skip_mean = skip_sum / static_cast<double>(masks.size());

  if (!f.stats_out.empty()) {
    std::string csv = ious.empty() ? "frame,skip_ratio\n" : "frame,skip_ratio,miou\n";
    for (size_t i = 0; i < masks.size(); ++i) {
      csv += std::to_string(i) + "," + fmt_num(masks[i].skip_ratio);
      if (!ious.empty()) csv += "," + fmt_num(ious[i]);
      csv += "\n";
    }
    write_text_file(out_path(f.stats_out), csv);
  }

  std::cout << "wrote " << path << " (" << masks.size() << " frames), mean skip "
            << fmt_num(skip_mean);
  if (!ious.empty()) {
    double iou_sum = 0;
    for (double v : ious) iou_sum += v;
    std::cout << ", mean mIoU " << fmt_num(iou_sum / static_cast<double>(ious.size()));
  }
  std::cout << "\n";
  return 0;
}

// ===== sweep =====

struct SweepFlags {
  std::vector<std::string> models = {"tiny", "small", "base", "large"};
  std::vector<int> sizes = {96, 224};
  std::vector<std::string> mask_sources = {"none"};
  std::string out = "sweep.csv";
};

int cmd_sweep(const Overrides& ov, const CLI::App* cmd, const SweepFlags& f) {
  const RunConfig base = ov.resolve(cmd);
  struct Point {
    RunConfig cfg;
    std::string model, mask;
    int size;
  };
  std::vector<Point> points;
  for (const std::string& m : f.models)
    for (int s : f.sizes)
      for (const std::string& ms : f.mask_sources) {
        Point p{base, m, ms, s};
        p.cfg.model = m;
        p.cfg.image_size = s;
        p.cfg.mask_source = parse_mask_source(ms);
        points.push_back(std::move(p));
      }

  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LIGHTVIT_WORKERS"); env && *env)
    workers = static_cast<unsigned>(std::max(1, std::atoi(env)));
  workers = std::min<unsigned>(workers, static_cast<unsigned>(points.size()));

  std::vector<std::string> rows(points.size());
  std::vector<std::string> errors(points.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1)) {
      const Point& p = points[i];
      try {
        const SimOutcome out = run_point(p.cfg);
        std::string r;
        for (const auto& [component, joules] : out.energy.components())
          r += p.model + "," + std::to_string(p.size) + "," + p.mask + "," + component + "," +
               fmt_num(joules) + "\n";
        rows[i] = std::move(r);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::string csv = "model,image_size,mask,component,joules\n";
  size_t failed = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    if (!errors[i].empty()) {
      ++failed;
      std::cerr << "sweep point model=" << points[i].model << " size=" << points[i].size
                << " mask=" << points[i].mask << " failed: " << errors[i] << "\n";
      continue;
    }
    csv += rows[i];
  }
  const std::string path = out_path(f.out);
  write_text_file(path, csv);
  std::cout << "wrote " << path << " (" << points.size() - failed << "/" << points.size()
            << " points)\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"photonic vision transformer simulator"};
  app.require_subcommand(1);

  Overrides sim_ov;
  CLI::App* sim = app.add_subcommand("simulate", "run one image and write reports");
  sim_ov.attach(sim);

  MrFlags mr;
  CLI::App* amr = app.add_subcommand("analyze-mr", "microring resolution surface CSV");
  amr->add_option("--q-min", mr.q_min, "lowest Q factor");
  amr->add_option("--q-max", mr.q_max, "highest Q factor");
  amr->add_option("--q-steps", mr.q_steps, "points along the Q axis");
  amr->add_option("--spacing-min", mr.s_min, "smallest channel spacing in nm");
  amr->add_option("--spacing-max", mr.s_max, "largest channel spacing in nm");
  amr->add_option("--spacing-steps", mr.s_steps, "points along the spacing axis");
  amr->add_option("--channels", mr.channels, "wavelength channels in the grid");
  amr->add_option("--center", mr.center, "grid center wavelength in nm");
  amr->add_option("--out", mr.out, "CSV output path");

  MaskFlags mk;
  CLI::App* msk = app.add_subcommand("mask", "score frames and emit region masks");
  msk->add_option("--images", mk.images, "raw 8-bit image stack");
  msk->add_option("--scores", mk.scores, "JSON per-frame region scores");
  msk->add_option("--boxes", mk.boxes, "ground-truth boxes for mIoU");
  msk->add_option("--t-reg", mk.t_reg, "region threshold in (0, 1)");
  msk->add_option("--out", mk.out, "mask file output path");
  msk->add_option("--stats-out", mk.stats_out, "per-frame skip/mIoU CSV");
  msk->add_option("--patch-size", mk.patch_size, "patch side in pixels");
  msk->add_option("--image-size", mk.image_size, "image side for box rasterizing");
  msk->add_option("--seed", mk.seed, "mask network weight seed");
  msk->add_option("--embed-dim", mk.embed_dim, "mask network width");
  msk->add_option("--n-heads", mk.n_heads, "mask network heads");
  msk->add_option("--ffn-ratio", mk.ffn_ratio, "mask network FFN ratio");

  Overrides sw_ov;
  SweepFlags sw;
  CLI::App* swp = app.add_subcommand("sweep", "energy components across a model/size grid");
  sw_ov.attach(swp);
  swp->add_option("--models", sw.models, "model presets to sweep")->delimiter(',');
  swp->add_option("--sizes", sw.sizes, "image sizes to sweep")->delimiter(',');
  swp->add_option("--mask", sw.mask_sources, "mask sources to sweep")->delimiter(',');
  swp->add_option("--sweep-out", sw.out, "long-format CSV output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_ov, sim);
    if (amr->parsed()) return cmd_analyze_mr(mr);
    if (msk->parsed()) return cmd_mask(mk);
    if (swp->parsed()) return cmd_sweep(sw_ov, swp, sw);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
