#pragma once
// On-disk formats. Structured data is UTF-8 JSON with unknown keys
// rejected (a typo in a physics parameter must not silently fall back to a
// default); bulk tensors use a little-endian record container; traces are
// JSONL; masks are plain text. Everything written here is byte-stable for
// a fixed input, so manifest hashes and golden files stay meaningful.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lightvit/cost.hpp"
#include "lightvit/pipeline.hpp"
#include "lightvit/roi.hpp"
#include "lightvit/trace.hpp"

namespace lightvit {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ===== tensor container =====
// A named sequence of records: real tensors (f64), quantized tensors
// (int16 codes + scale + bits) and flat f64 vectors. Record order is
// preserved; names are unique.

class TensorFileWriter {
 public:
  void add(const std::string& name, const Tensor& t);
  void add(const std::string& name, const QuantTensor& t);
  void add(const std::string& name, const std::vector<double>& v);
  void save(const std::string& path) const;

 private:
  struct Record {
    std::string name;
    int kind;
    Tensor t;
    QuantTensor q;
    std::vector<double> v;
  };
  void check_name(const std::string& name);
  std::vector<Record> records_;
};

class TensorFile {
 public:
  explicit TensorFile(const std::string& path);

  bool has(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  const QuantTensor& qtensor(const std::string& name) const;
  const std::vector<double>& vec(const std::string& name) const;
  /// Record names in file order.
  const std::vector<std::string>& names() const { return names_; }

 private:
  struct Entry {
    int kind;
    Tensor t;
    QuantTensor q;
    std::vector<double> v;
  };
  const Entry& entry(const std::string& name, int kind, const char* what) const;
  std::string path_;
  std::vector<std::string> names_;
  std::map<std::string, Entry> entries_;
};

// ===== weights =====

void save_model_weights(const std::string& path, const ModelWeights& w);
ModelWeights load_model_weights(const std::string& path, const ViTConfig& cfg);

void save_mgnet_weights(const std::string& path, const MgnetWeights& w);
MgnetWeights load_mgnet_weights(const std::string& path, const MgnetConfig& cfg);

// ===== raw images =====

/// Header + payload container for 8-bit image stacks: frame-major,
/// row-major, channel-interleaved. No codec, no compression.
struct RawImages {
  uint32_t frames = 0, height = 0, width = 0, channels = 0;
  std::vector<uint8_t> pixels;

  int64_t frame_bytes() const {
    return static_cast<int64_t>(height) * width * channels;
  }
};

void save_raw_images(const std::string& path, const RawImages& imgs);
RawImages load_raw_images(const std::string& path);

/// One frame as a patch matrix: n_patches x (p * p * channels), patches in
/// row-major grid order, pixel bytes mapped to [0, 1].
Tensor patchify_frame(const RawImages& imgs, int frame, int patch_size);

// ===== run configuration =====

enum class MaskSource { None, Generate, File };

/// Everything one simulation run needs, as parsed from the JSON config.
/// Paths are kept verbatim; resolve_vit / resolve_core turn the symbolic
/// parts (preset names, calibrated grid) into concrete configs.
struct RunConfig {
  std::string model = "tiny";  // preset name or "custom"
  int image_size = 224;
  int bits = 0;  // 0 keeps the preset default
  ViTConfig custom;
  OpticalCoreConfig core;
  bool grid_explicit = false;  // false: calibrate spacing for grid_bits
  int grid_bits = 8;
  MaskSource mask_source = MaskSource::None;
  double t_reg = 0.5;
  MgnetConfig mgnet;
  std::string mask_file;
  std::string cost_table_path;
  std::string weights_path;
  std::string patches_path;
  uint64_t seed = 1;
  std::string out_dir = "out";

  ViTConfig resolve_vit() const;
  OpticalCoreConfig resolve_core() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Canonical sorted-key JSON form of the config; the manifest hash is
/// computed over this string.
std::string run_config_canonical(const RunConfig& cfg);

// ===== cost tables =====

CostTable parse_cost_table(const std::string& json_text);
CostTable load_cost_table(const std::string& path);
std::string cost_table_json(const CostTable& table);

// ===== reports, traces, logits =====

/// `extra` entries land as additional top-level keys (e.g. a savings
/// fraction a caller computed against a second run).
std::string energy_report_json(const EnergyReport& r,
                               const std::map<std::string, double>& extra = {});
std::string latency_report_json(const LatencyReport& r);

/// First line carries the trace metadata, then one event per line.
void write_trace_jsonl(const std::string& path, const ScheduleTrace& trace);

std::string logits_json(const Tensor& logits);

// ===== masks, boxes, scores =====

/// One mask per line: a 0/1 string, a space, the skip ratio.
void write_mask_file(const std::string& path, const std::vector<PatchMask>& masks);
std::vector<PatchMask> read_mask_file(const std::string& path);

/// JSON array of {frame, x, y, w, h}, grouped by frame index. The result
/// covers 0 .. max frame; frames without boxes stay empty.
std::vector<std::vector<BBox>> read_bbox_file(const std::string& path);

/// JSON array of per-frame score arrays.
std::vector<std::vector<double>> read_scores_file(const std::string& path);

// ===== manifest =====

uint64_t fnv1a64(std::string_view s);
std::string hex64(uint64_t v);
const char* code_version();

/// The reproducibility record: config hash, seed, cost-table version and
/// code version. Deliberately no timestamps, so reruns are byte-identical.
std::string manifest_json(const RunConfig& cfg, const CostTable& table);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace lightvit
