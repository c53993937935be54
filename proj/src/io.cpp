#include "lightvit/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lightvit/photonics.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary containers are little-endian on disk");

namespace lightvit {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw IoError(where + ": " + msg);
}

// ===== binary primitives =====

void put_raw(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  put_raw(os, &v, sizeof v);
}

void put_str(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  put_raw(os, s.data(), s.size());
}

void get_raw(std::istream& is, const std::string& where, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) fail(where, "truncated file");
}

template <class T>
T get(std::istream& is, const std::string& where) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v;
  get_raw(is, where, &v, sizeof v);
  return v;
}

std::string get_str(std::istream& is, const std::string& where) {
  const uint32_t n = get<uint32_t>(is, where);
  if (n > (1u << 20)) fail(where, "unreasonable string length");
  std::string s(n, '\0');
  get_raw(is, where, s.data(), n);
  return s;
}

void put_shape(std::ostream& os, const Shape& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  for (int64_t d : s) put<int64_t>(os, d);
}

Shape get_shape(std::istream& is, const std::string& where) {
  const uint32_t nd = get<uint32_t>(is, where);
  if (nd > 8) fail(where, "unreasonable tensor rank");
  Shape s(nd);
  for (uint32_t i = 0; i < nd; ++i) {
    s[i] = get<int64_t>(is, where);
    if (s[i] < 0 || s[i] > (int64_t{1} << 32)) fail(where, "unreasonable dimension");
  }
  return s;
}

constexpr char kTensorMagic[4] = {'L', 'V', 'T', 'C'};
constexpr char kImageMagic[4] = {'L', 'V', 'I', 'M'};
constexpr uint32_t kContainerVersion = 1;

enum RecordKind { kReal = 0, kQuant = 1, kVector = 2 };

// ===== strict JSON access =====

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number for the diagnostic.
    size_t line = 1;
    for (size_t i = 0; i < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    fail(where, "line " + std::to_string(line) + ": " + e.what());
  }
}

/// Object wrapper that records which keys a parser consumed; anything left
/// over at done() is treated as a typo and rejected.
class Keys {
 public:
  Keys(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }
  const json* take(const char* k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(path_, "unknown key '" + it.key() + "'");
  }
  std::string sub(const char* k) const { return path_ + "." + k; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double as_num(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

double as_pos(const json& v, const std::string& where) {
  const double d = as_num(v, where);
  if (!(d > 0.0)) fail(where, "expected a positive number");
  return d;
}

double as_nonneg(const json& v, const std::string& where) {
  const double d = as_num(v, where);
  if (!(d >= 0.0)) fail(where, "expected a non-negative number");
  return d;
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  return v.get<int>();
}

uint64_t as_uint(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.is_number_float() || v.get<int64_t>() < 0)
    fail(where, "expected a non-negative integer");
  return v.get<uint64_t>();
}

std::string as_str(const json& v, const std::string& where) {
  if (!v.is_string()) fail(where, "expected a string");
  return v.get<std::string>();
}

std::string as_choice(const json& v, const std::string& where,
                      std::initializer_list<const char*> allowed) {
  const std::string s = as_str(v, where);
  for (const char* a : allowed)
    if (s == a) return s;
  std::string opts;
  for (const char* a : allowed) opts += (opts.empty() ? "" : ", ") + std::string(a);
  fail(where, "'" + s + "' is not one of: " + opts);
}

}  // namespace

// ===== tensor container =====

void TensorFileWriter::check_name(const std::string& name) {
  if (name.empty()) throw IoError("tensor container: empty record name");
  for (const Record& r : records_)
    if (r.name == name) throw IoError("tensor container: duplicate record '" + name + "'");
}

void TensorFileWriter::add(const std::string& name, const Tensor& t) {
  check_name(name);
  records_.push_back({name, kReal, t, {}, {}});
}

void TensorFileWriter::add(const std::string& name, const QuantTensor& t) {
  check_name(name);
  records_.push_back({name, kQuant, {}, t, {}});
}

void TensorFileWriter::add(const std::string& name, const std::vector<double>& v) {
  check_name(name);
  records_.push_back({name, kVector, {}, {}, v});
}

void TensorFileWriter::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for writing");
  put_raw(os, kTensorMagic, 4);
  put<uint32_t>(os, kContainerVersion);
  put<uint64_t>(os, records_.size());
  for (const Record& r : records_) {
    put_str(os, r.name);
    put<uint8_t>(os, static_cast<uint8_t>(r.kind));
    switch (r.kind) {
      case kReal:
        put_shape(os, r.t.shape);
        put_raw(os, r.t.data.data(), r.t.data.size() * sizeof(double));
        break;
      case kQuant:
        put_shape(os, r.q.shape);
        put<int32_t>(os, r.q.bits);
        put<double>(os, r.q.scale);
        put_raw(os, r.q.codes.data(), r.q.codes.size() * sizeof(int16_t));
        break;
      case kVector:
        put<uint64_t>(os, r.v.size());
        put_raw(os, r.v.data(), r.v.size() * sizeof(double));
        break;
    }
  }
  if (!os) throw IoError(path + ": write failed");
}

TensorFile::TensorFile(const std::string& path) : path_(path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open");
  char magic[4];
  get_raw(is, path, magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) fail(path, "not a tensor container");
  if (get<uint32_t>(is, path) != kContainerVersion) fail(path, "unsupported container version");
  const uint64_t count = get<uint64_t>(is, path);
  if (count > (1u << 24)) fail(path, "unreasonable record count");
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = get_str(is, path);
    if (entries_.count(name)) fail(path, "duplicate record '" + name + "'");
    Entry e;
    e.kind = get<uint8_t>(is, path);
    switch (e.kind) {
      case kReal: {
        e.t = Tensor(get_shape(is, path));
        get_raw(is, path, e.t.data.data(), e.t.data.size() * sizeof(double));
        break;
      }
      case kQuant: {
        e.q.shape = get_shape(is, path);
        e.q.bits = get<int32_t>(is, path);
        if (e.q.bits < kMinBits || e.q.bits > kMaxBits)
          fail(path, "record '" + name + "' has invalid bit width");
        e.q.scale = get<double>(is, path);
        e.q.codes.resize(static_cast<size_t>(shape_numel(e.q.shape)));
        get_raw(is, path, e.q.codes.data(), e.q.codes.size() * sizeof(int16_t));
        break;
      }
      case kVector: {
        const uint64_t n = get<uint64_t>(is, path);
        if (n > (1u << 28)) fail(path, "unreasonable vector length");
        e.v.resize(n);
        get_raw(is, path, e.v.data(), n * sizeof(double));
        break;
      }
      default:
        fail(path, "record '" + name + "' has unknown kind");
    }
    names_.push_back(name);
    entries_.emplace(name, std::move(e));
  }
}

bool TensorFile::has(const std::string& name) const { return entries_.count(name) > 0; }

const TensorFile::Entry& TensorFile::entry(const std::string& name, int kind,
                                           const char* what) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(path_, "missing record '" + name + "'");
  if (it->second.kind != kind)
    fail(path_, "record '" + name + "' is not a " + std::string(what));
  return it->second;
}

const Tensor& TensorFile::tensor(const std::string& name) const {
  return entry(name, kReal, "real tensor").t;
}

const QuantTensor& TensorFile::qtensor(const std::string& name) const {
  return entry(name, kQuant, "quantized tensor").q;
}

const std::vector<double>& TensorFile::vec(const std::string& name) const {
  return entry(name, kVector, "vector").v;
}

// ===== weights =====

namespace {
std::string blk(int b, const std::string& rest) { return "blk" + std::to_string(b) + "." + rest; }
}  // namespace

void save_model_weights(const std::string& path, const ModelWeights& w) {
  TensorFileWriter out;
  out.add("patch_embed", w.patch_embed);
  out.add("class_token", w.class_token);
  out.add("pos_embed", w.pos_embed);
  for (size_t b = 0; b < w.blocks.size(); ++b) {
    const BlockWeights& bw = w.blocks[b];
    const int bi = static_cast<int>(b);
    for (size_t h = 0; h < bw.heads.size(); ++h) {
      const std::string p = "h" + std::to_string(h) + ".";
      out.add(blk(bi, p + "wq"), bw.heads[h].wq);
      out.add(blk(bi, p + "wk"), bw.heads[h].wk);
      out.add(blk(bi, p + "wv"), bw.heads[h].wv);
    }
    out.add(blk(bi, "wo"), bw.wo);
    out.add(blk(bi, "ffn1"), bw.ffn1);
    out.add(blk(bi, "ffn2"), bw.ffn2);
    out.add(blk(bi, "ln1_gamma"), bw.ln1_gamma);
    out.add(blk(bi, "ln1_beta"), bw.ln1_beta);
    out.add(blk(bi, "ln2_gamma"), bw.ln2_gamma);
    out.add(blk(bi, "ln2_beta"), bw.ln2_beta);
  }
  out.add("final_gamma", w.final_gamma);
  out.add("final_beta", w.final_beta);
  out.add("classifier_w", w.classifier_w);
  out.add("classifier_b", w.classifier_b);
  out.save(path);
}

ModelWeights load_model_weights(const std::string& path, const ViTConfig& cfg) {
  cfg.validate();
  TensorFile in(path);
  ModelWeights w;
  w.patch_embed = in.qtensor("patch_embed");
  w.class_token = in.tensor("class_token");
  w.pos_embed = in.tensor("pos_embed");
  for (int b = 0; b < cfg.n_blocks; ++b) {
    BlockWeights bw;
    for (int h = 0; h < cfg.n_heads; ++h) {
      const std::string p = "h" + std::to_string(h) + ".";
      bw.heads.push_back({in.qtensor(blk(b, p + "wq")), in.qtensor(blk(b, p + "wk")),
                          in.qtensor(blk(b, p + "wv"))});
    }
    bw.wo = in.qtensor(blk(b, "wo"));
    bw.ffn1 = in.qtensor(blk(b, "ffn1"));
    bw.ffn2 = in.qtensor(blk(b, "ffn2"));
    bw.ln1_gamma = in.vec(blk(b, "ln1_gamma"));
    bw.ln1_beta = in.vec(blk(b, "ln1_beta"));
    bw.ln2_gamma = in.vec(blk(b, "ln2_gamma"));
    bw.ln2_beta = in.vec(blk(b, "ln2_beta"));
    w.blocks.push_back(std::move(bw));
  }
  w.final_gamma = in.vec("final_gamma");
  w.final_beta = in.vec("final_beta");
  w.classifier_w = in.tensor("classifier_w");
  w.classifier_b = in.vec("classifier_b");
  return w;
}

void save_mgnet_weights(const std::string& path, const MgnetWeights& w) {
  TensorFileWriter out;
  out.add("patch_embed", w.patch_embed);
  out.add("class_token", w.class_token);
  out.add("pos_embed", w.pos_embed);
  for (size_t h = 0; h < w.wq.size(); ++h) {
    const std::string p = "h" + std::to_string(h) + ".";
    out.add(p + "wq", w.wq[h]);
    out.add(p + "wk", w.wk[h]);
    out.add(p + "wv", w.wv[h]);
  }
  out.add("wo", w.wo);
  out.add("ffn1", w.ffn1);
  out.add("ffn2", w.ffn2);
  out.add("ln1_gamma", w.ln1_gamma);
  out.add("ln1_beta", w.ln1_beta);
  out.add("ln2_gamma", w.ln2_gamma);
  out.add("ln2_beta", w.ln2_beta);
  out.add("wq_cls", w.wq_cls);
  out.add("wk_cls", w.wk_cls);
  out.add("region_w", w.region_w);
  out.add("region_b", w.region_b);
  out.save(path);
}

MgnetWeights load_mgnet_weights(const std::string& path, const MgnetConfig& cfg) {
  cfg.validate();
  TensorFile in(path);
  MgnetWeights w;
  w.patch_embed = in.tensor("patch_embed");
  w.class_token = in.tensor("class_token");
  w.pos_embed = in.tensor("pos_embed");
  for (int h = 0; h < cfg.n_heads; ++h) {
    const std::string p = "h" + std::to_string(h) + ".";
    w.wq.push_back(in.tensor(p + "wq"));
    w.wk.push_back(in.tensor(p + "wk"));
    w.wv.push_back(in.tensor(p + "wv"));
  }
  w.wo = in.tensor("wo");
  w.ffn1 = in.tensor("ffn1");
  w.ffn2 = in.tensor("ffn2");
  w.ln1_gamma = in.vec("ln1_gamma");
  w.ln1_beta = in.vec("ln1_beta");
  w.ln2_gamma = in.vec("ln2_gamma");
  w.ln2_beta = in.vec("ln2_beta");
  w.wq_cls = in.tensor("wq_cls");
  w.wk_cls = in.tensor("wk_cls");
  w.region_w = in.tensor("region_w");
  w.region_b = in.vec("region_b");
  return w;
}

// ===== raw images =====

void save_raw_images(const std::string& path, const RawImages& imgs) {
  const uint64_t expect = uint64_t{imgs.frames} * imgs.height * imgs.width * imgs.channels;
  if (imgs.pixels.size() != expect)
    throw IoError(path + ": pixel payload does not match the header dimensions");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for writing");
  put_raw(os, kImageMagic, 4);
  put<uint32_t>(os, imgs.frames);
  put<uint32_t>(os, imgs.height);
  put<uint32_t>(os, imgs.width);
  put<uint32_t>(os, imgs.channels);
  put_raw(os, imgs.pixels.data(), imgs.pixels.size());
  if (!os) throw IoError(path + ": write failed");
}

RawImages load_raw_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open");
  char magic[4];
  get_raw(is, path, magic, 4);
  if (std::memcmp(magic, kImageMagic, 4) != 0) fail(path, "not a raw image file");
  RawImages imgs;
  imgs.frames = get<uint32_t>(is, path);
  imgs.height = get<uint32_t>(is, path);
  imgs.width = get<uint32_t>(is, path);
  imgs.channels = get<uint32_t>(is, path);
  if (imgs.frames < 1 || imgs.height < 1 || imgs.width < 1) fail(path, "empty image stack");
  if (imgs.channels != 1 && imgs.channels != 3)
    fail(path, "expected 1 (grayscale) or 3 (RGB) channels");
  const uint64_t total = uint64_t{imgs.frames} * imgs.height * imgs.width * imgs.channels;
  if (total > (uint64_t{1} << 32)) fail(path, "unreasonable image payload");
  imgs.pixels.resize(total);
  get_raw(is, path, imgs.pixels.data(), total);
  return imgs;
}

Tensor patchify_frame(const RawImages& imgs, int frame, int patch_size) {
  if (frame < 0 || static_cast<uint32_t>(frame) >= imgs.frames)
    throw IoError("patchify: frame " + std::to_string(frame) + " out of range");
  if (patch_size < 1 || imgs.height % patch_size != 0 || imgs.width % patch_size != 0)
    throw IoError("patchify: image " + std::to_string(imgs.width) + "x" +
                  std::to_string(imgs.height) + " is not a multiple of patch " +
                  std::to_string(patch_size));
  const int64_t gy = imgs.height / patch_size, gx = imgs.width / patch_size;
  const int64_t c = imgs.channels, p = patch_size;
  const int64_t base = static_cast<int64_t>(frame) * imgs.frame_bytes();
  Tensor out = Tensor::matrix(gy * gx, p * p * c);
  for (int64_t py = 0; py < gy; ++py)
    for (int64_t px = 0; px < gx; ++px) {
      const int64_t row = py * gx + px;
      for (int64_t y = 0; y < p; ++y)
        for (int64_t x = 0; x < p; ++x)
          for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t pix = base + ((py * p + y) * imgs.width + (px * p + x)) * c + ch;
            out.at(row, (y * p + x) * c + ch) =
                static_cast<double>(imgs.pixels[static_cast<size_t>(pix)]) / 255.0;
          }
    }
  return out;
}

// ===== run configuration =====

namespace {

ViTConfig parse_vit_section(const json& j, const std::string& path) {
  Keys k(j, path);
  ViTConfig cfg;
  if (const json* v = k.take("patch_size")) cfg.patch_size = as_int(*v, k.sub("patch_size"));
  if (const json* v = k.take("embed_dim")) cfg.embed_dim = as_int(*v, k.sub("embed_dim"));
  if (const json* v = k.take("n_heads")) cfg.n_heads = as_int(*v, k.sub("n_heads"));
  if (const json* v = k.take("n_blocks")) cfg.n_blocks = as_int(*v, k.sub("n_blocks"));
  if (const json* v = k.take("ffn_ratio")) cfg.ffn_ratio = as_int(*v, k.sub("ffn_ratio"));
  if (const json* v = k.take("n_classes")) cfg.n_classes = as_int(*v, k.sub("n_classes"));
  if (const json* v = k.take("gelu"))
    cfg.gelu = as_choice(*v, k.sub("gelu"), {"tanh", "erf"}) == "erf" ? GeluKind::Erf
                                                                      : GeluKind::TanhApprox;
  k.done();
  return cfg;
}

void parse_core_section(const json& j, const std::string& path, RunConfig& cfg) {
  Keys k(j, path);
  OpticalCoreConfig& c = cfg.core;
  if (const json* v = k.take("n_wavelengths")) c.n_wavelengths = as_int(*v, k.sub("n_wavelengths"));
  if (const json* v = k.take("n_arms")) c.n_arms = as_int(*v, k.sub("n_arms"));
  if (const json* v = k.take("q_factor")) c.q_factor = as_pos(*v, k.sub("q_factor"));
  if (const json* v = k.take("adc_bits")) c.adc_bits = as_int(*v, k.sub("adc_bits"));
  if (const json* v = k.take("dac_bits")) c.dac_bits = as_int(*v, k.sub("dac_bits"));
  if (const json* v = k.take("adc_range"))
    c.adc_range = as_choice(*v, k.sub("adc_range"), {"conservative", "calibrated"}) == "calibrated"
                      ? AdcRangeMode::Calibrated
                      : AdcRangeMode::Conservative;
  if (const json* v = k.take("adc_percentile")) c.adc_percentile = as_pos(*v, k.sub("adc_percentile"));
  if (const json* v = k.take("noise")) {
    const std::string s = as_choice(*v, k.sub("noise"), {"off", "worst_case", "stochastic"});
    c.noise = s == "off" ? NoiseMode::Off
                         : (s == "worst_case" ? NoiseMode::WorstCase : NoiseMode::Stochastic);
  }
  if (const json* v = k.take("noise_seed")) c.noise_seed = as_uint(*v, k.sub("noise_seed"));
  if (const json* v = k.take("grid_bits")) cfg.grid_bits = as_int(*v, k.sub("grid_bits"));
  if (const json* v = k.take("grid")) {
    if (v->is_string()) {
      as_choice(*v, k.sub("grid"), {"calibrated"});
      cfg.grid_explicit = false;
    } else {
      Keys g(*v, k.sub("grid"));
      cfg.grid_explicit = true;
      if (const json* c2 = g.take("center_nm")) c.grid.center_nm = as_pos(*c2, g.sub("center_nm"));
      if (const json* sp = g.take("spacing_nm")) c.grid.spacing_nm = as_pos(*sp, g.sub("spacing_nm"));
      g.done();
    }
  }
  k.done();
  c.grid.n_channels = c.n_wavelengths;
}

void parse_mask_section(const json& j, const std::string& path, RunConfig& cfg) {
  Keys k(j, path);
  if (const json* v = k.take("source")) {
    const std::string s = as_choice(*v, k.sub("source"), {"none", "generate", "file"});
    cfg.mask_source = s == "none" ? MaskSource::None
                                  : (s == "generate" ? MaskSource::Generate : MaskSource::File);
  }
  if (const json* v = k.take("t_reg")) {
    cfg.t_reg = as_num(*v, k.sub("t_reg"));
    if (!(cfg.t_reg > 0.0 && cfg.t_reg < 1.0)) fail(k.sub("t_reg"), "expected a value in (0, 1)");
  }
  if (const json* v = k.take("file")) cfg.mask_file = as_str(*v, k.sub("file"));
  if (const json* v = k.take("embed_dim")) cfg.mgnet.embed_dim = as_int(*v, k.sub("embed_dim"));
  if (const json* v = k.take("n_heads")) cfg.mgnet.n_heads = as_int(*v, k.sub("n_heads"));
  if (const json* v = k.take("ffn_ratio")) cfg.mgnet.ffn_ratio = as_int(*v, k.sub("ffn_ratio"));
  k.done();
  if (cfg.mask_source == MaskSource::File && cfg.mask_file.empty())
    fail(path, "source \"file\" needs a file entry");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json j = parse_json(json_text, "config");
  Keys k(j, "config");
  RunConfig cfg;
  bool has_vit = false;
  if (const json* v = k.take("model")) cfg.model = as_str(*v, "config.model");
  if (const json* v = k.take("image_size")) {
    cfg.image_size = as_int(*v, "config.image_size");
    if (cfg.image_size < 1) fail("config.image_size", "expected a positive integer");
  }
  if (const json* v = k.take("bits")) cfg.bits = as_int(*v, "config.bits");
  if (const json* v = k.take("vit")) {
    cfg.custom = parse_vit_section(*v, "config.vit");
    has_vit = true;
  }
  if (const json* v = k.take("core")) parse_core_section(*v, "config.core", cfg);
  if (const json* v = k.take("mask")) parse_mask_section(*v, "config.mask", cfg);
  if (const json* v = k.take("cost_table")) cfg.cost_table_path = as_str(*v, "config.cost_table");
  if (const json* v = k.take("weights")) cfg.weights_path = as_str(*v, "config.weights");
  if (const json* v = k.take("patches")) cfg.patches_path = as_str(*v, "config.patches");
  if (const json* v = k.take("seed")) cfg.seed = as_uint(*v, "config.seed");
  if (const json* v = k.take("out_dir")) cfg.out_dir = as_str(*v, "config.out_dir");
  k.done();

  if (cfg.model == "custom" && !has_vit)
    fail("config", "model \"custom\" needs a vit section");
  if (cfg.model != "custom" && has_vit)
    fail("config.vit", "only valid with model \"custom\"");
  cfg.mgnet.region_threshold = cfg.t_reg;
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

ViTConfig RunConfig::resolve_vit() const {
  ViTConfig cfg;
  if (model == "custom") {
    cfg = custom;
    cfg.image_size = image_size;
  } else {
    cfg = vit_preset(model, image_size);
  }
  if (bits != 0) cfg.bits = bits;
  cfg.validate();
  return cfg;
}

OpticalCoreConfig RunConfig::resolve_core() const {
  OpticalCoreConfig c = core;
  if (!grid_explicit) c.grid = calibrate_grid(c.n_wavelengths, c.q_factor, grid_bits);
  return c;
}

std::string run_config_canonical(const RunConfig& cfg) {
  json j;
  j["model"] = cfg.model;
  j["image_size"] = cfg.image_size;
  j["bits"] = cfg.bits;
  if (cfg.model == "custom") {
    j["vit"] = {{"patch_size", cfg.custom.patch_size},
                {"embed_dim", cfg.custom.embed_dim},
                {"n_heads", cfg.custom.n_heads},
                {"n_blocks", cfg.custom.n_blocks},
                {"ffn_ratio", cfg.custom.ffn_ratio},
                {"n_classes", cfg.custom.n_classes},
                {"gelu", cfg.custom.gelu == GeluKind::Erf ? "erf" : "tanh"}};
  }
  const OpticalCoreConfig& c = cfg.core;
  j["core"] = {{"n_wavelengths", c.n_wavelengths},
               {"n_arms", c.n_arms},
               {"q_factor", c.q_factor},
               {"adc_bits", c.adc_bits},
               {"dac_bits", c.dac_bits},
               {"adc_range", c.adc_range == AdcRangeMode::Calibrated ? "calibrated" : "conservative"},
               {"adc_percentile", c.adc_percentile},
               {"noise", c.noise == NoiseMode::Off
                             ? "off"
                             : (c.noise == NoiseMode::WorstCase ? "worst_case" : "stochastic")},
               {"noise_seed", c.noise_seed},
               {"grid_bits", cfg.grid_bits}};
  if (cfg.grid_explicit)
    j["core"]["grid"] = {{"center_nm", c.grid.center_nm}, {"spacing_nm", c.grid.spacing_nm}};
  else
    j["core"]["grid"] = "calibrated";
  j["mask"] = {{"source", cfg.mask_source == MaskSource::None
                              ? "none"
                              : (cfg.mask_source == MaskSource::Generate ? "generate" : "file")},
               {"t_reg", cfg.t_reg},
               {"file", cfg.mask_file},
               {"embed_dim", cfg.mgnet.embed_dim},
               {"n_heads", cfg.mgnet.n_heads},
               {"ffn_ratio", cfg.mgnet.ffn_ratio}};
  j["cost_table"] = cfg.cost_table_path;
  j["weights"] = cfg.weights_path;
  j["patches"] = cfg.patches_path;
  j["seed"] = cfg.seed;
  return j.dump();
}

// ===== cost tables =====

CostTable parse_cost_table(const std::string& json_text) {
  const json j = parse_json(json_text, "cost table");
  Keys k(j, "cost table");
  CostTable t = CostTable::defaults();
  if (const json* v = k.take("version")) t.version = as_str(*v, k.sub("version"));
  if (const json* v = k.take("tuning_granularity"))
    t.tuning_granularity = as_choice(*v, k.sub("tuning_granularity"),
                                     {"per_mr_write", "per_bank_event"}) == "per_bank_event"
                               ? TuningGranularity::PerBankEvent
                               : TuningGranularity::PerMrWrite;
  if (const json* v = k.take("energy")) {
    Keys e(*v, "cost table.energy");
    EnergyParams& p = t.energy;
    if (const json* x = e.take("tune_per_mr_write")) p.tune_per_mr_write = as_nonneg(*x, e.sub("tune_per_mr_write"));
    if (const json* x = e.take("tune_per_bank_event")) p.tune_per_bank_event = as_nonneg(*x, e.sub("tune_per_bank_event"));
    if (const json* x = e.take("vcsel_per_symbol")) p.vcsel_per_symbol = as_nonneg(*x, e.sub("vcsel_per_symbol"));
    if (const json* x = e.take("bpd_per_sample")) p.bpd_per_sample = as_nonneg(*x, e.sub("bpd_per_sample"));
    if (const json* x = e.take("adc_per_conversion")) p.adc_per_conversion = as_nonneg(*x, e.sub("adc_per_conversion"));
    if (const json* x = e.take("dac_per_conversion")) p.dac_per_conversion = as_nonneg(*x, e.sub("dac_per_conversion"));
    if (const json* x = e.take("memory_per_byte")) p.memory_per_byte = as_nonneg(*x, e.sub("memory_per_byte"));
    if (const json* x = e.take("electronic_per_op")) p.electronic_per_op = as_nonneg(*x, e.sub("electronic_per_op"));
    e.done();
  }
  if (const json* v = k.take("latency")) {
    Keys l(*v, "cost table.latency");
    Durations& d = t.latency;
    if (const json* x = l.take("tune_bank_time")) d.tune_bank_time = as_nonneg(*x, l.sub("tune_bank_time"));
    if (const json* x = l.take("optical_cycle_time")) d.optical_cycle_time = as_nonneg(*x, l.sub("optical_cycle_time"));
    if (const json* x = l.take("adc_time")) d.adc_time = as_nonneg(*x, l.sub("adc_time"));
    if (const json* x = l.take("dac_time")) d.dac_time = as_nonneg(*x, l.sub("dac_time"));
    if (const json* x = l.take("electronic_op_time")) d.electronic_op_time = as_nonneg(*x, l.sub("electronic_op_time"));
    if (const json* x = l.take("memory_access_time")) d.memory_access_time = as_nonneg(*x, l.sub("memory_access_time"));
    if (const json* x = l.take("burst_bytes")) {
      d.burst_bytes = as_uint(*x, l.sub("burst_bytes"));
      if (d.burst_bytes < 1) fail(l.sub("burst_bytes"), "expected at least 1");
    }
    l.done();
  }
  k.done();
  return t;
}

CostTable load_cost_table(const std::string& path) {
  try {
    return parse_cost_table(read_text_file(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

std::string cost_table_json(const CostTable& t) {
  json j;
  j["version"] = t.version;
  j["tuning_granularity"] =
      t.tuning_granularity == TuningGranularity::PerBankEvent ? "per_bank_event" : "per_mr_write";
  j["energy"] = {{"tune_per_mr_write", t.energy.tune_per_mr_write},
                 {"tune_per_bank_event", t.energy.tune_per_bank_event},
                 {"vcsel_per_symbol", t.energy.vcsel_per_symbol},
                 {"bpd_per_sample", t.energy.bpd_per_sample},
                 {"adc_per_conversion", t.energy.adc_per_conversion},
                 {"dac_per_conversion", t.energy.dac_per_conversion},
                 {"memory_per_byte", t.energy.memory_per_byte},
                 {"electronic_per_op", t.energy.electronic_per_op}};
  j["latency"] = {{"tune_bank_time", t.latency.tune_bank_time},
                  {"optical_cycle_time", t.latency.optical_cycle_time},
                  {"adc_time", t.latency.adc_time},
                  {"dac_time", t.latency.dac_time},
                  {"electronic_op_time", t.latency.electronic_op_time},
                  {"memory_access_time", t.latency.memory_access_time},
                  {"burst_bytes", t.latency.burst_bytes}};
  return j.dump(2) + "\n";
}

// ===== reports, traces, logits =====

std::string energy_report_json(const EnergyReport& r, const std::map<std::string, double>& extra) {
  json j;
  j["components"] = r.components();
  j["percent"] = r.percent();
  j["total"] = r.total;
  j["kfps_per_watt"] = r.kfps_per_watt;
  for (const auto& [key, val] : extra) j[key] = val;
  return j.dump(2) + "\n";
}

std::string latency_report_json(const LatencyReport& r) {
  json j;
  j["components"] = r.components();
  j["percent"] = r.percent();
  j["busy"] = {{"optical", r.busy_optical},
               {"electronic", r.busy_electronic},
               {"memory", r.busy_memory}};
  j["total"] = r.total;
  return j.dump(2) + "\n";
}

namespace {

json stats_json(const TileStats& s) {
  json j = json::object();
  auto set = [&](const char* k, uint64_t v) {
    if (v) j[k] = v;
  };
  set("optical_cycles", s.optical_cycles);
  set("tuning_events", s.tuning_events);
  set("mr_writes", s.mr_writes);
  set("adc_conversions", s.adc_conversions);
  set("dac_conversions", s.dac_conversions);
  set("vcsel_symbols", s.vcsel_symbols);
  set("bpd_samples", s.bpd_samples);
  set("electronic_adds", s.electronic_adds);
  set("memory_read_bytes", s.memory_read_bytes);
  set("memory_write_bytes", s.memory_write_bytes);
  set("adc_saturations", s.adc_saturations);
  return j;
}

}  // namespace

void write_trace_jsonl(const std::string& path, const ScheduleTrace& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for writing");
  json meta;
  meta["meta"] = trace.meta;
  os << meta.dump() << "\n";
  for (const TraceEvent& e : trace.events) {
    json j;
    j["id"] = e.id;
    j["resource"] = e.resource;
    j["kind"] = event_kind_name(e.kind);
    j["stage"] = e.stage;
    j["input"] = e.input_index;
    j["start"] = e.t_start;
    j["end"] = e.t_end;
    j["deps"] = e.deps;
    const json counts = stats_json(e.counts);
    if (!counts.empty()) j["counts"] = counts;
    if (e.elems) j["elems"] = e.elems;
    os << j.dump() << "\n";
  }
  if (!os) throw IoError(path + ": write failed");
}

std::string logits_json(const Tensor& logits) {
  json rows = json::array();
  for (int64_t r = 0; r < logits.rows(); ++r) {
    json row = json::array();
    for (int64_t c = 0; c < logits.cols(); ++c) row.push_back(logits.at(r, c));
    rows.push_back(std::move(row));
  }
  json j;
  j["shape"] = logits.shape;
  j["logits"] = std::move(rows);
  return j.dump(2) + "\n";
}

// ===== masks, boxes, scores =====

void write_mask_file(const std::string& path, const std::vector<PatchMask>& masks) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for writing");
  for (const PatchMask& m : masks) {
    std::string bits(m.bits.size(), '0');
    for (size_t i = 0; i < m.bits.size(); ++i)
      if (m.bits[i]) bits[i] = '1';
    os << bits << " " << json(m.skip_ratio).dump() << "\n";
  }
  if (!os) throw IoError(path + ": write failed");
}

std::vector<PatchMask> read_mask_file(const std::string& path) {
  std::istringstream is(read_text_file(path));
  std::vector<PatchMask> masks;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) fail(where, "expected '<bits> <skip ratio>'");
    std::vector<uint8_t> bits(sp);
    for (size_t i = 0; i < sp; ++i) {
      if (line[i] != '0' && line[i] != '1') fail(where, "mask bits must be 0 or 1");
      bits[i] = line[i] == '1' ? 1 : 0;
    }
    double ratio = 0.0;
    try {
      size_t used = 0;
      ratio = std::stod(line.substr(sp + 1), &used);
      if (sp + 1 + used != line.size()) fail(where, "trailing characters after the skip ratio");
    } catch (const std::invalid_argument&) {
      fail(where, "malformed skip ratio");
    }
    PatchMask m = patch_mask_from_bits(std::move(bits));
    if (std::fabs(m.skip_ratio - ratio) > 1e-9)
      fail(where, "skip ratio does not match the bit string");
    masks.push_back(std::move(m));
  }
  return masks;
}

std::vector<std::vector<BBox>> read_bbox_file(const std::string& path) {
  const json j = parse_json(read_text_file(path), path);
  if (!j.is_array()) fail(path, "expected a JSON array of boxes");
  std::vector<std::vector<BBox>> frames;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string where = path + "[" + std::to_string(i) + "]";
    Keys k(j[i], where);
    int frame = -1;
    BBox b;
    if (const json* v = k.take("frame")) frame = as_int(*v, k.sub("frame"));
    if (const json* v = k.take("x")) b.x = as_num(*v, k.sub("x"));
    if (const json* v = k.take("y")) b.y = as_num(*v, k.sub("y"));
    if (const json* v = k.take("w")) b.w = as_num(*v, k.sub("w"));
    if (const json* v = k.take("h")) b.h = as_num(*v, k.sub("h"));
    k.done();
    if (frame < 0) fail(where, "missing or negative frame index");
    if (static_cast<size_t>(frame) >= frames.size()) frames.resize(static_cast<size_t>(frame) + 1);
    frames[static_cast<size_t>(frame)].push_back(b);
  }
  return frames;
}

std::vector<std::vector<double>> read_scores_file(const std::string& path) {
  const json j = parse_json(read_text_file(path), path);
  if (!j.is_array()) fail(path, "expected a JSON array of score arrays");
  std::vector<std::vector<double>> frames;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string where = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_array()) fail(where, "expected an array of numbers");
    std::vector<double> row;
    for (size_t c = 0; c < j[i].size(); ++c)
      row.push_back(as_num(j[i][c], where + "[" + std::to_string(c) + "]"));
    frames.push_back(std::move(row));
  }
  return frames;
}

// ===== manifest =====

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

const char* code_version() { return "0.1.0"; }

std::string manifest_json(const RunConfig& cfg, const CostTable& table) {
  json j;
  j["activation_ranges"] = "per-tensor-dynamic";
  j["code_version"] = code_version();
  j["config_hash"] = hex64(fnv1a64(run_config_canonical(cfg)));
  j["cost_table_version"] = table.version;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for writing");
  os << text;
  if (!os) throw IoError(path + ": write failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace lightvit
