// Python bindings for the main operations: quantization, the microring
// layer, the optical core, the backbone simulator, the mask network and
// the cost model. Tensors cross the boundary as numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "lightvit/cost.hpp"
#include "lightvit/io.hpp"
#include "lightvit/photonics.hpp"
#include "lightvit/pipeline.hpp"
#include "lightvit/roi.hpp"

namespace py = pybind11;
using namespace lightvit;

namespace {

Tensor tensor_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Tensor t = Tensor::matrix(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::array_t<double> tensor_to(const Tensor& t) {
  if (!t.is_matrix()) throw std::invalid_argument("only matrices cross the boundary");
  py::array_t<double> a({t.rows(), t.cols()});
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

template <class T, class V>
py::array_t<V> flat_to(const T& t, const std::vector<V>& data) {
  py::array_t<V> a({t.rows(), t.cols()});
  std::copy(data.begin(), data.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "photonic vision transformer simulator core";

  // ===== quantization =====

  py::class_<QuantTensor>(m, "QuantTensor")
      .def_property_readonly("codes", [](const QuantTensor& q) { return flat_to(q, q.codes); })
      .def_readonly("scale", &QuantTensor::scale)
      .def_readonly("bits", &QuantTensor::bits)
      .def("dequantize", [](const QuantTensor& q) { return tensor_to(q.dequantize()); });

  py::class_<AccumTensor>(m, "AccumTensor")
      .def_property_readonly("values", [](const AccumTensor& a) { return flat_to(a, a.values); })
      .def_readonly("scale", &AccumTensor::scale)
      .def("dequantize", [](const AccumTensor& a) { return tensor_to(a.dequantize()); });

  m.def("quantize", [](const py::array_t<double>& x, int bits) {
    return quantize_symmetric(tensor_from(x), bits);
  });
  m.def("matmul_exact", &matmul_exact);
  m.def("fold_scale", &fold_scale);

  // ===== microrings =====

  py::class_<WavelengthGrid>(m, "WavelengthGrid")
      .def(py::init<int, double, double>(), py::arg("n_channels"), py::arg("center_nm") = 1550.0,
           py::arg("spacing_nm") = 4.8)
      .def_readonly("n_channels", &WavelengthGrid::n_channels)
      .def_readonly("center_nm", &WavelengthGrid::center_nm)
      .def_readonly("spacing_nm", &WavelengthGrid::spacing_nm)
      .def("wavelength_nm", &WavelengthGrid::wavelength_nm);

  py::class_<MrDesign>(m, "MrDesign")
      .def(py::init<>())
      .def_readwrite("radius_um", &MrDesign::radius_um)
      .def_readwrite("n_eff", &MrDesign::n_eff)
      .def_readwrite("mode_order", &MrDesign::mode_order)
      .def_readwrite("q_factor", &MrDesign::q_factor);

  m.def("resonant_wavelength_nm", &resonant_wavelength_nm);
  m.def("linewidth_nm", &linewidth_nm);
  m.def("crosstalk_phi", &crosstalk_phi);
  m.def("noise_power", [](const WavelengthGrid& g, double q, int victim, std::vector<double> p) {
    return noise_power(g, q, victim, p);
  });
  m.def("resolution_levels", &resolution_levels);
  m.def("calibrate_grid", &calibrate_grid, py::arg("n_channels"), py::arg("q_factor"),
        py::arg("target_bits"), py::arg("center_nm") = 1550.0);

  // ===== optical core =====

  py::enum_<NoiseMode>(m, "NoiseMode")
      .value("OFF", NoiseMode::Off)
      .value("WORST_CASE", NoiseMode::WorstCase)
      .value("STOCHASTIC", NoiseMode::Stochastic);

  py::enum_<AdcRangeMode>(m, "AdcRangeMode")
      .value("CONSERVATIVE", AdcRangeMode::Conservative)
      .value("CALIBRATED", AdcRangeMode::Calibrated);

  py::enum_<GeluKind>(m, "GeluKind")
      .value("TANH_APPROX", GeluKind::TanhApprox)
      .value("ERF", GeluKind::Erf);

  py::enum_<TuningGranularity>(m, "TuningGranularity")
      .value("PER_MR_WRITE", TuningGranularity::PerMrWrite)
      .value("PER_BANK_EVENT", TuningGranularity::PerBankEvent);

  py::class_<TileStats>(m, "TileStats")
      .def_readonly("optical_cycles", &TileStats::optical_cycles)
      .def_readonly("tuning_events", &TileStats::tuning_events)
      .def_readonly("mr_writes", &TileStats::mr_writes)
      .def_readonly("adc_conversions", &TileStats::adc_conversions)
      .def_readonly("dac_conversions", &TileStats::dac_conversions)
      .def_readonly("vcsel_symbols", &TileStats::vcsel_symbols)
      .def_readonly("bpd_samples", &TileStats::bpd_samples)
      .def_readonly("electronic_adds", &TileStats::electronic_adds)
      .def_readonly("memory_read_bytes", &TileStats::memory_read_bytes)
      .def_readonly("memory_write_bytes", &TileStats::memory_write_bytes)
      .def_readonly("adc_saturations", &TileStats::adc_saturations);

  py::class_<OpticalCoreConfig>(m, "OpticalCoreConfig")
      .def(py::init<>())
      .def_readwrite("n_wavelengths", &OpticalCoreConfig::n_wavelengths)
      .def_readwrite("n_arms", &OpticalCoreConfig::n_arms)
      .def_readwrite("grid", &OpticalCoreConfig::grid)
      .def_readwrite("q_factor", &OpticalCoreConfig::q_factor)
      .def_readwrite("adc_bits", &OpticalCoreConfig::adc_bits)
      .def_readwrite("dac_bits", &OpticalCoreConfig::dac_bits)
      .def_readwrite("adc_range", &OpticalCoreConfig::adc_range)
      .def_readwrite("adc_percentile", &OpticalCoreConfig::adc_percentile)
      .def_readwrite("noise", &OpticalCoreConfig::noise)
      .def_readwrite("noise_seed", &OpticalCoreConfig::noise_seed)
      .def_readwrite("two_rail", &OpticalCoreConfig::two_rail);

  py::class_<MatmulResult>(m, "MatmulResult")
      .def_readonly("out", &MatmulResult::out)
      .def_readonly("stats", &MatmulResult::stats)
      .def_readonly("wavelength_chunks", &MatmulResult::wavelength_chunks)
      .def_readonly("arm_groups", &MatmulResult::arm_groups);

  py::class_<OpticalCore>(m, "OpticalCore")
      .def(py::init<OpticalCoreConfig>())
      .def("tiled_matmul", &OpticalCore::tiled_matmul)
      .def_property_readonly("stats", &OpticalCore::stats)
      .def("reset_stats", &OpticalCore::reset_stats);

  // ===== traces and cost =====

  py::class_<ScheduleTrace>(m, "ScheduleTrace")
      .def("makespan", &ScheduleTrace::makespan)
      .def("validate", &ScheduleTrace::validate)
      .def_property_readonly("n_events",
                             [](const ScheduleTrace& t) { return t.events.size(); })
      .def_readonly("meta", &ScheduleTrace::meta);

  py::class_<Durations>(m, "Durations")
      .def(py::init<>())
      .def_readwrite("tune_bank_time", &Durations::tune_bank_time)
      .def_readwrite("optical_cycle_time", &Durations::optical_cycle_time)
      .def_readwrite("adc_time", &Durations::adc_time)
      .def_readwrite("dac_time", &Durations::dac_time)
      .def_readwrite("electronic_op_time", &Durations::electronic_op_time)
      .def_readwrite("memory_access_time", &Durations::memory_access_time)
      .def_readwrite("burst_bytes", &Durations::burst_bytes);

  py::class_<EnergyParams>(m, "EnergyParams")
      .def(py::init<>())
      .def_readwrite("tune_per_mr_write", &EnergyParams::tune_per_mr_write)
      .def_readwrite("tune_per_bank_event", &EnergyParams::tune_per_bank_event)
      .def_readwrite("vcsel_per_symbol", &EnergyParams::vcsel_per_symbol)
      .def_readwrite("bpd_per_sample", &EnergyParams::bpd_per_sample)
      .def_readwrite("adc_per_conversion", &EnergyParams::adc_per_conversion)
      .def_readwrite("dac_per_conversion", &EnergyParams::dac_per_conversion)
      .def_readwrite("memory_per_byte", &EnergyParams::memory_per_byte)
      .def_readwrite("electronic_per_op", &EnergyParams::electronic_per_op);

  py::class_<CostTable>(m, "CostTable")
      .def(py::init<>())
      .def_static("defaults", &CostTable::defaults)
      .def_readwrite("version", &CostTable::version)
      .def_readwrite("energy", &CostTable::energy)
      .def_readwrite("latency", &CostTable::latency)
      .def_readwrite("tuning_granularity", &CostTable::tuning_granularity);

  py::class_<EnergyReport>(m, "EnergyReport")
      .def_readonly("total", &EnergyReport::total)
      .def_readonly("kfps_per_watt", &EnergyReport::kfps_per_watt)
      .def("components", &EnergyReport::components)
      .def("percent", &EnergyReport::percent);

  py::class_<LatencyReport>(m, "LatencyReport")
      .def_readonly("total", &LatencyReport::total)
      .def_readonly("optical", &LatencyReport::optical)
      .def_readonly("electronic", &LatencyReport::electronic)
      .def_readonly("memory", &LatencyReport::memory)
      .def("components", &LatencyReport::components);

  m.def("estimate_energy", &estimate_energy);
  m.def("estimate_latency", &estimate_latency);
  m.def("kfps_per_watt", &kfps_per_watt);
  m.def("savings", &savings);

  // ===== backbone =====

  py::class_<ViTConfig>(m, "ViTConfig")
      .def(py::init<>())
      .def_readwrite("image_size", &ViTConfig::image_size)
      .def_readwrite("patch_size", &ViTConfig::patch_size)
      .def_readwrite("in_channels", &ViTConfig::in_channels)
      .def_readwrite("embed_dim", &ViTConfig::embed_dim)
      .def_readwrite("n_heads", &ViTConfig::n_heads)
      .def_readwrite("n_blocks", &ViTConfig::n_blocks)
      .def_readwrite("ffn_ratio", &ViTConfig::ffn_ratio)
      .def_readwrite("n_classes", &ViTConfig::n_classes)
      .def_readwrite("bits", &ViTConfig::bits)
      .def_readwrite("gelu", &ViTConfig::gelu)
      .def("n_patches", &ViTConfig::n_patches)
      .def("seq_len", &ViTConfig::seq_len)
      .def("patch_dim", &ViTConfig::patch_dim)
      .def("validate", &ViTConfig::validate);

  m.def("vit_preset", &vit_preset, py::arg("name"), py::arg("image_size") = 224);

  py::class_<ModelWeights>(m, "ModelWeights");
  m.def("random_weights", &random_weights);
  m.def("random_patches",
        [](const ViTConfig& cfg, uint64_t seed) { return tensor_to(random_patches(cfg, seed)); });

  py::class_<ForwardResult>(m, "ForwardResult")
      .def_property_readonly("logits", [](const ForwardResult& r) { return tensor_to(r.logits); })
      .def_property_readonly("features",
                             [](const ForwardResult& r) { return tensor_to(r.features); })
      .def_property_readonly("optical_stats",
                             [](const ForwardResult& r) { return r.totals.optical; })
      .def_property_readonly("electronic_elems",
                             [](const ForwardResult& r) { return r.totals.electronic_elems; })
      .def_readonly("trace", &ForwardResult::trace);

  py::class_<Simulator>(m, "Simulator")
      .def(py::init<ViTConfig, ModelWeights, OpticalCoreConfig, Durations>(), py::arg("config"),
           py::arg("weights"), py::arg("core") = OpticalCoreConfig{},
           py::arg("durations") = Durations{})
      .def(
          "forward",
          [](const Simulator& s, const py::array_t<double>& patches,
             const std::optional<std::vector<int64_t>>& keep) {
            const Tensor t = tensor_from(patches);
            return keep ? s.forward(t, &*keep) : s.forward(t);
          },
          py::arg("patches"), py::arg("keep") = py::none());

  py::class_<PipelineReport>(m, "PipelineReport")
      .def_readonly("n_inputs", &PipelineReport::n_inputs)
      .def_readonly("overlap", &PipelineReport::overlap)
      .def_readonly("makespan", &PipelineReport::makespan)
      .def_readonly("steady_interval", &PipelineReport::steady_interval)
      .def_readonly("trace", &PipelineReport::trace);

  m.def("schedule_pipeline", &schedule_pipeline);

  // ===== region masks =====

  py::class_<MgnetConfig>(m, "MgnetConfig")
      .def(py::init<>())
      .def_readwrite("patch_size", &MgnetConfig::patch_size)
      .def_readwrite("embed_dim", &MgnetConfig::embed_dim)
      .def_readwrite("n_heads", &MgnetConfig::n_heads)
      .def_readwrite("ffn_ratio", &MgnetConfig::ffn_ratio)
      .def_readwrite("region_threshold", &MgnetConfig::region_threshold);

  py::class_<MgnetWeights>(m, "MgnetWeights");
  m.def("random_mgnet_weights", &random_mgnet_weights);

  py::class_<RegionScores>(m, "RegionScores")
      .def(py::init([](std::vector<double> s) {
             RegionScores r;
             r.s_region = std::move(s);
             return r;
           }),
           py::arg("s_region"))
      .def_readonly("s_region", &RegionScores::s_region)
      .def_readonly("s_cls_attn", &RegionScores::s_cls_attn);

  py::class_<MgnetRun>(m, "MgnetRun")
      .def_readonly("scores", &MgnetRun::scores)
      .def_readonly("elec_ops", &MgnetRun::elec_ops)
      .def_readonly("optical", &MgnetRun::optical);

  m.def(
      "mgnet_forward",
      [](const MgnetConfig& cfg, const MgnetWeights& w, const py::array_t<double>& patches,
         OpticalCore* core) { return mgnet_forward(cfg, w, tensor_from(patches), core); },
      py::arg("config"), py::arg("weights"), py::arg("patches"), py::arg("core") = nullptr);

  py::class_<PatchMask>(m, "PatchMask")
      .def(py::init([](std::vector<uint8_t> bits) { return patch_mask_from_bits(std::move(bits)); }),
           py::arg("bits"))
      .def_readonly("bits", &PatchMask::bits)
      .def_readonly("skip_ratio", &PatchMask::skip_ratio);

  py::class_<BBox>(m, "BBox")
      .def(py::init([](double x, double y, double w, double h) { return BBox{x, y, w, h}; }),
           py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"))
      .def_readwrite("x", &BBox::x)
      .def_readwrite("y", &BBox::y)
      .def_readwrite("w", &BBox::w)
      .def_readwrite("h", &BBox::h);

  m.def("make_mask", &make_mask);
  m.def("ground_truth_mask", &ground_truth_mask);
  m.def("miou", &miou);
  m.def("mask_keep_indices", &mask_keep_indices);
  m.def("apply_mask", [](const py::array_t<double>& seq, const PatchMask& mask) {
    const MaskedSequence ms = apply_mask(tensor_from(seq), mask);
    return py::make_tuple(tensor_to(ms.sequence), ms.index_map);
  });

  m.attr("__version__") = code_version();
}
