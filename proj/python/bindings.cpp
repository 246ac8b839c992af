// Python bindings for the scan engine, the affine layer zoo and the chunked
// attention model. Matrices cross the boundary as numpy float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

#include "psm/affine.hpp"
#include "psm/bench.hpp"
#include "psm/matrix.hpp"
#include "psm/scan.hpp"
#include "psm/tpsm.hpp"
#include "psm/weights.hpp"

namespace py = pybind11;

namespace {

psm::Matrix to_matrix(const py::array_t<double>& arr) {
  const auto buf = arr.request();
  if (buf.ndim != 2) throw psm::DimensionError("expected a 2-d float64 array");
  psm::Matrix m(static_cast<std::size_t>(buf.shape[0]),
                static_cast<std::size_t>(buf.shape[1]));
  const auto acc = arr.unchecked<2>();
  for (py::ssize_t i = 0; i < buf.shape[0]; ++i)
    for (py::ssize_t j = 0; j < buf.shape[1]; ++j)
      m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = acc(i, j);
  return m;
}

py::array_t<double> to_numpy(const psm::Matrix& m) {
  const std::vector<py::ssize_t> shape = {static_cast<py::ssize_t>(m.rows),
                                          static_cast<py::ssize_t>(m.cols)};
  py::array_t<double> arr(shape);
  std::memcpy(arr.mutable_data(), m.data.data(),
              m.data.size() * sizeof(double));
  return arr;
}

py::array_t<double> states_to_numpy(const std::vector<psm::Matrix>& states) {
  const py::ssize_t n = static_cast<py::ssize_t>(states.size());
  const py::ssize_t r = states.empty() ? 0 : static_cast<py::ssize_t>(states[0].rows);
  const py::ssize_t c = states.empty() ? 0 : static_cast<py::ssize_t>(states[0].cols);
  py::array_t<double> arr(std::vector<py::ssize_t>{n, r, c});
  double* out = arr.mutable_data();
  for (py::ssize_t t = 0; t < n; ++t)
    std::memcpy(out + t * r * c, states[t].data.data(),
                static_cast<std::size_t>(r * c) * sizeof(double));
  return arr;
}

psm::scan::Aggregator<double> named_f64_aggregator(const std::string& op) {
  if (op == "add")
    return {[](double a, double b) { return a + b; }, true};
  if (op == "sub")
    return {[](double a, double b) { return a - b; }, false};
  throw psm::Error("unknown aggregator: " + op + " (expected add or sub)");
}

py::dict trace_to_dict(const psm::scan::ScanTrace& t) {
  py::dict d;
  d["insert_agg_calls"] = t.insert_agg_calls;
  d["emit_agg_calls"] = t.emit_agg_calls;
  d["peak_occupied_roots"] = t.peak_occupied_roots;
  py::list rows;
  for (const auto& r : t.per_element)
    rows.append(py::make_tuple(r.insert_calls, r.emit_calls, r.occupied_roots));
  d["per_element"] = rows;
  return d;
}

std::vector<psm::tpsm::TokenId> to_tokens(const std::vector<long long>& ids) {
  std::vector<psm::tpsm::TokenId> out;
  out.reserve(ids.size());
  for (long long v : ids) {
    if (v < 0) throw psm::LengthError("negative token id");
    out.push_back(static_cast<psm::tpsm::TokenId>(v));
  }
  return out;
}

psm::affine::LayerConfig make_layer_config(const std::string& kind,
                                           std::size_t token_dim,
                                           std::size_t key_dim,
                                           std::size_t value_dim) {
  psm::affine::LayerConfig cfg;
  cfg.kind = psm::affine::parse_layer_kind(kind);
  cfg.token_dim = token_dim;
  cfg.key_dim = key_dim;
  cfg.value_dim = value_dim;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_psmcore, m) {
  m.doc() = "Prefix-scan sequence models: scan engine, affine layers, "
            "chunked attention model";

  py::register_exception<psm::Error>(m, "PsmError");

  // --- dense kernels -------------------------------------------------------
  m.def("seeded_matrix",
        [](std::size_t rows, std::size_t cols, std::uint64_t seed, double scl) {
          return to_numpy(psm::seeded_init(rows, cols, seed, scl));
        },
        py::arg("rows"), py::arg("cols"), py::arg("seed"),
        py::arg("scale") = 1.0,
        "Deterministic SplitMix64-seeded matrix; same args, same bits.");
  m.def("matmul", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return to_numpy(psm::matmul(to_matrix(a), to_matrix(b)));
  });
  m.def("softmax_rows",
        [](const py::array_t<double>& a, bool causal) {
          return to_numpy(psm::softmax_rows(to_matrix(a), causal));
        },
        py::arg("m"), py::arg("causal") = false);
  m.def("causal_attention",
        [](const py::array_t<double>& q, const py::array_t<double>& k,
           const py::array_t<double>& v) {
          const psm::Matrix qm = to_matrix(q);
          return to_numpy(psm::causal_attention(qm, to_matrix(k), to_matrix(v),
                                                qm.cols));
        });

  // --- scan engine over f64 ------------------------------------------------
  m.def("scan_online",
        [](const std::vector<double>& xs, const std::string& op) {
          const auto res = psm::scan::scan_online(xs, named_f64_aggregator(op));
          return py::make_tuple(py::cast(res.emissions),
                                trace_to_dict(res.trace));
        },
        py::arg("xs"), py::arg("op") = "add",
        "Streaming scan; returns (inclusive prefix emissions, trace).");
  m.def("scan_static",
        [](const std::vector<double>& xs, const std::string& op) {
          const auto res = psm::scan::scan_static(xs, named_f64_aggregator(op));
          py::list prefixes;
          for (const auto& p : res.prefixes)
            prefixes.append(p.has_value() ? py::cast(*p) : py::none());
          return prefixes;
        },
        py::arg("xs"), py::arg("op") = "add",
        "Tree-scan exclusive prefixes; index 0 is the identity (None).");
  m.def("verify_duality",
        [](const std::vector<double>& xs, const std::string& op) {
          const auto rep = psm::scan::verify_duality(
              xs, named_f64_aggregator(op),
              [](double a, double b) { return psm::bitwise_equal(a, b); });
          py::dict d;
          d["all_equal"] = rep.all_equal;
          d["memory_bound_ok"] = rep.memory_bound_ok;
          d["work_identity_ok"] = rep.work_identity_ok;
          d["emit_bound_ok"] = rep.emit_bound_ok;
          d["total_insert_calls"] = rep.total_insert_calls;
          d["total_emit_calls"] = rep.total_emit_calls;
          d["peak_occupied_roots"] = rep.peak_occupied_roots;
          return d;
        },
        py::arg("xs"), py::arg("op") = "sub");

  // --- affine layer zoo -----------------------------------------------------
  m.def("layer_kinds", [] {
    std::vector<std::string> out;
    for (const auto& [name, kind] : psm::affine::layer_kind_names())
      out.push_back(name);
    return out;
  });
  m.def("affine_layer_states",
        [](const std::string& kind, std::size_t n, std::size_t token_dim,
           std::size_t key_dim, std::size_t value_dim, std::uint64_t seed,
           const std::string& path) {
          const auto cfg = make_layer_config(kind, token_dim, key_dim, value_dim);
          const auto weights = psm::affine::make_layer_weights(cfg, seed);
          const auto inputs = psm::affine::make_layer_inputs(cfg, n, seed);
          std::vector<psm::Matrix> states;
          if (path == "sequential") {
            states = psm::affine::sequential_affine(
                psm::affine::make_layer_pairs(cfg, inputs, weights));
          } else if (path == "static" || path == "online") {
            states = psm::affine::layer_states_via_scan(
                cfg, inputs, weights,
                path == "static" ? psm::affine::ScanPath::Static
                                 : psm::affine::ScanPath::Online);
          } else {
            throw psm::Error("path must be static, online or sequential");
          }
          return states_to_numpy(states);
        },
        py::arg("kind"), py::arg("n"), py::arg("token_dim") = 8,
        py::arg("key_dim") = 8, py::arg("value_dim") = 8, py::arg("seed") = 1,
        py::arg("path") = "online",
        "State sequence (n, state_rows, key_dim) for a seeded random layer "
        "instance.");

  // --- chunked attention model ----------------------------------------------
  py::class_<psm::tpsm::PsmConfig>(m, "PsmConfig")
      .def(py::init([](std::size_t chunk_size, std::size_t model_dim,
                       std::size_t heads, std::size_t agg_layers,
                       std::size_t inf_layers, std::size_t vocab_size,
                       const std::string& compression) {
             psm::tpsm::PsmConfig cfg;
             cfg.chunk_size = chunk_size;
             cfg.model_dim = model_dim;
             cfg.heads = heads;
             cfg.agg_layers = agg_layers;
             cfg.inf_layers = inf_layers;
             cfg.vocab_size = vocab_size;
             cfg.compression = psm::tpsm::parse_compression(compression);
             cfg.validate();
             return cfg;
           }),
           py::arg("chunk_size") = 4, py::arg("model_dim") = 32,
           py::arg("heads") = 2, py::arg("agg_layers") = 1,
           py::arg("inf_layers") = 1, py::arg("vocab_size") = 64,
           py::arg("compression") = "drop-first-half")
      .def_readonly("chunk_size", &psm::tpsm::PsmConfig::chunk_size)
      .def_readonly("model_dim", &psm::tpsm::PsmConfig::model_dim)
      .def_readonly("heads", &psm::tpsm::PsmConfig::heads)
      .def_readonly("agg_layers", &psm::tpsm::PsmConfig::agg_layers)
      .def_readonly("inf_layers", &psm::tpsm::PsmConfig::inf_layers)
      .def_readonly("vocab_size", &psm::tpsm::PsmConfig::vocab_size);

  py::class_<psm::WeightBundle>(m, "WeightBundle")
      .def_property_readonly("names", &psm::WeightBundle::names)
      .def("__len__", &psm::WeightBundle::size)
      .def("get", [](const psm::WeightBundle& w, const std::string& name) {
        return to_numpy(w.at(name));
      });

  m.def("make_psm_weights", &psm::tpsm::make_psm_weights, py::arg("cfg"),
        py::arg("seed") = 1);
  m.def("save_weights", &psm::save_weights, py::arg("weights"),
        py::arg("path"));
  m.def("load_weights", &psm::load_weights, py::arg("path"));

  m.def("psm_forward_static",
        [](const std::vector<long long>& tokens, const psm::WeightBundle& w,
           const psm::tpsm::PsmConfig& cfg) {
          return to_numpy(psm::tpsm::psm_forward_static(to_tokens(tokens), w, cfg));
        },
        py::arg("tokens"), py::arg("weights"), py::arg("cfg"),
        "Whole-sequence logits via the static tree scan.");
  m.def("psm_decode_stream",
        [](const std::vector<long long>& tokens, const psm::WeightBundle& w,
           const psm::tpsm::PsmConfig& cfg) {
          auto res = psm::tpsm::psm_decode_stream(to_tokens(tokens), w, cfg);
          return py::make_tuple(to_numpy(res.logits), trace_to_dict(res.trace));
        },
        py::arg("tokens"), py::arg("weights"), py::arg("cfg"),
        "Token-by-token logits; bit-identical to psm_forward_static.");

  m.attr("__version__") = "0.1.0";
}
