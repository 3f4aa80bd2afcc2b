#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rawpc/checkpoint.hpp"
#include "rawpc/config.hpp"
#include "rawpc/data_io.hpp"
#include "rawpc/error.hpp"
#include "rawpc/frontend.hpp"
#include "rawpc/genotype.hpp"
#include "rawpc/metrics.hpp"
#include "rawpc/model.hpp"
#include "rawpc/trainer.hpp"

namespace py = pybind11;
using namespace rawpc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const Array& a) { return {a.data(), a.data() + a.size()}; }

std::vector<double> table(const Array& a, const char* name) {
  if (a.ndim() != 2 || a.shape(0) != static_cast<py::ssize_t>(kCellEdges) ||
      a.shape(1) != static_cast<py::ssize_t>(kNumOps))
    throw ShapeError(std::string(name) + " must have shape (14, 8)");
  return to_vec(a);
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor wave_batch(const Array& waves) {
  if (waves.ndim() == 1) return Tensor::from({1, 1, static_cast<std::size_t>(waves.shape(0))}, to_vec(waves));
  if (waves.ndim() != 2) throw ShapeError("waves must be 1-D or 2-D (batch, samples)");
  return Tensor::from({static_cast<std::size_t>(waves.shape(0)), 1, static_cast<std::size_t>(waves.shape(1))},
                      to_vec(waves));
}

std::vector<Utterance> utterances(const std::vector<Array>& waves, const std::vector<int>& labels, std::size_t length) {
  if (waves.size() != labels.size()) throw ShapeError("waves and labels differ in length");
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < waves.size(); ++i) {
    Utterance u;
    u.id = "U" + std::to_string(i);
    u.samples = fix_duration(to_vec(waves[i]), length);
    u.label = labels[i];
    u.attack_id = labels[i] == 0 ? "-" : "A";
    out.push_back(std::move(u));
  }
  return out;
}

py::dict stats_dict(const EpochStats& s) {
  py::dict d;
  d["epoch"] = s.epoch;
  d["train_loss"] = s.train_loss;
  d["val_loss"] = s.val_loss;
  d["dev_acc"] = s.dev_acc;
  d["lr"] = s.lr;
  return d;
}

// Owns copies of the data the runs keep spans into.
struct SearchSession {
  std::vector<Utterance> train, dev;
  std::unique_ptr<SearchRun> run;
};

struct ScratchSession {
  std::vector<Utterance> train, dev;
  std::unique_ptr<ScratchRun> run;
};

}  // namespace

PYBIND11_MODULE(_rawpc, m) {
  m.doc() = "Partial-channel architecture search for raw-waveform spoofing countermeasures";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "compute_eer",
      [](const Array& bonafide, const Array& spoof) {
        const auto r = compute_eer(to_vec(bonafide), to_vec(spoof));
        return py::make_tuple(r.eer, r.threshold);
      },
      py::arg("bonafide"), py::arg("spoof"), "Equal error rate and its threshold; higher scores mean bona fide.");
  m.def(
      "min_tdcf",
      [](const Array& bonafide, const Array& spoof, double c1, double c2) {
        return min_normalized_tdcf(to_vec(bonafide), to_vec(spoof), c1, c2).min_tdcf;
      },
      py::arg("bonafide"), py::arg("spoof"), py::arg("c1"), py::arg("c2"), "Minimum normalized t-DCF.");

  py::class_<Genotype>(m, "Genotype")
      .def_readonly("k_c", &Genotype::k_c)
      .def_property_readonly("normal",
                             [](const Genotype& g) {
                               py::list nodes;
                               for (const auto& n : g.normal.nodes)
                                 nodes.append(py::make_tuple(py::make_tuple(n[0].input, std::string(op_name(n[0].op))),
                                                             py::make_tuple(n[1].input, std::string(op_name(n[1].op)))));
                               return nodes;
                             })
      .def_property_readonly("expand",
                             [](const Genotype& g) {
                               py::list nodes;
                               for (const auto& n : g.expand.nodes)
                                 nodes.append(py::make_tuple(py::make_tuple(n[0].input, std::string(op_name(n[0].op))),
                                                             py::make_tuple(n[1].input, std::string(op_name(n[1].op)))));
                               return nodes;
                             })
      .def("__eq__", [](const Genotype& a, const Genotype& b) { return a == b; })
      .def("__str__", [](const Genotype& g) { return format_genotype(g); })
      .def("to_text", [](const Genotype& g) { return format_genotype(g); })
      .def_static("from_text", [](const std::string& s) { return parse_genotype(s); });

  m.def(
      "derive_genotype",
      [](const Array& alpha_normal, const Array& alpha_expand, std::size_t k_c) {
        return derive_genotype(table(alpha_normal, "alpha_normal"), table(alpha_expand, "alpha_expand"), k_c);
      },
      py::arg("alpha_normal"), py::arg("alpha_expand"), py::arg("k_c") = 2,
      "Discretise two (14, 8) architecture tables into a genotype.");
  m.def("reference_genotype", &reference_genotype);

  m.def(
      "sinc_kernels",
      [](const Array& f1, const Array& f2, std::size_t kernel_len, double sample_rate) {
        if (f1.size() != f2.size()) throw ShapeError("f1 and f2 differ in length");
        const auto n = static_cast<std::size_t>(f1.size());
        NoGradGuard ng;
        const Tensor k =
            sinc_kernels(Tensor::from({n}, to_vec(f1)), Tensor::from({n}, to_vec(f2)), hamming_window(kernel_len), sample_rate);
        py::array_t<double> out({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(kernel_len)});
        std::copy(k.data().begin(), k.data().end(), out.mutable_data());
        return out;
      },
      py::arg("f1"), py::arg("f2"), py::arg("kernel_len"), py::arg("sample_rate"),
      "Hamming-windowed band-pass kernels, shape (channels, kernel_len).");
  m.def(
      "sample_mask",
      [](std::uint64_t seed, std::size_t channels, std::size_t max_masked, std::size_t draws) {
        Rng rng(seed);
        py::list out;
        for (std::size_t i = 0; i < draws; ++i) {
          const auto mk = sample_mask(rng, channels, max_masked);
          out.append(py::make_tuple(mk.begin, mk.count));
        }
        return out;
      },
      py::arg("seed"), py::arg("channels"), py::arg("max_masked"), py::arg("draws") = 1,
      "(begin, count) filter masks drawn from a seeded stream.");
  m.def("cosine_lr", &cosine_lr, py::arg("epoch"), py::arg("total"), py::arg("lr_max"), py::arg("lr_min"));

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("toy", &toy_config)
      .def_static("from_text", [](const std::string& s) { return parse_config(s); })
      .def("with_overrides", [](const RunConfig& c, const std::string& s) { return parse_config(s, c); })
      .def("to_text", [](const RunConfig& c) { return format_config(c); })
      .def_readwrite("seed", &RunConfig::seed)
      .def("__str__", [](const RunConfig& c) { return format_config(c); });

  m.def(
      "synth_task",
      [](std::uint64_t seed, std::size_t n_per_class, double sample_rate, double duration_s) {
        SynthConfig sc;
        sc.sample_rate = sample_rate;
        sc.duration_s = duration_s;
        Rng rng(seed);
        const auto data = synth_task(rng, n_per_class, sc);
        const auto n = static_cast<py::ssize_t>(data.size());
        const auto len = static_cast<py::ssize_t>(data.empty() ? 0 : data[0].samples.size());
        py::array_t<double> waves({n, len});
        py::array_t<int> labels(n);
        for (py::ssize_t i = 0; i < n; ++i) {
          std::copy(data[i].samples.begin(), data[i].samples.end(), waves.mutable_data(i, 0));
          labels.mutable_at(i) = data[i].label;
        }
        return py::make_tuple(waves, labels);
      },
      py::arg("seed"), py::arg("n_per_class"), py::arg("sample_rate") = 16000.0, py::arg("duration_s") = 4.0,
      "Synthetic harmonic (label 0) vs inharmonic (label 1) utterances.");

  py::class_<Model>(m, "Model")
      .def_static(
          "discrete",
          [](const RunConfig& cfg, const Genotype& g, std::uint64_t seed) {
            Rng rng(seed);
            return Model::discrete(cfg.model, g, rng);
          },
          py::arg("config"), py::arg("genotype"), py::arg("seed") = 0)
      .def_static(
          "search",
          [](const RunConfig& cfg, std::uint64_t seed) {
            Rng rng(seed);
            return Model::search(cfg.model, rng);
          },
          py::arg("config"), py::arg("seed") = 0)
      .def_static(
          "load", [](const std::filesystem::path& p) { return load_model(Checkpoint::load(p)); }, py::arg("path"))
      .def(
          "scores",
          [](Model& model, const Array& waves) {
            NoGradGuard ng;
            return scores_from_cos(model.forward(wave_batch(waves), false).cos);
          },
          py::arg("waves"), "Eval-mode bona fide scores for a (batch, samples) array.")
      .def(
          "shape_trace",
          [](Model& model, const Array& waves) {
            NoGradGuard ng;
            ShapeTrace trace;
            model.forward(wave_batch(waves), false, nullptr, &trace);
            py::list out;
            for (const auto& [name, shape] : trace) out.append(py::make_tuple(name, py::tuple(py::cast(shape))));
            return out;
          },
          py::arg("waves"))
      .def("param_counts",
           [](Model& model) {
             const auto c = model.count_params();
             py::dict d;
             d["frontend"] = c.frontend;
             d["stem"] = c.stem;
             d["cells"] = c.cells;
             d["gru"] = c.gru;
             d["fc_head"] = c.fc_head;
             d["total"] = c.total;
             return d;
           })
      .def_property_readonly("alpha_normal", [](const Model& model) { return to_array(model.alpha_normal); })
      .def_property_readonly("alpha_expand", [](const Model& model) { return to_array(model.alpha_expand); });

  py::class_<SearchSession>(m, "SearchRun")
      .def(py::init([](const RunConfig& cfg, const std::vector<Array>& train_waves, const std::vector<int>& train_labels,
                       const std::vector<Array>& dev_waves, const std::vector<int>& dev_labels) {
             auto s = std::make_unique<SearchSession>();
             s->train = utterances(train_waves, train_labels, cfg.model.input_length);
             s->dev = utterances(dev_waves, dev_labels, cfg.model.input_length);
             s->run = std::make_unique<SearchRun>(cfg, s->train, s->dev);
             return s;
           }),
           py::arg("config"), py::arg("train_waves"), py::arg("train_labels"), py::arg("dev_waves"),
           py::arg("dev_labels"))
      .def("run_epoch", [](SearchSession& s) { return stats_dict(s.run->run_epoch()); })
      .def_property_readonly("done", [](const SearchSession& s) { return s.run->done(); })
      .def("genotype", [](const SearchSession& s) { return s.run->selected_genotype(); })
      .def("alpha_history", [](const SearchSession& s) {
        py::list out;
        for (std::size_t e = 0; e < s.run->alpha_normal_history().size(); ++e)
          out.append(py::make_tuple(py::array_t<double>({kCellEdges, kNumOps}, s.run->alpha_normal_history()[e].data()),
                                    py::array_t<double>({kCellEdges, kNumOps}, s.run->alpha_expand_history()[e].data())));
        return out;
      });

  py::class_<ScratchSession>(m, "ScratchRun")
      .def(py::init([](const RunConfig& cfg, const Genotype& g, const std::vector<Array>& train_waves,
                       const std::vector<int>& train_labels, const std::vector<Array>& dev_waves,
                       const std::vector<int>& dev_labels) {
             auto s = std::make_unique<ScratchSession>();
             s->train = utterances(train_waves, train_labels, cfg.model.input_length);
             s->dev = utterances(dev_waves, dev_labels, cfg.model.input_length);
             s->run = std::make_unique<ScratchRun>(cfg, g, s->train, s->dev);
             return s;
           }),
           py::arg("config"), py::arg("genotype"), py::arg("train_waves"), py::arg("train_labels"),
           py::arg("dev_waves"), py::arg("dev_labels"))
      .def("run_epoch", [](ScratchSession& s) { return stats_dict(s.run->run_epoch()); })
      .def_property_readonly("done", [](const ScratchSession& s) { return s.run->done(); })
      .def_property_readonly("best_epoch", [](const ScratchSession& s) { return s.run->best_epoch(); })
      .def("save_best", [](const ScratchSession& s, const std::filesystem::path& p) { s.run->best_checkpoint().save(p); })
      .def("best_model", [](const ScratchSession& s) { return load_model(s.run->best_checkpoint()); });
}
