#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "curio/analysis.hpp"
#include "curio/harness.hpp"

namespace py = pybind11;
using namespace curio;

namespace {

py::array_t<double> vision_array(const std::vector<double>& vision) {
  py::array_t<double> arr({16, 16, 4});
  std::copy(vision.begin(), vision.end(), arr.mutable_data());
  return arr;
}

py::array_t<double> rows_array(const lang::VoiceRows& rows) {
  py::array_t<double> arr({static_cast<py::ssize_t>(rows.size()),
                           static_cast<py::ssize_t>(lang::kVocabSize)});
  auto a = arr.mutable_unchecked<2>();
  for (py::ssize_t r = 0; r < a.shape(0); ++r)
    for (py::ssize_t v = 0; v < a.shape(1); ++v)
      a(r, v) = rows[static_cast<size_t>(r)][static_cast<size_t>(v)];
  return arr;
}

py::dict observation_dict(const env::ObservationBundle& obs) {
  py::dict d;
  d["vision"] = vision_array(obs.vision);
  py::array_t<double> touch({static_cast<py::ssize_t>(env::kTouchSensors)});
  std::copy(obs.touch.begin(), obs.touch.end(), touch.mutable_data());
  d["touch"] = touch;
  py::array_t<double> proprio({static_cast<py::ssize_t>(env::kProprioDims)});
  std::copy(obs.proprioception.begin(), obs.proprioception.end(), proprio.mutable_data());
  d["proprioception"] = proprio;
  d["command_voice"] = rows_array(obs.command_voice);
  d["feedback_voice"] = rows_array(obs.feedback_voice);
  return d;
}

harness::RunConfig config_from_kwargs(const py::kwargs& kwargs) {
  harness::RunConfig config;
  nlohmann::json j = nlohmann::json::object();
  for (const auto& item : kwargs) {
    const auto key = item.first.cast<std::string>();
    if (key == "curiosity" || key == "scale" || key == "model" || key == "out_dir") {
      j[key] = item.second.cast<std::string>();
    } else if (key == "seed") {
      j[key] = item.second.cast<uint64_t>();
    } else if (key == "curiosity_next_step" || key == "dynamic_alpha") {
      j[key] = item.second.cast<bool>();
    } else if (key == "target_entropy" || key == "alpha_lr") {
      j[key] = item.second.cast<double>();
    } else if (key == "lr" || key == "agent_lr" || key == "alpha" || key == "gamma" ||
               key == "tau") {
      j[key] = item.second.cast<double>();
    } else {
      j[key] = item.second.cast<int>();
    }
  }
  return harness::RunConfig::from_json(j);
}

Eigen::MatrixXd matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Eigen::MatrixXd m(arr.shape(0), arr.shape(1));
  auto a = arr.unchecked<2>();
  for (py::ssize_t r = 0; r < arr.shape(0); ++r)
    for (py::ssize_t c = 0; c < arr.shape(1); ++c) m(r, c) = a(r, c);
  return m;
}

py::array_t<double> numpy_from_matrix(const Eigen::MatrixXd& m) {
  py::array_t<double> arr({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  auto a = arr.mutable_unchecked<2>();
  for (py::ssize_t r = 0; r < arr.shape(0); ++r)
    for (py::ssize_t c = 0; c < arr.shape(1); ++c) a(r, c) = m(r, c);
  return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "curiobot core: arena simulation, free-energy math, training and analysis";

  // Vocabulary and sentences.
  m.def("token_names", [] {
    const auto& names = lang::token_names();
    return std::vector<std::string>(names.begin(), names.end());
  });
  m.def("token_index", &lang::token_index, py::arg("name"));

  py::class_<lang::Sentence>(m, "Sentence")
      .def(py::init([](int verb, int adjective, int noun) {
             return lang::Sentence{verb, adjective, noun};
           }),
           py::arg("verb"), py::arg("adjective"), py::arg("noun"))
      .def_readwrite("verb", &lang::Sentence::verb)
      .def_readwrite("adjective", &lang::Sentence::adjective)
      .def_readwrite("noun", &lang::Sentence::noun)
      .def("text", &lang::Sentence::text)
      .def("__eq__", [](const lang::Sentence& a, const lang::Sentence& b) { return a == b; })
      .def("__repr__", [](const lang::Sentence& s) { return "Sentence('" + s.text() + "')"; });

  m.def("parse_sentence", &lang::parse_sentence, py::arg("text"));
  m.def("encode_sentence",
        [](const lang::Sentence& s) { return rows_array(lang::encode_sentence(s)); });
  m.def("silence", [] { return rows_array(lang::silence()); });

  py::class_<lang::ScaleConfig>(m, "ScaleConfig")
      .def_static("preset", &lang::ScaleConfig::preset, py::arg("name"))
      .def_readonly("verbs", &lang::ScaleConfig::verbs)
      .def_readonly("adjectives", &lang::ScaleConfig::adjectives)
      .def_readonly("nouns", &lang::ScaleConfig::nouns)
      .def_readonly("name", &lang::ScaleConfig::name)
      .def("total_sentences", &lang::ScaleConfig::total_sentences)
      .def("all_sentences", &lang::ScaleConfig::all_sentences);

  m.def(
      "generate_split",
      [](const std::string& scale, uint64_t seed) {
        const auto split = lang::generate_split(lang::ScaleConfig::preset(scale), seed);
        py::dict d;
        d["train"] = split.train;
        d["test"] = split.test;
        return d;
      },
      py::arg("scale"), py::arg("seed"));

  // Free-energy math.
  m.def(
      "kld_diag",
      [](const std::vector<double>& mq, const std::vector<double>& sq,
         const std::vector<double>& mp, const std::vector<double>& sp) {
        return fe::kld_diag(mq, sq, mp, sp);
      },
      py::arg("mean_q"), py::arg("std_q"), py::arg("mean_p"), py::arg("std_p"));
  m.def(
      "q_target",
      [](double reward, double curiosity, double entropy, double next_q, double done, double gamma,
         double alpha) { return fe::q_target(reward, curiosity, entropy, next_q, done, gamma, alpha); },
      py::arg("reward"), py::arg("curiosity"), py::arg("entropy"), py::arg("next_q"),
      py::arg("done"), py::arg("gamma") = 0.99, py::arg("alpha") = 0.05);
  m.def("curiosity_preset", [](const std::string& name) {
    const auto c = fe::IntrinsicConfig::preset(name);
    py::dict d;
    d["vision"] = c.eta_vision;
    d["touch"] = c.eta_touch;
    d["proprioception"] = c.eta_proprioception;
    d["feedback"] = c.eta_feedback;
    return d;
  });

  // Arena.
  py::class_<env::Arena>(m, "Arena")
      .def_static(
          "reset",
          [](uint64_t seed, const std::string& sentence, const std::string& scale) {
            return env::Arena::reset(seed, lang::parse_sentence(sentence),
                                     lang::ScaleConfig::preset(scale));
          },
          py::arg("seed"), py::arg("sentence"), py::arg("scale") = "full")
      .def("observation", [](const env::Arena& a) { return observation_dict(a.observation()); })
      .def("render_vision", [](const env::Arena& a) { return vision_array(a.render_vision()); })
      .def(
          "step",
          [](env::Arena& a, const std::array<double, 4>& command) {
            const auto result = a.step(env::MotorCommand::clamped(command));
            py::dict d = observation_dict(result.observation);
            d["reward"] = result.reward;
            d["done"] = result.done;
            py::list events;
            for (const auto& e : result.events) events.append(e.sentence().text());
            d["events"] = events;
            return d;
          },
          py::arg("command"))
      .def_property_readonly("done", [](const env::Arena& a) { return a.state().done; })
      .def_property_readonly("step_index", [](const env::Arena& a) { return a.state().step_index; })
      .def("state_summary", [](const env::Arena& a) {
        const auto& st = a.state();
        py::dict d;
        d["x"] = st.robot.position.x;
        d["y"] = st.robot.position.y;
        d["heading"] = st.robot.heading;
        d["yaw_deg"] = st.robot.yaw_angle_deg;
        d["pitch_deg"] = st.robot.pitch_angle_deg;
        d["command"] = st.command.text();
        py::list objects;
        for (const auto& o : st.objects) {
          py::dict obj;
          obj["color"] = lang::token_names()[static_cast<size_t>(env::adjective_token(o.color))];
          obj["shape"] = lang::token_names()[static_cast<size_t>(env::noun_token(o.shape))];
          obj["x"] = o.position.x;
          obj["y"] = o.position.y;
          objects.append(obj);
        }
        d["objects"] = objects;
        return d;
      });

  // Training, evaluation and analysis entry points.
  m.def("train", [](const py::kwargs& kwargs) {
    const auto config = config_from_kwargs(kwargs);
    harness::RunSummary summary;
    {
      py::gil_scoped_release release;  // the autograd engine must run GIL-free
      summary = harness::run_training(config);
    }
    py::dict d;
    d["status"] = summary.status;
    d["out_dir"] = summary.out_dir;
    d["metrics"] = summary.metrics_path;
    d["train_log"] = summary.train_log_path;
    d["checkpoint_final"] = summary.checkpoint_final;
    d["eval_rows"] = summary.eval_rows;
    return d;
  });

  m.def(
      "evaluate_checkpoint",
      [](const std::string& checkpoint, const std::string& which, int episodes_per_sentence,
         uint64_t seed) {
        auto system = harness::load_system(checkpoint);
        const auto scale = system->config.scale_config();
        const auto split = lang::generate_split(scale, system->config.seed);
        std::vector<lang::Sentence> sentences;
        if (which == "learned") sentences = split.train;
        else if (which == "unlearned") sentences = split.test;
        else {
          sentences = split.train;
          sentences.insert(sentences.end(), split.test.begin(), split.test.end());
        }
        std::mt19937_64 seed_rng(seed);
        harness::NeuralPolicy policy(system->fm_trainer.model(), system->agent.actor(), false,
                                     nullptr);
        const auto result =
            harness::evaluate(policy, sentences, episodes_per_sentence, scale, seed_rng);
        py::dict d;
        d["overall"] = result.overall_rate();
        d["micro"] = result.micro_rate();
        py::dict per_category;
        for (int c = 0; c < env::kNumActions; ++c) {
          if (result.attempts[static_cast<size_t>(c)] == 0) continue;
          per_category[py::str(lang::token_names()[static_cast<size_t>(lang::kVerbBase + c)])] =
              result.category_rate(c);
        }
        d["per_category"] = per_category;
        return d;
      },
      py::arg("checkpoint"), py::arg("set") = "all", py::arg("episodes_per_sentence") = 1,
      py::arg("seed") = 0);

  m.def(
      "measure_random_baseline",
      [](const std::string& scale_name, uint64_t split_seed, int episodes, uint64_t seed) {
        const auto scale = lang::ScaleConfig::preset(scale_name);
        const auto split = lang::generate_split(scale, split_seed);
        return harness::measure_random_baseline(split.train, scale, episodes, seed);
      },
      py::arg("scale"), py::arg("split_seed"), py::arg("episodes") = 200, py::arg("seed") = 0);

  m.def(
      "export_dream",
      [](const std::string& checkpoint, const std::string& sentence, int steps, uint64_t seed,
         const std::string& out_dir) {
        auto system = harness::load_system(checkpoint);
        const auto result = analysis::export_dream(
            system->fm_trainer.model(), system->agent.actor(), lang::parse_sentence(sentence),
            system->config.scale_config(), seed, steps, out_dir);
        py::dict d;
        d["steps"] = result.steps;
        d["frames"] = result.frame_paths;
        d["trace"] = result.trace_path;
        return d;
      },
      py::arg("checkpoint"), py::arg("sentence"), py::arg("steps") = 30, py::arg("seed") = 0,
      py::arg("out_dir") = "dream_out");

  m.def(
      "pca",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& data, int k) {
        const auto result = analysis::pca(matrix_from_numpy(data), k);
        py::dict d;
        d["components"] = numpy_from_matrix(result.components);
        d["projections"] = numpy_from_matrix(result.projections);
        py::array_t<double> ev({static_cast<py::ssize_t>(result.eigenvalues.size())});
        for (py::ssize_t i = 0; i < ev.shape(0); ++i)
          ev.mutable_at(i) = result.eigenvalues(static_cast<long>(i));
        d["eigenvalues"] = ev;
        py::array_t<double> ratio({static_cast<py::ssize_t>(result.explained_variance.size())});
        for (py::ssize_t i = 0; i < ratio.shape(0); ++i)
          ratio.mutable_at(i) = result.explained_variance(static_cast<long>(i));
        d["explained_variance"] = ratio;
        return d;
      },
      py::arg("data"), py::arg("k") = 2);

  m.attr("__version__") = "0.1.0";
}
