#include "commands.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fsl/backbone/checkpoint.hpp"
#include "fsl/backbone/pretrain.hpp"
#include "fsl/datakit/io.hpp"
#include "fsl/error.hpp"
#include "fsl/metrics/hardness.hpp"
#include "fsl/metrics/regression.hpp"
#include "fsl/metrics/stats.hpp"
#include "manifest.hpp"

namespace fslrun {

namespace {

namespace bb = fsl::backbone;
namespace fm = fsl::metrics;
using Clock = std::chrono::steady_clock;
using nlohmann::json;

void log(const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); }

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw fsl::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw fsl::IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fsl::IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void require_file(const std::filesystem::path& path, const char* producer) {
  if (!std::filesystem::exists(path)) {
    throw fsl::IoError(path.string() + " does not exist; run `fsl " + producer + "` first");
  }
}

template <class Body>
void with_manifest(const RunConfig& config, const std::string& command, Body body) {
  config.validate();
  const RunPaths paths = run_paths(config);
  std::filesystem::create_directories(paths.root);
  Manifest manifest(paths.manifest(command), command, config);
  manifest.begin();
  try {
    body(paths, manifest);
  } catch (const std::exception& e) {
    manifest.fail(e.what());
    throw;
  }
  manifest.finish();
}

std::uint64_t data_seed(const RunConfig& c) { return dk::CounterRng::derive_seed(c.seed, "data"); }
std::uint64_t split_seed(const RunConfig& c) { return dk::CounterRng::derive_seed(c.seed, "split"); }
std::uint64_t pretrain_seed(const RunConfig& c) {
  return dk::CounterRng::derive_seed(c.seed, "pretrain");
}

// Episode i of a protocol depends only on the master seed, the protocol and
// i, so eval and sweep see the same tasks for the same protocol.
std::vector<dk::Episode> mint_episodes(const dk::Dataset& data, std::span<const dk::ClassId> pool,
                                       const dk::Protocol& protocol, std::size_t n,
                                       std::uint64_t master_seed, const std::string& entry) {
  std::vector<dk::Episode> out;
  out.reserve(n);
  try {
    for (std::size_t i = 0; i < n; ++i) {
      auto rng = dk::CounterRng::substream(master_seed, "episodes/" + protocol.tag(), i);
      out.push_back(dk::sample_episode(data, pool, protocol, rng));
    }
  } catch (const fsl::SamplingError& e) {
    throw fsl::ConfigError(entry + " is infeasible: " + e.what());
  }
  return out;
}

dk::ClassSplit make_split(const RunConfig& config, const dk::Dataset& data) {
  return dk::split_classes(data, config.split, split_seed(config));
}

bb::Checkpoint load_backbone(const RunPaths& paths, Manifest& manifest) {
  require_file(paths.backbone(), "pretrain");
  manifest.input(paths.backbone());
  return bb::load_checkpoint(paths.backbone());
}

dk::Dataset load_run_dataset(const RunPaths& paths, Manifest& manifest) {
  require_file(paths.dataset(), "gen-data");
  manifest.input(paths.dataset());
  return dk::load_dataset(paths.dataset());
}

void check_dims(const bb::Backbone& model, const dk::Episode& episode, const std::string& what) {
  if (episode.dim() != model.input_dim()) {
    throw fsl::DimensionError(what + " has feature dim " + std::to_string(episode.dim()) +
                              " but the checkpoint expects " + std::to_string(model.input_dim()));
  }
}

std::vector<double> accuracies_percent(std::span<const fs::EpisodeResult> results,
                                       std::size_t n_methods, std::size_t m) {
  std::vector<double> out;
  for (std::size_t i = m; i < results.size(); i += n_methods) {
    out.push_back(100.0 * results[i].accuracy);
  }
  return out;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

constexpr const char* kResultsHeader =
    "protocol,episode,way,support_shot,query_shot,method,accuracy,correct,n_query,"
    "initial_entropy,final_entropy";

}  // namespace

RunPaths run_paths(const RunConfig& config) {
  std::filesystem::path out = config.out_dir;
  const char* root = std::getenv(kOutRootEnv);
  if (out.is_relative() && root != nullptr && *root != '\0') out = std::filesystem::path(root) / out;
  return {out};
}

std::vector<fs::EpisodeResult> evaluate_all(const bb::Backbone& model,
                                            std::span<const dk::Episode> episodes,
                                            std::span<const fs::Method> methods,
                                            const fs::AdaptConfig& adapt, std::size_t workers) {
  const std::size_t n_tasks = episodes.size() * methods.size();
  std::vector<fs::EpisodeResult> results(n_tasks);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto work = [&] {
    while (!failed.load()) {
      const std::size_t t = next.fetch_add(1);
      if (t >= n_tasks) return;
      try {
        results[t] = fs::evaluate_episode(model, episodes[t / methods.size()],
                                          methods[t % methods.size()], adapt);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, n_tasks));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return results;
}

void cmd_gen_data(const RunConfig& config) {
  with_manifest(config, "gen-data", [&](const RunPaths& paths, Manifest& manifest) {
    const auto t0 = Clock::now();
    std::optional<dk::Dataset> data;
    switch (config.data.source) {
      case DataSource::kSynthetic: {
        auto spec = config.data.synthetic;
        spec.seed = data_seed(config);
        manifest.seed("data", spec.seed);
        data = dk::make_synthetic(spec);
        break;
      }
      case DataSource::kFsds:
        manifest.input(config.data.path);
        data = dk::load_dataset(config.data.path);
        break;
      case DataSource::kCsv:
        manifest.input(config.data.path);
        data = dk::load_csv_dataset(config.data.path);
        break;
    }
    dk::save_dataset(paths.dataset(), *data);

    manifest.seed("split", split_seed(config));
    const auto split = make_split(config, *data);
    write_text(paths.split(),
               json{{"train", split.train}, {"val", split.val}, {"test", split.test}}.dump(2) +
                   "\n");

    manifest.output(paths.dataset());
    manifest.output(paths.split());
    manifest.details()["classes"] = data->num_classes();
    manifest.details()["dim"] = data->dim();
    manifest.timing("gen-data", seconds_since(t0));
    log("[gen-data] " + std::to_string(data->num_classes()) + " classes of dim " +
        std::to_string(data->dim()) + " -> " + paths.dataset().string());
  });
}

void cmd_pretrain(const RunConfig& config) {
  with_manifest(config, "pretrain", [&](const RunPaths& paths, Manifest& manifest) {
    const auto data = load_run_dataset(paths, manifest);
    manifest.seed("split", split_seed(config));
    const auto split = make_split(config, data);
    const auto pool = config.pool == ClassPool::kTrain ? split.train : split.train_val();

    auto pc = config.pretrain;
    pc.seed = pretrain_seed(config);
    manifest.seed("pretrain", pc.seed);
    const auto t0 = Clock::now();
    auto result = bb::pretrain(data, pool, pc);
    manifest.timing("pretrain", seconds_since(t0));

    bb::save_checkpoint(paths.backbone(), {result.backbone, result.classes});
    std::string trace = "epoch,lr,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      trace += std::to_string(e + 1) + "," + format_double(result.epoch_lr[e]) + "," +
               format_double(result.epoch_loss[e]) + "\n";
    }
    write_text(paths.loss_trace(), trace);

    manifest.output(paths.backbone());
    manifest.output(paths.loss_trace());
    auto& d = manifest.details();
    d["pool"] = to_string(config.pool);
    d["pool_classes"] = result.classes.size();
    d["initial_loss"] = result.initial_loss;
    d["final_loss"] = result.epoch_loss.empty() ? result.initial_loss : result.epoch_loss.back();
    d["final_train_accuracy"] = result.final_train_accuracy;
    log("[pretrain] " + std::to_string(result.classes.size()) + " classes, train accuracy " +
        percent(100.0 * result.final_train_accuracy) + "%");
  });
}

void cmd_episodes(const RunConfig& config) {
  with_manifest(config, "episodes", [&](const RunPaths& paths, Manifest& manifest) {
    const auto data = load_run_dataset(paths, manifest);
    manifest.seed("split", split_seed(config));
    const auto split = make_split(config, data);
    for (const auto& protocol : config.grid()) {
      const std::string entry = "grid entry " + std::to_string(protocol.way) + ":" +
                                std::to_string(protocol.support_shot) + " (" + protocol.tag() +
                                ")";
      const auto episodes =
          mint_episodes(data, split.test, protocol, config.eval.n_episodes, config.seed, entry);
      dk::save_episodes(paths.episodes(protocol), episodes);
      manifest.output(paths.episodes(protocol));
      log("[episodes] " + protocol.tag() + ": " + std::to_string(episodes.size()) + " episodes");
    }
  });
}

void cmd_eval(const RunConfig& config) {
  with_manifest(config, "eval", [&](const RunPaths& paths, Manifest& manifest) {
    const auto checkpoint = load_backbone(paths, manifest);
    std::string csv = std::string(kResultsHeader) + "\n";
    json summary{{"accuracy_unit", "percent"}, {"protocols", json::array()}};

    for (const auto& protocol : config.grid()) {
      const auto file = paths.episodes(protocol);
      require_file(file, "episodes");
      manifest.input(file);
      auto episodes = dk::load_episodes(file);
      if (episodes.size() < config.eval.n_episodes) {
        throw fsl::ConfigError(file.string() + " holds " + std::to_string(episodes.size()) +
                               " episodes but " + std::to_string(config.eval.n_episodes) +
                               " were requested");
      }
      episodes.resize(config.eval.n_episodes);
      for (const auto& ep : episodes) check_dims(checkpoint.backbone, ep, file.string());

      const auto t0 = Clock::now();
      const auto results = evaluate_all(checkpoint.backbone, episodes, config.methods,
                                        config.adapt, config.workers);
      manifest.timing("eval/" + protocol.tag(), seconds_since(t0));

      const std::size_t nm = config.methods.size();
      for (std::size_t t = 0; t < results.size(); ++t) {
        const auto& r = results[t];
        const auto& ep = episodes[t / nm];
        csv += protocol.tag() + "," + std::to_string(t / nm) + "," + std::to_string(ep.way) + "," +
               std::to_string(ep.support_shot) + "," + std::to_string(ep.query_shot) + "," +
               std::string(fs::to_string(r.method)) + "," + format_double(r.accuracy) + "," +
               std::to_string(r.correct) + "," + std::to_string(r.predictions.size()) + "," +
               format_double(r.initial_query_entropy) + "," +
               format_double(r.final_query_entropy) + "\n";
      }

      json block{{"protocol", protocol.tag()},
                 {"way", protocol.way},
                 {"support_shot", protocol.support_shot},
                 {"query_shot", protocol.query_shot},
                 {"n_episodes", episodes.size()},
                 {"methods", json::object()}};
      for (std::size_t m = 0; m < nm; ++m) {
        const auto acc = accuracies_percent(results, nm, m);
        const auto stats = fm::summarize(acc);
        json entry = stats;
        std::size_t decreased = 0;
        for (std::size_t i = m; i < results.size(); i += nm) {
          if (results[i].final_query_entropy < results[i].initial_query_entropy) ++decreased;
        }
        entry["entropy_decreased_fraction"] =
            static_cast<double>(decreased) / static_cast<double>(episodes.size());
        block["methods"][std::string(fs::to_string(config.methods[m]))] = entry;
        log("[eval] " + protocol.tag() + " " + std::string(fs::to_string(config.methods[m])) +
            ": " + percent(stats.mean) + " +- " + percent(stats.ci95));
      }
      summary["protocols"].push_back(block);
    }

    write_text(paths.results(), csv);
    write_text(paths.summary(), summary.dump(2) + "\n");
    manifest.output(paths.results());
    manifest.output(paths.summary());
    manifest.details()["workers"] = config.workers;
  });
}

void cmd_hardness(const RunConfig& config) {
  with_manifest(config, "hardness", [&](const RunPaths& paths, Manifest& manifest) {
    require_file(paths.results(), "eval");
    manifest.input(paths.results());
    const std::string text = read_text(paths.results());

    std::filesystem::path reference = config.hardness_reference;
    if (reference.empty()) {
      require_file(paths.backbone(), "pretrain");
      reference = paths.backbone();
    }
    manifest.input(reference);
    const fm::ReferenceExtractor phi{bb::load_checkpoint(reference).backbone, config.adapt.embed};

    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    const auto header = split_csv(line);
    auto column = [&](std::string_view name) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
      }
      throw fsl::IoError(paths.results().string() + " has no column '" + std::string(name) + "'");
    };
    const std::size_t c_protocol = column("protocol"), c_episode = column("episode"),
                      c_method = column("method"), c_accuracy = column("accuracy");

    std::map<std::string, std::vector<dk::Episode>> episode_files;
    std::map<std::pair<std::string, std::size_t>, fm::HardnessScore> scores;
    std::map<std::string, std::vector<fm::HardnessPoint>> points;
    std::vector<std::string> method_order;
    std::string csv = "protocol,episode,way,support_shot,method,accuracy,omega,degenerate\n";

    const auto t0 = Clock::now();
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != header.size()) throw fsl::IoError("malformed results row: " + line);
      const std::string tag(f[c_protocol]);
      const std::size_t index = std::stoull(std::string(f[c_episode]));
      const std::string method(f[c_method]);
      const double accuracy = std::stod(std::string(f[c_accuracy]));

      auto file_it = episode_files.find(tag);
      if (file_it == episode_files.end()) {
        const auto file = paths.root / ("episodes_" + tag + ".fsep");
        if (!std::filesystem::exists(file)) {
          throw fsl::IoError("results row for protocol " + tag + " has no episode file " +
                             file.string());
        }
        manifest.input(file);
        file_it = episode_files.emplace(tag, dk::load_episodes(file)).first;
      }
      if (index >= file_it->second.size()) {
        throw fsl::IoError("results row (" + tag + ", episode " + std::to_string(index) +
                           ") has no matching episode");
      }
      auto key = std::pair{tag, index};
      auto score_it = scores.find(key);
      if (score_it == scores.end()) {
        score_it = scores.emplace(key, fm::hardness(file_it->second[index], phi, index)).first;
      }
      const auto& s = score_it->second;
      if (!points.contains(method)) method_order.push_back(method);
      points[method].push_back({s.omega, 100.0 * accuracy});
      csv += tag + "," + std::to_string(index) + "," + std::to_string(s.way) + "," +
             std::to_string(s.support_shot) + "," + method + "," + std::string(f[c_accuracy]) +
             "," + format_double(s.omega) + "," + (s.degenerate ? "1" : "0") + "\n";
    }
    if (points.empty()) throw fsl::IoError(paths.results().string() + " holds no rows");

    json report{{"reference", reference.string()}, {"methods", json::object()}};
    for (const auto& method : method_order) {
      const auto& pts = points[method];
      json entry = fm::fit_hardness_curve(pts);
      try {
        entry["pearson_r"] = fm::correlate(pts);
      } catch (const fsl::ContractError&) {
        entry["pearson_r"] = nullptr;
      }
      report["methods"][method] = entry;
      log("[hardness] " + method + ": slope " + percent(entry["slope"].get<double>()) +
          ", area " + (entry["area"].is_null() ? "undefined" : percent(entry["area"].get<double>())));
    }
    std::vector<double> omegas;
    for (const auto& [key, s] : scores) omegas.push_back(s.omega);
    report["omega"] = fm::summarize(omegas);
    manifest.timing("hardness", seconds_since(t0));

    write_text(paths.hardness_csv(), csv);
    write_text(paths.hardness_json(), report.dump(2) + "\n");
    manifest.output(paths.hardness_csv());
    manifest.output(paths.hardness_json());
  });
}

void cmd_sweep(const RunConfig& config) {
  with_manifest(config, "sweep", [&](const RunPaths& paths, Manifest& manifest) {
    const auto data = load_run_dataset(paths, manifest);
    const auto checkpoint = load_backbone(paths, manifest);
    manifest.seed("split", split_seed(config));
    const auto split = make_split(config, data);

    const std::string axis(to_string(config.sweep.axis));
    std::string csv = "axis,value,protocol,method,n,mean,std,ci95\n";
    for (auto value : config.sweep.values) {
      dk::Protocol protocol = config.sweep.base;
      switch (config.sweep.axis) {
        case SweepAxis::kQueryShot: protocol.query_shot = value; break;
        case SweepAxis::kWay: protocol.way = value; break;
        case SweepAxis::kSupportShot: protocol.support_shot = value; break;
      }
      const auto episodes =
          mint_episodes(data, split.test, protocol, config.eval.n_episodes, config.seed,
                        "sweep value " + axis + "=" + std::to_string(value));
      for (const auto& ep : episodes) check_dims(checkpoint.backbone, ep, "dataset");

      const auto t0 = Clock::now();
      const auto results = evaluate_all(checkpoint.backbone, episodes, config.methods,
                                        config.adapt, config.workers);
      manifest.timing("sweep/" + protocol.tag(), seconds_since(t0));
      for (std::size_t m = 0; m < config.methods.size(); ++m) {
        const auto stats = fm::summarize(accuracies_percent(results, config.methods.size(), m));
        const std::string method(fs::to_string(config.methods[m]));
        csv += axis + "," + std::to_string(value) + "," + protocol.tag() + "," + method + "," +
               std::to_string(stats.n) + "," + format_double(stats.mean) + "," +
               format_double(stats.std) + "," + format_double(stats.ci95) + "\n";
        log("[sweep] " + protocol.tag() + " " + method + ": " + percent(stats.mean));
      }
    }
    write_text(paths.sweep(), csv);
    manifest.output(paths.sweep());
  });
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const fsl::ConfigError&) {
    return kExitConfig;
  } catch (const fsl::SamplingError&) {
    return kExitConfig;
  } catch (const fsl::IoError&) {
    return kExitIo;
  } catch (const std::filesystem::filesystem_error&) {
    return kExitIo;
  } catch (const fsl::NumericError&) {
    return kExitNumeric;
  } catch (...) {
    return kExitOther;
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Few-shot classification benchmark runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::optional<std::string> methods;
  std::optional<std::size_t> episodes;

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const RunConfig&);
  };
  static const Command commands[] = {
      {"gen-data", "Write the dataset and class split", cmd_gen_data},
      {"pretrain", "Pre-train the backbone on the meta-training classes", cmd_pretrain},
      {"episodes", "Mint the test episodes of every protocol", cmd_episodes},
      {"eval", "Evaluate every method on every episode file", cmd_eval},
      {"hardness", "Score episode hardness and fit accuracy against it", cmd_hardness},
      {"sweep", "Evaluate along one protocol axis", cmd_sweep},
      {"run", "gen-data, pretrain, episodes, eval and hardness in order",
       [](const RunConfig& c) {
         cmd_gen_data(c);
         cmd_pretrain(c);
         cmd_episodes(c);
         cmd_eval(c);
         cmd_hardness(c);
       }},
      {"show-config", "Print the effective configuration",
       [](const RunConfig& c) {
         c.validate();
         std::fputs(serialize_config(c).c_str(), stdout);
       }},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "INI configuration file");
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--workers", workers, "Evaluation threads");
    sub->add_option("--method", methods, "Comma-separated methods");
    sub->add_option("--episodes-per-protocol", episodes, "Episodes per protocol");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) config.seed = *seed;
    if (out) config.out_dir = *out;
    if (workers) config.workers = *workers;
    if (methods) config.methods = parse_methods(*methods);
    if (episodes) config.eval.n_episodes = *episodes;
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) c.run(config);
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fsl: error: %s\n", e.what());
    return exit_code_for_current_exception();
  }
}

}  // namespace fslrun
