// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "fsl/backbone/checkpoint.hpp"
#include "fsl/datakit/io.hpp"
#include "fsl/fewshot/head.hpp"
#include "fsl/metrics/hardness.hpp"
#include "fsl/metrics/regression.hpp"
#include "fsl/metrics/stats.hpp"
#include "gradcheck.hpp"

namespace bb = fsl::backbone;
namespace dk = fsl::datakit;
namespace fm = fsl::metrics;
namespace fw = fsl::fewshot;
namespace nd = fsl::ndgrad;
namespace fsp = std::filesystem;
using fslrun::RunConfig;

namespace {

// Tolerances and thresholds.
constexpr double kWorkedTol = 1e-9;
constexpr double kStatsTol = 1e-6;
constexpr double kMinTransductiveGain = 2.0;
constexpr double kFinetuneSlack = 0.5;
constexpr double kMaxOrderingSeconds = 300.0;
constexpr double kMinEntropyDrop = 0.95;
constexpr double kMaxPearson = -0.5;
constexpr double kMaxResidualRms = 15.0;
constexpr double kInitLow = 60.0, kInitHigh = 80.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fsp::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

using Row = std::map<std::string, std::string>;

std::vector<Row> read_csv(const fsp::path& p) {
  std::ifstream in(p);
  std::vector<Row> rows;
  std::string line;
  std::vector<std::string> header;
  auto fields = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
    return out;
  };
  if (std::getline(in, line)) header = fields(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = fields(line);
    Row r;
    for (std::size_t i = 0; i < header.size() && i < f.size(); ++i) r[header[i]] = f[i];
    rows.push_back(std::move(r));
  }
  return rows;
}

bb::Backbone identity_backbone(std::size_t dim) {
  nd::Tensor w(nd::Shape{dim, dim}, 0.0);
  for (std::size_t i = 0; i < dim; ++i) w.at(i, i) = 1.0;
  bb::Linear out{{"output.weight", w, false},
                 {"output.bias", nd::Tensor(nd::Shape{dim}, 0.0), false}};
  return bb::Backbone({dim, {}, dim}, {}, out);
}

struct Pipeline {
  RunConfig config;
  fslrun::RunPaths paths;
  dk::Dataset data;
  dk::ClassSplit split;
  bb::Checkpoint checkpoint;
};

Outcome gradient_oracle() {
  double worst = 0.0;
  std::string worst_op;
  std::size_t ops = 0, checked = 0;
  for (const auto& op : fsl::testing::all_op_cases()) {
    ++ops;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = fsl::testing::gradcheck(op, seed);
      checked += r.checked;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_op = op.name;
      }
    }
  }
  return {worst < fsl::testing::kFdTolerance,
          std::to_string(ops) + " ops x 5 points, " + std::to_string(checked) +
              " partials, worst rel err " + fmt("%.2e", worst) + " (" + worst_op + ")"};
}

Outcome support_init_worked() {
  dk::LabeledBatch support{2, {}, {}};
  support.push_back(std::vector{1.0, 0.0}, 0);
  support.push_back(std::vector{0.0, 1.0}, 0);
  support.push_back(std::vector{0.0, 3.0}, 1);
  const auto head = fw::support_init(identity_backbone(2), support, 2, {});
  const double r = 1.0 / std::sqrt(2.0);
  double err = std::max(std::abs(head.weight.value.at(0, 0) - r),
                        std::abs(head.weight.value.at(0, 1) - r));
  err = std::max({err, std::abs(head.weight.value.at(1, 0)),
                  std::abs(head.weight.value.at(1, 1) - 1.0)});
  double bias = 0.0;
  for (double b : head.bias.value.data()) bias = std::max(bias, std::abs(b));
  double norm_err = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    double sq = 0.0;
    for (double v : head.weight.value.row(k)) sq += v * v;
    norm_err = std::max(norm_err, std::abs(std::sqrt(sq) - 1.0));
  }
  return {err <= kWorkedTol && bias == 0.0 && norm_err <= kWorkedTol,
          "row0 = [" + fmt("%.5f", head.weight.value.at(0, 0)) + ", " +
              fmt("%.5f", head.weight.value.at(0, 1)) + "], max err " + fmt("%.1e", err) +
              ", |b| " + fmt("%.1e", bias) + ", norm err " + fmt("%.1e", norm_err)};
}

Outcome support_consistency(const Pipeline& p) {
  std::size_t consistent = 0;
  const std::size_t n = 500;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = dk::CounterRng::substream(p.config.seed, "acceptance/support-consistency", i);
    const auto ep = dk::sample_episode(p.data, p.split.test, {5, 1, 15}, rng);
    const auto model =
        fw::make_adapted_model(p.checkpoint.backbone, ep.support, 5, p.config.adapt.embed);
    const auto pred = fw::argmax_rows(fw::head_forward(model, ep.support.features_tensor()));
    consistent += pred == ep.support.labels;
  }
  return {consistent == n, std::to_string(consistent) + "/" + std::to_string(n) +
                               " episodes label every support with its own class"};
}

struct ProtocolMeans {
  std::map<std::string, double> mean;
  std::map<std::string, std::size_t> n;
  std::size_t entropy_down = 0, entropy_n = 0;
};

ProtocolMeans protocol_means(const std::vector<Row>& rows, const std::string& tag) {
  ProtocolMeans m;
  std::map<std::string, double> sum;
  for (const auto& r : rows) {
    if (r.at("protocol") != tag) continue;
    const auto& method = r.at("method");
    sum[method] += 100.0 * std::stod(r.at("accuracy"));
    ++m.n[method];
    if (method == "transductive") {
      ++m.entropy_n;
      m.entropy_down += std::stod(r.at("final_entropy")) < std::stod(r.at("initial_entropy"));
    }
  }
  for (const auto& [k, s] : sum) m.mean[k] = s / static_cast<double>(m.n[k]);
  return m;
}

Outcome method_ordering(const ProtocolMeans& m, double seconds) {
  const double init = m.mean.at("init_only"), ft = m.mean.at("finetune"),
               tr = m.mean.at("transductive");
  const bool mid_range = init >= kInitLow && init <= kInitHigh;
  const bool pass = mid_range && tr - init >= kMinTransductiveGain && tr >= ft - kFinetuneSlack &&
                    seconds < kMaxOrderingSeconds && m.n.at("transductive") == 200;
  return {pass, std::to_string(m.n.at("transductive")) + " episodes: init " + fmt("%.2f", init) +
                    ", finetune " + fmt("%.2f", ft) + ", transductive " + fmt("%.2f", tr) +
                    " (gain " + fmt("%+.2f", tr - init) + "), " + fmt("%.1f", seconds) + " s"};
}

Outcome entropy_descent(const ProtocolMeans& m) {
  const double frac = static_cast<double>(m.entropy_down) / static_cast<double>(m.entropy_n);
  return {m.entropy_n == 200 && frac >= kMinEntropyDrop,
          std::to_string(m.entropy_down) + "/" + std::to_string(m.entropy_n) +
              " episodes end with lower query entropy"};
}

Outcome hardness_validity(const Pipeline& p) {
  const std::uint32_t ways[] = {5, 10, 20};
  std::vector<dk::Episode> episodes;
  for (std::size_t i = 0; i < 100; ++i) {
    auto rng = dk::CounterRng::substream(p.config.seed, "acceptance/mixed-way", i);
    episodes.push_back(dk::sample_episode(p.data, p.split.test, {ways[i % 3], 1, 15}, rng));
  }
  const fw::Method method[] = {fw::Method::kTransductive};
  const auto results =
      fslrun::evaluate_all(p.checkpoint.backbone, episodes, method, p.config.adapt, p.config.workers);
  const fm::ReferenceExtractor phi{p.checkpoint.backbone, p.config.adapt.embed};
  std::vector<fm::HardnessPoint> points;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    points.push_back({fm::hardness(episodes[i], phi, i).omega, 100.0 * results[i].accuracy});
  }
  const double r = fm::correlate(points);
  const auto fit = fm::fit_hardness_curve(points);
  return {r <= kMaxPearson && fit.slope < 0.0 && fit.residual_rms < kMaxResidualRms,
          "transductive, r " + fmt("%.3f", r) + ", slope " + fmt("%.2f", fit.slope) +
              ", residual rms " + fmt("%.2f", fit.residual_rms)};
}

Outcome hardness_worked() {
  const nd::Tensor supports = nd::Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
  const std::uint32_t labels[] = {0, 1};
  const nd::Tensor even = nd::Tensor::matrix({{1.0, 1.0}, {2.0, 2.0}});
  const double zero = fm::hardness(supports, labels, 2, even, labels).omega;
  // Query on class 0's prototype: p = e / (e + 1), so log((1 - p) / p) = -1.
  const nd::Tensor hand = nd::Tensor::matrix({{1.0, 0.0}});
  const std::uint32_t hand_label[] = {0};
  const double minus_one = fm::hardness(supports, labels, 2, hand, hand_label).omega;
  return {std::abs(zero) <= kWorkedTol && std::abs(minus_one + 1.0) <= kWorkedTol,
          "even queries " + fmt("%.1e", zero) + ", 2-way hand case " + fmt("%.12f", minus_one)};
}

// Returns method -> means in axis order.
std::map<std::string, std::vector<double>> run_sweep(const Pipeline& p, fslrun::SweepAxis axis,
                                                     std::vector<std::uint32_t> values) {
  RunConfig c = p.config;
  c.sweep.axis = axis;
  c.sweep.values = std::move(values);
  c.sweep.base = {5, 1, 15};
  c.eval.n_episodes = 100;
  fslrun::cmd_sweep(c);
  std::map<std::string, std::vector<double>> out;
  for (const auto& r : read_csv(p.paths.sweep())) out[r.at("method")].push_back(std::stod(r.at("mean")));
  return out;
}

Outcome scaling_trends(const Pipeline& p) {
  const auto by_way = run_sweep(p, fslrun::SweepAxis::kWay, {5, 10, 20});
  const auto by_shot = run_sweep(p, fslrun::SweepAxis::kSupportShot, {1, 2, 5});
  bool pass = !by_way.empty() && !by_shot.empty();
  std::string detail;
  for (const auto& [method, means] : by_way) {
    pass &= means.size() == 3 && std::is_sorted(means.rbegin(), means.rend());
    detail += method + " way " + fmt("%.1f", means[0]) + ">" + fmt("%.1f", means[1]) + ">" +
              fmt("%.1f", means[2]) + "; ";
  }
  for (const auto& [method, means] : by_shot) {
    pass &= means.size() == 3 && std::is_sorted(means.begin(), means.end());
    detail += method + " shot " + fmt("%.1f", means[0]) + "<" + fmt("%.1f", means[1]) + "<" +
              fmt("%.1f", means[2]) + "; ";
  }
  detail.resize(detail.size() - 2);
  return {pass, "100 episodes each: " + detail};
}

Outcome statistics_exact() {
  const double v[] = {0.5, 0.7};
  const auto s = fm::summarize(v);
  std::vector<fm::HardnessPoint> line;
  for (double x : {0.0, 2.0, 4.0, 6.0, 8.0}) line.push_back({x, 100.0 - 10.0 * x});
  const auto fit = fm::fit_hardness_curve(line);
  const double area = fit.area.value_or(NAN);
  const bool pass = std::abs(s.mean - 0.6) <= kStatsTol && std::abs(s.std - 0.141421) <= kStatsTol &&
                    std::abs(s.ci95 - 0.196000) <= kStatsTol && std::abs(area - 500.0) <= kStatsTol;
  return {pass, "mean " + fmt("%.6f", s.mean) + ", std " + fmt("%.6f", s.std) + ", ci95 " +
                    fmt("%.6f", s.ci95) + ", area " + fmt("%.6f", area)};
}

Outcome reproducibility(const Pipeline& p, const fsp::path& work) {
  RunConfig c = p.config;
  c.out_dir = (work / "repro").string();
  c.eval.n_episodes = 20;
  const auto paths = fslrun::run_paths(c);
  fsp::create_directories(paths.root);
  fsp::copy_file(p.paths.backbone(), paths.backbone(), fsp::copy_options::overwrite_existing);
  for (const auto& proto : c.grid()) {
    fsp::copy_file(p.paths.episodes(proto), paths.episodes(proto),
                   fsp::copy_options::overwrite_existing);
  }
  c.workers = 1;
  fslrun::cmd_eval(c);
  const std::string first = slurp(paths.results());
  fslrun::cmd_eval(c);
  const std::string second = slurp(paths.results());
  c.workers = 4;
  fslrun::cmd_eval(c);
  const std::string parallel = slurp(paths.results());
  return {!first.empty() && first == second && first == parallel,
          std::to_string(first.size()) + " CSV bytes; rerun " +
              (first == second ? "identical" : "DIFFERS") + ", 4 workers " +
              (first == parallel ? "identical" : "DIFFERS")};
}

Outcome protocol_uniformity(const Pipeline& p) {
  const std::vector<dk::Protocol> required = {{5, 1, 15}, {5, 5, 15}, {10, 1, 15}};
  const auto grid = p.config.grid();
  bool pass = true;
  for (const auto& r : required) pass &= std::find(grid.begin(), grid.end(), r) != grid.end();

  // One eval invocation with one config produced every protocol block.
  const auto manifest = nlohmann::json::parse(slurp(p.paths.manifest("eval")));
  pass &= manifest.at("status") == "ok" &&
          fslrun::parse_config(manifest.at("config").get<std::string>()) == p.config;
  std::map<std::string, std::size_t> rows;
  for (const auto& r : read_csv(p.paths.results())) ++rows[r.at("protocol")];
  std::string detail;
  for (const auto& r : required) {
    const std::size_t n = rows[r.tag()];
    pass &= n == p.config.methods.size() * p.config.eval.n_episodes;
    detail += r.tag() + " " + std::to_string(n) + " rows, ";
  }
  return {pass, detail + "one config, no per-protocol keys"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string config_path;
  std::string work = "acceptance_work";
  app.add_option("--config", config_path, "acceptance INI file")->required();
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s [%2d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                s);
    std::fflush(stdout);
  };

  report(1, "gradient oracle", gradient_oracle);
  report(2, "support-based init worked values", support_init_worked);

  std::optional<Pipeline> pipeline;
  std::string setup_error;
  try {
    RunConfig config = fslrun::load_config(config_path);
    config.out_dir = (fsp::path(work) / "pipeline").string();
    fsp::remove_all(work);
    fslrun::cmd_gen_data(config);
    fslrun::cmd_pretrain(config);
    fslrun::cmd_episodes(config);
    fslrun::cmd_eval(config);
    const auto paths = fslrun::run_paths(config);
    auto data = dk::load_dataset(paths.dataset());
    auto split = dk::split_classes(data, config.split,
                                   dk::CounterRng::derive_seed(config.seed, "split"));
    pipeline.emplace(Pipeline{config, paths, std::move(data), std::move(split),
                              bb::load_checkpoint(paths.backbone())});
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  // Criteria that need the trained pipeline fail with the setup error.
  auto with_pipeline = [&](auto check) {
    return [&, check]() -> Outcome {
      if (!pipeline) return {false, "pipeline setup failed: " + setup_error};
      return check(*pipeline);
    };
  };
  auto one_shot = [](const Pipeline& p) {
    return protocol_means(read_csv(p.paths.results()), dk::Protocol{5, 1, 15}.tag());
  };

  report(3, "1-shot support consistency", with_pipeline(support_consistency));
  report(4, "method ordering", with_pipeline([&](const Pipeline& p) {
           const auto timings =
               nlohmann::json::parse(slurp(p.paths.manifest("eval"))).at("timings");
           return method_ordering(one_shot(p), timings.value("eval/5w1s15q", 1e9));
         }));
  report(5, "entropy descent",
         with_pipeline([&](const Pipeline& p) { return entropy_descent(one_shot(p)); }));
  report(6, "hardness validity", with_pipeline(hardness_validity));
  report(7, "hardness worked values", hardness_worked);
  report(8, "scaling trends", with_pipeline(scaling_trends));
  report(9, "statistics exactness", statistics_exact);
  report(10, "reproducibility",
         with_pipeline([&](const Pipeline& p) { return reproducibility(p, work); }));
  report(11, "protocol uniformity", with_pipeline(protocol_uniformity));

  std::printf("%s: %d of 11 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
