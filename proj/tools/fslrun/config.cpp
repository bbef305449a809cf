#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fsl/error.hpp"

namespace fslrun {

namespace {

using fsl::ConfigError;

template <class E>
struct EnumName {
  E value;
  std::string_view name;
};

constexpr EnumName<DataSource> kSources[] = {
    {DataSource::kSynthetic, "synthetic"}, {DataSource::kFsds, "fsds"}, {DataSource::kCsv, "csv"}};
constexpr EnumName<ClassPool> kPools[] = {{ClassPool::kTrain, "train"},
                                          {ClassPool::kTrainVal, "train_val"}};
constexpr EnumName<SweepAxis> kAxes[] = {{SweepAxis::kQueryShot, "query_shot"},
                                         {SweepAxis::kWay, "way"},
                                         {SweepAxis::kSupportShot, "support_shot"}};
constexpr EnumName<fs::HeadInput> kHeadInputs[] = {{fs::HeadInput::kLogits, "logits"},
                                                   {fs::HeadInput::kFeatures, "features"}};
constexpr EnumName<fs::UpdateOrder> kOrders[] = {
    {fs::UpdateOrder::kSupportThenQuery, "support_then_query"},
    {fs::UpdateOrder::kQueryThenSupport, "query_then_support"}};

template <class E, std::size_t N>
std::string_view name_of(const EnumName<E> (&table)[N], E value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  return "?";
}

template <class E, std::size_t N>
E value_of(const EnumName<E> (&table)[N], std::string_view name) {
  for (const auto& e : table) {
    if (e.name == name) return e.value;
  }
  std::string choices;
  for (const auto& e : table) choices += (choices.empty() ? "" : ", ") + std::string(e.name);
  throw ConfigError("'" + std::string(name) + "' is not one of: " + choices);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  if (trim(s).empty()) return parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <class T>
T parse_unsigned(std::string_view text) {
  text = trim(text);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("'" + std::string(text) + "' is not a non-negative integer");
  }
  if (v > std::numeric_limits<T>::max()) {
    throw ConfigError("'" + std::string(text) + "' is out of range");
  }
  return static_cast<T>(v);
}

double parse_double(std::string_view text) {
  text = trim(text);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("'" + std::string(text) + "' is not a number");
  }
  return v;
}

bool parse_bool(std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("'" + std::string(text) + "' is not a boolean");
}

dk::Protocol parse_triple(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw ConfigError("'" + std::string(text) + "' is not way:shot:query");
  return {parse_unsigned<std::uint32_t>(parts[0]), parse_unsigned<std::uint32_t>(parts[1]),
          parse_unsigned<std::uint32_t>(parts[2])};
}

template <class T>
struct Codec;

template <>
struct Codec<bool> {
  static std::string format(bool v) { return v ? "true" : "false"; }
  static void parse(std::string_view t, bool& v) { v = parse_bool(t); }
};
template <>
struct Codec<double> {
  static std::string format(double v) { return format_double(v); }
  static void parse(std::string_view t, double& v) { v = parse_double(t); }
};
template <>
struct Codec<std::string> {
  static std::string format(const std::string& v) { return v; }
  static void parse(std::string_view t, std::string& v) { v = std::string(trim(t)); }
};
template <class T>
  requires(std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
struct Codec<T> {
  static std::string format(T v) { return std::to_string(v); }
  static void parse(std::string_view t, T& v) { v = parse_unsigned<T>(t); }
};
template <>
struct Codec<dk::Protocol> {
  static std::string format(const dk::Protocol& p) {
    return std::to_string(p.way) + ":" + std::to_string(p.support_shot) + ":" +
           std::to_string(p.query_shot);
  }
  static void parse(std::string_view t, dk::Protocol& p) { p = parse_triple(t); }
};
template <>
struct Codec<std::vector<dk::Protocol>> {
  static std::string format(const std::vector<dk::Protocol>& v) {
    std::string s;
    for (const auto& p : v) {
      s += (s.empty() ? "" : ",") + std::to_string(p.way) + ":" + std::to_string(p.support_shot);
    }
    return s;
  }
  static void parse(std::string_view t, std::vector<dk::Protocol>& v) { v = parse_protocols(t); }
};
template <>
struct Codec<std::vector<fs::Method>> {
  static std::string format(const std::vector<fs::Method>& v) {
    std::string s;
    for (auto m : v) s += (s.empty() ? "" : ",") + std::string(fs::to_string(m));
    return s;
  }
  static void parse(std::string_view t, std::vector<fs::Method>& v) { v = parse_methods(t); }
};
template <class T>
struct Codec<std::vector<T>> {
  static std::string format(const std::vector<T>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
  }
  static void parse(std::string_view t, std::vector<T>& v) {
    v.clear();
    for (auto part : split(t, ',')) v.push_back(parse_unsigned<T>(part));
  }
};

struct Field {
  std::string_view section;
  std::string_view key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

// `access` is a generic lambda returning a reference into the config, so the
// same accessor serves the const getter and the mutating setter.
template <class Access>
Field field(std::string_view section, std::string_view key, Access access) {
  using T = std::remove_cvref_t<decltype(access(std::declval<RunConfig&>()))>;
  return {section, key, [access](const RunConfig& c) { return Codec<T>::format(access(c)); },
          [access](RunConfig& c, std::string_view t) { Codec<T>::parse(t, access(c)); }};
}

template <class Access, class E, std::size_t N>
Field enum_field(std::string_view section, std::string_view key,
                 const EnumName<E> (&table)[N], Access access) {
  return {section, key,
          [access, &table](const RunConfig& c) { return std::string(name_of(table, access(c))); },
          [access, &table](RunConfig& c, std::string_view t) {
            access(c) = value_of(table, trim(t));
          }};
}

#define FSL_FIELD(section, key, expr) field(section, key, [](auto& c) -> auto& { return expr; })
#define FSL_ENUM(section, key, table, expr) \
  enum_field(section, key, table, [](auto& c) -> auto& { return expr; })

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      FSL_FIELD("run", "seed", c.seed),
      FSL_FIELD("run", "out_dir", c.out_dir),
      FSL_FIELD("run", "workers", c.workers),
      FSL_FIELD("run", "methods", c.methods),

      FSL_ENUM("data", "source", kSources, c.data.source),
      FSL_FIELD("data", "path", c.data.path),
      FSL_FIELD("data", "n_classes", c.data.synthetic.n_classes),
      FSL_FIELD("data", "dim", c.data.synthetic.dim),
      FSL_FIELD("data", "samples_per_class", c.data.synthetic.samples_per_class),
      FSL_FIELD("data", "center_scale", c.data.synthetic.center_scale),
      FSL_FIELD("data", "noise_sigma", c.data.synthetic.noise_sigma),

      FSL_FIELD("split", "train", c.split.train),
      FSL_FIELD("split", "val", c.split.val),
      FSL_FIELD("split", "test", c.split.test),

      FSL_FIELD("pretrain", "hidden", c.pretrain.hidden),
      FSL_FIELD("pretrain", "cycle_epochs", c.pretrain.cycle_epochs),
      FSL_FIELD("pretrain", "end_lr", c.pretrain.end_lr),
      FSL_FIELD("pretrain", "batch_size", c.pretrain.batch_size),
      FSL_FIELD("pretrain", "label_smoothing", c.pretrain.label_smoothing),
      FSL_FIELD("pretrain", "mixup", c.pretrain.mixup_enabled),
      FSL_FIELD("pretrain", "mixup_alpha", c.pretrain.mixup_alpha),
      FSL_FIELD("pretrain", "momentum", c.pretrain.momentum),
      FSL_FIELD("pretrain", "weight_decay", c.pretrain.weight_decay),
      FSL_FIELD("pretrain", "augment_sigma", c.pretrain.augment_sigma),
      FSL_ENUM("pretrain", "pool", kPools, c.pool),

      FSL_FIELD("adapt", "epochs", c.adapt.epochs),
      FSL_FIELD("adapt", "lr", c.adapt.lr),
      FSL_FIELD("adapt", "beta1", c.adapt.adam.beta1),
      FSL_FIELD("adapt", "beta2", c.adapt.adam.beta2),
      FSL_FIELD("adapt", "eps", c.adapt.adam.eps),
      FSL_FIELD("adapt", "weight_decay", c.adapt.adam.weight_decay),
      FSL_FIELD("adapt", "entropy_coefficient", c.adapt.entropy_coefficient),
      FSL_FIELD("adapt", "temperature", c.adapt.temperature),
      FSL_FIELD("adapt", "entropy_scale_by_log_way", c.adapt.entropy_scale_by_log_way),
      FSL_FIELD("adapt", "freeze_backbone", c.adapt.freeze_backbone),
      FSL_ENUM("adapt", "head_input", kHeadInputs, c.adapt.embed.input),
      FSL_FIELD("adapt", "relu_before_norm", c.adapt.embed.relu_before_norm),
      FSL_ENUM("adapt", "update_order", kOrders, c.adapt.order),

      FSL_FIELD("eval", "protocols", c.eval.protocols),
      FSL_FIELD("eval", "query_shot", c.eval.query_shot),
      FSL_FIELD("eval", "n_episodes", c.eval.n_episodes),

      FSL_FIELD("hardness", "reference", c.hardness_reference),

      FSL_ENUM("sweep", "axis", kAxes, c.sweep.axis),
      FSL_FIELD("sweep", "values", c.sweep.values),
      FSL_FIELD("sweep", "base", c.sweep.base),
  };
  return fields;
}

#undef FSL_FIELD
#undef FSL_ENUM

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : schema()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

bool known_section(std::string_view section) {
  return std::any_of(schema().begin(), schema().end(),
                     [&](const Field& f) { return f.section == section; });
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string_view to_string(DataSource source) { return name_of(kSources, source); }
std::string_view to_string(ClassPool pool) { return name_of(kPools, pool); }
std::string_view to_string(SweepAxis axis) { return name_of(kAxes, axis); }

std::vector<dk::Protocol> parse_protocols(std::string_view text) {
  std::vector<dk::Protocol> out;
  for (auto part : split(text, ',')) {
    const auto ws = split(part, ':');
    if (ws.size() != 2) throw ConfigError("protocol '" + std::string(part) + "' is not way:shot");
    out.push_back({parse_unsigned<std::uint32_t>(ws[0]), parse_unsigned<std::uint32_t>(ws[1]), 0});
  }
  return out;
}

std::vector<fs::Method> parse_methods(std::string_view text) {
  std::vector<fs::Method> out;
  for (auto part : split(text, ',')) out.push_back(fs::parse_method(part));
  return out;
}

std::vector<dk::Protocol> RunConfig::grid() const {
  auto out = eval.protocols;
  for (auto& p : out) p.query_shot = eval.query_shot;
  return out;
}

void RunConfig::validate() const {
  require(workers >= 1, "[run] workers must be at least 1");
  require(!methods.empty(), "[run] methods must not be empty");
  require(std::set<fs::Method>(methods.begin(), methods.end()).size() == methods.size(),
          "[run] methods lists a method twice");

  if (data.source == DataSource::kSynthetic) {
    data.synthetic.validate();
  } else {
    require(!data.path.empty(), "[data] path is required for source " +
                                    std::string(to_string(data.source)));
  }

  for (double f : {split.train, split.val, split.test}) {
    require(f >= 0.0 && f <= 1.0, "[split] fractions must lie in [0, 1]");
  }
  require(std::abs(split.train + split.val + split.test - 1.0) <= 1e-9,
          "[split] fractions must sum to 1, got " +
              format_double(split.train + split.val + split.test));
  require(split.test > 0.0, "[split] test must be positive");

  pretrain.validate();
  adapt.validate();

  require(!eval.protocols.empty(), "[eval] protocols must not be empty");
  for (const auto& p : eval.protocols) {
    require(p.way >= 1 && p.support_shot >= 1,
            "[eval] protocol " + std::to_string(p.way) + ":" + std::to_string(p.support_shot) +
                " needs way >= 1 and shot >= 1");
  }
  for (std::size_t i = 0; i < eval.protocols.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      require(!(eval.protocols[i] == eval.protocols[j]), "[eval] protocols lists an entry twice");
    }
  }
  require(eval.query_shot >= 1, "[eval] query_shot must be at least 1");
  require(eval.n_episodes >= 1, "[eval] n_episodes must be at least 1");

  require(!sweep.values.empty(), "[sweep] values must not be empty");
  for (auto v : sweep.values) require(v >= 1, "[sweep] values must be positive");
  require(sweep.base.way >= 1 && sweep.base.support_shot >= 1 && sweep.base.query_shot >= 1,
          "[sweep] base must be positive way:shot:query");
}

RunConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' is outside any section");
    }
    if (!known_section(section)) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      const Field* f = find_field(section, key);
      if (f == nullptr) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      try {
        f->set(config, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError("[" + section + "] " + key + ": " + e.what());
      }
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fsl::IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  std::string_view section;
  for (const auto& f : schema()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + std::string(section) + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace fslrun
