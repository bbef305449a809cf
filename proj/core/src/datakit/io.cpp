#include "fsl/datakit/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fsl/binary_io.hpp"
#include "fsl/error.hpp"

namespace fsl::datakit {
namespace {

void write_batch(ByteWriter& w, const LabeledBatch& batch) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    w.f64s(batch.row(i));
    w.u32(batch.labels[i]);
  }
}

LabeledBatch read_batch(ByteReader& r, std::size_t count, std::size_t dim) {
  if (dim != 0 && count > r.remaining() / (dim * 8 + 4)) {
    throw TruncatedFileError("episode file: sample block exceeds payload");
  }
  LabeledBatch batch;
  batch.dim = dim;
  batch.features.resize(count * dim);
  batch.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    r.f64s(std::span<double>(batch.features).subspan(i * dim, dim));
    batch.labels[i] = r.u32();
  }
  return batch;
}

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

std::vector<std::uint8_t> encode_episodes(std::span<const Episode> episodes) {
  ByteWriter w;
  w.magic("FSEP");
  w.u16(kEpisodeFormatVersion);
  w.u32(static_cast<std::uint32_t>(episodes.size()));
  for (const Episode& ep : episodes) {
    ep.validate();
    w.u32(ep.way);
    w.u32(ep.support_shot);
    w.u32(ep.query_shot);
    w.u64(ep.seed);
    w.u32(static_cast<std::uint32_t>(ep.dim()));
    for (ClassId id : ep.class_ids) w.u32(id);
    write_batch(w, ep.support);
    write_batch(w, ep.query);
  }
  w.seal();
  return w.bytes();
}

std::vector<Episode> decode_episodes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "FSEP", kEpisodeFormatVersion, "episode file");
  const std::uint32_t count = r.u32();
  std::vector<Episode> episodes;
  for (std::uint32_t e = 0; e < count; ++e) {
    Episode ep;
    ep.way = r.u32();
    ep.support_shot = r.u32();
    ep.query_shot = r.u32();
    ep.seed = r.u64();
    const std::uint32_t dim = r.u32();
    if (ep.way > r.remaining() / 4) throw TruncatedFileError("episode file: class table too long");
    ep.class_ids.resize(ep.way);
    for (ClassId& id : ep.class_ids) id = r.u32();
    ep.support = read_batch(r, std::size_t{ep.way} * ep.support_shot, dim);
    ep.query = read_batch(r, std::size_t{ep.way} * ep.query_shot, dim);
    try {
      ep.validate();
    } catch (const ContractError& err) {
      throw IoError(std::string("episode file: episode ") + std::to_string(e) + " invalid: " +
                    err.what());
    }
    episodes.push_back(std::move(ep));
  }
  r.expect_end();
  return episodes;
}

void save_episodes(const std::filesystem::path& path, std::span<const Episode> episodes) {
  write_file_bytes(path, encode_episodes(episodes));
}

std::vector<Episode> load_episodes(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_episodes(bytes);
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  ByteWriter w;
  w.magic("FSDS");
  w.u16(kDatasetFormatVersion);
  w.string(dataset.name());
  w.u32(static_cast<std::uint32_t>(dataset.dim()));
  w.u32(static_cast<std::uint32_t>(dataset.num_classes()));
  for (const ClassData& c : dataset.classes()) {
    w.u32(c.id);
    w.u32(static_cast<std::uint32_t>(c.count(dataset.dim())));
    w.f64s(c.features);
  }
  w.seal();
  write_file_bytes(path, w.bytes());
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "FSDS", kDatasetFormatVersion, "dataset file '" + path.string() + "'");
  std::string name = r.string();
  const std::uint32_t dim = r.u32();
  const std::uint32_t n_classes = r.u32();
  std::vector<ClassData> classes;
  for (std::uint32_t k = 0; k < n_classes; ++k) {
    ClassData c;
    c.id = r.u32();
    const std::uint32_t count = r.u32();
    if (dim == 0 || count > r.remaining() / (std::size_t{dim} * 8)) {
      throw TruncatedFileError("dataset file: class block exceeds payload");
    }
    c.features.resize(std::size_t{count} * dim);
    r.f64s(c.features);
    classes.push_back(std::move(c));
  }
  r.expect_end();
  try {
    return Dataset(std::move(name), dim, std::move(classes));
  } catch (const Error& err) {
    throw IoError(std::string("dataset file: ") + err.what());
  }
}

Dataset load_csv_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::map<ClassId, std::vector<double>> by_class;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    double id_value = 0.0;
    if (!parse_double(fields[0], id_value)) {
      if (first_data_row) {
        first_data_row = false;
        continue;  // header
      }
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad class id");
    }
    first_data_row = false;
    if (id_value < 0 || id_value != static_cast<double>(static_cast<ClassId>(id_value))) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": class id not an integer");
    }
    const std::size_t row_dim = fields.size() - 1;
    if (row_dim == 0) throw IoError(path.string() + ":" + std::to_string(line_no) + ": no features");
    if (dim == 0) dim = row_dim;
    if (row_dim != dim) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(dim) + " features");
    }
    auto& target = by_class[static_cast<ClassId>(id_value)];
    for (std::size_t k = 1; k < fields.size(); ++k) {
      double v = 0.0;
      if (!parse_double(fields[k], v)) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad number in column " +
                      std::to_string(k + 1));
      }
      target.push_back(v);
    }
  }
  if (by_class.empty()) throw IoError("'" + path.string() + "' contains no samples");
  std::vector<ClassData> classes;
  for (auto& [id, features] : by_class) classes.push_back({id, std::move(features)});
  return Dataset(path.stem().string(), dim, std::move(classes));
}

}  // namespace fsl::datakit
