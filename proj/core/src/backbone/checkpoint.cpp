#include "fsl/backbone/checkpoint.hpp"

#include <string>

#include "fsl/binary_io.hpp"
#include "fsl/error.hpp"

namespace fsl::backbone {

namespace nd = ndgrad;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const Backbone& model = checkpoint.backbone;
  const Architecture& arch = model.architecture();
  if (checkpoint.classes.size() != arch.num_classes) {
    throw ContractError("checkpoint class table does not match the output width");
  }
  ByteWriter w;
  w.magic("FSBB");
  w.u16(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(arch.input_dim));
  w.u32(static_cast<std::uint32_t>(arch.hidden.size()));
  for (std::size_t width : arch.hidden) w.u32(static_cast<std::uint32_t>(width));
  w.u32(static_cast<std::uint32_t>(arch.num_classes));
  for (auto id : checkpoint.classes) w.u32(id);
  for (const HiddenBlock& b : model.blocks()) {
    w.f64s(b.linear.weight.value.data());
    w.f64s(b.linear.bias.value.data());
    w.f64s(b.norm.scale.value.data());
    w.f64s(b.norm.shift.value.data());
    w.f64s(b.norm.running_mean);
    w.f64s(b.norm.running_var);
  }
  w.f64s(model.output().weight.value.data());
  w.f64s(model.output().bias.value.data());
  w.seal();
  write_file_bytes(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "FSBB", kCheckpointFormatVersion, "checkpoint '" + path.string() + "'");
  Architecture arch;
  arch.input_dim = r.u32();
  const std::uint32_t depth = r.u32();
  if (depth > r.remaining() / 4) throw TruncatedFileError("checkpoint: layer table too long");
  arch.hidden.resize(depth);
  std::size_t params = 0;
  std::size_t in = arch.input_dim;
  for (auto& width : arch.hidden) {
    width = r.u32();
    params += in * width + 5 * width;
    in = width;
  }
  arch.num_classes = r.u32();
  params += in * arch.num_classes + arch.num_classes;
  if (arch.num_classes > r.remaining() / 4 ||
      params > (r.remaining() - 4 * arch.num_classes) / 8) {
    throw TruncatedFileError("checkpoint: parameter blobs exceed payload");
  }
  std::vector<datakit::ClassId> classes(arch.num_classes);
  for (auto& id : classes) id = r.u32();

  auto read_tensor = [&r](const std::string& name, nd::Shape shape, bool exempt) {
    Parameter p{name, Tensor(std::move(shape)), exempt};
    r.f64s(p.value.data());
    return p;
  };
  std::vector<HiddenBlock> blocks;
  in = arch.input_dim;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t out = arch.hidden[i];
    const std::string prefix = "block" + std::to_string(i) + ".";
    HiddenBlock b;
    b.linear.weight = read_tensor(prefix + "weight", {in, out}, false);
    b.linear.bias = read_tensor(prefix + "bias", {out}, false);
    b.norm.scale = read_tensor(prefix + "bn_scale", {out}, true);
    b.norm.shift = read_tensor(prefix + "bn_shift", {out}, true);
    b.norm.running_mean.resize(out);
    b.norm.running_var.resize(out);
    r.f64s(b.norm.running_mean);
    r.f64s(b.norm.running_var);
    blocks.push_back(std::move(b));
    in = out;
  }
  Linear output;
  output.weight = read_tensor("output.weight", {in, arch.num_classes}, false);
  output.bias = read_tensor("output.bias", {arch.num_classes}, false);
  r.expect_end();
  try {
    return Checkpoint{Backbone(std::move(arch), std::move(blocks), std::move(output)),
                      std::move(classes)};
  } catch (const Error& err) {
    throw IoError(std::string("checkpoint: ") + err.what());
  }
}

}  // namespace fsl::backbone
