#include "fd/checkpoint.hpp"

#include "fd/binary_io.hpp"

#include <fstream>

namespace fd {

namespace {
constexpr char kMagic[4] = {'F', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json manifest = {{"config_hash", ckpt.info.config_hash},
                             {"kind", ckpt.info.kind},
                             {"epoch", ckpt.info.epoch},
                             {"metrics", ckpt.info.metrics},
                             {"extra", ckpt.info.extra}};
  auto index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ckpt.tensors) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  manifest["tensors"] = index;
  const std::string text = manifest.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out.write(kMagic, 4);
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : ckpt.tensors) write_floats(out, m.data(), m.size());
    if (!out) throw CheckpointError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw CheckpointError(path.string() + " is not a checkpoint");
  if (read_le<std::uint32_t>(in) != kVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint version");
  const auto len = read_le<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto manifest = nlohmann::json::parse(text);

  Checkpoint c;
  c.info.config_hash = manifest.at("config_hash").get<std::string>();
  c.info.kind = manifest.at("kind").get<std::string>();
  c.info.epoch = manifest.at("epoch").get<int>();
  c.info.metrics = manifest.at("metrics");
  c.info.extra = manifest.at("extra");
  if (expected_hash && *expected_hash != c.info.config_hash)
    throw CheckpointError(path.string() + ": config hash " + c.info.config_hash +
                          " does not match expected " + *expected_hash);
  for (const auto& t : manifest.at("tensors")) {
    Matrix<float> m(t.at("rows").get<Index>(), t.at("cols").get<Index>());
    read_floats(in, m.data(), m.size());
    c.tensors[t.at("name").get<std::string>()] = std::move(m);
  }
  if (!in) throw CheckpointError(path.string() + ": truncated checkpoint");
  return c;
}

}  // namespace fd
