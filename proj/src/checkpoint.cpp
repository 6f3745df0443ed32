#include "lgplug/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "lgplug/errors.hpp"

namespace lgplug {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'G', 'P', 'L', 'U', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  json header;
  header["kind"] = kind;
  header["meta"] = meta;
  json shapes = json::array();
  for (const auto& [name, m] : tensors) {
    shapes.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  header["tensors"] = shapes;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof kMagic);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, m] : tensors) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw ParseError("short write on checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ParseError("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  const std::uint32_t hlen = read_u32(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in) throw ParseError("truncated checkpoint header: " + path);
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw ParseError("corrupt checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint ck;
  ck.kind = header.value("kind", "");
  ck.meta = header.value("meta", json::object());
  for (const auto& t : header.at("tensors")) {
    Matrix m(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw ParseError("truncated tensor data in " + path);
    ck.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return ck;
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw ParseError("checkpoint missing tensor: " + name);
}

}  // namespace lgplug
