#include "sinesr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sinesr {

static_assert(std::endian::native == std::endian::little, "container I/O assumes little endian");

const Tensorf& TensorContainer::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("container has no tensor '" + name + "'");
  return it->second;
}

void write_container(const std::filesystem::path& path, const TensorContainer& c) {
  nlohmann::json header = c.header;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    const Shape& s = t.shape();
    index.push_back({{"name", name},
                     {"shape", {s.n, s.c, s.h, s.w}},
                     {"offset", offset},
                     {"count", t.size()}});
    offset += t.size();
  }
  header["tensors"] = index;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    const std::uint32_t version = kContainerVersion;
    const std::uint64_t header_len = text.size();
    out.write(kContainerMagic, sizeof(kContainerMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : c.tensors) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[sizeof(kContainerMagic)];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, kContainerMagic, sizeof(magic)) != 0) {
    throw DataError(path.string() + " is not a tensor container");
  }
  if (version != kContainerVersion) {
    throw DataError(path.string() + ": unsupported container version " +
                    std::to_string(version));
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError(path.string() + ": truncated header");

  TensorContainer c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": corrupt header: " + e.what());
  }
  const auto index = c.header.at("tensors");
  c.header.erase("tensors");
  const std::streamoff base = in.tellg();
  for (const auto& entry : index) {
    const auto dims = entry.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) throw DataError(path.string() + ": bad tensor shape");
    Tensorf t(Shape{dims[0], dims[1], dims[2], dims[3]});
    const auto offset = entry.at("offset").get<std::uint64_t>();
    in.seekg(base + static_cast<std::streamoff>(offset * sizeof(float)));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw DataError(path.string() + ": truncated tensor payload");
    c.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return c;
}

void store_parameters(TensorContainer& c, const std::string& prefix,
                      const ParamList<float>& params) {
  for (const auto& p : params) c.put(prefix + p.name, p.param->value);
}

void load_parameters(const TensorContainer& c, const std::string& prefix,
                     const ParamList<float>& params) {
  for (const auto& p : params) {
    const Tensorf& t = c.get(prefix + p.name);
    if (!(t.shape() == p.param->value.shape())) {
      throw DataError("tensor '" + prefix + p.name + "' has shape " + t.shape().str() +
                      ", expected " + p.param->value.shape().str());
    }
    p.param->value = t;
  }
}

}  // namespace sinesr
