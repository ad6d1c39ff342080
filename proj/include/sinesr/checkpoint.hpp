#pragma once

// Versioned single-file tensor container used for checkpoints and
// feature-extractor weights.
//
// Layout: 8-byte magic, uint32 version, uint64 header length, UTF-8 JSON
// header, then raw little-endian float32 tensor payloads. The header carries
// caller metadata plus a "tensors" index of {name, shape, offset, count}.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/nets_core.hpp"

namespace sinesr {

inline constexpr char kContainerMagic[8] = {'S', 'I', 'N', 'E', 'S', 'R', 'C', 'K'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct TensorContainer {
  nlohmann::json header = nlohmann::json::object();
  std::map<std::string, Tensorf> tensors;

  void put(const std::string& name, const Tensorf& t) { tensors[name] = t; }
  // Throws DataError when the tensor is missing.
  const Tensorf& get(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
};

// Written to a sibling temporary file and renamed into place.
void write_container(const std::filesystem::path& path, const TensorContainer& c);
// Throws DataError on a missing file, bad magic, unknown version or a
// truncated payload.
TensorContainer read_container(const std::filesystem::path& path);

// Stores every parameter (buffers included) under prefix + name.
void store_parameters(TensorContainer& c, const std::string& prefix,
                      const ParamList<float>& params);
// Restores every parameter; a missing name or a shape mismatch is a DataError.
void load_parameters(const TensorContainer& c, const std::string& prefix,
                     const ParamList<float>& params);

}  // namespace sinesr
