#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/checkpoint.hpp"
#include "sinesr/nets_core.hpp"

namespace sinesr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

// Adam with bias correction over the trainable entries of a parameter list.
class Adam {
 public:
  Adam(ParamList<float> params, const AdamConfig& config);

  void step(double lr);
  void zero_grad();

  long long steps() const { return t_; }
  const ParamList<float>& params() const { return params_; }

  // Moments under prefix + "m." / "v." + name, step count in the header.
  void store(TensorContainer& c, const std::string& prefix) const;
  void load(const TensorContainer& c, const std::string& prefix);

 private:
  ParamList<float> params_;
  AdamConfig config_;
  std::vector<Tensorf> m_;
  std::vector<Tensorf> v_;
  long long t_ = 0;
};

}  // namespace sinesr
