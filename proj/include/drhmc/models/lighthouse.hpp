#pragma once

#include <filesystem>
#include <vector>

#include "drhmc/model.hpp"

namespace drhmc {

struct LighthouseData {
  std::vector<double> flashes;

  /// Three flashes at 0.9, 1.2 and 1.21.
  static LighthouseData benchmark();
  /// CSV with a single column `x`.
  static LighthouseData load(const std::filesystem::path& path);
  void validate() const;
};

/// Gull's lighthouse posterior over (x0, log y) under flat priors on x0 and y:
/// each flash is Cauchy(x_i | x0, y); the Jacobian of y = exp(log y) is added.
class LighthouseModel final : public TargetModel {
 public:
  explicit LighthouseModel(LighthouseData data);

  std::string name() const override { return "lighthouse"; }
  Index dim() const override { return 2; }
  std::vector<std::string> parameter_names() const override { return {"x0", "log_y"}; }
  std::unique_ptr<TargetModel> clone() const override;

  const LighthouseData& data() const { return data_; }

 protected:
  double evaluate(const Vector& q, Vector& grad) const override;

 private:
  LighthouseData data_;
};

}  // namespace drhmc
