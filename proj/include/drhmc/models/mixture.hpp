#pragma once

#include <vector>

#include "drhmc/model.hpp"
#include "drhmc/random.hpp"

namespace drhmc {

/// Univariate normal mixture sum_i w_i N(mu_i, sigma_i^2).
struct MixtureSpec {
  std::vector<double> weights;
  std::vector<double> locations;
  std::vector<double> scales;

  /// Two equal-weight components at 0 and 3 with scales 0.1 and 1.
  static MixtureSpec benchmark();
  void validate() const;
};

class MixtureModel final : public TargetModel {
 public:
  explicit MixtureModel(MixtureSpec spec);

  std::string name() const override { return "mixture"; }
  Index dim() const override { return 1; }
  std::vector<std::string> parameter_names() const override { return {"theta"}; }
  std::unique_ptr<TargetModel> clone() const override;
  std::optional<ReferenceMoments> reference_moments() const override;

  const MixtureSpec& spec() const { return spec_; }

 protected:
  double evaluate(const Vector& q, Vector& grad) const override;

 private:
  MixtureSpec spec_;
  std::vector<double> log_weights_;
};

/// Ancestral sampling: component by weight, then a normal draw. Component
/// labels are written to `components` when given.
std::vector<double> mixture_reference_sample(Rng& rng, const MixtureSpec& spec, std::size_t n,
                                             std::vector<std::size_t>* components = nullptr);

}  // namespace drhmc
