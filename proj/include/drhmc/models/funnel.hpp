#pragma once

#include "drhmc/model.hpp"
#include "drhmc/random.hpp"

namespace drhmc {

struct FunnelSpec {
  Index d = 2;
  double sigma = 3.0;

  void validate() const;
};

/// Neal's funnel: beta ~ N(0, sigma^2), alpha_i ~ N(0, exp(beta)) for
/// i = 2..d. Coordinate 0 is beta.
class FunnelModel final : public TargetModel {
 public:
  explicit FunnelModel(FunnelSpec spec);

  std::string name() const override { return "funnel"; }
  Index dim() const override { return spec_.d; }
  std::vector<std::string> parameter_names() const override;
  std::unique_ptr<TargetModel> clone() const override;
  std::optional<ReferenceMoments> reference_moments() const override;

  const FunnelSpec& spec() const { return spec_; }

 protected:
  double evaluate(const Vector& q, Vector& grad) const override;

 private:
  FunnelSpec spec_;
};

/// Exact iid draws through the non-centered form alpha_i = exp(beta/2) z_i.
Matrix funnel_reference_sample(Rng& rng, const FunnelSpec& spec, Index n);

}  // namespace drhmc
