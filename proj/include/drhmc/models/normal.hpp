#pragma once

#include "drhmc/model.hpp"

namespace drhmc {

/// Independent normal target N(0, diag(scales^2)).
class NormalModel final : public TargetModel {
 public:
  explicit NormalModel(Vector scales);
  static NormalModel standard(Index d);

  std::string name() const override { return "normal"; }
  Index dim() const override { return scales_.size(); }
  std::unique_ptr<TargetModel> clone() const override;
  std::optional<ReferenceMoments> reference_moments() const override;

  const Vector& scales() const { return scales_; }

 protected:
  double evaluate(const Vector& q, Vector& grad) const override;

 private:
  Vector scales_;
};

/// log pi = 0 everywhere. Improper; used to exercise the integrator.
class FlatModel final : public TargetModel {
 public:
  explicit FlatModel(Index d) : d_(d) {}
  std::string name() const override { return "flat"; }
  Index dim() const override { return d_; }
  std::unique_ptr<TargetModel> clone() const override { return std::make_unique<FlatModel>(d_); }

 protected:
  double evaluate(const Vector&, Vector& grad) const override {
    grad.setZero(d_);
    return 0.0;
  }

 private:
  Index d_;
};

}  // namespace drhmc
