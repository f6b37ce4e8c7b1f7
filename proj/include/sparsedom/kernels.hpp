#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sparsedom/geometry.hpp"

namespace sparsedom {

// Radial kernel factor k_i. Either a pure power |x|^-a or a tabulated radial
// profile (monotone radius column, linear interpolation between samples).
class KernelSpec {
 public:
  enum class Profile { power, tabulated };

  static KernelSpec power(double exponent, double r_index);
  static KernelSpec tabulated(std::vector<std::pair<double, double>> samples, double r_index);
  static KernelSpec from_csv(const std::string& path, double r_index);

  Profile profile() const { return profile_; }
  double exponent() const { return a_; }
  double r_index() const { return r_; }
  double max_radius() const;  // evaluable range; infinity for power profiles

  double eval(double radius) const;
  // Average of the profile over a ball of the given radius (the singular-cell
  // rule of the dense quadrature): analytic for powers, numeric otherwise.
  double ball_average(double rho, int dim) const;

  static constexpr double kInfRIndex = std::numeric_limits<double>::infinity();

 private:
  Profile profile_ = Profile::power;
  double a_ = 0.0;
  double r_ = kInfRIndex;
  std::vector<std::pair<double, double>> table_;
};

// Output of the two kernel condition estimators. per_scale holds the
// per-octave size values (size condition) or the running partial sums
// (Hörmander condition); both are nonnegative, partial sums nondecreasing.
struct KernelConditionReport {
  double constant = 0.0;
  std::vector<double> per_scale;
  bool stable = false;
  bool diverging = false;
  double c_r = 2.0;
  double C_r = 0.0;
  std::string note;
};

// sup over t = 2^e, e in [t_exp_lo, t_exp_hi], of t^{alpha_i} * ||k||_{r_i, |x|~t}
// with the annulus average computed by quadrature (|x|~t means t < |x| <= 2t,
// normalized on B(0, 2t)).
KernelConditionReport kernel_size_constant(const KernelSpec& k, double alpha_i, double r_i, int dim,
                                           int t_exp_lo, int t_exp_hi);

// Partial sums of sum_m (2^m R)^{alpha_i} ||k(.-x) - k(.)||_{r_i, |y|~2^m R}
// over probes x with R = c_r |x|; the report carries the sup over probes.
KernelConditionReport kernel_hormander_constant(const KernelSpec& k, double alpha_i, double r_i,
                                                int dim, const std::vector<Coord>& probes,
                                                double c_r, int m_trunc);

// Annulus L^r average ||k||_{r, |x|~t} (building block, exposed for tests).
double annulus_lr_norm(const KernelSpec& k, double r, double t, int dim);

}  // namespace sparsedom
