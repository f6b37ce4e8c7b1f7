#include "sparsedom/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace sparsedom {

namespace {

// Gauss-Legendre nodes/weights on [-1,1], Newton from Chebyshev guesses.
struct GaussRule {
  std::vector<double> x, w;
};

const GaussRule& gauss32() {
  static const GaussRule rule = [] {
    constexpr int n = 32;
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        double dp = n * (x * p1 - p0) / (x * x - 1.0);
        double dx = p1 / dp;
        x -= dx;
        if (std::fabs(dx) < 1e-15) break;
      }
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (x * p1 - p0) / (x * x - 1.0);
      r.x[i] = x;
      r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
  }();
  return rule;
}

// integral of fn over [a,b] with panels * 32-point Gauss
template <typename F>
double integrate_1d(F&& fn, double a, double b, int panels = 4) {
  const GaussRule& g = gauss32();
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    double pa = a + (b - a) * p / panels;
    double pb = a + (b - a) * (p + 1) / panels;
    double mid = 0.5 * (pa + pb), half = 0.5 * (pb - pa);
    for (size_t i = 0; i < g.x.size(); ++i) s += g.w[i] * fn(mid + half * g.x[i]) * half;
  }
  return s;
}

double ball_volume(double rho, int dim) {
  return dim == 1 ? 2.0 * rho : std::numbers::pi * rho * rho;
}

}  // namespace

KernelSpec KernelSpec::power(double exponent, double r_index) {
  if (!(exponent > 0.0)) throw std::invalid_argument("KernelSpec: power exponent must be positive");
  KernelSpec k;
  k.profile_ = Profile::power;
  k.a_ = exponent;
  k.r_ = r_index;
  return k;
}

KernelSpec KernelSpec::tabulated(std::vector<std::pair<double, double>> samples, double r_index) {
  if (samples.size() < 2) throw std::invalid_argument("KernelSpec: need at least two samples");
  for (size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i].first > samples[i - 1].first))
      throw std::invalid_argument("KernelSpec: radius column must be strictly increasing");
  for (auto& [r, v] : samples)
    if (!(r > 0.0) || !std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("KernelSpec: profile must be positive radii with finite values");
  KernelSpec k;
  k.profile_ = Profile::tabulated;
  k.r_ = r_index;
  k.table_ = std::move(samples);
  return k;
}

KernelSpec KernelSpec::from_csv(const std::string& path, double r_index) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("KernelSpec::from_csv: cannot open " + path);
  std::vector<std::pair<double, double>> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("radius", 0) == 0) continue;
    std::istringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw std::runtime_error("KernelSpec::from_csv: malformed line '" + line + "'");
    samples.emplace_back(std::stod(a), std::stod(b));
  }
  return tabulated(std::move(samples), r_index);
}

double KernelSpec::max_radius() const {
  return profile_ == Profile::power ? kInfRIndex : table_.back().first;
}

double KernelSpec::eval(double radius) const {
  if (!(radius > 0.0)) throw std::domain_error("KernelSpec::eval: radius must be positive");
  if (profile_ == Profile::power) return std::pow(radius, -a_);
  if (radius > table_.back().first)
    throw std::domain_error("KernelSpec::eval: radius beyond the tabulated range");
  if (radius <= table_.front().first) return table_.front().second;
  auto it = std::lower_bound(table_.begin(), table_.end(), radius,
                             [](const auto& s, double r) { return s.first < r; });
  auto prev = it - 1;
  double t = (radius - prev->first) / (it->first - prev->first);
  return prev->second + t * (it->second - prev->second);
}

double KernelSpec::ball_average(double rho, int dim) const {
  if (profile_ == Profile::power) {
    if (dim == 1) {
      if (a_ >= 1.0) throw std::domain_error("KernelSpec: profile not integrable at the origin");
      return std::pow(rho, -a_) / (1.0 - a_);
    }
    if (a_ >= 2.0) throw std::domain_error("KernelSpec: profile not integrable at the origin");
    return 2.0 / (2.0 - a_) * std::pow(rho, -a_);
  }
  // numeric shell average; tabulated profiles are bounded near 0
  double integral = dim == 1
                        ? 2.0 * integrate_1d([&](double t) { return eval(t); }, rho * 1e-6, rho)
                        : 2.0 * std::numbers::pi *
                              integrate_1d([&](double t) { return eval(t) * t; }, rho * 1e-6, rho);
  return integral / ball_volume(rho, dim);
}

double annulus_lr_norm(const KernelSpec& k, double r, double t, int dim) {
  if (2.0 * t > k.max_radius())
    throw std::domain_error("annulus_lr_norm: annulus beyond the evaluable range");
  if (r == KernelSpec::kInfRIndex) {
    // sup over the annulus; sampled densely plus the inner endpoint, where
    // decreasing profiles attain the sup
    double m = k.eval(t);
    for (int i = 0; i <= 256; ++i) m = std::max(m, k.eval(t + (i / 256.0) * t));
    return m;
  }
  double integral =
      dim == 1
          ? 2.0 * integrate_1d([&](double x) { return std::pow(k.eval(x), r); }, t, 2.0 * t)
          : 2.0 * std::numbers::pi *
                integrate_1d([&](double x) { return std::pow(k.eval(x), r) * x; }, t, 2.0 * t);
  return std::pow(integral / ball_volume(2.0 * t, dim), 1.0 / r);
}

namespace {

void classify_tail(KernelConditionReport& rep) {
  const auto& v = rep.per_scale;
  if (v.size() < 3) {
    rep.stable = true;
    return;
  }
  double a = v[v.size() - 3], b = v[v.size() - 2], c = v[v.size() - 1];
  const double eps = 1e-9;
  bool growing = b > a * (1 + eps) && c > b * (1 + eps);
  rep.diverging = growing;
  rep.stable = !growing;
}

}  // namespace

KernelConditionReport kernel_size_constant(const KernelSpec& k, double alpha_i, double r_i, int dim,
                                           int t_exp_lo, int t_exp_hi) {
  if (t_exp_lo > t_exp_hi) throw std::invalid_argument("kernel_size_constant: empty scale range");
  KernelConditionReport rep;
  for (int e = t_exp_lo; e <= t_exp_hi; ++e) {
    double t = std::ldexp(1.0, e);
    double val = std::pow(t, alpha_i) * annulus_lr_norm(k, r_i, t, dim);
    rep.per_scale.push_back(val);
    rep.constant = std::max(rep.constant, val);
  }
  classify_tail(rep);
  rep.C_r = rep.constant;
  return rep;
}

KernelConditionReport kernel_hormander_constant(const KernelSpec& k, double alpha_i, double r_i,
                                                int dim, const std::vector<Coord>& probes,
                                                double c_r, int m_trunc) {
  if (m_trunc < 4) throw std::invalid_argument("kernel_hormander_constant: m_trunc must be >= 4");
  if (!(c_r > 1.0)) throw std::invalid_argument("kernel_hormander_constant: need c_r > 1");
  KernelConditionReport rep;
  rep.c_r = c_r;
  bool all_stable = true;
  for (const Coord& probe : probes) {
    double px = probe[0].to_double();
    double py = dim == 2 ? probe[1].to_double() : 0.0;
    double mag = std::sqrt(px * px + py * py);
    std::vector<double> partial;
    double sum = 0.0;
    if (mag == 0.0) {
      partial.assign(m_trunc, 0.0);  // k(.-0) - k(.) vanishes identically
    } else {
      double R = c_r * mag;
      if (std::ldexp(1.0, m_trunc + 1) * R > k.max_radius())
        throw std::domain_error(
            "kernel_hormander_constant: outer annulus beyond the evaluable range; reduce R or "
            "m_trunc");
      for (int m = 1; m <= m_trunc; ++m) {
        double rad = std::ldexp(1.0, m) * R;
        double diff_norm;
        auto diff = [&](double yx, double yy) {
          double shifted = std::hypot(yx - px, yy - py);
          double base = std::hypot(yx, yy);
          return std::fabs(k.eval(shifted) - k.eval(base));
        };
        if (r_i == KernelSpec::kInfRIndex) {
          double mx = 0.0;
          if (dim == 1) {
            for (int i = 0; i <= 512; ++i) {
              double y = rad * (1.0 + i / 512.0);
              mx = std::max({mx, diff(y, 0.0), diff(-y, 0.0)});
            }
          } else {
            for (int ir = 0; ir <= 64; ++ir)
              for (int it = 0; it < 128; ++it) {
                double rr = rad * (1.0 + ir / 64.0);
                double th = 2.0 * std::numbers::pi * it / 128.0;
                mx = std::max(mx, diff(rr * std::cos(th), rr * std::sin(th)));
              }
          }
          diff_norm = mx;
        } else {
          double integral;
          if (dim == 1) {
            integral = integrate_1d([&](double y) { return std::pow(diff(y, 0.0), r_i); }, rad,
                                    2.0 * rad) +
                       integrate_1d([&](double y) { return std::pow(diff(-y, 0.0), r_i); }, rad,
                                    2.0 * rad);
          } else {
            integral = integrate_1d(
                [&](double rr) {
                  double s = 0.0;
                  const int nth = 96;
                  for (int it = 0; it < nth; ++it) {
                    double th = 2.0 * std::numbers::pi * (it + 0.5) / nth;
                    s += std::pow(diff(rr * std::cos(th), rr * std::sin(th)), r_i);
                  }
                  return s * (2.0 * std::numbers::pi / nth) * rr;
                },
                rad, 2.0 * rad);
          }
          diff_norm = std::pow(integral / ball_volume(2.0 * rad, dim), 1.0 / r_i);
        }
        sum += std::pow(rad, alpha_i) * diff_norm;
        partial.push_back(sum);
      }
    }
    if (sum > rep.constant) {
      rep.constant = sum;
      rep.per_scale = partial;
    }
    // tail increment of the last two terms below 1% of the sum
    if (partial.size() >= 3 && partial.back() > 0.0) {
      double tail = partial.back() - partial[partial.size() - 3];
      if (tail > 0.01 * partial.back()) all_stable = false;
    }
  }
  if (rep.per_scale.empty() && !probes.empty()) rep.per_scale.assign(m_trunc, 0.0);
  rep.stable = all_stable;
  rep.diverging = !all_stable;
  rep.C_r = rep.constant;
  return rep;
}

}  // namespace sparsedom
