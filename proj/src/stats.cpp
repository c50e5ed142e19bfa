#include "lexiscope/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "lexiscope/error.hpp"

namespace lexiscope {

double mean(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorCode::EmptyInput, "mean of empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

namespace {

double sample_variance(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace

TTestResult one_sided_t_test(std::span<const double> a, std::span<const double> b, int layer) {
  if (a.size() < 2 || b.size() < 2)
    throw Error(ErrorCode::DegenerateSample, "t-test needs at least two values per sample");
  const double ma = mean(a), mb = mean(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  if (va == 0.0 && vb == 0.0) throw Error(ErrorCode::DegenerateSample, "both samples have zero variance");

  TTestResult r;
  r.layer = layer;
  r.n_a = a.size();
  r.n_b = b.size();
  r.t_stat = (ma - mb) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(r.df);
  r.p_less = boost::math::cdf(dist, r.t_stat);
  r.p_greater = boost::math::cdf(boost::math::complement(dist, r.t_stat));
  return r;
}

}  // namespace lexiscope
