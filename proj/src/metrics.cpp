// SPDX-License-Identifier: Apache-2.0
#include "iocf/metrics.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "iocf/error.hpp"

namespace iocf {

std::size_t threshold_count(std::span<const double> scores, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("threshold must lie in [0, 1]");
  std::size_t n = 0;
  for (double s : scores) n += s > threshold ? 1 : 0;
  return n;
}

double density_count(const Tensor& density) {
  double total = 0.0;
  for (double v : density.data()) total += std::fabs(v);
  return total;
}

CountReport evaluate(std::span<const double> predicted, std::span<const std::size_t> ground_truth) {
  if (predicted.size() != ground_truth.size()) {
    throw UsageError("evaluate: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(ground_truth.size()) + " images");
  }
  if (predicted.empty()) throw UsageError("evaluate: no images");
  CountReport r;
  double abs_sum = 0.0, sq_sum = 0.0, norm_sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double gt = static_cast<double>(ground_truth[i]);
    const double err = std::fabs(predicted[i] - gt);
    abs_sum += err;
    sq_sum += err * err;
    if (ground_truth[i] > 0) {
      norm_sum += err / gt;
    } else {
      ++r.images_skipped_nae;
    }
  }
  const auto n = static_cast<double>(predicted.size());
  r.images_evaluated = predicted.size();
  r.mae = abs_sum / n;
  r.mse = std::sqrt(sq_sum / n);
  const std::size_t normalized = r.images_evaluated - r.images_skipped_nae;
  r.nae = normalized > 0 ? norm_sum / static_cast<double>(normalized) : 0.0;
  r.histogram = histogram_counts(ground_truth);
  return r;
}

std::size_t histogram_bin(std::size_t count) {
  if (count <= 50) return 0;
  if (count <= 100) return 1;
  if (count <= 200) return 2;
  return 3;
}

CountHistogram histogram_counts(std::span<const std::size_t> counts) {
  CountHistogram h{};
  for (std::size_t c : counts) ++h[histogram_bin(c)];
  return h;
}

std::string to_text(const CountReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "mae=" << r.mae << '\n'
     << "mse=" << r.mse << '\n'
     << "nae=" << r.nae << '\n'
     << "images_evaluated=" << r.images_evaluated << '\n'
     << "images_skipped_nae=" << r.images_skipped_nae << '\n'
     << "hist_0_50=" << r.histogram[0] << '\n'
     << "hist_51_100=" << r.histogram[1] << '\n'
     << "hist_101_200=" << r.histogram[2] << '\n'
     << "hist_over_200=" << r.histogram[3] << '\n';
  return os.str();
}

std::string to_json(const CountReport& r) {
  nlohmann::ordered_json j;
  j["mae"] = r.mae;
  j["mse"] = r.mse;
  j["nae"] = r.nae;
  j["images_evaluated"] = r.images_evaluated;
  j["images_skipped_nae"] = r.images_skipped_nae;
  j["histogram"] = {{"0-50", r.histogram[0]}, {"51-100", r.histogram[1]}, {"101-200", r.histogram[2]},
                    {">200", r.histogram[3]}};
  return j.dump(2);
}

}  // namespace iocf
