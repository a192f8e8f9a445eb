#include "hscl/metrics/report.hpp"

#include <cmath>
#include <cstdio>

#include "hscl/error.hpp"

namespace hscl::metrics {

void MetricReport::validate() const {
  if (metric.empty()) throw ValidationError("metric report without a name");
  if (std::isnan(value) || value == -INFINITY) throw ValidationError("metric '" + metric + "' is not finite");
}

std::string MetricReport::to_tsv() const {
  validate();
  std::string v;
  if (std::isinf(value)) {
    v = "inf";
  } else {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    v = buf;
  }
  std::string ids;
  for (std::size_t i = 0; i < inputs.size(); ++i) ids += (i ? "," : "") + inputs[i];
  return metric + "\t" + v + "\t" + parameters + "\t" + ids;
}

void write_reports(std::ostream& out, const std::vector<MetricReport>& reports) {
  for (const auto& r : reports) out << r.to_tsv() << '\n';
}

}  // namespace hscl::metrics
