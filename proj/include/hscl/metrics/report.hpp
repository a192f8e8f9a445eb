#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hscl::metrics {

struct MetricReport {
  std::string metric;
  double value = 0.0;          // finite, or +infinity for PSNR on identical inputs
  std::string parameters;      // e.g. "ratio=0.25", "K=1"
  std::vector<std::string> inputs;

  // Throws ValidationError on NaN or -infinity.
  void validate() const;
  // metric, value ("inf" for +infinity), parameters, comma-joined inputs.
  std::string to_tsv() const;
};

void write_reports(std::ostream& out, const std::vector<MetricReport>& reports);

}  // namespace hscl::metrics
