#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "pixio/common.hpp"

namespace pixio {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t coords_per_input = 16;  // sampled coordinates per op input
  std::size_t model_coords = 50;      // sampled parameters of the full model
  bool include_model = true;
};

struct GradcheckCase {
  std::string name;
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool passed = false;
};

/// Central-difference check of every kernel op and the full model loss.
/// rel_err = |analytic - numeric| / max(|analytic|, |numeric|, floor).
struct GradcheckReport {
  std::string precision;
  double step = 0.0;
  double floor = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
  std::vector<GradcheckCase> cases;

  bool passed() const {
    if (cases.empty()) return false;
    for (const auto& c : cases) {
      if (!c.passed) return false;
    }
    return true;
  }
  /// One line per case plus a closing verdict.
  std::string summary() const {
    std::ostringstream out;
    out << std::scientific << std::setprecision(2);
    for (const auto& c : cases) {
      out << (c.passed ? "PASS " : "FAIL ") << precision << ' ' << c.name << " coords=" << c.checked
          << " max_rel_err=" << c.max_rel_err << " max_abs_err=" << c.max_abs_err << '\n';
    }
    out << (passed() ? "PASS" : "FAIL") << ' ' << precision << " gradcheck: " << cases.size()
        << " cases, tolerance " << tolerance << ", step " << step << ", floor " << floor << ", "
        << std::fixed << std::setprecision(1) << seconds << " s\n";
    return out.str();
  }
};

namespace f32 {
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});
}
namespace f64 {
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});
}

}  // namespace pixio
