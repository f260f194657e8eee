#include "hlgt/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace hlgt {

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << (e.pass ? "  ok   " : "  FAIL ") << e.param << "  max_rel_err=" << e.max_rel_err
       << "  (" << e.elements << " elements)\n";
  }
  os << (pass ? "PASS" : "FAIL") << "  overall max_rel_err=" << max_rel_err
     << "  tol=" << tol << "\n";
  return os.str();
}

namespace {

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-3});
  return std::abs(a - b) / denom;
}

}  // namespace

GradCheckReport grad_check(const std::function<TensorD()>& f,
                           const std::vector<TensorD>& params, double h,
                           double tol) {
  if (h <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  // Determinism probe: two tape-free evaluations must agree bitwise.
  const double v1 = f().item();
  const double v2 = f().item();
  if (!(v1 == v2))
    throw NumericError("grad_check: function is not deterministic (" +
                       std::to_string(v1) + " vs " + std::to_string(v2) + ")");

  // Analytic gradients from one recorded forward/backward.
  for (auto p : params) p.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    TapeD tape;
    auto scope = tape.activate();
    TensorD loss = f();
    tape.backward(loss);
  }
  for (const auto& p : params)
    analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));

  GradCheckReport report;
  report.tol = tol;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    TensorD p = params[pi];
    GradCheckEntry entry;
    entry.param = p.name().empty() ? ("param[" + std::to_string(pi) + "]") : p.name();
    entry.elements = p.size();
    for (int64_t i = 0; i < p.size(); ++i) {
      const double orig = p.values()[static_cast<size_t>(i)];
      p.values()[static_cast<size_t>(i)] = orig + h;
      const double fp = f().item();
      p.values()[static_cast<size_t>(i)] = orig - h;
      const double fm = f().item();
      p.values()[static_cast<size_t>(i)] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = rel_err(analytic[pi][static_cast<size_t>(i)], fd);
      entry.max_rel_err = std::max(entry.max_rel_err, err);
    }
    entry.pass = entry.max_rel_err <= tol;
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace hlgt
