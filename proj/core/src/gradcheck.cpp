#include "slu/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "slu/rng.hpp"

namespace slu {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error;
  if (!worst_param.empty()) os << " worst=" << worst_param;
  return os.str();
}

namespace {

// Central differences carry roundoff noise of roughly eps * |loss| / step;
// differences below the absolute floor are indistinguishable from it.
double rel_error(double a, double n, double atol) {
  double diff = std::fabs(a - n);
  if (diff < atol) return 0.0;
  double scale = std::max({std::fabs(a), std::fabs(n), 1e-8});
  return diff / scale;
}

double eval_loss(const std::function<Var(Graph&)>& build_loss) {
  Graph g;
  Var loss = build_loss(g);
  if (loss.value().size() != 1)
    throw ShapeError("gradient_check: loss must be scalar");
  return static_cast<double>(loss.value().data[0]);
}

}  // namespace

GradCheckReport gradient_check(const std::function<Var(Graph&)>& build_loss,
                               const std::vector<NamedParam>& params,
                               const GradCheckOptions& opt) {
  if (sizeof(real) != 8)
    throw std::runtime_error(
        "gradient_check requires a 64-bit build (SLU_REAL32 is set)");

  // Analytic gradients.
  for (const NamedParam& p : params) p.tensor->zero_grad();
  {
    Graph g;
    Var loss = build_loss(g);
    g.backward(loss);
  }

  GradCheckReport report;
  report.passed = true;
  Rng sampler(opt.sample_seed);
  for (const NamedParam& p : params) {
    Tensor& t = *p.tensor;
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), std::size_t(0));
    if (opt.coords_per_param > 0 &&
        coords.size() > static_cast<std::size_t>(opt.coords_per_param)) {
      // Fisher-Yates prefix shuffle, keep the first k.
      for (int i = 0; i < opt.coords_per_param; ++i) {
        std::size_t j = i + sampler.below(coords.size() - i);
        std::swap(coords[static_cast<std::size_t>(i)], coords[j]);
      }
      coords.resize(static_cast<std::size_t>(opt.coords_per_param));
    }

    GradCheckEntry entry;
    entry.name = p.name;
    for (std::size_t c : coords) {
      real saved = t.data[c];
      t.data[c] = saved + static_cast<real>(opt.step);
      double f_plus = eval_loss(build_loss);
      t.data[c] = saved - static_cast<real>(opt.step);
      double f_minus = eval_loss(build_loss);
      t.data[c] = saved;
      double numeric = (f_plus - f_minus) / (2.0 * opt.step);
      double analytic = static_cast<double>(t.grad[c]);
      double err = rel_error(analytic, numeric, opt.atol);
      if (err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = static_cast<int>(c);
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_error > report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = entry.name;
    }
    if (entry.max_rel_error > opt.tolerance) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace slu
