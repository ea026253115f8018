#include "gmerge/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gmerge/rng.hpp"

namespace gmerge {

double finite_diff_check(const LossFn& loss_fn, Tensor x, double h,
                         int max_coords, Rng* rng) {
  x.zero_grad();
  {
    Tape tape;
    Tensor loss = loss_fn(tape);
    tape.backward(loss);
  }
  std::vector<double> analytic = x.grad();
  x.zero_grad();

  std::vector<int> coords(x.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords > 0 && max_coords < x.size()) {
    if (rng == nullptr)
      throw std::invalid_argument(
          "finite_diff_check: sampled coordinates need an rng");
    rng->shuffle(coords);
    coords.resize(max_coords);
  }

  auto eval = [&]() {
    Tape tape(false);
    return loss_fn(tape).value();
  };

  double max_rel = 0.0;
  for (int i : coords) {
    double saved = x.values()[i];
    x.values()[i] = saved + h;
    double fp = eval();
    x.values()[i] = saved - h;
    double fm = eval();
    x.values()[i] = saved;
    double numeric = (fp - fm) / (2.0 * h);
    double rel = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace gmerge
