#include "motrans/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace motrans::nn {

GradCheckReport grad_check(std::vector<NamedParam<double>>& params, const std::function<Tensor<double>()>& loss,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  if (params.empty()) return report;
  for (auto& p : params) p.tensor.zero_grad();
  loss().backward();

  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());

  RngStream rng(options.seed);
  const std::size_t per_param = std::max<std::size_t>(4, (options.min_scalars + params.size() - 1) / params.size());
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    auto values = p.tensor.data();
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(std::min(per_param, idx.size()));
    for (auto i : idx) {
      const double orig = values[i];
      values[i] = orig + options.step;
      const double up = loss().item();
      values[i] = orig - options.step;
      const double down = loss().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      report.max_error = std::max(report.max_error, err);
      ++report.checked;
      if (!(err <= options.tolerance)) report.failures.push_back({p.name, i, a, numeric, err});
    }
    report.params_covered.push_back(p.name);
  }
  return report;
}

GradCheckReport grad_check_plan(const ModelPlan& plan, const TokenBatch& src, const TokenBatch& tgt_in,
                                const std::vector<int>& targets, const GradCheckOptions& options) {
  RngStream rng(options.seed);
  Transformer<double> model(plan, rng);
  auto loss = [&] { return cross_entropy(model.forward(src, tgt_in), targets, 0); };
  return grad_check(model.parameters(), loss, options);
}

}  // namespace motrans::nn
