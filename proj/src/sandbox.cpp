#include "pipefreeze/sandbox.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pipefreeze {

SyntheticObjective SyntheticObjective::quadratic(Eigen::VectorXd diag, double noise_sigma) {
  if (diag.size() == 0 || (diag.array() <= 0.0).any())
    throw config_error("quadratic objective needs positive diagonal entries");
  SyntheticObjective obj;
  obj.kind_ = Kind::Quadratic;
  obj.dim_ = static_cast<int>(diag.size());
  obj.smoothness_ = diag.maxCoeff();
  obj.noise_sigma_ = noise_sigma;
  obj.diag_ = std::move(diag);
  return obj;
}

SyntheticObjective SyntheticObjective::isotropic_quadratic(int dim, double noise_sigma) {
  return quadratic(Eigen::VectorXd::Ones(dim), noise_sigma);
}

SyntheticObjective SyntheticObjective::logistic_toy(int dim, int samples, std::uint64_t seed,
                                                    double ridge, double noise_sigma) {
  if (dim < 1 || samples < 1) throw config_error("logistic toy needs positive dimensions");
  Rng rng(seed);
  Eigen::MatrixXd features(samples, dim);
  for (int i = 0; i < samples; ++i)
    for (int j = 0; j < dim; ++j) features(i, j) = rng.gaussian();
  Eigen::VectorXd planted(dim);
  for (int j = 0; j < dim; ++j) planted(j) = rng.gaussian();
  Eigen::VectorXd labels(samples);
  for (int i = 0; i < samples; ++i) {
    const double margin = features.row(i).dot(planted) + 0.1 * rng.gaussian();
    labels(i) = margin >= 0.0 ? 1.0 : -1.0;
  }

  SyntheticObjective obj;
  obj.kind_ = Kind::LogisticToy;
  obj.dim_ = dim;
  obj.noise_sigma_ = noise_sigma;
  obj.features_ = std::move(features);
  obj.labels_ = std::move(labels);
  obj.ridge_ = ridge;
  // L = lambda_max(X'X) / (4 n) + ridge for the logistic loss
  Eigen::MatrixXd gram = obj.features_.transpose() * obj.features_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigensolver(gram);
  obj.smoothness_ = eigensolver.eigenvalues().maxCoeff() / (4.0 * samples) + ridge;
  return obj;
}

double SyntheticObjective::value(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim_) throw std::domain_error("objective dimension mismatch");
  if (kind_ == Kind::Quadratic) return 0.5 * theta.dot(diag_.cwiseProduct(theta));
  double total = 0.0;
  for (int i = 0; i < features_.rows(); ++i) {
    const double z = -labels_(i) * features_.row(i).dot(theta);
    total += z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }
  return total / static_cast<double>(features_.rows()) + 0.5 * ridge_ * theta.squaredNorm();
}

Eigen::VectorXd SyntheticObjective::gradient(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim_) throw std::domain_error("objective dimension mismatch");
  if (kind_ == Kind::Quadratic) return diag_.cwiseProduct(theta);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim_);
  for (int i = 0; i < features_.rows(); ++i) {
    const double z = -labels_(i) * features_.row(i).dot(theta);
    const double sigmoid = 1.0 / (1.0 + std::exp(-z));
    grad -= labels_(i) * sigmoid * features_.row(i).transpose();
  }
  return grad / static_cast<double>(features_.rows()) + ridge_ * theta;
}

MaskPolicy MaskPolicy::none() { return MaskPolicy{}; }

MaskPolicy MaskPolicy::uniform_bernoulli(double update_probability) {
  if (update_probability < 0.0 || update_probability > 1.0)
    throw std::domain_error("update probability must be in [0, 1]");
  MaskPolicy policy;
  policy.kind_ = Kind::UniformBernoulli;
  policy.p_update_ = update_probability;
  return policy;
}

MaskPolicy MaskPolicy::uniform_exact_count(double freeze_ratio) {
  if (freeze_ratio < 0.0 || freeze_ratio > 1.0)
    throw std::domain_error("freeze ratio must be in [0, 1]");
  MaskPolicy policy;
  policy.kind_ = Kind::UniformExactCount;
  policy.freeze_ratio_ = freeze_ratio;
  return policy;
}

MaskPolicy MaskPolicy::plan_driven(const FreezePlan& plan, const PhasePlan& phase,
                                   int microbatches, int stages, std::optional<int> step) {
  if (microbatches < 1 || stages < 1) throw config_error("plan-driven policy needs dimensions");
  MaskPolicy policy;
  policy.kind_ = Kind::PlanDriven;
  policy.microbatches_ = microbatches;
  policy.stages_ = stages;
  policy.afr_.resize(microbatches, stages);
  const int t = step.value_or(phase.t_total);
  for (int m = 1; m <= microbatches; ++m)
    for (int s = 1; s <= stages; ++s)
      policy.afr_(m - 1, s - 1) = afr_at(t, phase, plan.ratio_of(backward_action(m, s)));
  return policy;
}

int MaskPolicy::block_of(int j, int d) const {
  // contiguous stage blocks, as even as integer division allows
  return std::min(stages_ - 1, j * stages_ / d);
}

double MaskPolicy::freeze_probability(int m, int j, int d) const {
  switch (kind_) {
    case Kind::None: return 0.0;
    case Kind::UniformBernoulli: return 1.0 - p_update_;
    case Kind::UniformExactCount:
      return static_cast<double>(static_cast<int>(std::floor(freeze_ratio_ * d))) / d;
    case Kind::PlanDriven: return afr_(m % afr_.rows(), block_of(j, d));
  }
  return 0.0;
}

Eigen::VectorXd MaskPolicy::update_probabilities(int microbatches, int d) const {
  Eigen::VectorXd p = Eigen::VectorXd::Ones(d);
  for (int j = 0; j < d; ++j) {
    double freeze = 0.0;
    for (int m = 0; m < microbatches; ++m) freeze += freeze_probability(m, j, d);
    p(j) = 1.0 - freeze / microbatches;
  }
  return p;
}

double MaskPolicy::min_update_probability(int microbatches, int d) const {
  return update_probabilities(microbatches, d).minCoeff();
}

Eigen::VectorXd MaskPolicy::draw_update_mask(int m, int d, Rng& rng) const {
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(d);
  switch (kind_) {
    case Kind::None: break;
    case Kind::UniformBernoulli:
      for (int j = 0; j < d; ++j)
        if (rng.bernoulli(1.0 - p_update_)) mask(j) = 0.0;
      break;
    case Kind::UniformExactCount: {
      const auto frozen = sample_mask(d, freeze_ratio_, rng);
      for (int j = 0; j < d; ++j)
        if (frozen.test(j)) mask(j) = 0.0;
      break;
    }
    case Kind::PlanDriven:
      for (int j = 0; j < d; ++j)
        if (rng.bernoulli(afr_(m % afr_.rows(), block_of(j, d)))) mask(j) = 0.0;
      break;
  }
  return mask;
}

std::string MaskPolicy::describe() const {
  std::ostringstream out;
  switch (kind_) {
    case Kind::None: out << "none"; break;
    case Kind::UniformBernoulli: out << "bernoulli(p=" << p_update_ << ")"; break;
    case Kind::UniformExactCount: out << "exact-count(r=" << freeze_ratio_ << ")"; break;
    case Kind::PlanDriven:
      out << "plan-driven(" << afr_.rows() << "x" << afr_.cols() << ")";
      break;
  }
  return out.str();
}

Eigen::VectorXd masked_update_sample(const SyntheticObjective& objective, const MaskPolicy& policy,
                                     const Eigen::VectorXd& theta, int microbatches, Rng& rng) {
  const int d = objective.dim();
  const Eigen::VectorXd grad = objective.gradient(theta);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
  for (int m = 0; m < microbatches; ++m) {
    Eigen::VectorXd g = grad;
    if (objective.noise_sigma() > 0.0)
      for (int j = 0; j < d; ++j) g(j) += objective.noise_sigma() * rng.gaussian();
    total += policy.draw_update_mask(m, d, rng).cwiseProduct(g);
  }
  return total / static_cast<double>(microbatches);
}

SgdRun run_masked_sgd(const SyntheticObjective& objective, const MaskPolicy& policy,
                      const SgdHyper& hyper, const Eigen::VectorXd& theta0, std::uint64_t seed) {
  if (hyper.microbatches < 1 || hyper.total_steps < 1 || hyper.eta <= 0.0)
    throw config_error("invalid sgd hyperparameters");
  if (policy.microbatches() > 0 && policy.microbatches() != hyper.microbatches)
    throw config_error("plan-driven policy expects " + std::to_string(policy.microbatches()) +
                       " microbatches per step");

  const int d = objective.dim();
  SgdRun run;
  run.eta = hyper.eta;
  run.microbatches = hyper.microbatches;
  run.policy = policy.describe();
  run.seed = seed;
  run.p_bar = policy.update_probabilities(hyper.microbatches, d);
  run.p_min = run.p_bar.minCoeff();
  if (hyper.check_stepsize) {
    const double limit =
        run.p_min / (objective.smoothness() * (1.0 + 1.0 / hyper.microbatches));
    if (hyper.eta > limit)
      throw config_error("stepsize " + std::to_string(hyper.eta) +
                         " violates the theory bound " + std::to_string(limit));
  }

  Rng rng(seed);
  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd grad(d), noisy(d), total(d);
  run.grad_sq_norms.reserve(std::min(hyper.total_steps, 1 << 16));
  run.masked_energy.reserve(std::min(hyper.total_steps, 1 << 16));
  double running_sum = 0.0;
  const double scale = hyper.eta / hyper.microbatches;
  for (int t = 1; t <= hyper.total_steps; ++t) {
    grad = objective.gradient(theta);
    const double grad_sq = grad.squaredNorm();
    run.grad_sq_norms.push_back(grad_sq);
    run.masked_energy.push_back(run.p_bar.dot(grad.cwiseAbs2()));
    running_sum += grad_sq;
    if (hyper.stop_at_eps && running_sum / t <= *hyper.stop_at_eps) break;

    // microbatch loop kept allocation-free; rng order per microbatch is
    // noise draws first, then mask draws (see masked_update_sample)
    total.setZero();
    for (int m = 0; m < hyper.microbatches; ++m) {
      noisy = grad;
      if (objective.noise_sigma() > 0.0)
        for (int j = 0; j < d; ++j) noisy(j) += objective.noise_sigma() * rng.gaussian();
      switch (policy.kind()) {
        case MaskPolicy::Kind::None:
          total += noisy;
          break;
        case MaskPolicy::Kind::UniformExactCount:
          total += policy.draw_update_mask(m, d, rng).cwiseProduct(noisy);
          break;
        default:
          for (int j = 0; j < d; ++j)
            if (!rng.bernoulli(policy.freeze_probability(m, j, d))) total(j) += noisy(j);
          break;
      }
    }
    theta -= scale * total;
    if (!theta.allFinite() || theta.norm() > hyper.divergence_guard)
      throw numerical_error("masked sgd diverged at step " + std::to_string(t));
  }
  run.theta_final = theta;
  run.final_value = objective.value(theta);
  return run;
}

int steps_to_epsilon(const SgdRun& run, double eps) {
  if (eps <= 0.0) throw std::domain_error("eps must be positive");
  double sum = 0.0;
  for (std::size_t t = 0; t < run.grad_sq_norms.size(); ++t) {
    sum += run.grad_sq_norms[t];
    if (sum / static_cast<double>(t + 1) <= eps) return static_cast<int>(t + 1);
  }
  return kNotReached;
}

double estimate_p_eff(const SgdRun& run, std::optional<int> horizon) {
  const std::size_t limit =
      horizon ? std::min<std::size_t>(*horizon, run.grad_sq_norms.size()) : run.grad_sq_norms.size();
  double energy = 0.0, masked = 0.0;
  for (std::size_t t = 0; t < limit; ++t) {
    energy += run.grad_sq_norms[t];
    masked += run.masked_energy[t];
  }
  if (energy == 0.0) return 1.0;  // zero-gradient convention
  return masked / energy;
}

namespace {

struct TrialStats {
  int used{0};
  int not_reached{0};
  double sum_t{0.0};
  double sum_p_eff{0.0};
};

TrialStats run_trials(const SyntheticObjective& objective, const MaskPolicy& policy, double eps,
                      int trials, const SgdHyper& hyper, const Eigen::VectorXd& theta0,
                      std::uint64_t base_seed) {
  TrialStats stats;
  SgdHyper capped = hyper;
  capped.stop_at_eps = eps;
  for (int trial = 0; trial < trials; ++trial) {
    const auto run = run_masked_sgd(objective, policy, capped, theta0, base_seed + trial);
    const int t_eps = steps_to_epsilon(run, eps);
    if (t_eps == kNotReached) {
      ++stats.not_reached;
      continue;
    }
    ++stats.used;
    stats.sum_t += t_eps;
    stats.sum_p_eff += estimate_p_eff(run, t_eps);
  }
  return stats;
}

}  // namespace

ScalingTable scaling_experiment(const SyntheticObjective& objective,
                                const std::vector<double>& p_list, double eps, int trials,
                                const SgdHyper& hyper, const Eigen::VectorXd& theta0,
                                std::uint64_t base_seed) {
  if (trials < 1) throw config_error("scaling experiment needs at least one trial");
  ScalingTable table;
  table.eps = eps;

  const auto baseline =
      run_trials(objective, MaskPolicy::none(), eps, trials, hyper, theta0, base_seed);
  if (baseline.used == 0) throw numerical_error("baseline runs never reached eps");
  table.baseline_mean_t = baseline.sum_t / baseline.used;

  for (double p : p_list) {
    const auto stats = run_trials(objective, MaskPolicy::uniform_bernoulli(p), eps, trials, hyper,
                                  theta0, base_seed);
    ScalingRow row;
    row.p = p;
    row.trials_used = stats.used;
    row.not_reached = stats.not_reached;
    if (stats.used > 0) {
      row.mean_t_eps = stats.sum_t / stats.used;
      row.ratio_vs_baseline = row.mean_t_eps / table.baseline_mean_t;
      row.p_eff_hat = stats.sum_p_eff / stats.used;
    }
    table.rows.push_back(row);
  }
  return table;
}

TtaReport tta_experiment(const SyntheticObjective& objective, const FreezePlan& plan,
                         const PhasePlan& phase, int stages, double baseline_step_ms,
                         double ours_step_ms, double eps, int trials, const SgdHyper& hyper,
                         const Eigen::VectorXd& theta0, std::uint64_t base_seed) {
  if (baseline_step_ms <= 0.0 || ours_step_ms <= 0.0)
    throw std::domain_error("step times must be positive");

  const auto policy =
      MaskPolicy::plan_driven(plan, phase, hyper.microbatches, stages, std::nullopt);
  const auto ours = run_trials(objective, policy, eps, trials, hyper, theta0, base_seed);
  const auto base =
      run_trials(objective, MaskPolicy::none(), eps, trials, hyper, theta0, base_seed);
  if (ours.used == 0 || base.used == 0)
    throw numerical_error("tta experiment: eps never reached in at least one arm");

  TtaReport report;
  report.kappa = ours_step_ms / baseline_step_ms;
  report.mean_t_ours = ours.sum_t / ours.used;
  report.mean_t_base = base.sum_t / base.used;
  report.p_eff_hat = ours.sum_p_eff / ours.used;
  report.measured_ratio =
      (report.mean_t_ours * ours_step_ms) / (report.mean_t_base * baseline_step_ms);
  report.predicted_ratio = report.kappa / report.p_eff_hat;
  report.trials_used = ours.used;
  report.not_reached = ours.not_reached + base.not_reached;
  return report;
}

}  // namespace pipefreeze
