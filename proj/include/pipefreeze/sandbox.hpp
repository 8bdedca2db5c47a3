#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pipefreeze/freezectl.hpp"
#include "pipefreeze/lp.hpp"
#include "pipefreeze/types.hpp"

namespace pipefreeze {

// Smooth objectives for the masked-SGD harness. `noise_sigma` is the
// per-coordinate standard deviation of the stochastic gradient noise.
class SyntheticObjective {
 public:
  enum class Kind { Quadratic, LogisticToy };

  static SyntheticObjective quadratic(Eigen::VectorXd diag, double noise_sigma = 0.0);
  static SyntheticObjective isotropic_quadratic(int dim, double noise_sigma = 0.0);
  static SyntheticObjective logistic_toy(int dim, int samples, std::uint64_t seed,
                                         double ridge = 0.01, double noise_sigma = 0.0);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double smoothness() const { return smoothness_; }
  double noise_sigma() const { return noise_sigma_; }

  double value(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;

 private:
  SyntheticObjective() = default;

  Kind kind_{Kind::Quadratic};
  int dim_{0};
  double smoothness_{0.0};
  double noise_sigma_{0.0};
  Eigen::VectorXd diag_;      // quadratic curvature
  Eigen::MatrixXd features_;  // logistic rows
  Eigen::VectorXd labels_;    // +-1
  double ridge_{0.0};
};

// Per-microbatch freezing policy. Probabilities are *update* probabilities;
// ratios are *freeze* ratios.
class MaskPolicy {
 public:
  enum class Kind { None, UniformBernoulli, UniformExactCount, PlanDriven };

  static MaskPolicy none();
  static MaskPolicy uniform_bernoulli(double update_probability);
  static MaskPolicy uniform_exact_count(double freeze_ratio);
  // Coordinates are split into `stages` contiguous blocks; microbatch m
  // freezes block s with the plan's stable ratio for b(m, s), or the ramped
  // ratio when a step inside the progressive phase is requested.
  static MaskPolicy plan_driven(const FreezePlan& plan, const PhasePlan& phase, int microbatches,
                                int stages, std::optional<int> step = std::nullopt);

  Kind kind() const { return kind_; }
  int microbatches() const { return microbatches_; }  // 0 = any

  // Freeze probability for (microbatch m, coordinate j) given dimension d.
  double freeze_probability(int m, int j, int d) const;
  // Update-probability vector averaged over microbatches.
  Eigen::VectorXd update_probabilities(int microbatches, int d) const;
  double min_update_probability(int microbatches, int d) const;

  // Draw the update mask (1 = updated) for one microbatch.
  Eigen::VectorXd draw_update_mask(int m, int d, Rng& rng) const;

  std::string describe() const;

 private:
  Kind kind_{Kind::None};
  double p_update_{1.0};
  double freeze_ratio_{0.0};
  Eigen::MatrixXd afr_;  // microbatch x stage, plan-driven only
  int microbatches_{0};
  int stages_{0};

  int block_of(int j, int d) const;
};

struct SgdHyper {
  double eta{0.1};
  int microbatches{1};
  int total_steps{1000};
  bool check_stepsize{false};
  double divergence_guard{1e12};
  // stop as soon as the running-average squared gradient norm reaches this
  std::optional<double> stop_at_eps{};
};

struct SgdRun {
  std::vector<double> grad_sq_norms;   // ||grad F(theta_t)||^2, t = 1..T
  std::vector<double> masked_energy;   // sum_j p_bar_j (d_j F)^2 per step
  Eigen::VectorXd p_bar;               // per-coordinate mean update probability
  Eigen::VectorXd theta_final;
  double final_value{0.0};
  double eta{0.0};
  int microbatches{0};
  double p_min{1.0};
  std::string policy{};
  std::uint64_t seed{0};
};

static constexpr int kNotReached = -1;

SgdRun run_masked_sgd(const SyntheticObjective& objective, const MaskPolicy& policy,
                      const SgdHyper& hyper, const Eigen::VectorXd& theta0, std::uint64_t seed);

// One masked microbatch-average update direction at a fixed point.
Eigen::VectorXd masked_update_sample(const SyntheticObjective& objective, const MaskPolicy& policy,
                                     const Eigen::VectorXd& theta, int microbatches, Rng& rng);

// Smallest T with running-average squared gradient norm <= eps; kNotReached
// when the horizon never satisfies it.
int steps_to_epsilon(const SgdRun& run, double eps);

// Gradient-energy-weighted effective update probability over the first
// `horizon` steps (full run when omitted).
double estimate_p_eff(const SgdRun& run, std::optional<int> horizon = std::nullopt);

struct ScalingRow {
  double p{1.0};
  int trials_used{0};
  int not_reached{0};
  double mean_t_eps{0.0};
  double ratio_vs_baseline{0.0};
  double p_eff_hat{1.0};
};

struct ScalingTable {
  std::vector<ScalingRow> rows;
  double baseline_mean_t{0.0};
  double eps{0.0};
};

ScalingTable scaling_experiment(const SyntheticObjective& objective,
                                const std::vector<double>& p_list, double eps, int trials,
                                const SgdHyper& hyper, const Eigen::VectorXd& theta0,
                                std::uint64_t base_seed);

struct TtaReport {
  double kappa{1.0};          // realized per-step time ratio
  double p_eff_hat{1.0};
  double mean_t_ours{0.0};
  double mean_t_base{0.0};
  double measured_ratio{0.0};
  double predicted_ratio{0.0};  // kappa / p_eff_hat
  int trials_used{0};
  int not_reached{0};
};

TtaReport tta_experiment(const SyntheticObjective& objective, const FreezePlan& plan,
                         const PhasePlan& phase, int stages, double baseline_step_ms,
                         double ours_step_ms, double eps, int trials, const SgdHyper& hyper,
                         const Eigen::VectorXd& theta0, std::uint64_t base_seed);

}  // namespace pipefreeze
