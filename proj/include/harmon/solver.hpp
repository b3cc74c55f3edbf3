#pragma once

#include <stdexcept>
#include <vector>

#include "harmon/tensor.hpp"

namespace harmon {

// Thrown when a trajectory produces a non-finite intermediate state.
struct SolverDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Timestep handed to a score model: the continuous time of the node the
// model is evaluated at, plus the number of model calls remaining after this
// one (steps-1 .. 0 over a run). Step-gated models key off the index.
struct Timestep {
    double time = 0.0;
    int index = 0;
};

// Noise-prediction interface. Implementations must be deterministic given
// (x, t) and their own construction parameters.
class ScoreModel {
  public:
    virtual ~ScoreModel() = default;
    virtual Tensor predict(const Tensor& x, Timestep t) const = 0;
};

// Variance-preserving schedule with a scaled-linear beta profile. signal()
// is 1 at t=0 and strictly decreasing; noise() is 0 at t=0 and strictly
// increasing. The discretization spans [t_min, t_max] with steps+1 nodes
// uniform in log-SNR, stored noisiest-first.
struct NoiseSchedule {
    int steps = 25;
    double t_min = 1e-3;
    double t_max = 1.0;
    double beta_start = 0.00085;  // per-step values of the 1000-step convention
    double beta_end = 0.012;
    std::vector<double> times;

    double signal(double t) const;
    double noise(double t) const;
    double log_snr(double t) const;

    void validate() const;

    static NoiseSchedule scaled_linear(int steps, double t_min = 1e-3, double t_max = 1.0);
};

// Deterministic second-order multistep (2M) DPM-Solver++ in the
// data-prediction parameterization. dpm_sample integrates noise -> data,
// dpm_invert runs the same integrator over the reversed discretization.
// steps == 0 returns the input unchanged.
Tensor dpm_sample(const Tensor& z_noisy, const ScoreModel& model, const NoiseSchedule& schedule);
Tensor dpm_invert(const Tensor& z_data, const ScoreModel& model, const NoiseSchedule& schedule);

}  // namespace harmon
