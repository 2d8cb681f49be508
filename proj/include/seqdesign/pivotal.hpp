#pragma once

namespace seqdesign::pivotal {

// Standard normal distribution function.
double normal_cdf(double x);

// Inverse of normal_cdf. Throws std::domain_error unless 0 < p < 1.
double normal_quantile(double p);

// Right-tail cutoff q with P(Z > q) = alpha.
inline double upper_cutoff(double alpha) { return normal_quantile(1.0 - alpha); }

struct Options {
  double delta_floor = 0.05;  // lower bound on the effect used for power
  int n_max = 2000;           // cap on the pivotal-trial size
};

struct Result {
  int n_total = 0;         // even, >= 2
  double delta_star = 0;   // effect size used for the power calculation
  double rejection_prob = 0;
};

// Smallest even N >= 4 ((q_alpha + q_beta) / delta*)^2, delta* = max(mean - sd, floor),
// capped at n_max.
int sample_size(double delta95_mean, double delta95_sd, double alpha, double beta,
                const Options& options = {});

// Uncapped real-valued bound 4 ((q_alpha + q_beta) / delta)^2.
double sample_size_bound(double delta, double alpha, double beta);

// Posterior predictive probability that the pivotal trial rejects H0.
double rejection_prob(double delta95_mean, double delta95_sd, double n_total, double alpha);

Result evaluate(double delta95_mean, double delta95_sd, double alpha, double beta,
                const Options& options = {});

}  // namespace seqdesign::pivotal
