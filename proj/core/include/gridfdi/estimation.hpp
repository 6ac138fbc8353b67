#pragma once

#include "gridfdi/grid_model.hpp"

namespace gridfdi {

/// Weighted least-squares solution for one snapshot.
struct WlsEstimate {
  StateVector x_hat;
  Eigen::VectorXd residual;  // z - H * x_hat, length m
  double j_value = 0.0;      // residual' * R^-1 * residual
};

/// Chi-square bad-data decision for one snapshot.
struct StaticVerdict {
  bool is_bad = false;
  double statistic = 0.0;
  double threshold = 0.0;
};

inline constexpr double kDefaultAlpha = 0.05;

/// x_hat = argmin (z - Hx)' R^-1 (z - Hx), solved by Householder QR of
/// R^-1/2 H for conditioning. Throws SingularSystemError on rank loss.
WlsEstimate wls_estimate(const MeasurementVector& z,
                         const MeasurementMatrix& h, const NoiseModel& r);

/// tau with P(chi2_dof > tau) = alpha.
double chi_square_threshold(int dof, double alpha);

/// J statistic against the chi-square tail at m - n_free degrees of freedom.
StaticVerdict static_detect(const MeasurementVector& z,
                            const MeasurementMatrix& h, const NoiseModel& r,
                            double alpha = kDefaultAlpha);

/// Plain ||z - H x_hat||_2 with R treated as identity (the reduced form the
/// DC literature quotes); threshold supplied by the caller.
StaticVerdict static_detect_l2(const MeasurementVector& z,
                               const MeasurementMatrix& h, double tau);

}  // namespace gridfdi
