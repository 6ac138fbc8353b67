#include "gridfdi/estimation.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

namespace gridfdi {

WlsEstimate wls_estimate(const MeasurementVector& z,
                         const MeasurementMatrix& h, const NoiseModel& r) {
  const int m = h.m();
  const int n = h.n_free();
  if (z.size() != m)
    throw ContractError("wls: z length " + std::to_string(z.size()) +
                        " does not match H rows " + std::to_string(m));
  if (r.sigma.size() != m)
    throw ContractError("wls: sigma length does not match H rows");

  // Whitened system: A = R^-1/2 H, b = R^-1/2 z.
  const Eigen::VectorXd inv_sigma = r.sigma.cwiseInverse();
  const Eigen::MatrixXd a = inv_sigma.asDiagonal() * h.h;
  const Eigen::VectorXd b = inv_sigma.cwiseProduct(z);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < n)
    throw SingularSystemError("wls: H is rank deficient (rank " +
                              std::to_string(qr.rank()) + " of " +
                              std::to_string(n) + ")");

  WlsEstimate estimate;
  estimate.x_hat.angles = qr.solve(b);
  estimate.residual = z - h.h * estimate.x_hat.angles;
  estimate.j_value =
      inv_sigma.cwiseProduct(estimate.residual).squaredNorm();
  return estimate;
}

double chi_square_threshold(int dof, double alpha) {
  if (dof < 1) throw ContractError("chi-square: dof must be >= 1");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw ContractError("chi-square: alpha must lie in (0, 1)");
  const boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::quantile(boost::math::complement(dist, alpha));
}

StaticVerdict static_detect(const MeasurementVector& z,
                            const MeasurementMatrix& h, const NoiseModel& r,
                            double alpha) {
  const int dof = h.m() - h.n_free();
  if (dof < 1)
    throw ContractError("static detect: needs m - n_free >= 1, got " +
                        std::to_string(dof));
  const WlsEstimate estimate = wls_estimate(z, h, r);
  StaticVerdict verdict;
  verdict.statistic = estimate.j_value;
  verdict.threshold = chi_square_threshold(dof, alpha);
  verdict.is_bad = verdict.statistic > verdict.threshold;
  return verdict;
}

StaticVerdict static_detect_l2(const MeasurementVector& z,
                               const MeasurementMatrix& h, double tau) {
  NoiseModel identity;
  identity.sigma = Eigen::VectorXd::Ones(h.m());
  const WlsEstimate estimate = wls_estimate(z, h, identity);
  StaticVerdict verdict;
  verdict.statistic = estimate.residual.norm();
  verdict.threshold = tau;
  verdict.is_bad = verdict.statistic > verdict.threshold;
  return verdict;
}

}  // namespace gridfdi
