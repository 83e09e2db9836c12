#include "cct/variance.hpp"

#include "cct/errors.hpp"
#include "cct/numeric.hpp"

namespace cct {

namespace {

SandwichParts assemble(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& corrected_rows) {
  const int n = static_cast<int>(corrected_rows.rows());
  SandwichParts parts;
  parts.bread = bread;
  parts.meat = corrected_rows.transpose() * corrected_rows / n;
  const Eigen::MatrixXd binv = guarded_inverse<SingularBread>(bread, "sandwich: singular bread");
  Eigen::MatrixXd cov = binv * parts.meat * binv.transpose() / n;
  parts.covariance = 0.5 * (cov + cov.transpose());  // symmetrize rounding noise
  return parts;
}

}  // namespace

SandwichParts sandwich_plain(const Eigen::MatrixXd& phi_rows, const Eigen::MatrixXd& jacobian) {
  return assemble(jacobian, phi_rows);
}

SandwichParts sandwich_nuisance_corrected(const Eigen::MatrixXd& phi_rows,
                                          const Eigen::MatrixXd& phi_aft_rows,
                                          const Eigen::MatrixXd& d_phi_d_theta,
                                          const Eigen::MatrixXd& d_phi_d_eta,
                                          const Eigen::MatrixXd& d_phi_aft_d_eta) {
  const Eigen::MatrixXd minv = guarded_inverse<SingularNuisanceInformation>(
      d_phi_aft_d_eta, "sandwich: singular nuisance information");
  const Eigen::MatrixXd corrected =
      phi_rows - phi_aft_rows * (d_phi_d_eta * minv).transpose();
  return assemble(d_phi_d_theta, corrected);
}

Eigen::MatrixXd influence_rows(const SandwichParts& parts, const Eigen::MatrixXd& phi_rows) {
  const Eigen::MatrixXd binv =
      guarded_inverse<SingularBread>(parts.bread, "influence_rows: singular bread");
  return -(phi_rows * binv.transpose());
}

}  // namespace cct
