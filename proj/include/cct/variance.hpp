#pragma once

#include <Eigen/Dense>

namespace cct {

/// A-hat, B-hat and the assembled sandwich covariance A^-1 B A^-T / n.
struct SandwichParts {
  Eigen::MatrixXd bread;       // A-hat = n^-1 sum d phi_i / d theta'
  Eigen::MatrixXd meat;        // B-hat
  Eigen::MatrixXd covariance;  // A^-1 B A^-T / n
};

/// Plain sandwich: B-hat = n^-1 sum phi_i phi_i'. `jacobian` is A-hat.
SandwichParts sandwich_plain(const Eigen::MatrixXd& phi_rows, const Eigen::MatrixXd& jacobian);

/// Nuisance-corrected sandwich: per-row influence contribution
/// phi_i - D_eta M^-1 phi_aft_i with D_eta = n^-1 sum d phi_i / d eta',
/// M = n^-1 sum d phi_aft_i / d eta'.
SandwichParts sandwich_nuisance_corrected(const Eigen::MatrixXd& phi_rows,
                                          const Eigen::MatrixXd& phi_aft_rows,
                                          const Eigen::MatrixXd& d_phi_d_theta,
                                          const Eigen::MatrixXd& d_phi_d_eta,
                                          const Eigen::MatrixXd& d_phi_aft_d_eta);

/// Influence rows -A^-1 phi_i (n x p); rows sum to ~0 at the solution.
Eigen::MatrixXd influence_rows(const SandwichParts& parts, const Eigen::MatrixXd& phi_rows);

}  // namespace cct
