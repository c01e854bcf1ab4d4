#pragma once

#include "rcs/synth.hpp"
#include "rcs/transforms.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rcs {

/// Raised when a certificate cannot be built: ||A_{J^c T}|| >= 1 or a
/// restricted Gram system is singular.
class CertificateInapplicable : public Error {
 public:
  using Error::Error;
};

/// Dual pair (v, w) with v certifying the signal signs and w the error signs.
struct CertificatePair {
  Vec vx;
  Vec we;
  double lambda = 0.0;
};

/// w_T = 0, w_{T^c} = lambda A*_{J^c T^c} (A_{J^c T^c} A*_{J^c T^c})^{-1} [sgn_e; 0].
/// `sgn_e` is ordered like sets.error. The Gram system equals
/// I - A_{J^c T} A*_{J^c T} and is solved by conjugate gradients.
Vec construct_we(const OrthoTransform& a, const SupportSets& sets, double lambda,
                 const Vec& sgn_e);

/// v = A*_{J.} A_{JT} (A*_{JT} A_{JT})^{-1} sgn_x, with `sgn_x` ordered like sets.signal.
Vec construct_vx(const OrthoTransform& a, const SupportSets& sets, const Vec& sgn_x);

struct ConditionCheck {
  std::string name;
  double value = 0.0;      // measured sup-norm (residual for identities)
  double threshold = 0.0;  // strict bound, or tolerance for identities
  bool pass = false;

  double slack() const { return threshold - value; }
};

struct CertificateReport {
  CertificatePair pair;
  /// v_T = sgn, ||v_{T^c}|| < 3/8, A_S v = 0, ||A_J v|| < 3 lambda/8, A_{Omega^c} v = 0,
  /// then w_T = 0, ||w_{T^c}|| < 3/8, A_S w = lambda sgn, ||A_J w|| < 3 lambda/8,
  /// A_{Omega^c} w = 0.
  std::vector<ConditionCheck> conditions;
  double norm_jc_t = 0.0;  // ||A_{J^c T}||
  bool identities_pass = false;
  bool pass = false;
};

inline constexpr double kIdentityTolerance = 1e-8;

/// Builds both vectors from the instance signs and evaluates the ten
/// conditions. Inequalities are strict; identities are held to 1e-8.
CertificateReport check_certificate(const OrthoTransform& a, const ProblemInstance& inst,
                                    double lambda);

struct Lemma2Report {
  int trials = 0;
  int violations = 0;             // any step of the certified chain fails
  int inequality_violations = 0;  // the inequality itself
  double min_margin = 0.0;       // min over trials of lhs - rhs
  double min_witness_margin = 0.0;
};

/// Draws `trials` perturbations h (Gaussian, scales 1e-6..1e2), sets
/// f = -A_Omega h and checks
///   ||x + h||_1 + lambda ||e + f||_1 >= ||x||_1 + lambda ||e||_1
///                                      + (||h_{T^c}||_1 + lambda ||A_J h||_1) / 4.
/// The certificate enters through z^x = v + w: the subgradient bound
/// lhs >= ||x||_1 + lambda ||e||_1 + ||h_{T^c}||_1 - <z^x_{T^c}, h_{T^c}>
///        + lambda ||A_J h||_1 + lambda <z^e_J, A_J h>
/// must also hold, and its excess term must dominate the quarter term.
Lemma2Report check_lemma2(const OrthoTransform& a, const ProblemInstance& inst,
                          const CertificatePair& pair, int trials, std::uint64_t seed);

struct IsometryReport {
  double epsilon = 0.0;        // ||I - A*_{JT} A_{JT} / rho0||
  double norm_jc_t = 0.0;      // ||A_{J^c T}||
  double jct_bound = 0.0;      // sqrt(1 - rho0 / 2)
  double norm_st_gram = 0.0;   // ||A*_{ST} A_{ST}||
  double st_gram_bound = 0.0;  // (1 + sqrt(mu k ln n / s)) eta rho
  bool jct_holds = false;
  bool st_gram_holds = false;
  bool converged = false;
};

/// Power-iteration estimates of the restricted spectral quantities, matrix-free.
IsometryReport check_isometry(const OrthoTransform& a, const SupportSets& sets, double rho0);

struct OracleEstimate {
  Vec x;  // length n, supported on T
  Vec e;  // length |Omega|, supported on the S positions
};

/// Least squares on the clean rows for x_T, then e_S = y_S - A_{ST} x_T.
OracleEstimate oracle_estimate(const OrthoTransform& a, const SupportSets& sets, const Vec& y);

/// CSV header and row for one certified seed.
std::string certificate_csv_header();
std::string certificate_csv_row(std::uint64_t seed, const CertificateReport& cert,
                                const IsometryReport& iso, const Lemma2Report* lemma2);

}  // namespace rcs
