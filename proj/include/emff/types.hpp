#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace emff {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Two satellites closer than this are treated as coincident and the
// inverse-quartic interaction terms are refused (domain error).
inline constexpr double kMinSeparationM = 1e-9;

// sign with sgn(0) = 0; the allocation formulas rely on the exact-zero branch.
inline double sgn(double x) { return (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Lexicographic enumeration of unordered satellite pairs:
// (0,1),(0,2),...,(0,n-1),(1,2),...,(n-2,n-1).  Indices are 0-based.
class PairIndex {
 public:
  explicit PairIndex(int n) : n_(n) {
    if (n < 2) throw std::invalid_argument("PairIndex: need at least 2 satellites");
    lookup_.assign(n, std::vector<int>(n, -1));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        lookup_[i][j] = lookup_[j][i] = static_cast<int>(pairs_.size());
        pairs_.emplace_back(i, j);
      }
  }

  int n() const { return n_; }
  int count() const { return static_cast<int>(pairs_.size()); }

  // Unordered lookup; i and j may come in either order.
  int at(int i, int j) const {
    if (i == j || i < 0 || j < 0 || i >= n_ || j >= n_)
      throw std::out_of_range("PairIndex: invalid satellite pair (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
    return lookup_[i][j];
  }

  std::pair<int, int> pair(int k) const { return pairs_.at(k); }
  int lo(int k) const { return pairs_.at(k).first; }
  int hi(int k) const { return pairs_.at(k).second; }

  // Sign of satellite `sat` in pair k's difference r_lo - r_hi
  // (equivalently the entry of the pair-incidence matrix): +1, -1, or 0.
  double sign(int sat, int k) const {
    if (sat == lo(k)) return 1.0;
    if (sat == hi(k)) return -1.0;
    return 0.0;
  }

  bool contains(int sat, int k) const { return sat == lo(k) || sat == hi(k); }

 private:
  int n_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<std::vector<int>> lookup_;
};

// Positions and velocities of the formation, one 3-vector per satellite.
struct FormationState {
  std::vector<Vec3> r;
  std::vector<Vec3> v;

  int n() const { return static_cast<int>(r.size()); }

  static FormationState zero(int n) {
    FormationState s;
    s.r.assign(n, Vec3::Zero());
    s.v.assign(n, Vec3::Zero());
    return s;
  }

  // Stacked [r_1..r_n, v_1..v_n] ordering.
  VecX flatten() const {
    VecX x(6 * n());
    for (int i = 0; i < n(); ++i) {
      x.segment<3>(3 * i) = r[i];
      x.segment<3>(3 * (n() + i)) = v[i];
    }
    return x;
  }

  static FormationState unflatten(const VecX& x) {
    if (x.size() % 6 != 0) throw std::invalid_argument("FormationState: flat size not 6n");
    const int n = static_cast<int>(x.size() / 6);
    FormationState s = zero(n);
    for (int i = 0; i < n; ++i) {
      s.r[i] = x.segment<3>(3 * i);
      s.v[i] = x.segment<3>(3 * (n + i));
    }
    return s;
  }
};

// One 3-vector per unordered pair, in PairIndex order.  Used for both the
// pair force demand (nu) and the normalized pair force (zeta).
struct ForceVector {
  std::vector<Vec3> f;

  int pairs() const { return static_cast<int>(f.size()); }

  static ForceVector zero(int pair_count) {
    ForceVector z;
    z.f.assign(pair_count, Vec3::Zero());
    return z;
  }

  VecX flatten() const {
    VecX x(3 * pairs());
    for (int k = 0; k < pairs(); ++k) x.segment<3>(3 * k) = f[k];
    return x;
  }

  static ForceVector unflatten(const VecX& x) {
    if (x.size() % 3 != 0) throw std::invalid_argument("ForceVector: flat size not 3*pairs");
    ForceVector z = zero(static_cast<int>(x.size() / 3));
    for (int k = 0; k < z.pairs(); ++k) z.f[k] = x.segment<3>(3 * k);
    return z;
  }
};

struct StateDerivative {
  std::vector<Vec3> rdot;
  std::vector<Vec3> vdot;
};

// Joint state of the formation plus the first-order control lag.
struct CascadeState {
  FormationState x;
  ForceVector nu;
};

}  // namespace emff
