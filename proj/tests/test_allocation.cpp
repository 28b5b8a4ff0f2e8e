#include <doctest.h>

#include <cmath>
#include <limits>

#include "emff/allocation.hpp"
#include "emff/model.hpp"
#include "oracles.hpp"

using namespace emff;
using emff::testing::rel_err;
using emff::testing::shell_rand;
using emff::testing::unit_rand;
using emff::testing::urand;
using emff::testing::vrand;

namespace {

Vec3 scaled_demand(std::mt19937_64& rng) {
  return std::pow(10.0, urand(rng, -6.0, 6.0)) * unit_rand(rng);
}

}  // namespace

TEST_CASE("allocated amplitude pair reproduces the demanded force") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 500; ++trial) {
    const Vec3 r = shell_rand(rng, 0.2, 20.0);
    const Vec3 f = scaled_demand(rng);
    const AmplitudePair c = amplitude_pair(r, f);
    CHECK((dipole_force_f(r, c.c1, c.c2) - f).norm() <= 1e-10 * (1.0 + f.norm()));
  }
}

TEST_CASE("allocation handles the degenerate demand cones") {
  SUBCASE("zero demand allocates zero amplitudes") {
    const AmplitudePair c = amplitude_pair(Vec3(1.5, -0.3, 2.0), Vec3::Zero());
    CHECK(c.c1.norm() == 0.0);
    CHECK(c.c2.norm() == 0.0);
  }
  SUBCASE("demand exactly along the separation axis") {
    for (const double sign : {1.0, -1.0}) {
      const Vec3 r(3.0, 0.0, 0.0);
      const Vec3 f(sign * 7.0, 0.0, 0.0);
      const AmplitudePair c = amplitude_pair(r, f);
      CHECK((dipole_force_f(r, c.c1, c.c2) - f).norm() <= 1e-10 * (1.0 + f.norm()));
      // Axial demand needs only axial moments.
      CHECK(std::abs(c.c1.y()) <= 1e-12 * c.c1.norm());
      CHECK(std::abs(c.c2.z()) <= 1e-12 * c.c2.norm());
    }
  }
  SUBCASE("demand exactly orthogonal to the separation") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 200; ++trial) {
      const double a = urand(rng, -8, 8), b = urand(rng, -8, 8), cz = urand(rng, -8, 8);
      const Vec3 r(a, b, 0.0);
      const Vec3 f(b, -a, cz);
      REQUIRE(r.dot(f) == 0.0);
      const AmplitudePair c = amplitude_pair(r, f);
      CHECK((dipole_force_f(r, c.c1, c.c2) - f).norm() <= 1e-10 * (1.0 + f.norm()));
      // Constructive split on the orthogonal cone: |c1|^2 = 2 |c2|^2.
      CHECK(rel_err(c.c1.squaredNorm(), 2.0 * c.c2.squaredNorm()) < 1e-10);
    }
  }
  SUBCASE("error contract") {
    CHECK_THROWS_AS(amplitude_pair(Vec3::Zero(), Vec3::UnitX()), std::domain_error);
    CHECK_THROWS_AS(
        amplitude_pair(Vec3(std::numeric_limits<double>::quiet_NaN(), 0, 0), Vec3::UnitX()),
        std::invalid_argument);
  }
}

TEST_CASE("amplitude magnitudes are equal off the orthogonal cone") {
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 500; ++trial) {
    Vec3 r, f;
    do {
      r = shell_rand(rng, 0.2, 20.0);
      f = scaled_demand(rng);
    } while (std::abs(r.dot(f)) <= 1e-6 * r.norm() * f.norm());
    const AmplitudePair c = amplitude_pair(r, f);
    CHECK(rel_err(c.c1.norm(), c.c2.norm()) < 1e-10);
  }
}

TEST_CASE("corrected cross product matches the naive one and fixes cancellation") {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 a = vrand(rng, -5, 5), b = vrand(rng, -5, 5);
    const Vec3 naive = a.cross(b);
    CHECK((stable_cross(a, b) - naive).norm() <= 1e-14 * (1.0 + naive.norm()));
  }
  // Near-parallel vectors: the subtraction cancels catastrophically; the
  // compensated product keeps the tiny residual accurate.
  const Vec3 a(1.0, 1.0 + 1e-13, 1.0);
  const Vec3 b(1.0 + 1e-13, 1.0, 1.0);
  const Vec3 c = stable_cross(a, b);
  // Exact cross: (1*1 - 1*1, ...) computed in extended arithmetic:
  // x = (1+1e-13)*... ; verify against long-double evaluation.
  const long double ax = 1.0L, ay = 1.0L + 1e-13L, az = 1.0L;
  const long double bx = 1.0L + 1e-13L, by = 1.0L, bz = 1.0L;
  const Vec3 expect(static_cast<double>(ay * bz - az * by), static_cast<double>(az * bx - ax * bz),
                    static_cast<double>(ax * by - ay * bx));
  CHECK((c - expect).norm() <= 1e-16);
}

TEST_CASE("power bound strictly dominates the allocated amplitude norms") {
  std::mt19937_64 rng(89);
  const double eps1 = 1e-3, eps2 = 1e-3;
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec3 r = shell_rand(rng, 0.2, 20.0);
    const Vec3 f = trial % 17 == 0 ? Vec3(Vec3::Zero()) : scaled_demand(rng);
    const AmplitudePair c = amplitude_pair(r, f);
    const double psi = power_bound_psi(r, f, eps1, eps2);
    CHECK(psi > c.c1.squaredNorm());
    CHECK(c.c1.squaredNorm() >= c.c2.squaredNorm());
  }
  CHECK_THROWS_AS(power_bound_psi(Vec3::Zero(), Vec3::UnitX(), eps1, eps2), std::domain_error);
}

TEST_CASE("power bound gradients match central finite differences") {
  std::mt19937_64 rng(97);
  const double eps1 = 1e-3, eps2 = 1e-3;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 r = shell_rand(rng, 0.4, 10.0);
    const Vec3 f = std::pow(10.0, urand(rng, -2.0, 4.0)) * unit_rand(rng);
    Vec3 dr, df;
    power_bound_psi_gradient(r, f, eps1, eps2, &dr, &df);

    Vec3 fd_r, fd_f;
    for (int axis = 0; axis < 3; ++axis) {
      const double hr = 1e-6 * (1.0 + std::abs(r[axis]));
      Vec3 rp = r, rm = r;
      rp[axis] += hr;
      rm[axis] -= hr;
      fd_r[axis] =
          (power_bound_psi(rp, f, eps1, eps2) - power_bound_psi(rm, f, eps1, eps2)) / (2.0 * hr);
      const double hf = 1e-6 * (1.0 + std::abs(f[axis]));
      Vec3 fp = f, fm = f;
      fp[axis] += hf;
      fm[axis] -= hf;
      fd_f[axis] =
          (power_bound_psi(r, fp, eps1, eps2) - power_bound_psi(r, fm, eps1, eps2)) / (2.0 * hf);
    }
    CHECK((dr - fd_r).norm() <= 1e-5 * (1.0 + fd_r.norm()));
    CHECK((df - fd_f).norm() <= 1e-5 * (1.0 + fd_f.norm()));
  }
}

TEST_CASE("formation-wide allocation distributes the per-pair amplitudes") {
  const PairIndex pairs(3);
  std::mt19937_64 rng(101);
  FormationState s = FormationState::zero(3);
  s.r[0] = Vec3(0, 0, 0);
  s.r[1] = Vec3(2.0, 0.5, -0.8);
  s.r[2] = Vec3(-1.5, 2.5, 0.3);
  ForceVector nu = ForceVector::zero(3);
  for (int k = 0; k < 3; ++k) nu.f[k] = vrand(rng, -1e5, 1e5);

  const AmplitudeSet amps = allocate_all(s, nu, pairs);
  for (int k = 0; k < 3; ++k) {
    const Vec3 r = pair_separation(s, pairs, k);
    CHECK((dipole_force_f(r, amps.lo[k], amps.hi[k]) - nu.f[k]).norm() <=
          1e-10 * (1.0 + nu.f[k].norm()));
  }

  FormationState collided = s;
  collided.r[2] = s.r[0];
  CHECK_THROWS_WITH_AS(static_cast<void>(allocate_all(collided, nu, pairs)),
                       doctest::Contains("satellites 1 and 3"), std::domain_error);

  CHECK_THROWS_AS(static_cast<void>(allocate_all(s, ForceVector::zero(2), pairs)),
                  std::invalid_argument);
}
