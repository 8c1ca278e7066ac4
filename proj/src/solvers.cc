#include "rsfm/solvers.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "rsfm/numerics.h"
#include "rsfm/polynomial.h"

namespace rsfm {
namespace {

bool Collinear(const Vector3& a, const Vector3& b, const Vector3& c) {
  const Vector3 e1 = b - a;
  const Vector3 e2 = c - a;
  const double n1 = e1.norm(), n2 = e2.norm();
  if (n1 == 0.0 || n2 == 0.0) return true;
  return e1.cross(e2).norm() < 1e-6 * n1 * n2;
}

// Gauss-Newton on the three pairwise distance equations
// |o_i + l_i d_i - o_j - l_j d_j|^2 = D_ij^2.
void PolishDepths(const std::array<Vector3, 3>& o, const std::array<Vector3, 3>& d,
                  const std::array<double, 3>& dist_sq, Eigen::Vector3d* depth) {
  static constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int it = 0; it < 5; ++it) {
    Eigen::Vector3d f;
    Matrix3 jac = Matrix3::Zero();
    for (int k = 0; k < 3; ++k) {
      const int i = kPairs[k][0], j = kPairs[k][1];
      const Vector3 diff = o[i] + (*depth)[i] * d[i] - o[j] - (*depth)[j] * d[j];
      f[k] = diff.squaredNorm() - dist_sq[k];
      jac(k, i) = 2.0 * diff.dot(d[i]);
      jac(k, j) = -2.0 * diff.dot(d[j]);
    }
    const Eigen::Vector3d step = jac.fullPivLu().solve(f);
    if (!step.allFinite()) return;
    *depth -= step;
    if (step.norm() < 1e-15 * std::max(1.0, depth->norm())) return;
  }
}

// Rigid pose mapping world points onto the camera-frame points.
SE3Pose AlignRigid(const std::array<Vector3, 3>& world, const std::array<Vector3, 3>& cam) {
  Eigen::Matrix3d src, dst;
  for (int i = 0; i < 3; ++i) {
    src.col(i) = world[i];
    dst.col(i) = cam[i];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
  return SE3Pose(t.topLeftCorner<3, 3>(), t.topRightCorner<3, 1>());
}

// Worst angular residual of the pose against the observation rays.
double MaxRayResidual(const SE3Pose& pose, const std::vector<RayPointCorrespondence>& corrs) {
  double worst = 0.0;
  for (const auto& c : corrs) {
    const Vector3 v = pose * c.world - c.ray.origin;
    worst = std::max(worst, AngleBetween(v, c.ray.direction.vec()));
  }
  return worst;
}

// Bivariate polynomial in (l2, l3): entry k holds the l3-polynomial
// multiplying l2^k.
using BiPoly = std::vector<Poly>;

BiPoly BiAdd(const BiPoly& a, const BiPoly& b) {
  BiPoly out(std::max(a.size(), b.size()));
  for (size_t i = 0; i < a.size(); ++i) out[i] = PolyAdd(out[i], a[i]);
  for (size_t i = 0; i < b.size(); ++i) out[i] = PolyAdd(out[i], b[i]);
  return out;
}

BiPoly BiMul(const BiPoly& a, const BiPoly& b) {
  BiPoly out(a.size() + b.size() - 1);
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < b.size(); ++j) out[i + j] = PolyAdd(out[i + j], PolyMul(a[i], b[j]));
  }
  return out;
}

BiPoly BiScale(const BiPoly& a, double s) {
  BiPoly out(a);
  for (auto& p : out) p = PolyScale(p, s);
  return out;
}

}  // namespace

PixelPair PixelPair::FromNormalized(const Vector3& x_a, const Vector3& x_b) {
  PixelPair pair;
  pair.x_a = x_a / x_a.z();
  pair.x_b = x_b / x_b.z();
  pair.pixel_a = pair.x_a.head<2>();
  pair.pixel_b = pair.x_b.head<2>();
  return pair;
}

Expected<std::vector<SE3Pose>> SolveP3P(const std::vector<RayPointCorrespondence>& corrs) {
  if (corrs.size() != 3) return {ErrorCode::kInvalidArgument, "P3P needs 3 correspondences"};
  const Vector3& x1 = corrs[0].world;
  const Vector3& x2 = corrs[1].world;
  const Vector3& x3 = corrs[2].world;
  if (Collinear(x1, x2, x3)) return {ErrorCode::kDegenerate, "collinear world points"};

  const Vector3 origin = corrs[0].ray.origin;
  const Vector3& d1 = corrs[0].ray.direction.vec();
  const Vector3& d2 = corrs[1].ray.direction.vec();
  const Vector3& d3 = corrs[2].ray.direction.vec();
  const double a2 = (x2 - x3).squaredNorm();
  const double b2 = (x1 - x3).squaredNorm();
  const double c2 = (x1 - x2).squaredNorm();
  const double ca = d2.dot(d3), cb = d1.dot(d3), cg = d1.dot(d2);

  // Depth ratios u = s2 / s1, v = s3 / s1. Both constraints below are monic
  // quadratics in u; their resultant is Grunert's quartic in v.
  //   u^2 - 2 cg u + 1 - (c2/b2)(1 + v^2 - 2 cb v) = 0
  //   u^2 - 2 ca v u + v^2 - (a2/b2)(1 + v^2 - 2 cb v) = 0
  const double kc = c2 / b2, ka = a2 / b2;
  const Poly b_1 = {-2.0 * cg};
  const Poly c_1 = {1.0 - kc, 2.0 * kc * cb, -kc};
  const Poly b_2 = {0.0, -2.0 * ca};
  const Poly c_2 = {-ka, 2.0 * ka * cb, 1.0 - ka};
  const Poly dc = PolySub(c_1, c_2);
  const Poly db = PolySub(b_1, b_2);
  const Poly quartic =
      PolyAdd(PolyMul(dc, dc),
              PolyMul(db, PolySub(PolyMul(b_1, c_2), PolyMul(b_2, c_1))));

  std::vector<SE3Pose> poses;
  for (const double v : PolyRealRoots(quartic)) {
    if (!(v > 0.0)) continue;
    std::vector<double> us;
    const double dbv = PolyEval(db, v);
    if (std::abs(dbv) > 1e-12) {
      us.push_back(-PolyEval(dc, v) / dbv);
    } else {
      // Shared root degenerates the linear elimination; solve the quadratic.
      const double bb = PolyEval(b_1, v), cc = PolyEval(c_1, v);
      const double disc = bb * bb - 4.0 * cc;
      if (disc < 0.0) continue;
      us.push_back(0.5 * (-bb + std::sqrt(disc)));
      us.push_back(0.5 * (-bb - std::sqrt(disc)));
    }
    for (const double u : us) {
      if (!(u > 0.0)) continue;
      const double denom = 1.0 + v * v - 2.0 * v * cb;
      if (!(denom > 0.0)) continue;
      const double s1 = std::sqrt(b2 / denom);
      Eigen::Vector3d depth(s1, u * s1, v * s1);
      PolishDepths({origin, origin, origin}, {d1, d2, d3}, {c2, b2, a2}, &depth);
      if (!(depth.minCoeff() > 0.0)) continue;
      const SE3Pose pose = AlignRigid(
          {x1, x2, x3}, {origin + depth[0] * d1, origin + depth[1] * d2, origin + depth[2] * d3});
      if (MaxRayResidual(pose, corrs) < 1e-6) poses.push_back(pose);
    }
  }
  return poses;
}

Expected<std::vector<SE3Pose>> SolveGP3P(const std::vector<RayPointCorrespondence>& corrs) {
  if (corrs.size() != 3) return {ErrorCode::kInvalidArgument, "GP3P needs 3 correspondences"};
  std::array<Vector3, 3> world, origin, dir;
  for (int i = 0; i < 3; ++i) {
    world[i] = corrs[i].world;
    origin[i] = corrs[i].ray.origin;
    dir[i] = corrs[i].ray.direction.vec();
  }
  if (Collinear(world[0], world[1], world[2])) {
    return {ErrorCode::kDegenerate, "collinear world points"};
  }

  // Normalize so that the world triangle has unit mean side length and the
  // first ray starts at the origin.
  const double scale =
      ((world[0] - world[1]).norm() + (world[0] - world[2]).norm() +
       (world[1] - world[2]).norm()) / 3.0;
  std::array<Vector3, 3> o;
  for (int i = 0; i < 3; ++i) o[i] = (origin[i] - origin[0]) / scale;
  const double d12 = (world[0] - world[1]).squaredNorm() / (scale * scale);
  const double d13 = (world[0] - world[2]).squaredNorm() / (scale * scale);
  const double d23 = (world[1] - world[2]).squaredNorm() / (scale * scale);
  const Vector3 o12 = o[0] - o[1], o13 = o[0] - o[2], o23 = o[1] - o[2];
  const Vector3 &e1 = dir[0], &e2 = dir[1], &e3 = dir[2];

  // f12 = l1^2 + b12(l2) l1 + c12(l2), f13 = l1^2 + b13(l3) l1 + c13(l3).
  const Poly b12 = {2.0 * e1.dot(o12), -2.0 * e1.dot(e2)};
  const Poly c12 = {o12.squaredNorm() - d12, -2.0 * e2.dot(o12), 1.0};
  const Poly b13 = {2.0 * e1.dot(o13), -2.0 * e1.dot(e3)};
  const Poly c13 = {o13.squaredNorm() - d13, -2.0 * e3.dot(o13), 1.0};
  // f23 = l2^2 + p(l3) l2 + q(l3).
  const Poly p = {2.0 * e2.dot(o23), -2.0 * e2.dot(e3)};
  const Poly q = {o23.squaredNorm() - d23, -2.0 * e3.dot(o23), 1.0};

  // Resultant of f12 and f13 in l1: (c12 - c13)^2 + (b12 - b13)(b12 c13 - b13 c12).
  const BiPoly bc12 = {{c12[0]}, {c12[1]}, {c12[2]}};
  const BiPoly bb12 = {{b12[0]}, {b12[1]}};
  const BiPoly bc13 = {c13};
  const BiPoly bb13 = {b13};
  const BiPoly dc = BiAdd(bc12, BiScale(bc13, -1.0));
  const BiPoly db = BiAdd(bb12, BiScale(bb13, -1.0));
  BiPoly res = BiAdd(BiMul(dc, dc),
                     BiMul(db, BiAdd(BiMul(bb12, bc13), BiScale(BiMul(bb13, bc12), -1.0))));

  // Reduce modulo f23 in l2, leaving g1(l3) l2 + g0(l3).
  for (size_t k = res.size() - 1; k >= 2; --k) {
    const Poly lead = res[k];
    res[k - 1] = PolySub(res[k - 1], PolyMul(lead, p));
    res[k - 2] = PolySub(res[k - 2], PolyMul(lead, q));
    res[k] = {0.0};
  }
  const Poly g0 = res[0];
  const Poly g1 = res.size() > 1 ? res[1] : Poly{0.0};
  // Resultant of f23 and g1 l2 + g0 in l2: degree 8 in l3.
  const Poly octic = PolyAdd(PolySub(PolyMul(g0, g0), PolyMul(p, PolyMul(g0, g1))),
                             PolyMul(q, PolyMul(g1, g1)));

  std::vector<SE3Pose> poses;
  const std::array<double, 3> dist_sq = {d12, d13, d23};
  for (const double l3 : PolyRealRoots(octic)) {
    if (!std::isfinite(l3)) return {ErrorCode::kNumericalFailure, "non-finite root"};
    std::vector<double> l2s;
    const double g1v = PolyEval(g1, l3);
    if (std::abs(g1v) > 1e-12) {
      l2s.push_back(-PolyEval(g0, l3) / g1v);
    } else {
      const double pv = PolyEval(p, l3), qv = PolyEval(q, l3);
      const double disc = pv * pv - 4.0 * qv;
      if (disc < 0.0) continue;
      l2s.push_back(0.5 * (-pv + std::sqrt(disc)));
      l2s.push_back(0.5 * (-pv - std::sqrt(disc)));
    }
    for (const double l2 : l2s) {
      std::vector<double> l1s;
      const double dbv = PolyEval(b12, l2) - PolyEval(b13, l3);
      const double dcv = PolyEval(c12, l2) - PolyEval(c13, l3);
      if (std::abs(dbv) > 1e-12) {
        l1s.push_back(-dcv / dbv);
      } else {
        const double bv = PolyEval(b12, l2), cv = PolyEval(c12, l2);
        const double disc = bv * bv - 4.0 * cv;
        if (disc < 0.0) continue;
        l1s.push_back(0.5 * (-bv + std::sqrt(disc)));
        l1s.push_back(0.5 * (-bv - std::sqrt(disc)));
      }
      for (const double l1 : l1s) {
        Eigen::Vector3d depth(l1, l2, l3);
        PolishDepths(o, dir, dist_sq, &depth);
        if (!depth.allFinite() || !(depth.minCoeff() > 0.0)) continue;
        depth *= scale;
        const SE3Pose pose =
            AlignRigid(world, {origin[0] + depth[0] * dir[0], origin[1] + depth[1] * dir[1],
                               origin[2] + depth[2] * dir[2]});
        if (MaxRayResidual(pose, corrs) < 1e-6) poses.push_back(pose);
      }
    }
  }
  return poses;
}

namespace {

// Cubic polynomials in (x, y, z) over the 20 monomials below.
constexpr int kNumMonomials = 20;
constexpr int kMonomialExp[kNumMonomials][3] = {
    {3, 0, 0}, {0, 3, 0}, {2, 1, 0}, {1, 2, 0}, {2, 0, 1}, {2, 0, 0}, {0, 2, 1},
    {0, 2, 0}, {1, 1, 1}, {1, 1, 0}, {1, 0, 2}, {1, 0, 1}, {1, 0, 0}, {0, 1, 2},
    {0, 1, 1}, {0, 1, 0}, {0, 0, 3}, {0, 0, 2}, {0, 0, 1}, {0, 0, 0}};
constexpr int kMonoX = 12, kMonoY = 15, kMonoZ = 18, kMonoOne = 19;

using Cubic = std::array<double, kNumMonomials>;

struct MonomialTable {
  int product[kNumMonomials][kNumMonomials];
  MonomialTable() {
    int lookup[4][4][4];
    for (auto& a : lookup)
      for (auto& b : a)
        for (int& c : b) c = -1;
    for (int m = 0; m < kNumMonomials; ++m) {
      lookup[kMonomialExp[m][0]][kMonomialExp[m][1]][kMonomialExp[m][2]] = m;
    }
    for (int a = 0; a < kNumMonomials; ++a) {
      for (int b = 0; b < kNumMonomials; ++b) {
        const int i = kMonomialExp[a][0] + kMonomialExp[b][0];
        const int j = kMonomialExp[a][1] + kMonomialExp[b][1];
        const int k = kMonomialExp[a][2] + kMonomialExp[b][2];
        product[a][b] = (i + j + k <= 3) ? lookup[i][j][k] : -1;
      }
    }
  }
};

const MonomialTable& Monomials() {
  static const MonomialTable table;
  return table;
}

Cubic CubicMul(const Cubic& a, const Cubic& b) {
  const auto& table = Monomials();
  Cubic out{};
  for (int i = 0; i < kNumMonomials; ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; j < kNumMonomials; ++j) {
      if (b[j] == 0.0) continue;
      out[table.product[i][j]] += a[i] * b[j];
    }
  }
  return out;
}

double IntPow(double v, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= v;
  return r;
}

// Gauss-Newton on the ten cubic constraints in (x, y, z).
void PolishNullspaceCoefficients(const Eigen::Matrix<double, 10, 20>& constraints,
                                 Vector3* xyz) {
  for (int it = 0; it < 4; ++it) {
    Eigen::Matrix<double, 20, 1> mono;
    Eigen::Matrix<double, 20, 3> dmono;
    for (int m = 0; m < kNumMonomials; ++m) {
      const int* e = kMonomialExp[m];
      const double px = IntPow(xyz->x(), e[0]), py = IntPow(xyz->y(), e[1]),
                   pz = IntPow(xyz->z(), e[2]);
      mono[m] = px * py * pz;
      dmono(m, 0) = e[0] > 0 ? e[0] * IntPow(xyz->x(), e[0] - 1) * py * pz : 0.0;
      dmono(m, 1) = e[1] > 0 ? e[1] * px * IntPow(xyz->y(), e[1] - 1) * pz : 0.0;
      dmono(m, 2) = e[2] > 0 ? e[2] * px * py * IntPow(xyz->z(), e[2] - 1) : 0.0;
    }
    const Eigen::Matrix<double, 10, 1> f = constraints * mono;
    const Eigen::Matrix<double, 10, 3> jac = constraints * dmono;
    const Vector3 step = jac.colPivHouseholderQr().solve(f);
    if (!step.allFinite()) return;
    *xyz -= step;
    if (step.norm() < 1e-15 * std::max(1.0, xyz->norm())) return;
  }
}

Cubic CubicAdd(const Cubic& a, const Cubic& b, double sb = 1.0) {
  Cubic out;
  for (int i = 0; i < kNumMonomials; ++i) out[i] = a[i] + sb * b[i];
  return out;
}

}  // namespace

Expected<std::vector<Matrix3>> SolveFivePoint(const std::vector<PixelPair>& pairs) {
  if (pairs.size() != 5) return {ErrorCode::kInvalidArgument, "five-point needs 5 pairs"};

  Eigen::Matrix<double, 9, 5> qt;
  for (int i = 0; i < 5; ++i) {
    const Vector3& a = pairs[i].x_a;
    const Vector3& b = pairs[i].x_b;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) qt(3 * r + c, i) = b[r] * a[c];
    }
  }
  const Eigen::HouseholderQR<Eigen::Matrix<double, 9, 5>> qr(qt);
  const Eigen::Matrix<double, 9, 9> full_q = qr.householderQ();
  const Eigen::Matrix<double, 9, 4> basis = full_q.rightCols<4>();

  // E = x X + y Y + z Z + W as a matrix of linear polynomials.
  Cubic e[3][3];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      e[r][c].fill(0.0);
      e[r][c][kMonoX] = basis(3 * r + c, 0);
      e[r][c][kMonoY] = basis(3 * r + c, 1);
      e[r][c][kMonoZ] = basis(3 * r + c, 2);
      e[r][c][kMonoOne] = basis(3 * r + c, 3);
    }
  }

  Eigen::Matrix<double, 10, 20> constraints;
  const Cubic det = CubicAdd(
      CubicAdd(CubicMul(e[0][0], CubicAdd(CubicMul(e[1][1], e[2][2]),
                                          CubicMul(e[1][2], e[2][1]), -1.0)),
               CubicMul(e[0][1], CubicAdd(CubicMul(e[1][0], e[2][2]),
                                          CubicMul(e[1][2], e[2][0]), -1.0)),
               -1.0),
      CubicMul(e[0][2], CubicAdd(CubicMul(e[1][0], e[2][1]), CubicMul(e[1][1], e[2][0]), -1.0)));
  for (int m = 0; m < kNumMonomials; ++m) constraints(0, m) = det[m];

  Cubic eet[3][3];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      eet[r][c].fill(0.0);
      for (int k = 0; k < 3; ++k) eet[r][c] = CubicAdd(eet[r][c], CubicMul(e[r][k], e[c][k]));
    }
  }
  const Cubic trace = CubicAdd(CubicAdd(eet[0][0], eet[1][1]), eet[2][2]);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      Cubic v = CubicMul(trace, e[r][c]);
      for (int m = 0; m < kNumMonomials; ++m) v[m] *= -0.5;
      for (int k = 0; k < 3; ++k) v = CubicAdd(v, CubicMul(eet[r][k], e[k][c]));
      for (int m = 0; m < kNumMonomials; ++m) constraints(1 + 3 * r + c, m) = v[m];
    }
  }

  const Eigen::FullPivLU<Eigen::Matrix<double, 10, 10>> lu(constraints.leftCols<10>());
  if (!lu.isInvertible()) return {ErrorCode::kNumericalFailure, "singular elimination"};
  const Eigen::Matrix<double, 10, 10> g = lu.solve(constraints.rightCols<10>());
  if (!g.allFinite()) return {ErrorCode::kNumericalFailure, "non-finite elimination"};

  // Rows (4, 5), (6, 7), (8, 9) lead with (x^2 z, x^2), (y^2 z, y^2),
  // (xyz, xy); subtracting z times the second row leaves B(z) [x y 1]^T = 0.
  Poly bz[3][3];
  for (int k = 0; k < 3; ++k) {
    const auto r1 = g.row(4 + 2 * k);
    const auto r2 = g.row(5 + 2 * k);
    bz[k][0] = {r1[2], r1[1] - r2[2], r1[0] - r2[1], -r2[0]};
    bz[k][1] = {r1[5], r1[4] - r2[5], r1[3] - r2[4], -r2[3]};
    bz[k][2] = {r1[9], r1[8] - r2[9], r1[7] - r2[8], r1[6] - r2[7], -r2[6]};
  }
  const Poly m0 = PolySub(PolyMul(bz[1][1], bz[2][2]), PolyMul(bz[1][2], bz[2][1]));
  const Poly m1 = PolySub(PolyMul(bz[1][0], bz[2][2]), PolyMul(bz[1][2], bz[2][0]));
  const Poly m2 = PolySub(PolyMul(bz[1][0], bz[2][1]), PolyMul(bz[1][1], bz[2][0]));
  const Poly det_b =
      PolyAdd(PolySub(PolyMul(bz[0][0], m0), PolyMul(bz[0][1], m1)), PolyMul(bz[0][2], m2));

  std::vector<Matrix3> out;
  for (const double z : PolyRealRoots(det_b)) {
    Matrix3 b;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) b(r, c) = PolyEval(bz[r][c], z);
    }
    // Null vector from the best-conditioned pair of rows.
    Vector3 best = Vector3::Zero();
    for (int i = 0; i < 3; ++i) {
      const Vector3 cand = b.row(i).cross(b.row((i + 1) % 3)).transpose();
      if (cand.norm() > best.norm()) best = cand;
    }
    if (std::abs(best.z()) < 1e-14 * best.norm() || best.norm() == 0.0) continue;
    Vector3 xyz(best.x() / best.z(), best.y() / best.z(), z);
    PolishNullspaceCoefficients(constraints, &xyz);
    const Eigen::Matrix<double, 9, 1> v =
        xyz.x() * basis.col(0) + xyz.y() * basis.col(1) + xyz.z() * basis.col(2) + basis.col(3);
    Matrix3 ess;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) ess(r, c) = v(3 * r + c);
    }
    const double n = ess.norm();
    if (!(n > 0.0) || !ess.allFinite()) continue;
    out.push_back(ess / n);
  }
  return out;
}

Matrix3 ProjectToEssential(const Matrix3& matrix) {
  const Eigen::JacobiSVD<Matrix3> svd(matrix, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s = 0.5 * (svd.singularValues()[0] + svd.singularValues()[1]);
  return svd.matrixU() * Eigen::Vector3d(s, s, 0.0).asDiagonal() * svd.matrixV().transpose();
}

Matrix3 EssentialFromPose(const SE3Pose& b_from_a) {
  return Skew(b_from_a.translation) * b_from_a.rotation;
}

Expected<SE3Pose> DecomposeEssential(const Matrix3& essential,
                                     const std::vector<PixelPair>& pairs) {
  if (pairs.empty()) return {ErrorCode::kInvalidArgument, "no pairs"};
  const Eigen::JacobiSVD<Matrix3> svd(essential, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 u = svd.matrixU();
  Matrix3 v = svd.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Matrix3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Matrix3 r1 = u * w * v.transpose();
  const Matrix3 r2 = u * w.transpose() * v.transpose();
  const Vector3 t = u.col(2).normalized();
  const std::array<SE3Pose, 4> candidates = {SE3Pose(r1, t), SE3Pose(r1, -t), SE3Pose(r2, t),
                                             SE3Pose(r2, -t)};

  const double min_parallax = numerics::kCheiralityMinParallax;
  int best_votes = -1;
  SE3Pose best;
  for (const auto& cand : candidates) {
    int votes = 0;
    for (const auto& pair : pairs) {
      // Rays in frame b: from t along R x_a and from 0 along x_b.
      const Vector3 ua = cand.rotation * pair.x_a;
      const Vector3& ub = pair.x_b;
      if (AngleBetween(ua, ub) < min_parallax) continue;
      Eigen::Matrix2d a;
      a << ua.dot(ua), -ua.dot(ub), -ua.dot(ub), ub.dot(ub);
      const Eigen::Vector2d rhs(-ua.dot(cand.translation), ub.dot(cand.translation));
      const Eigen::Vector2d depth = a.inverse() * rhs;
      if (depth[0] > 0.0 && depth[1] > 0.0) ++votes;
    }
    if (votes > best_votes) {
      best_votes = votes;
      best = cand;
    }
  }
  if (2 * best_votes < static_cast<int>(pairs.size()) || best_votes == 0) {
    return {ErrorCode::kNoParallax, "insufficient positive-depth votes"};
  }
  return best;
}

Expected<Vector3> TriangulateDLT(const std::vector<TriangulationObservation>& observations,
                                 double min_angle_deg) {
  if (observations.size() < 2) return {ErrorCode::kInvalidArgument, "need two observations"};
  const int n = static_cast<int>(observations.size());

  std::vector<Vector3> world_dirs;
  world_dirs.reserve(n);
  Eigen::MatrixXd a(2 * n, 4);
  for (int i = 0; i < n; ++i) {
    const auto& obs = observations[i];
    const Vector3 m = obs.camera.Normalized(obs.pixel);
    world_dirs.push_back(obs.pose.rotation.transpose() * m);
    Eigen::Matrix<double, 3, 4> proj;
    proj.leftCols<3>() = obs.pose.rotation;
    proj.col(3) = obs.pose.translation - obs.camera.center;
    a.row(2 * i) = m.x() * proj.row(2) - proj.row(0);
    a.row(2 * i + 1) = m.y() * proj.row(2) - proj.row(1);
    a.row(2 * i).normalize();
    a.row(2 * i + 1).normalize();
  }

  double max_angle = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      max_angle = std::max(max_angle, AngleBetween(world_dirs[i], world_dirs[j]));
    }
  }
  if (max_angle < numerics::DegToRad(min_angle_deg)) {
    return {ErrorCode::kInsufficientAngle, "triangulation angle too small"};
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (!(std::abs(h[3]) > 0.0)) return {ErrorCode::kInsufficientAngle, "point at infinity"};
  const Vector3 point = h.head<3>() / h[3];
  if (!point.allFinite()) return {ErrorCode::kNumericalFailure, "non-finite point"};

  for (const auto& obs : observations) {
    const Vector3 local = obs.pose * point - obs.camera.center;
    if (!(local.z() > 0.0)) {
      return {ErrorCode::kCheiralityViolation, "point behind a virtual camera"};
    }
  }
  return point;
}

double SampsonDistance(const Matrix3& essential, const Vector3& x_a, const Vector3& x_b) {
  const Vector3 ex = essential * x_a;
  const Vector3 etx = essential.transpose() * x_b;
  const double algebraic = x_b.dot(ex);
  const double den = ex.x() * ex.x() + ex.y() * ex.y() + etx.x() * etx.x() + etx.y() * etx.y();
  if (!(den > numerics::kSampsonEps)) return std::abs(algebraic);
  return std::abs(algebraic) / std::sqrt(den);
}

}  // namespace rsfm
