#pragma once

// Synthetic fault problem: a two-quadrilateral fault surface under the square
// S = [-100, 200]^2 (km) parameterized by m in R^6, a full-space Kelvin kernel
// standing in for the half-space Green's tensor, the difference regularizer
// R'R = D'D + E'E, pure-thrust slip, and noisy surface data.

#include "parinv/linalg.hpp"
#include "parinv/posterior.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace parinv::fault {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kSquareMin = -100.0;
inline constexpr double kSquareMax = 200.0;
inline constexpr double kSquareSide = kSquareMax - kSquareMin;

/// The geometry used to generate the synthetic data.
Vector true_m();
/// Starting point handed to the baseline optimizers in the "favorable start" runs.
Vector favorable_m();
inline constexpr double kFavorableAlpha = 1e-4;

struct Plane {
  Vec3 point;
  Vec3 normal;  // unit, normal.z() > 0

  double depth_at(double x1, double x2) const {
    return point.z() - (normal.x() * (x1 - point.x()) + normal.y() * (x2 - point.y())) / normal.z();
  }
  double residual(const Vec3& x) const { return normal.dot(x - point); }
};

/// Piecewise-planar fault surface. Piece 0 is the quadrilateral P1 P2 P3 P5
/// (the side of the edge P2P3 containing P1), piece 1 is P2 P3 P4 P6. The part
/// with x3 >= 0 is discarded: depth() is clipped at 0, raw_depth() is the affine
/// value and buried() tells the two apart.
class FaultGeometry {
 public:
  /// Throws std::invalid_argument unless -100 < m2 < 200 and -100 < m4 < 200,
  /// DegenerateGeometry if either control triangle is collinear.
  static FaultGeometry from_m(const Vector& m);

  const Vector& m() const noexcept { return m_; }
  /// P1 ... P6 in order.
  const std::array<Vec3, 6>& control_points() const noexcept { return points_; }
  const Plane& plane(int piece) const { return planes_.at(static_cast<std::size_t>(piece)); }

  /// x2 coordinate of the edge P2P3 at abscissa x1.
  double edge_x2(double x1) const;
  int piece(double x1, double x2) const { return x2 <= edge_x2(x1) ? 0 : 1; }
  double raw_depth(double x1, double x2) const { return plane(piece(x1, x2)).depth_at(x1, x2); }
  double depth(double x1, double x2) const { return std::min(raw_depth(x1, x2), 0.0); }
  bool buried(double x1, double x2) const { return raw_depth(x1, x2) < 0.0; }
  const Vec3& normal(double x1, double x2) const { return plane(piece(x1, x2)).normal; }

  /// Cosine of the angle between the two piece normals.
  double cos_dihedral() const noexcept { return cos_dihedral_; }

 private:
  Vector m_;
  std::array<Vec3, 6> points_;
  std::array<Plane, 2> planes_;
  double cos_dihedral_ = 1.0;
};

inline FaultGeometry geometry_from_m(const Vector& m) { return FaultGeometry::from_m(m); }

/// Regular grid_m x grid_m lattice over S; node k = i2 * grid_m + i1.
class Lattice {
 public:
  explicit Lattice(Index grid_m);

  Index size() const noexcept { return size_; }
  Index nodes() const noexcept { return size_ * size_; }
  double spacing() const noexcept { return spacing_; }
  double coord(Index i) const { return kSquareMin + spacing_ * static_cast<double>(i); }
  Index index(Index i1, Index i2) const { return i2 * size_ + i1; }
  Vec2 node(Index k) const { return {coord(k % size_), coord(k / size_)}; }
  /// Tensor-product trapezoid weight (km^2).
  double weight(Index k) const;

 private:
  Index size_;
  double spacing_;
};

/// Unit down-dip tangent for a plane with upward unit normal. For a horizontal
/// plane the direction is undefined; (0, 1, 0) is returned and `degenerate` set.
Vec3 thrust_direction(const Vec3& normal, bool* degenerate = nullptr);

/// Kelvin point-force solution of isotropic elastostatics with lambda = mu = 1
/// (Poisson ratio 1/4): u = [(3 - 4 nu) F + (r_hat . F) r_hat] / (16 pi mu (1 - nu) |r|),
/// r = observation - source.
Vec3 kelvin_displacement(const Vec3& r, const Vec3& force);

/// Quasi-uniform jittered station layout over S. Deterministic in seed.
std::vector<Vec2> station_layout(Index count, std::uint64_t seed);

/// A_m for the given geometry: n = 3 * stations (three displacement components
/// per station), p = lattice nodes. Lengths are measured in units of the side of
/// S; nodes with x3 >= 0 contribute nothing.
ForwardOperator build_forward_matrix(const FaultGeometry& geom, const Lattice& lattice,
                                     const std::vector<Vec2>& stations);

/// Forward differences along x1-lines (D) and x2-lines (E); the last node of
/// each line keeps only its diagonal entry.
SparseMatrix difference_x1(Index grid_m);
SparseMatrix difference_x2(Index grid_m);

/// R'R = D'D + E'E.
RegularizerGram build_regularizer_gram(Index grid_m);

struct BumpShape {
  double center_x1 = 50.0;
  double center_x2 = 50.0;
  double radius = 80.0;
  double amplitude = 1.0;
  /// Radius of the flat top; the cosine taper spans [plateau, radius].
  double plateau = 0.0;
};

struct SlipField {
  Lattice lattice{2};
  Vector values;       // |slip| per node, meters
  Matrix directions;   // nodes x 3, unit pure-thrust direction
  bool fallback_direction = false;
};

/// Radial cosine bump: amplitude on rho <= plateau, then
/// amplitude * (1 + cos(pi (rho - plateau) / (radius - plateau))) / 2 out to the
/// radius, zero beyond and on nodes where the fault is clipped. The support must
/// lie strictly inside S.
SlipField synthesize_slip(const FaultGeometry& geom, Index grid_m, const BumpShape& shape);

struct NoiseScenario {
  std::string label = "low";
  double fraction = 0.05;  // sigma = fraction * |u_free|_inf
  std::uint64_t seed = 1;

  static NoiseScenario low(std::uint64_t seed) { return {"low", 0.05, seed}; }
  static NoiseScenario high(std::uint64_t seed) { return {"high", 0.25, seed}; }
};

struct SyntheticData {
  Vector u_free;
  Vector u;
  double sigma = 0.0;
  double realized_relative_error = 0.0;  // |u - u_free| / |u_free|
};

SyntheticData generate_data(const FaultGeometry& truth, const SlipField& slip,
                            const std::vector<Vec2>& stations, const NoiseScenario& scenario);

/// Uniform on [-200, 200]^6 with -100 < m2, m4 < 200 and cos(dihedral) >= 0.8;
/// log10 alpha uniform on [-5, 0].
PriorSpec fault_prior();

struct FaultProblemConfig {
  Index grid_m = 41;
  Index stations = 65;
  std::uint64_t layout_seed = 2021;
  /// A broad flat-topped patch covering most of S.
  BumpShape bump{50.0, 50.0, 140.0, 1.0, 120.0};
  NoiseScenario scenario;
  /// Synthesis lattice is this many times finer than the inversion lattice.
  Index synthesis_factor = 2;
};

struct FaultProblem {
  ProblemDefinition problem;
  PriorSpec prior;
  FaultGeometry truth;
  Lattice lattice{2};
  std::vector<Vec2> stations;
  SlipField true_slip;        // on the inversion lattice, for comparisons
  SyntheticData data;
};

FaultProblem make_fault_problem(const FaultProblemConfig& config);

}  // namespace parinv::fault
