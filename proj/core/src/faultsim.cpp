#include "parinv/faultsim.hpp"

#include "parinv/errors.hpp"
#include "parinv/rng.hpp"

#include <tbb/parallel_for.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace parinv::fault {

namespace {

constexpr double kCollinearTol = 1e-12;
// Kernel lengths are measured in units of the side of S, so that (km) slip
// patches of the size of S give displacements of the order of the slip.
constexpr double kLengthUnit = kSquareSide;

Plane plane_through(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  Vec3 n = e1.cross(e2);
  if (!(n.norm() > kCollinearTol * e1.norm() * e2.norm()) || n.z() == 0.0) {
    throw DegenerateGeometry("fault control points are collinear");
  }
  n.normalize();
  if (n.z() < 0.0) n = -n;
  return {a, n};
}

}  // namespace

Vector true_m() {
  Vector m(6);
  m << 24, 145, -40, 8, -40, -50;
  return m;
}

Vector favorable_m() {
  Vector m(6);
  m << 0, 100, -20, 0, -20, -30;
  return m;
}

FaultGeometry FaultGeometry::from_m(const Vector& m) {
  if (m.size() != 6) throw DimensionMismatch("fault geometry needs m in R^6");
  if (!m.allFinite()) throw std::invalid_argument("fault geometry: non-finite m");
  if (!(m[1] > kSquareMin && m[1] < kSquareMax) || !(m[3] > kSquareMin && m[3] < kSquareMax)) {
    throw std::invalid_argument("fault geometry: m2 and m4 must lie in (-100, 200)");
  }
  FaultGeometry g;
  g.m_ = m;
  auto& p = g.points_;
  p[0] = {kSquareMin, kSquareMin, m[0]};
  p[1] = {kSquareMin, m[1], m[2]};
  p[2] = {kSquareMax, m[3], m[4]};
  p[3] = {kSquareMax, kSquareMax, m[5]};
  g.planes_[0] = plane_through(p[0], p[1], p[2]);
  g.planes_[1] = plane_through(p[1], p[2], p[3]);
  p[4] = {kSquareMax, kSquareMin, g.planes_[0].depth_at(kSquareMax, kSquareMin)};
  p[5] = {kSquareMin, kSquareMax, g.planes_[1].depth_at(kSquareMin, kSquareMax)};
  g.cos_dihedral_ = std::clamp(g.planes_[0].normal.dot(g.planes_[1].normal), -1.0, 1.0);
  return g;
}

double FaultGeometry::edge_x2(double x1) const {
  return m_[1] + (m_[3] - m_[1]) * (x1 - kSquareMin) / kSquareSide;
}

Lattice::Lattice(Index grid_m) : size_(grid_m) {
  if (grid_m < 2) throw std::invalid_argument("lattice: grid_m must be >= 2");
  spacing_ = kSquareSide / static_cast<double>(grid_m - 1);
}

double Lattice::weight(Index k) const {
  auto edge = [this](Index i) { return (i == 0 || i == size_ - 1) ? 0.5 : 1.0; };
  return spacing_ * spacing_ * edge(k % size_) * edge(k / size_);
}

Vec3 thrust_direction(const Vec3& normal, bool* degenerate) {
  // Projection of -e3 onto the tangent plane.
  Vec3 d = Vec3(0.0, 0.0, -1.0) + normal.z() * normal;
  const double len = d.norm();
  const bool flat = !(len > 1e-12);
  if (degenerate) *degenerate = flat;
  if (flat) return {0.0, 1.0, 0.0};
  return d / len;
}

Vec3 kelvin_displacement(const Vec3& r, const Vec3& force) {
  const double dist = r.norm();
  if (!(dist > 0.0)) throw std::invalid_argument("kelvin_displacement: coincident points");
  const Vec3 rhat = r / dist;
  return (2.0 * force + rhat.dot(force) * rhat) / (12.0 * std::numbers::pi * dist);
}

std::vector<Vec2> station_layout(Index count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("station_layout: count must be >= 1");
  const auto cols = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(count))));
  const Index rows = (count + cols - 1) / cols;
  std::vector<Index> cells(static_cast<std::size_t>(rows * cols));
  std::iota(cells.begin(), cells.end(), Index{0});
  StreamRng rng(seed, 0, 0, StreamTag::layout);
  std::shuffle(cells.begin(), cells.end(), rng);
  cells.resize(static_cast<std::size_t>(count));
  std::sort(cells.begin(), cells.end());

  const double wx = kSquareSide / static_cast<double>(cols);
  const double wy = kSquareSide / static_cast<double>(rows);
  std::vector<Vec2> out;
  out.reserve(cells.size());
  for (Index c : cells) {
    const double jx = 0.6 * (rng.uniform() - 0.5);
    const double jy = 0.6 * (rng.uniform() - 0.5);
    out.emplace_back(kSquareMin + wx * (static_cast<double>(c % cols) + 0.5 + jx),
                     kSquareMin + wy * (static_cast<double>(c / cols) + 0.5 + jy));
  }
  return out;
}

ForwardOperator build_forward_matrix(const FaultGeometry& geom, const Lattice& lattice,
                                     const std::vector<Vec2>& stations) {
  const Index p = lattice.nodes();
  const auto ns = static_cast<Index>(stations.size());
  if (ns < 1) throw std::invalid_argument("build_forward_matrix: no stations");

  // Per node: scaled source position, thrust direction and weight * area Jacobian.
  Matrix src(3, p);
  Matrix dir(3, p);
  Vector wj(p);
  for (Index k = 0; k < p; ++k) {
    const Vec2 x = lattice.node(k);
    const Plane& pl = geom.plane(geom.piece(x.x(), x.y()));
    const double z = pl.depth_at(x.x(), x.y());
    src.col(k) = Vec3(x.x(), x.y(), z) / kLengthUnit;
    dir.col(k) = thrust_direction(pl.normal);
    wj[k] = z < 0.0 ? lattice.weight(k) / pl.normal.z() / (kLengthUnit * kLengthUnit) : 0.0;
  }

  Matrix a = Matrix::Zero(3 * ns, p);
  tbb::parallel_for(Index{0}, ns, [&](Index j) {
    const Vec3 obs(stations[static_cast<std::size_t>(j)].x() / kLengthUnit,
                   stations[static_cast<std::size_t>(j)].y() / kLengthUnit, 0.0);
    for (Index k = 0; k < p; ++k) {
      if (wj[k] == 0.0) continue;
      const Vec3 u = wj[k] * kelvin_displacement(obs - src.col(k), dir.col(k));
      a(3 * j, k) = u.x();
      a(3 * j + 1, k) = u.y();
      a(3 * j + 2, k) = u.z();
    }
  });
  return ForwardOperator(std::move(a));
}

namespace {

SparseMatrix line_differences(Index grid_m, Index stride_along, Index stride_across) {
  const Index p = grid_m * grid_m;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(2 * p));
  for (Index line = 0; line < grid_m; ++line) {
    for (Index i = 0; i < grid_m; ++i) {
      const Index k = line * stride_across + i * stride_along;
      t.emplace_back(k, k, 1.0);
      if (i + 1 < grid_m) t.emplace_back(k, k + stride_along, -1.0);
    }
  }
  SparseMatrix m(p, p);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

SparseMatrix difference_x1(Index grid_m) {
  if (grid_m < 2) throw std::invalid_argument("difference_x1: grid_m must be >= 2");
  return line_differences(grid_m, 1, grid_m);
}

SparseMatrix difference_x2(Index grid_m) {
  if (grid_m < 2) throw std::invalid_argument("difference_x2: grid_m must be >= 2");
  return line_differences(grid_m, grid_m, 1);
}

RegularizerGram build_regularizer_gram(Index grid_m) {
  const SparseMatrix d = difference_x1(grid_m);
  const SparseMatrix e = difference_x2(grid_m);
  SparseMatrix k = SparseMatrix(d.transpose()) * d + SparseMatrix(e.transpose()) * e;
  k.makeCompressed();
  return RegularizerGram::from_sparse(std::move(k));
}

SlipField synthesize_slip(const FaultGeometry& geom, Index grid_m, const BumpShape& shape) {
  if (!(shape.radius > 0.0) || shape.amplitude < 0.0 || shape.plateau < 0.0 ||
      !(shape.plateau < shape.radius)) {
    throw std::invalid_argument("synthesize_slip: need 0 <= plateau < radius and amplitude >= 0");
  }
  if (shape.center_x1 - shape.radius <= kSquareMin || shape.center_x1 + shape.radius >= kSquareMax ||
      shape.center_x2 - shape.radius <= kSquareMin || shape.center_x2 + shape.radius >= kSquareMax) {
    throw std::invalid_argument("synthesize_slip: bump support must lie inside S");
  }
  SlipField out;
  out.lattice = Lattice(grid_m);
  const Index p = out.lattice.nodes();
  out.values = Vector::Zero(p);
  out.directions.resize(p, 3);
  for (Index k = 0; k < p; ++k) {
    const Vec2 x = out.lattice.node(k);
    bool flat = false;
    out.directions.row(k) = thrust_direction(geom.normal(x.x(), x.y()), &flat).transpose();
    out.fallback_direction = out.fallback_direction || flat;
    if (!geom.buried(x.x(), x.y())) continue;
    const double rho = std::hypot(x.x() - shape.center_x1, x.y() - shape.center_x2);
    if (rho <= shape.plateau) {
      out.values[k] = shape.amplitude;
    } else if (rho < shape.radius) {
      const double t = (rho - shape.plateau) / (shape.radius - shape.plateau);
      out.values[k] = shape.amplitude * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    }
  }
  return out;
}

SyntheticData generate_data(const FaultGeometry& truth, const SlipField& slip,
                            const std::vector<Vec2>& stations, const NoiseScenario& scenario) {
  if (!(scenario.fraction >= 0.0)) throw std::invalid_argument("noise fraction must be >= 0");
  if (slip.values.size() != slip.lattice.nodes()) throw DimensionMismatch("slip field size");
  SyntheticData out;
  out.u_free = build_forward_matrix(truth, slip.lattice, stations).apply(slip.values);
  out.sigma = scenario.fraction * out.u_free.lpNorm<Eigen::Infinity>();
  StreamRng rng(scenario.seed, 0, 0, StreamTag::noise);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector eps(out.u_free.size());
  for (Index i = 0; i < eps.size(); ++i) eps[i] = out.sigma * normal(rng);
  out.u = out.u_free + eps;
  const double base = out.u_free.norm();
  out.realized_relative_error = base > 0.0 ? eps.norm() / base : 0.0;
  return out;
}

PriorSpec fault_prior() {
  PriorSpec prior;
  prior.m_lower = Vector::Constant(6, -200.0);
  prior.m_upper = Vector::Constant(6, 200.0);
  prior.log10_alpha_lower = -5.0;
  prior.log10_alpha_upper = 0.0;
  prior.support = [](const Vector& m) {
    if (!(m[1] > kSquareMin && m[1] < kSquareMax && m[3] > kSquareMin && m[3] < kSquareMax)) {
      return false;
    }
    try {
      return FaultGeometry::from_m(m).cos_dihedral() >= 0.8;
    } catch (const DegenerateGeometry&) {
      return false;
    }
  };
  return prior;
}

FaultProblem make_fault_problem(const FaultProblemConfig& config) {
  if (config.synthesis_factor < 1) throw std::invalid_argument("synthesis_factor must be >= 1");
  FaultProblem fp{
      .problem = {},
      .prior = fault_prior(),
      .truth = FaultGeometry::from_m(true_m()),
      .lattice = Lattice(config.grid_m),
      .stations = station_layout(config.stations, config.layout_seed),
      .true_slip = {},
      .data = {},
  };
  fp.true_slip = synthesize_slip(fp.truth, config.grid_m, config.bump);
  const SlipField fine = synthesize_slip(fp.truth, config.synthesis_factor * config.grid_m, config.bump);
  fp.data = generate_data(fp.truth, fine, fp.stations, config.scenario);

  auto stations = std::make_shared<const std::vector<Vec2>>(fp.stations);
  const Lattice lattice = fp.lattice;
  fp.problem.data = fp.data.u;
  fp.problem.gram = build_regularizer_gram(config.grid_m);
  fp.problem.q = 6;
  fp.problem.make_operator = [stations, lattice](const Vector& m) {
    return build_forward_matrix(FaultGeometry::from_m(m), lattice, *stations);
  };
  return fp;
}

}  // namespace parinv::fault
