#include "h2ulv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "h2ulv/prng.hpp"

namespace h2ulv {

namespace {

double dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

double dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return std::sqrt(dist2(a, b));
}

}  // namespace

double PointCloud::domain_diameter() const {
  std::array<double, 3> lo{}, hi{};
  lo.fill(std::numeric_limits<double>::max());
  hi.fill(std::numeric_limits<double>::lowest());
  for (const auto& p : points)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  double s = 0.0;
  for (int d = 0; d < 3; ++d) s += (hi[d] - lo[d]) * (hi[d] - lo[d]);
  return std::sqrt(s);
}

PointCloud generate_uniform_cube(int64_t n, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate_uniform_cube: n must be >= 2");
  SplitMix64 rng(seed);
  PointCloud cloud;
  cloud.points.resize(n);
  cloud.charges.assign(n, 1.0);
  for (int64_t i = 0; i < n; ++i) {
    cloud.points[i] = {rng.next_double(), rng.next_double(), rng.next_double()};
  }
  return cloud;
}

PointCloud generate_line(int64_t n, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate_line: n must be >= 2");
  SplitMix64 rng(seed);
  PointCloud cloud;
  cloud.points.resize(n);
  cloud.charges.assign(n, 1.0);
  for (int64_t i = 0; i < n; ++i) cloud.points[i] = {rng.next_double(), 0.0, 0.0};
  return cloud;
}

PointCloud generate_sphere_surface(int64_t n, int64_t spheres, double spacing, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate_sphere_surface: n must be >= 2");
  int64_t side = static_cast<int64_t>(std::llround(std::cbrt(static_cast<double>(spheres))));
  if (side < 1 || side * side * side != spheres)
    throw std::invalid_argument("generate_sphere_surface: spheres must be a perfect cube count");
  SplitMix64 rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.charges.assign(n, 1.0);
  const double origin = -0.5 * spacing * static_cast<double>(side - 1);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  int64_t remaining = n;
  int64_t sphere_idx = 0;
  for (int64_t ix = 0; ix < side; ++ix)
    for (int64_t iy = 0; iy < side; ++iy)
      for (int64_t iz = 0; iz < side; ++iz, ++sphere_idx) {
        const int64_t left = spheres - sphere_idx;
        const int64_t m = (remaining + left - 1) / left;
        remaining -= m;
        const std::array<double, 3> c = {origin + spacing * ix, origin + spacing * iy,
                                         origin + spacing * iz};
        const double phase = rng.next_double() * 2.0 * M_PI;
        for (int64_t t = 0; t < m; ++t) {
          const double z = 1.0 - 2.0 * (t + 0.5) / static_cast<double>(m);
          const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
          const double phi = 2.0 * M_PI * (t / golden) + phase;
          cloud.points.push_back(
              {c[0] + r * std::cos(phi), c[1] + r * std::sin(phi), c[2] + z});
        }
      }
  return cloud;
}

void write_point_cloud(const PointCloud& cloud, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_point_cloud: cannot open " + path);
  char buf[160];
  for (int64_t i = 0; i < cloud.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", cloud.points[i][0],
                  cloud.points[i][1], cloud.points[i][2], cloud.charges[i]);
    f << buf;
  }
}

PointCloud read_point_cloud(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_point_cloud: cannot open " + path);
  PointCloud cloud;
  double x, y, z, q;
  while (f >> x >> y >> z >> q) {
    cloud.points.push_back({x, y, z});
    cloud.charges.push_back(q);
  }
  if (cloud.size() < 2) throw std::runtime_error("read_point_cloud: fewer than 2 points");
  return cloud;
}

namespace {

struct Splitter {
  std::vector<std::array<double, 3>>& pts;
  std::vector<double>& charges;
  std::vector<int64_t>& order;

  // 2-means with farthest-pair seeding over 32 strided candidates. Returns
  // the split position; [begin, mid) and [mid, end) are the children.
  int64_t split(int64_t begin, int64_t end, int64_t min_side) {
    const int64_t len = end - begin;
    const int64_t ncand = std::min<int64_t>(32, len);
    std::vector<int64_t> cand(ncand);
    for (int64_t i = 0; i < ncand; ++i)
      cand[i] = begin + (ncand == 1 ? 0 : i * (len - 1) / (ncand - 1));
    double best = -1.0;
    std::array<double, 3> c1 = pts[begin], c2 = pts[end - 1];
    for (int64_t a = 0; a < ncand; ++a)
      for (int64_t b = a + 1; b < ncand; ++b) {
        const double d = dist2(pts[cand[a]], pts[cand[b]]);
        if (d > best) {
          best = d;
          c1 = pts[cand[a]];
          c2 = pts[cand[b]];
        }
      }

    std::vector<char> assign(len, 0);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      std::array<double, 3> s1{}, s2{};
      int64_t n1 = 0;
      for (int64_t i = 0; i < len; ++i) {
        const auto& p = pts[begin + i];
        const char a = dist2(p, c2) < dist2(p, c1) ? 1 : 0;
        if (a != assign[i]) {
          assign[i] = a;
          changed = true;
        }
        if (a == 0) {
          ++n1;
          for (int d = 0; d < 3; ++d) s1[d] += p[d];
        } else {
          for (int d = 0; d < 3; ++d) s2[d] += p[d];
        }
      }
      if (n1 > 0)
        for (int d = 0; d < 3; ++d) c1[d] = s1[d] / n1;
      if (len - n1 > 0)
        for (int d = 0; d < 3; ++d) c2[d] = s2[d] / (len - n1);
      if (!changed && iter > 0) break;
    }

    // Order by the signed margin; clamp the split so both subtrees keep at
    // least one point per descendant leaf.
    std::vector<int64_t> idx(len);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> margin(len);
    for (int64_t i = 0; i < len; ++i) {
      const auto& p = pts[begin + i];
      margin[i] = dist2(p, c1) - dist2(p, c2);
    }
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int64_t a, int64_t b) { return margin[a] < margin[b]; });
    int64_t n1 = 0;
    for (int64_t i = 0; i < len; ++i)
      if (margin[idx[i]] < 0.0) ++n1;
    n1 = std::clamp(n1, min_side, len - min_side);

    std::vector<std::array<double, 3>> tmp_p(len);
    std::vector<double> tmp_q(len);
    std::vector<int64_t> tmp_o(len);
    for (int64_t i = 0; i < len; ++i) {
      tmp_p[i] = pts[begin + idx[i]];
      tmp_q[i] = charges[begin + idx[i]];
      tmp_o[i] = order[begin + idx[i]];
    }
    for (int64_t i = 0; i < len; ++i) {
      pts[begin + i] = tmp_p[i];
      charges[begin + i] = tmp_q[i];
      order[begin + i] = tmp_o[i];
    }
    return begin + n1;
  }
};

void compute_geometry(ClusterTree& tree, const PointCloud& cloud, int level, int64_t idx) {
  ClusterNode& nd = tree.node(level, idx);
  std::array<double, 3> c{};
  const int64_t len = nd.end - nd.begin;
  for (int64_t i = nd.begin; i < nd.end; ++i)
    for (int d = 0; d < 3; ++d) c[d] += cloud.points[i][d];
  for (int d = 0; d < 3; ++d) c[d] /= static_cast<double>(len);
  double r2 = 0.0;
  for (int64_t i = nd.begin; i < nd.end; ++i) r2 = std::max(r2, dist2(cloud.points[i], c));
  nd.center = c;
  nd.radius = std::sqrt(r2);
}

}  // namespace

ClusterTreeResult build_cluster_tree(const PointCloud& cloud, int64_t leaf_size) {
  const int64_t n = cloud.size();
  if (leaf_size < 2) throw std::invalid_argument("build_cluster_tree: leaf_size must be >= 2");
  if (n < 2 * leaf_size)
    throw std::invalid_argument("build_cluster_tree: need N >= 2 * leaf_size");

  // Degenerate cloud check.
  bool distinct = false;
  for (int64_t i = 1; i < n && !distinct; ++i)
    if (dist2(cloud.points[i], cloud.points[0]) > 0.0) distinct = true;
  if (!distinct) throw std::runtime_error("build_cluster_tree: degenerate cloud, all points identical");

  int levels = 0;
  while ((int64_t(1) << levels) * leaf_size < n) ++levels;

  ClusterTreeResult out;
  out.cloud = cloud;
  out.tree.levels = levels;
  out.tree.leaf_size_target = leaf_size;
  out.tree.nodes.resize((int64_t(1) << (levels + 1)) - 1);
  out.tree.original_index.resize(n);
  std::iota(out.tree.original_index.begin(), out.tree.original_index.end(), 0);

  Splitter sp{out.cloud.points, out.cloud.charges, out.tree.original_index};
  out.tree.node(0, 0).begin = 0;
  out.tree.node(0, 0).end = n;
  for (int level = 0; level < levels; ++level) {
    for (int64_t i = 0; i < out.tree.num_clusters(level); ++i) {
      const ClusterNode& nd = out.tree.node(level, i);
      const int64_t min_side = int64_t(1) << (levels - level - 1);
      const int64_t mid = sp.split(nd.begin, nd.end, min_side);
      out.tree.node(level + 1, 2 * i) = {nd.begin, mid, {}, 0.0};
      out.tree.node(level + 1, 2 * i + 1) = {mid, nd.end, {}, 0.0};
    }
  }
  for (int level = 0; level <= levels; ++level)
    for (int64_t i = 0; i < out.tree.num_clusters(level); ++i)
      compute_geometry(out.tree, out.cloud, level, i);
  return out;
}

Admissibility admissible(const ClusterTree& tree, int level, int64_t a, int64_t b,
                         const AdmissibilityRule& rule) {
  if (level < 0 || level > tree.levels) throw std::invalid_argument("admissible: bad level");
  const bool leaf = (level == tree.levels);
  if (rule.kind == AdmissibilityKind::weak) {
    if (a != b) return Admissibility::admissible;
    return leaf ? Admissibility::dense : Admissibility::subdivide;
  }
  if (rule.eta <= 0.0) throw std::invalid_argument("admissible: eta must be positive");
  const ClusterNode& na = tree.node(level, a);
  const ClusterNode& nb = tree.node(level, b);
  const double d = dist(na.center, nb.center);
  if (d > rule.eta * (na.radius + nb.radius)) return Admissibility::admissible;
  return leaf ? Admissibility::dense : Admissibility::subdivide;
}

}  // namespace h2ulv
