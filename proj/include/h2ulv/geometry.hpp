#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace h2ulv {

struct PointCloud {
  std::vector<std::array<double, 3>> points;
  std::vector<double> charges;

  int64_t size() const { return static_cast<int64_t>(points.size()); }
  double domain_diameter() const;  // diagonal of the bounding box
};

// Uniform i.i.d. points in [0,1)^3, unit charges. SplitMix64 stream.
PointCloud generate_uniform_cube(int64_t n, uint64_t seed);
// Points on the x axis, uniform in [0,1). Used for the block tri-diagonal studies.
PointCloud generate_line(int64_t n, uint64_t seed);
// Fibonacci-lattice points on unit spheres whose centers form a cubic lattice
// with the given pitch. `spheres` must be a perfect cube (1, 8, 27, ...).
PointCloud generate_sphere_surface(int64_t n, int64_t spheres, double spacing, uint64_t seed);

void write_point_cloud(const PointCloud& cloud, const std::string& path);
PointCloud read_point_cloud(const std::string& path);

struct ClusterNode {
  int64_t begin = 0;
  int64_t end = 0;  // index range [begin, end) into the reordered cloud
  std::array<double, 3> center{};
  double radius = 0.0;
};

// Full binary tree over a reordered point cloud. All leaves sit at depth
// `levels`, so the leaf count is a power of two.
struct ClusterTree {
  int levels = 0;  // leaf level; root is level 0
  int64_t leaf_size_target = 0;
  std::vector<ClusterNode> nodes;          // heap layout, offset 2^l - 1 + i
  std::vector<int64_t> original_index;     // reordered position -> original position

  int64_t num_clusters(int level) const { return int64_t(1) << level; }
  int64_t num_leaves() const { return num_clusters(levels); }
  const ClusterNode& node(int level, int64_t i) const {
    return nodes[(int64_t(1) << level) - 1 + i];
  }
  ClusterNode& node(int level, int64_t i) { return nodes[(int64_t(1) << level) - 1 + i]; }
};

struct ClusterTreeResult {
  ClusterTree tree;
  PointCloud cloud;  // reordered so every node's range is contiguous
};

// Recursive 2-means bisection to a fixed depth ceil(log2(N / leaf_size)).
ClusterTreeResult build_cluster_tree(const PointCloud& cloud, int64_t leaf_size);

enum class AdmissibilityKind { weak, strong };

struct AdmissibilityRule {
  AdmissibilityKind kind = AdmissibilityKind::strong;
  double eta = 1.0;
};

enum class Admissibility { admissible, dense, subdivide };

// Classify a same-level cluster pair. Strong rule: admissible iff
// dist(centers) > eta * (radius_a + radius_b).
Admissibility admissible(const ClusterTree& tree, int level, int64_t a, int64_t b,
                         const AdmissibilityRule& rule);

}  // namespace h2ulv
