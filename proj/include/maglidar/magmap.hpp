// Copyright (c) 2026 The maglidar-calib Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file magmap.hpp
 * @brief Magnetic field maps: block-partitioned (sliding) GP regression and a
 *        multilinear lattice interpolator used as a baseline.
 *
 * Both maps answer field queries in the map frame. The GP map additionally
 * reports predictive variance, which the calibrator turns into per-sample
 * weights. Each axis of the field is an independent scalar GP; the three
 * share one Gram matrix per block.
 */

#pragma once

#include "maglidar/core_types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <vector>

namespace maglidar {

enum class MeanMode { kConstantPerBlock, kZero };

/// Squared-exponential kernel k(p, q) = signal_variance * exp(-|p-q|^2 / (2 l^2)).
struct GpHyperparams {
  double length_scale = 1.0;       // m
  double signal_variance = 25.0;   // uT^2
  double noise_variance = 0.01;    // uT^2
  MeanMode mean_mode = MeanMode::kConstantPerBlock;

  void validate() const;
};

inline constexpr double kDefaultBlockSize = 3.0;    // m
inline constexpr double kDefaultBlockOverlap = 2.0;  // m, 2 * default length scale

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p, double tol = 1e-9) const;
  Box inflated(double margin) const;
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 size() const { return max - min; }
};

Box bounding_box(const std::vector<Position>& points);

struct FieldQuery {
  FieldVec mean = FieldVec::Zero();
  /// Per-axis predictive variance (uT^2), clamped at zero.
  Vec3 variance = Vec3::Zero();
  /// Set when the unclamped variance fell below -1e-8 uT^2.
  bool ill_conditioned = false;
};

/// Read-only field model in the map frame. Implementations are immutable
/// after construction and safe to query concurrently.
class FieldMap {
 public:
  virtual ~FieldMap() = default;

  /// Throws Error(kOutOfMap) outside the map domain.
  virtual FieldQuery query(const Position& t) const = 0;
  /// d mean / d t: rows are field axes, columns are spatial axes.
  virtual Mat3 query_gradient(const Position& t) const = 0;
  /// Mean, variance and gradient in one pass.
  virtual FieldQuery query_with_gradient(const Position& t, Mat3& gradient) const;
  virtual bool provides_variance() const = 0;
  virtual bool contains(const Position& t) const = 0;
};

/// One GP over the training samples that fall inside `bounds` grown by the
/// map overlap. Cholesky factor and weight vectors are computed on
/// construction.
class MapBlock {
 public:
  MapBlock(const Box& bounds, std::vector<Position> positions, std::vector<FieldVec> fields,
           const GpHyperparams& hyper, const FieldVec& fallback_mean);

  const Box& bounds() const { return bounds_; }
  std::size_t size() const { return static_cast<std::size_t>(x_.rows()); }
  const std::vector<Position>& positions() const { return positions_; }
  const std::vector<FieldVec>& fields() const { return fields_; }
  const FieldVec& prior_mean() const { return mean_; }

  /// Gram matrix K + noise I rebuilt from the training inputs.
  Eigen::MatrixXd regularized_gram() const;
  /// L L^T from the cached factor.
  Eigen::MatrixXd reconstructed_gram() const;

  FieldQuery predict(const Position& t, Mat3* gradient, bool with_variance = true) const;

 private:
  Box bounds_;
  GpHyperparams hyper_;
  std::vector<Position> positions_;
  std::vector<FieldVec> fields_;
  Eigen::Matrix<double, Eigen::Dynamic, 3> x_;
  Eigen::Matrix<double, Eigen::Dynamic, 3> alpha_;
  FieldVec mean_ = FieldVec::Zero();
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Serializable description of one block; enough to rebuild it.
struct BlockData {
  std::array<int, 3> index{0, 0, 0};
  Box bounds;
  std::vector<Position> positions;
  std::vector<FieldVec> fields;
};

/// Block-partitioned GP map. The domain is the bounding box of the training
/// positions grown by `overlap`; it is tiled by a regular grid of cells of
/// edge `block_size` anchored at the training bounding box. A query is served
/// by the block whose cell center is nearest.
class MagMap : public FieldMap {
 public:
  static MagMap build(const Dataset& fingerprints, const GpHyperparams& hyper,
                      double block_size = kDefaultBlockSize,
                      double overlap = kDefaultBlockOverlap);

  /// Rebuilds a map from persisted blocks; factors are recomputed.
  static MagMap from_blocks(const GpHyperparams& hyper, double block_size, double overlap,
                            const Box& domain, const Vec3& grid_origin,
                            const std::array<int, 3>& dims, const FieldVec& fallback_mean,
                            const std::vector<BlockData>& blocks);

  FieldQuery query(const Position& t) const override;
  Mat3 query_gradient(const Position& t) const override;
  FieldQuery query_with_gradient(const Position& t, Mat3& gradient) const override;
  bool provides_variance() const override { return true; }
  bool contains(const Position& t) const override;

  const GpHyperparams& hyper() const { return hyper_; }
  double block_size() const { return block_size_; }
  double block_overlap() const { return overlap_; }
  const Box& domain() const { return domain_; }
  const Vec3& grid_origin() const { return origin_; }
  const std::array<int, 3>& dims() const { return dims_; }
  const FieldVec& fallback_mean() const { return fallback_mean_; }
  const std::vector<MapBlock>& blocks() const { return blocks_; }
  std::array<int, 3> block_index(const MapBlock& block) const;

  /// Block serving `t` (nearest cell center). Throws kOutOfMap outside the domain.
  const MapBlock& block_for(const Position& t) const;

 private:
  MagMap() = default;
  std::size_t flat_index(int i, int j, int k) const;

  GpHyperparams hyper_;
  double block_size_ = kDefaultBlockSize;
  double overlap_ = kDefaultBlockOverlap;
  Box domain_;
  Vec3 origin_ = Vec3::Zero();
  std::array<int, 3> dims_{1, 1, 1};
  FieldVec fallback_mean_ = FieldVec::Zero();
  std::vector<MapBlock> blocks_;
};

MagMap build_map(const Dataset& fingerprints, const GpHyperparams& hyper,
                 double block_size = kDefaultBlockSize, double overlap = kDefaultBlockOverlap);
FieldQuery query(const MagMap& map, const Position& t);
Mat3 query_gradient(const MagMap& map, const Position& t);

/// Multilinear interpolation over a rectilinear lattice with constant spacing
/// per axis. An axis with a single coordinate value is treated as constant
/// (e.g. a 2D grid at fixed height interpolates bilinearly and ignores z).
/// No variance is available.
class GridMap : public FieldMap {
 public:
  /// Throws kIrregularGrid if the positions do not form a complete regular lattice.
  static GridMap build(const Dataset& fingerprints);

  FieldQuery query(const Position& t) const override;
  Mat3 query_gradient(const Position& t) const override;
  FieldQuery query_with_gradient(const Position& t, Mat3& gradient) const override;
  bool provides_variance() const override { return false; }
  bool contains(const Position& t) const override;

  const std::array<std::vector<double>, 3>& axes() const { return axes_; }

 private:
  GridMap() = default;
  FieldVec node(int i, int j, int k) const;
  FieldVec interpolate(const Position& t, Mat3* gradient) const;

  std::array<std::vector<double>, 3> axes_;
  std::vector<FieldVec> values_;  // x fastest, then y, then z
};

/// Convenience wrapper: builds a GridMap from `grid_fingerprints` and queries it.
FieldVec interpolate_bilinear(const Dataset& grid_fingerprints, const Position& t);

/// Fingerprint position and reading rotated into the map frame.
Position fingerprint_position(const Fingerprint& f);
FieldVec fingerprint_field_in_map(const Fingerprint& f);

}  // namespace maglidar
