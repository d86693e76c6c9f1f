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

#include "maglidar/magmap.hpp"

#include "maglidar/log.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace maglidar {

namespace {

constexpr double kNegativeVarianceFlag = -1e-8;

std::string fmt_vec(const Vec3& v) {
  std::ostringstream os;
  os << '(' << v.x() << ", " << v.y() << ", " << v.z() << ')';
  return os.str();
}

[[noreturn]] void throw_out_of_map(const Position& t) {
  throw Error(ErrorCode::kOutOfMap, "position " + fmt_vec(t) + " is outside the map");
}

}  // namespace

void GpHyperparams::validate() const {
  if (!(length_scale > 0.0) || !std::isfinite(length_scale)) {
    throw Error(ErrorCode::kInvalidArgument, "length_scale must be > 0");
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw Error(ErrorCode::kInvalidArgument, "signal_variance must be > 0");
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw Error(ErrorCode::kInvalidArgument, "noise_variance must be >= 0");
  }
}

bool Box::contains(const Vec3& p, double tol) const {
  return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
}

Box Box::inflated(double margin) const {
  return Box{min.array() - margin, max.array() + margin};
}

Box bounding_box(const std::vector<Position>& points) {
  if (points.empty()) throw Error(ErrorCode::kInvalidArgument, "bounding box of no points");
  Box box{points.front(), points.front()};
  for (const auto& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

Position fingerprint_position(const Fingerprint& f) { return f.pose.translation(); }

FieldVec fingerprint_field_in_map(const Fingerprint& f) {
  return f.pose.rotation() * f.reading;
}

FieldQuery FieldMap::query_with_gradient(const Position& t, Mat3& gradient) const {
  gradient = query_gradient(t);
  return query(t);
}

// ---------------------------------------------------------------------------
// MapBlock

MapBlock::MapBlock(const Box& bounds, std::vector<Position> positions,
                   std::vector<FieldVec> fields, const GpHyperparams& hyper,
                   const FieldVec& fallback_mean)
    : bounds_(bounds),
      hyper_(hyper),
      positions_(std::move(positions)),
      fields_(std::move(fields)) {
  const auto n = static_cast<Eigen::Index>(positions_.size());
  if (fields_.size() != positions_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "block positions/fields length mismatch");
  }
  x_.resize(n, 3);
  Eigen::Matrix<double, Eigen::Dynamic, 3> y(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    x_.row(i) = positions_[i].transpose();
    y.row(i) = fields_[i].transpose();
  }

  if (hyper.mean_mode == MeanMode::kZero) {
    mean_.setZero();
  } else {
    mean_ = n > 0 ? FieldVec(y.colwise().mean().transpose()) : fallback_mean;
  }

  alpha_.resize(n, 3);
  if (n == 0) return;

  llt_.compute(regularized_gram());
  bool ok = llt_.info() == Eigen::Success;
  if (ok) {
    // A factor that "succeeds" with a collapsed pivot is still unusable.
    const Eigen::VectorXd diag = llt_.matrixLLT().diagonal();
    ok = diag.allFinite() && diag.minCoeff() > 1e-12 * std::sqrt(hyper.signal_variance);
  }
  if (!ok) {
    throw Error(ErrorCode::kSingular,
                "Gram matrix K + noise_variance*I is numerically singular in block " +
                    fmt_vec(bounds.center()) +
                    "; duplicated or near-duplicated positions need noise_variance > 0");
  }
  alpha_ = llt_.solve(y.rowwise() - mean_.transpose());
}

Eigen::MatrixXd MapBlock::regularized_gram() const {
  const auto n = x_.rows();
  const double inv2l2 = 0.5 / (hyper_.length_scale * hyper_.length_scale);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = hyper_.signal_variance + hyper_.noise_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d2 = (x_.row(i) - x_.row(j)).squaredNorm();
      k(i, j) = k(j, i) = hyper_.signal_variance * std::exp(-d2 * inv2l2);
    }
  }
  return k;
}

Eigen::MatrixXd MapBlock::reconstructed_gram() const {
  if (x_.rows() == 0) return {};
  const Eigen::MatrixXd l = llt_.matrixL();
  return l * l.transpose();
}

FieldQuery MapBlock::predict(const Position& t, Mat3* gradient, bool with_variance) const {
  FieldQuery q;
  const double prior_var = hyper_.signal_variance + hyper_.noise_variance;
  q.mean = mean_;
  q.variance.setConstant(prior_var);
  if (gradient) gradient->setZero();
  const auto n = x_.rows();
  if (n == 0) return q;

  const double inv_l2 = 1.0 / (hyper_.length_scale * hyper_.length_scale);
  const Eigen::Matrix<double, Eigen::Dynamic, 3> diff = x_.rowwise() - t.transpose();
  const Eigen::VectorXd kstar =
      hyper_.signal_variance * (-0.5 * inv_l2 * diff.rowwise().squaredNorm()).array().exp();

  q.mean += alpha_.transpose() * kstar;

  if (gradient) {
    // d k_i / d t = k_i (x_i - t) / l^2
    const Eigen::Matrix<double, Eigen::Dynamic, 3> dk = diff.array().colwise() * kstar.array();
    *gradient = inv_l2 * (alpha_.transpose() * dk);
  }

  if (with_variance) {
    const Eigen::VectorXd v = llt_.matrixL().solve(kstar);
    const double var = prior_var - v.squaredNorm();
    q.ill_conditioned = var < kNegativeVarianceFlag;
    q.variance.setConstant(std::max(var, 0.0));
  }
  return q;
}

// ---------------------------------------------------------------------------
// MagMap

MagMap MagMap::build(const Dataset& fingerprints, const GpHyperparams& hyper, double block_size,
                     double overlap) {
  hyper.validate();
  if (fingerprints.samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "build_map needs at least one fingerprint");
  }
  if (!(block_size > 0.0) || !(overlap >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "block_size must be > 0 and overlap >= 0");
  }
  if (block_size <= 2.0 * hyper.length_scale) {
    std::ostringstream os;
    os << "block_size " << block_size << " m is not larger than 2 * length_scale ("
       << 2.0 * hyper.length_scale << " m)";
    warn(os.str());
  }

  std::vector<Position> pos;
  std::vector<FieldVec> val;
  pos.reserve(fingerprints.size());
  val.reserve(fingerprints.size());
  for (const auto& f : fingerprints.samples) {
    const Position p = fingerprint_position(f);
    const FieldVec b = fingerprint_field_in_map(f);
    if (!p.allFinite() || !b.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "fingerprint contains non-finite values");
    }
    pos.push_back(p);
    val.push_back(b);
  }

  if (hyper.noise_variance == 0.0) {
    std::vector<std::size_t> order(pos.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto lex = [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(pos[a].data(), pos[a].data() + 3, pos[b].data(),
                                          pos[b].data() + 3);
    };
    std::sort(order.begin(), order.end(), lex);
    for (std::size_t i = 1; i < order.size(); ++i) {
      if ((pos[order[i]] - pos[order[i - 1]]).norm() < 1e-12) {
        throw Error(ErrorCode::kSingular,
                    "duplicated fingerprint position " + fmt_vec(pos[order[i]]) +
                        " makes K singular with noise_variance = 0; use noise_variance > 0");
      }
    }
  }

  MagMap map;
  map.hyper_ = hyper;
  map.block_size_ = block_size;
  map.overlap_ = overlap;
  const Box data_box = bounding_box(pos);
  map.domain_ = data_box.inflated(overlap);
  map.origin_ = data_box.min;
  for (int a = 0; a < 3; ++a) {
    const double extent = data_box.max[a] - data_box.min[a];
    map.dims_[a] = std::max(1, static_cast<int>(std::ceil(extent / block_size - 1e-9)));
  }
  FieldVec sum = FieldVec::Zero();
  for (const auto& b : val) sum += b;
  map.fallback_mean_ = sum / static_cast<double>(val.size());

  // Bucket each sample into every cell whose overlap-grown box holds it.
  const std::size_t nblocks =
      static_cast<std::size_t>(map.dims_[0]) * map.dims_[1] * map.dims_[2];
  std::vector<BlockData> data(nblocks);
  for (int k = 0; k < map.dims_[2]; ++k) {
    for (int j = 0; j < map.dims_[1]; ++j) {
      for (int i = 0; i < map.dims_[0]; ++i) {
        BlockData& bd = data[map.flat_index(i, j, k)];
        bd.index = {i, j, k};
        const std::array<int, 3> idx{i, j, k};
        for (int a = 0; a < 3; ++a) {
          bd.bounds.min[a] = map.origin_[a] + idx[a] * block_size;
          bd.bounds.max[a] = map.origin_[a] + (idx[a] + 1) * block_size;
          // Outer cells reach the domain boundary so that the union of block
          // bounds equals the domain.
          if (idx[a] == 0) bd.bounds.min[a] = map.domain_.min[a];
          if (idx[a] == map.dims_[a] - 1) bd.bounds.max[a] = map.domain_.max[a];
        }
      }
    }
  }
  for (std::size_t s = 0; s < pos.size(); ++s) {
    const Position& p = pos[s];
    std::array<int, 2> range[3];
    for (int a = 0; a < 3; ++a) {
      const double lo = (p[a] - overlap - map.origin_[a]) / block_size;
      const double hi = (p[a] + overlap - map.origin_[a]) / block_size;
      // One extra cell each way; the containment test below decides.
      range[a] = {std::max(0, static_cast<int>(std::floor(lo)) - 1),
                  std::min(map.dims_[a] - 1, static_cast<int>(std::floor(hi)) + 1)};
    }
    for (int k = range[2][0]; k <= range[2][1]; ++k) {
      for (int j = range[1][0]; j <= range[1][1]; ++j) {
        for (int i = range[0][0]; i <= range[0][1]; ++i) {
          BlockData& bd = data[map.flat_index(i, j, k)];
          if (bd.bounds.inflated(overlap).contains(p)) {
            bd.positions.push_back(p);
            bd.fields.push_back(val[s]);
          }
        }
      }
    }
  }

  map.blocks_.reserve(nblocks);
  for (auto& bd : data) {
    map.blocks_.emplace_back(bd.bounds, std::move(bd.positions), std::move(bd.fields), hyper,
                             map.fallback_mean_);
  }
  return map;
}

MagMap MagMap::from_blocks(const GpHyperparams& hyper, double block_size, double overlap,
                           const Box& domain, const Vec3& grid_origin,
                           const std::array<int, 3>& dims, const FieldVec& fallback_mean,
                           const std::vector<BlockData>& blocks) {
  hyper.validate();
  MagMap map;
  map.hyper_ = hyper;
  map.block_size_ = block_size;
  map.overlap_ = overlap;
  map.domain_ = domain;
  map.origin_ = grid_origin;
  map.dims_ = dims;
  map.fallback_mean_ = fallback_mean;
  const std::size_t nblocks = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (blocks.size() != nblocks) {
    throw Error(ErrorCode::kParse, "map block count does not match grid dimensions");
  }
  std::vector<const BlockData*> ordered(nblocks, nullptr);
  for (const auto& b : blocks) {
    for (int a = 0; a < 3; ++a) {
      if (b.index[a] < 0 || b.index[a] >= dims[a]) {
        throw Error(ErrorCode::kParse, "map block index out of range");
      }
    }
    ordered[map.flat_index(b.index[0], b.index[1], b.index[2])] = &b;
  }
  map.blocks_.reserve(nblocks);
  for (const BlockData* b : ordered) {
    if (!b) throw Error(ErrorCode::kParse, "map is missing a block");
    map.blocks_.emplace_back(b->bounds, b->positions, b->fields, hyper, fallback_mean);
  }
  return map;
}

std::size_t MagMap::flat_index(int i, int j, int k) const {
  return static_cast<std::size_t>(i) +
         static_cast<std::size_t>(dims_[0]) * (static_cast<std::size_t>(j) +
                                               static_cast<std::size_t>(dims_[1]) * k);
}

std::array<int, 3> MagMap::block_index(const MapBlock& block) const {
  const auto flat = static_cast<std::size_t>(&block - blocks_.data());
  const int i = static_cast<int>(flat % dims_[0]);
  const int j = static_cast<int>((flat / dims_[0]) % dims_[1]);
  const int k = static_cast<int>(flat / (static_cast<std::size_t>(dims_[0]) * dims_[1]));
  return {i, j, k};
}

bool MagMap::contains(const Position& t) const { return domain_.contains(t); }

const MapBlock& MagMap::block_for(const Position& t) const {
  if (!t.allFinite() || !domain_.contains(t)) throw_out_of_map(t);
  // On a regular grid the nearest cell center is the clamped cell index.
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const int cell = static_cast<int>(std::floor((t[a] - origin_[a]) / block_size_));
    idx[a] = std::clamp(cell, 0, dims_[a] - 1);
  }
  return blocks_[flat_index(idx[0], idx[1], idx[2])];
}

FieldQuery MagMap::query(const Position& t) const { return block_for(t).predict(t, nullptr); }

Mat3 MagMap::query_gradient(const Position& t) const {
  Mat3 g;
  block_for(t).predict(t, &g, false);
  return g;
}

FieldQuery MagMap::query_with_gradient(const Position& t, Mat3& gradient) const {
  return block_for(t).predict(t, &gradient);
}

MagMap build_map(const Dataset& fingerprints, const GpHyperparams& hyper, double block_size,
                 double overlap) {
  return MagMap::build(fingerprints, hyper, block_size, overlap);
}

FieldQuery query(const MagMap& map, const Position& t) { return map.query(t); }

Mat3 query_gradient(const MagMap& map, const Position& t) { return map.query_gradient(t); }

// ---------------------------------------------------------------------------
// GridMap

GridMap GridMap::build(const Dataset& fingerprints) {
  if (fingerprints.samples.empty()) {
    throw Error(ErrorCode::kIrregularGrid, "grid map needs at least one fingerprint");
  }
  GridMap grid;
  std::vector<Position> pos;
  std::vector<FieldVec> val;
  for (const auto& f : fingerprints.samples) {
    pos.push_back(fingerprint_position(f));
    val.push_back(fingerprint_field_in_map(f));
  }
  const Box box = bounding_box(pos);
  const double tol = 1e-6 * std::max(1.0, box.size().maxCoeff());

  for (int a = 0; a < 3; ++a) {
    std::vector<double> c;
    for (const auto& p : pos) c.push_back(p[a]);
    std::sort(c.begin(), c.end());
    std::vector<double> uniq;
    for (double v : c) {
      if (uniq.empty() || v - uniq.back() > tol) uniq.push_back(v);
    }
    if (uniq.size() > 2) {
      const double step = (uniq.back() - uniq.front()) / static_cast<double>(uniq.size() - 1);
      for (std::size_t i = 1; i < uniq.size(); ++i) {
        if (std::abs(uniq[i] - uniq[i - 1] - step) > tol) {
          throw Error(ErrorCode::kIrregularGrid,
                      "fingerprint coordinates along axis " + std::to_string(a) +
                          " are not evenly spaced");
        }
      }
    }
    grid.axes_[a] = std::move(uniq);
  }

  const std::size_t nx = grid.axes_[0].size(), ny = grid.axes_[1].size(),
                    nz = grid.axes_[2].size();
  if (nx * ny * nz != pos.size()) {
    throw Error(ErrorCode::kIrregularGrid,
                "fingerprints do not form a complete lattice (" + std::to_string(pos.size()) +
                    " samples for " + std::to_string(nx) + "x" + std::to_string(ny) + "x" +
                    std::to_string(nz) + " nodes)");
  }
  grid.values_.assign(nx * ny * nz, FieldVec::Constant(std::nan("")));
  auto locate = [&](int a, double v) {
    const auto& ax = grid.axes_[a];
    const auto it = std::lower_bound(ax.begin(), ax.end(), v - tol);
    return static_cast<std::size_t>(it - ax.begin());
  };
  for (std::size_t s = 0; s < pos.size(); ++s) {
    const std::size_t i = locate(0, pos[s].x()), j = locate(1, pos[s].y()),
                      k = locate(2, pos[s].z());
    FieldVec& slot = grid.values_[i + nx * (j + ny * k)];
    if (!std::isnan(slot.x())) {
      throw Error(ErrorCode::kIrregularGrid, "duplicate lattice node at " + fmt_vec(pos[s]));
    }
    slot = val[s];
  }
  return grid;
}

FieldVec GridMap::node(int i, int j, int k) const {
  const std::size_t nx = axes_[0].size(), ny = axes_[1].size();
  return values_[static_cast<std::size_t>(i) + nx * (static_cast<std::size_t>(j) + ny * k)];
}

bool GridMap::contains(const Position& t) const {
  for (int a = 0; a < 3; ++a) {
    const auto& ax = axes_[a];
    if (ax.size() < 2) continue;
    if (t[a] < ax.front() - 1e-9 || t[a] > ax.back() + 1e-9) return false;
  }
  return t.allFinite();
}

FieldVec GridMap::interpolate(const Position& t, Mat3* gradient) const {
  if (!contains(t)) throw_out_of_map(t);
  std::array<int, 3> lo{0, 0, 0};
  std::array<double, 3> frac{0, 0, 0};
  std::array<double, 3> inv_step{0, 0, 0};
  std::array<int, 3> span{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    const auto& ax = axes_[a];
    if (ax.size() < 2) continue;
    const double step = (ax.back() - ax.front()) / static_cast<double>(ax.size() - 1);
    const int cell = std::clamp(static_cast<int>(std::floor((t[a] - ax.front()) / step)), 0,
                                static_cast<int>(ax.size()) - 2);
    lo[a] = cell;
    span[a] = 1;
    inv_step[a] = 1.0 / step;
    frac[a] = std::clamp((t[a] - ax[cell]) * inv_step[a], 0.0, 1.0);
  }
  FieldVec value = FieldVec::Zero();
  if (gradient) gradient->setZero();
  for (int dz = 0; dz <= span[2]; ++dz) {
    for (int dy = 0; dy <= span[1]; ++dy) {
      for (int dx = 0; dx <= span[0]; ++dx) {
        const std::array<int, 3> d{dx, dy, dz};
        std::array<double, 3> w{};
        for (int a = 0; a < 3; ++a) w[a] = span[a] ? (d[a] ? frac[a] : 1.0 - frac[a]) : 1.0;
        const FieldVec v = node(lo[0] + dx, lo[1] + dy, lo[2] + dz);
        value += w[0] * w[1] * w[2] * v;
        if (gradient) {
          for (int a = 0; a < 3; ++a) {
            if (!span[a]) continue;
            const double dw = (d[a] ? 1.0 : -1.0) * inv_step[a];
            double prod = dw;
            for (int b = 0; b < 3; ++b) {
              if (b != a) prod *= w[b];
            }
            gradient->col(a) += prod * v;
          }
        }
      }
    }
  }
  return value;
}

FieldQuery GridMap::query(const Position& t) const {
  FieldQuery q;
  q.mean = interpolate(t, nullptr);
  return q;
}

Mat3 GridMap::query_gradient(const Position& t) const {
  Mat3 g;
  interpolate(t, &g);
  return g;
}

FieldQuery GridMap::query_with_gradient(const Position& t, Mat3& gradient) const {
  FieldQuery q;
  q.mean = interpolate(t, &gradient);
  return q;
}

FieldVec interpolate_bilinear(const Dataset& grid_fingerprints, const Position& t) {
  return GridMap::build(grid_fingerprints).query(t).mean;
}

}  // namespace maglidar
