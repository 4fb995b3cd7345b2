#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace vtok {

using Token = std::uint16_t;

/// n x n grid of code indices, row-major.
using TokenGrid =
    Eigen::Matrix<Token, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C x H x W real tensor stored as a C x (H*W) row-major matrix, so each
/// channel plane is contiguous and channel mixing is a plain matrix product.
template <typename Scalar>
struct ChannelGrid {
  using Matrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<Matrix>;
  using ConstPlaneMap = Eigen::Map<const Matrix>;

  Matrix data;
  Eigen::Index height = 0;
  Eigen::Index width = 0;

  ChannelGrid() = default;
  ChannelGrid(Eigen::Index channels, Eigen::Index h, Eigen::Index w)
      : data(Matrix::Zero(channels, h * w)), height(h), width(w) {}
  ChannelGrid(Matrix d, Eigen::Index h, Eigen::Index w)
      : data(std::move(d)), height(h), width(w) {}

  Eigen::Index channels() const { return data.rows(); }

  Scalar& operator()(Eigen::Index c, Eigen::Index y, Eigen::Index x) {
    return data(c, y * width + x);
  }
  Scalar operator()(Eigen::Index c, Eigen::Index y, Eigen::Index x) const {
    return data(c, y * width + x);
  }

  PlaneMap plane(Eigen::Index c) {
    return PlaneMap(data.row(c).data(), height, width);
  }
  ConstPlaneMap plane(Eigen::Index c) const {
    return ConstPlaneMap(data.row(c).data(), height, width);
  }

  bool same_shape(const ChannelGrid& o) const {
    return channels() == o.channels() && height == o.height &&
           width == o.width;
  }

  template <typename Other>
  ChannelGrid<Other> cast() const {
    return ChannelGrid<Other>(data.template cast<Other>(), height, width);
  }
};

/// V x h x w per-position code weights.
using OneHotGrid = ChannelGrid<float>;
/// d_c x m x m codebook-mixed embedding.
using EmbeddingTensor = ChannelGrid<float>;

}  // namespace vtok
