#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <Eigen/Core>

#include "voxboost/error.hpp"

namespace voxboost {

/// Dense (channels, depth, height, width) voxel grid in channel-major order,
/// x fastest. Viewed as a channels x voxels row-major matrix for the
/// convolution GEMMs.
template <typename Scalar>
class Volume {
public:
    using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using MatrixView = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstMatrixView =
        Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    Volume() = default;
    Volume(int channels, int depth, int height, int width)
        : dims_{channels, depth, height, width},
          data_(Storage::Zero(static_cast<Eigen::Index>(channels) * depth * height * width)) {
        if (channels < 1 || depth < 1 || height < 1 || width < 1)
            throw InvalidInput("volume dimensions must be positive");
    }

    static Volume cube(int channels, int edge) { return Volume(channels, edge, edge, edge); }

    int channels() const { return dims_[0]; }
    int depth() const { return dims_[1]; }
    int height() const { return dims_[2]; }
    int width() const { return dims_[3]; }
    const std::array<int, 4>& dims() const { return dims_; }
    Eigen::Index voxels() const { return static_cast<Eigen::Index>(dims_[1]) * dims_[2] * dims_[3]; }
    Eigen::Index size() const { return data_.size(); }

    Eigen::Index index(int c, int z, int y, int x) const {
        return ((static_cast<Eigen::Index>(c) * dims_[1] + z) * dims_[2] + y) * dims_[3] + x;
    }
    Scalar& operator()(int c, int z, int y, int x) { return data_(index(c, z, y, x)); }
    Scalar operator()(int c, int z, int y, int x) const { return data_(index(c, z, y, x)); }

    Storage& data() { return data_; }
    const Storage& data() const { return data_; }

    MatrixView matrix() { return MatrixView(data_.data(), dims_[0], voxels()); }
    ConstMatrixView matrix() const { return ConstMatrixView(data_.data(), dims_[0], voxels()); }

    bool same_shape(const Volume& other) const { return dims_ == other.dims_; }

    template <typename Other>
    Volume<Other> cast() const {
        Volume<Other> out(dims_[0], dims_[1], dims_[2], dims_[3]);
        out.data() = data_.template cast<Other>();
        return out;
    }

    friend bool operator==(const Volume& a, const Volume& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

private:
    std::array<int, 4> dims_{0, 0, 0, 0};
    Storage data_;
};

std::string shape_string(const std::array<int, 4>& dims);

// "vvol v1 <channels> <depth> <height> <width>\n" followed by little-endian
// float32 values in channel-major order, x fastest.
void write_vvol(std::ostream& out, const Volume<float>& volume);
void write_vvol(const std::filesystem::path& path, const Volume<float>& volume);
Volume<float> read_vvol(std::istream& in);
Volume<float> read_vvol(const std::filesystem::path& path);

} // namespace voxboost
