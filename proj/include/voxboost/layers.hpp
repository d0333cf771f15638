#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "voxboost/error.hpp"
#include "voxboost/volume.hpp"

namespace voxboost {

/// 3D convolution (cross-correlation), stride 1, symmetric zero padding.
/// weight is out x (in * k^3) with the column index ordered (c, kz, ky, kx).
template <typename Scalar>
struct Conv3d {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int padding = 0;
    Matrix weight;
    Vector bias;

    Conv3d() = default;
    Conv3d(int in, int out, int k, int pad)
        : in_channels(in), out_channels(out), kernel(k), padding(pad),
          weight(Matrix::Zero(out, static_cast<Eigen::Index>(in) * k * k * k)), bias(Vector::Zero(out)) {
        if (in < 1 || out < 1 || k < 1 || pad < 0) throw InvalidInput("conv3d: bad layer shape");
    }

    /// Zero-padded so output size equals input size; kernel must be odd.
    static Conv3d same(int in, int out, int k) {
        if (k % 2 == 0) throw InvalidInput("conv3d: same padding needs an odd kernel");
        return Conv3d(in, out, k, (k - 1) / 2);
    }

    int output_extent(int input_extent) const { return input_extent + 2 * padding - kernel + 1; }
    Eigen::Index patch_size() const { return static_cast<Eigen::Index>(in_channels) * kernel * kernel * kernel; }

    /// Zeroed layer of the same shape, used as a gradient or momentum holder.
    Conv3d zeros_like() const { return Conv3d(in_channels, out_channels, kernel, padding); }
};

namespace detail {

// Valid input x range for kernel column kx: output x in [lo, hi) reads ix = x + kx - p inside [0, W).
inline void valid_span(int kx, int pad, int in_w, int out_w, int& lo, int& hi) {
    lo = std::clamp(pad - kx, 0, out_w);
    hi = std::clamp(in_w + pad - kx, lo, out_w);
}

// Rows of the unfolded patch matrix are (c, kz, ky, kx); columns are whole
// output lines [first_line * ow, (first_line + lines) * ow).
template <typename Scalar, typename Patches>
void unfold(const Volume<Scalar>& input, const Conv3d<Scalar>& layer, int oh, int ow, int first_line, int lines,
            Patches& patches) {
    const int k = layer.kernel, p = layer.padding;
    const int D = input.depth(), H = input.height(), W = input.width();
    const Scalar* src = input.data().data();
    Eigen::Index row = 0;
    for (int c = 0; c < input.channels(); ++c)
        for (int kz = 0; kz < k; ++kz)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx, ++row) {
                    int lo, hi;
                    valid_span(kx, p, W, ow, lo, hi);
                    Scalar* dst = &patches(row, 0);
                    for (int line = first_line; line < first_line + lines; ++line, dst += ow) {
                        const int iz = line / oh + kz - p, iy = line % oh + ky - p;
                        if (iz < 0 || iz >= D || iy < 0 || iy >= H || lo >= hi) {
                            std::fill(dst, dst + ow, Scalar(0));
                            continue;
                        }
                        const Scalar* in_line = src + input.index(c, iz, iy, 0) + (kx - p);
                        std::fill(dst, dst + lo, Scalar(0));
                        std::copy(in_line + lo, in_line + hi, dst + lo);
                        std::fill(dst + hi, dst + ow, Scalar(0));
                    }
                }
}

// Adjoint of unfold: scatter-add patch gradients back onto the input grid.
template <typename Scalar, typename Patches>
void fold_add(Volume<Scalar>& grad_input, const Conv3d<Scalar>& layer, int oh, int ow, int first_line, int lines,
              const Patches& patches) {
    const int k = layer.kernel, p = layer.padding;
    const int D = grad_input.depth(), H = grad_input.height(), W = grad_input.width();
    Scalar* dst_base = grad_input.data().data();
    Eigen::Index row = 0;
    for (int c = 0; c < grad_input.channels(); ++c)
        for (int kz = 0; kz < k; ++kz)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx, ++row) {
                    int lo, hi;
                    valid_span(kx, p, W, ow, lo, hi);
                    const Scalar* src = &patches(row, 0);
                    for (int line = first_line; line < first_line + lines; ++line, src += ow) {
                        const int iz = line / oh + kz - p, iy = line % oh + ky - p;
                        if (iz < 0 || iz >= D || iy < 0 || iy >= H) continue;
                        Scalar* out_line = dst_base + grad_input.index(c, iz, iy, 0) + (kx - p);
                        for (int x = lo; x < hi; ++x) out_line[x] += src[x];
                    }
                }
}

// Whole output lines per unfolded chunk. The patch buffer is kept near 64K
// scalars so it stays in L2 during the GEMM.
inline int chunk_lines(Eigen::Index patch_rows, int line_length, int total_lines) {
    const Eigen::Index budget = Eigen::Index(1) << 16;
    const Eigen::Index lines = budget / std::max<Eigen::Index>(patch_rows * line_length, 1);
    return static_cast<int>(std::clamp<Eigen::Index>(lines, 1, total_lines));
}

} // namespace detail

template <typename Scalar>
Volume<Scalar> conv3d_forward(const Volume<Scalar>& input, const Conv3d<Scalar>& layer) {
    if (input.channels() != layer.in_channels)
        throw InvalidInput("conv3d: input has " + std::to_string(input.channels()) + " channels, layer expects " +
                           std::to_string(layer.in_channels));
    const int od = layer.output_extent(input.depth()), oh = layer.output_extent(input.height()),
              ow = layer.output_extent(input.width());
    if (od < 1 || oh < 1 || ow < 1) throw InvalidInput("conv3d: kernel larger than padded input");
    Volume<Scalar> output(layer.out_channels, od, oh, ow);
    auto out = output.matrix();
    const int total_lines = od * oh;
    const int step = detail::chunk_lines(layer.patch_size(), ow, total_lines);
    typename Conv3d<Scalar>::Matrix patches(layer.patch_size(), static_cast<Eigen::Index>(step) * ow);
    for (int first = 0; first < total_lines; first += step) {
        const int lines = std::min(step, total_lines - first);
        const Eigen::Index count = static_cast<Eigen::Index>(lines) * ow;
        detail::unfold(input, layer, oh, ow, first, lines, patches);
        out.middleCols(static_cast<Eigen::Index>(first) * ow, count).noalias() = layer.weight * patches.leftCols(count);
    }
    out.colwise() += layer.bias;
    return output;
}

template <typename Scalar>
struct Conv3dGradients {
    Volume<Scalar> input;
    typename Conv3d<Scalar>::Matrix weight;
    typename Conv3d<Scalar>::Vector bias;
};

/// Gradients of conv3d_forward with respect to its input, weight and bias.
template <typename Scalar>
Conv3dGradients<Scalar> conv3d_backward(const Volume<Scalar>& grad_output, const Volume<Scalar>& input,
                                        const Conv3d<Scalar>& layer) {
    if (input.channels() != layer.in_channels) throw InvalidInput("conv3d_backward: input channel mismatch");
    const int od = layer.output_extent(input.depth()), oh = layer.output_extent(input.height()),
              ow = layer.output_extent(input.width());
    if (grad_output.channels() != layer.out_channels || grad_output.depth() != od || grad_output.height() != oh ||
        grad_output.width() != ow)
        throw InvalidInput("conv3d_backward: gradient shape " + shape_string(grad_output.dims()) +
                           " does not match forward output");
    Conv3dGradients<Scalar> grads{Volume<Scalar>(input.channels(), input.depth(), input.height(), input.width()),
                                  Conv3d<Scalar>::Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                                  grad_output.matrix().rowwise().sum()};
    const auto g = grad_output.matrix();
    const int total_lines = od * oh;
    const int step = detail::chunk_lines(layer.patch_size(), ow, total_lines);
    typename Conv3d<Scalar>::Matrix patches(layer.patch_size(), static_cast<Eigen::Index>(step) * ow);
    typename Conv3d<Scalar>::Matrix patch_grads(layer.patch_size(), static_cast<Eigen::Index>(step) * ow);
    for (int first = 0; first < total_lines; first += step) {
        const int lines = std::min(step, total_lines - first);
        const Eigen::Index start = static_cast<Eigen::Index>(first) * ow;
        const Eigen::Index count = static_cast<Eigen::Index>(lines) * ow;
        detail::unfold(input, layer, oh, ow, first, lines, patches);
        grads.weight.noalias() += g.middleCols(start, count) * patches.leftCols(count).transpose();
        patch_grads.leftCols(count).noalias() = layer.weight.transpose() * g.middleCols(start, count);
        detail::fold_add(grads.input, layer, oh, ow, first, lines, patch_grads);
    }
    return grads;
}

/// Flat input index of each pooled maximum.
using PoolIndices = std::vector<std::int64_t>;

template <typename Scalar>
struct PoolResult {
    Volume<Scalar> output;
    PoolIndices argmax;
};

/// 2x2x2 max pool, stride 2. Ties resolve to the first voxel in (z, y, x) scan order.
template <typename Scalar>
PoolResult<Scalar> maxpool3d_forward(const Volume<Scalar>& input) {
    if (input.depth() % 2 || input.height() % 2 || input.width() % 2)
        throw InvalidInput("maxpool3d: spatial dims must be even, got " + shape_string(input.dims()));
    PoolResult<Scalar> result{Volume<Scalar>(input.channels(), input.depth() / 2, input.height() / 2,
                                             input.width() / 2),
                              {}};
    auto& out = result.output;
    result.argmax.resize(static_cast<std::size_t>(out.size()));
    const Scalar* src = input.data().data();
    std::size_t o = 0;
    for (int c = 0; c < out.channels(); ++c)
        for (int z = 0; z < out.depth(); ++z)
            for (int y = 0; y < out.height(); ++y)
                for (int x = 0; x < out.width(); ++x, ++o) {
                    Eigen::Index best = input.index(c, 2 * z, 2 * y, 2 * x);
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const Eigen::Index i = input.index(c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
                                if (src[i] > src[best]) best = i;
                            }
                    out.data()(static_cast<Eigen::Index>(o)) = src[best];
                    result.argmax[o] = best;
                }
    return result;
}

template <typename Scalar>
Volume<Scalar> maxpool3d_backward(const Volume<Scalar>& grad_output, const PoolIndices& argmax,
                                  const std::array<int, 4>& input_dims) {
    if (argmax.size() != static_cast<std::size_t>(grad_output.size()))
        throw InvalidInput("maxpool3d_backward: index count does not match gradient");
    Volume<Scalar> grad_input(input_dims[0], input_dims[1], input_dims[2], input_dims[3]);
    for (std::size_t o = 0; o < argmax.size(); ++o) {
        const auto i = argmax[o];
        if (i < 0 || i >= grad_input.size()) throw InternalError("maxpool3d_backward: argmax index out of range");
        grad_input.data()(i) += grad_output.data()(static_cast<Eigen::Index>(o));
    }
    return grad_input;
}

template <typename Scalar>
Volume<Scalar> relu_forward(const Volume<Scalar>& input) {
    Volume<Scalar> out = input;
    out.data() = input.data().cwiseMax(Scalar(0));
    return out;
}

/// Passes the gradient where the forward input was strictly positive.
template <typename Scalar>
Volume<Scalar> relu_backward(const Volume<Scalar>& grad_output, const Volume<Scalar>& forward_input) {
    if (!grad_output.same_shape(forward_input)) throw InvalidInput("relu_backward: shape mismatch");
    Volume<Scalar> out = grad_output;
    out.data() = (forward_input.data().array() > Scalar(0)).select(grad_output.data(), Scalar(0));
    return out;
}

/// Classical momentum: v <- momentum * v + grad; w <- w - lr * v.
template <typename Weights, typename Grads, typename Buffer>
void sgd_momentum_step(Eigen::MatrixBase<Weights>& weights, const Eigen::MatrixBase<Grads>& grads,
                       Eigen::MatrixBase<Buffer>& buffer, double learning_rate, double momentum) {
    if (weights.rows() != grads.rows() || weights.cols() != grads.cols() || buffer.rows() != grads.rows() ||
        buffer.cols() != grads.cols())
        throw InvalidInput("sgd_momentum_step: shape mismatch");
    using Scalar = typename Weights::Scalar;
    buffer = Scalar(momentum) * buffer + grads;
    weights -= Scalar(learning_rate) * buffer;
}

} // namespace voxboost
