// Differentiable layer primitives.
//
// Convolutions are lowered to im2col + small row-major GEMM kernels; the
// transposed convolution reuses the same machinery through the adjoint
// relation (its forward pass is exactly the input-backward of a forward
// convolution with the same weights). All reductions run sequentially in
// row-major order so results are bit-reproducible run to run.

#pragma once

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "food/tensor.hpp"

namespace food {

// ---------------------------------------------------------------------------
// GEMM kernels (row-major, accumulate into C)
// ---------------------------------------------------------------------------

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t m = 0; m < M; ++m) {
        const T* arow = a + m * K;
        T* crow = c + m * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T av = arow[k];
            const T* brow = b + k * N;
            for (std::size_t n = 0; n < N; ++n) crow[n] += av * brow[n];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
//
// The dot products accumulate into a fixed number of lanes so the compiler
// can vectorize the reduction without reassociating it; the lane count pins
// the summation order regardless of target width.
template <typename T>
void gemm_abt_acc(const T* a, const T* b, T* c, std::size_t M, std::size_t K, std::size_t N) {
    constexpr std::size_t kLanes = 16;
    for (std::size_t m = 0; m < M; ++m) {
        const T* arow = a + m * K;
        T* crow = c + m * N;
        for (std::size_t n = 0; n < N; ++n) {
            const T* brow = b + n * K;
            T lanes[kLanes] = {};
            std::size_t k = 0;
            for (; k + kLanes <= K; k += kLanes) {
                for (std::size_t l = 0; l < kLanes; ++l) {
                    lanes[l] += arow[k + l] * brow[k + l];
                }
            }
            T acc = T(0);
            for (; k < K; ++k) acc += arow[k] * brow[k];
            for (std::size_t l = 0; l < kLanes; ++l) acc += lanes[l];
            crow[n] += acc;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_atb_acc(const T* a, const T* b, T* c, std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t m = 0; m < M; ++m) {
        const T* arow = a + m * K;
        const T* brow = b + m * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T av = arow[k];
            T* crow = c + k * N;
            for (std::size_t n = 0; n < N; ++n) crow[n] += av * brow[n];
        }
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

struct ConvGeom {
    std::size_t channels = 0; // channels of the full-resolution grid
    std::size_t big_h = 0, big_w = 0;   // full-resolution spatial dims
    std::size_t small_h = 0, small_w = 0; // strided spatial dims
    std::size_t kh = 0, kw = 0;
    std::size_t stride = 1, pad = 0;

    std::size_t col_rows() const { return channels * kh * kw; }
    std::size_t col_cols() const { return small_h * small_w; }
};

// Gather big-grid patches into col[channels*kh*kw, small_h*small_w].
template <typename T>
void im2col(const T* src, T* col, const ConvGeom& g) {
    const std::size_t cols = g.col_cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = src + c * g.big_h * g.big_w;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
                for (std::size_t oh = 0; oh < g.small_h; ++oh) {
                    const std::ptrdiff_t ih =
                        static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                        static_cast<std::ptrdiff_t>(g.pad);
                    T* out = row + oh * g.small_w;
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.big_h)) {
                        std::fill(out, out + g.small_w, T(0));
                        continue;
                    }
                    const T* in_row = plane + static_cast<std::size_t>(ih) * g.big_w;
                    for (std::size_t ow = 0; ow < g.small_w; ++ow) {
                        const std::ptrdiff_t iw =
                            static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.big_w))
                                      ? T(0)
                                      : in_row[static_cast<std::size_t>(iw)];
                    }
                }
            }
        }
    }
}

// Scatter-add col back onto the big grid (adjoint of im2col).
template <typename T>
void col2im_acc(const T* col, T* dst, const ConvGeom& g) {
    const std::size_t cols = g.col_cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* plane = dst + c * g.big_h * g.big_w;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
                for (std::size_t oh = 0; oh < g.small_h; ++oh) {
                    const std::ptrdiff_t ih =
                        static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                        static_cast<std::ptrdiff_t>(g.pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.big_h)) continue;
                    const T* in = row + oh * g.small_w;
                    T* out_row = plane + static_cast<std::size_t>(ih) * g.big_w;
                    for (std::size_t ow = 0; ow < g.small_w; ++ow) {
                        const std::ptrdiff_t iw =
                            static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.big_w)) continue;
                        out_row[static_cast<std::size_t>(iw)] += in[ow];
                    }
                }
            }
        }
    }
}

namespace detail {

struct Conv2dDims {
    bool batched = false;
    std::size_t batch = 1;
    std::size_t c_in = 0, h = 0, w = 0;
};

inline Conv2dDims split_conv_input(const Shape& shape, const char* op) {
    Conv2dDims d;
    if (shape.size() == 3) {
        d.batched = false;
        d.c_in = shape[0];
        d.h = shape[1];
        d.w = shape[2];
    } else if (shape.size() == 4) {
        d.batched = true;
        d.batch = shape[0];
        d.c_in = shape[1];
        d.h = shape[2];
        d.w = shape[3];
    } else {
        throw ShapeError(std::string(op) + ": input must be [C,H,W] or [B,C,H,W], got " +
                         shape_str(shape));
    }
    return d;
}

} // namespace detail

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

// input [C_in,H,W] or [B,C_in,H,W]; weight [C_out,C_in,kH,kW]; bias [C_out].
// Output spatial dims: floor((H + 2*pad - kH)/stride) + 1 per axis.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
    const auto dims = detail::split_conv_input(input.shape(), "conv2d");
    if (weight.rank() != 4) {
        throw ShapeError("conv2d: weight must be [C_out,C_in,kH,kW], got " +
                         shape_str(weight.shape()));
    }
    const std::size_t c_out = weight.shape()[0];
    const std::size_t kh = weight.shape()[2];
    const std::size_t kw = weight.shape()[3];
    if (weight.shape()[1] != dims.c_in) {
        throw ShapeError("conv2d: input channels " + std::to_string(dims.c_in) +
                         " do not match weight C_in " + std::to_string(weight.shape()[1]));
    }
    if (bias.rank() != 1 || bias.shape()[0] != c_out) {
        throw ShapeError("conv2d: bias must be [C_out]=" + std::to_string(c_out) + ", got " +
                         shape_str(bias.shape()));
    }
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (kh > dims.h + 2 * pad || kw > dims.w + 2 * pad) {
        throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " exceeds padded input " + std::to_string(dims.h + 2 * pad) + "x" +
                         std::to_string(dims.w + 2 * pad));
    }

    ConvGeom g;
    g.channels = dims.c_in;
    g.big_h = dims.h;
    g.big_w = dims.w;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.pad = pad;
    g.small_h = (dims.h + 2 * pad - kh) / stride + 1;
    g.small_w = (dims.w + 2 * pad - kw) / stride + 1;

    const std::size_t k_dim = g.col_rows();
    const std::size_t spatial = g.col_cols();
    const std::size_t in_stride = dims.c_in * dims.h * dims.w;
    const std::size_t out_stride = c_out * spatial;

    std::vector<T> out(dims.batch * out_stride, T(0));
    std::vector<T> col(k_dim * spatial);
    for (std::size_t b = 0; b < dims.batch; ++b) {
        im2col(input.data().data() + b * in_stride, col.data(), g);
        T* out_b = out.data() + b * out_stride;
        gemm_acc(weight.data().data(), col.data(), out_b, c_out, k_dim, spatial);
        for (std::size_t co = 0; co < c_out; ++co) {
            const T bv = bias.data()[co];
            T* row = out_b + co * spatial;
            for (std::size_t q = 0; q < spatial; ++q) row[q] += bv;
        }
    }

    Shape out_shape = dims.batched ? Shape{dims.batch, c_out, g.small_h, g.small_w}
                                   : Shape{c_out, g.small_h, g.small_w};

    auto in_node = input.node();
    auto w_node = weight.node();
    auto b_node = bias.node();
    auto backward = [in_node, w_node, b_node, g, dims, c_out, k_dim, spatial, in_stride,
                     out_stride](TensorNode<T>& self) {
        const T* grad_out = self.grad.data();
        std::vector<T> col(k_dim * spatial);
        std::vector<T> dcol;
        if (in_node->requires_grad) {
            in_node->ensure_grad();
            dcol.assign(k_dim * spatial, T(0));
        }
        if (w_node->requires_grad) w_node->ensure_grad();
        if (b_node->requires_grad) b_node->ensure_grad();

        for (std::size_t b = 0; b < dims.batch; ++b) {
            const T* g_b = grad_out + b * out_stride;
            if (w_node->requires_grad) {
                im2col(in_node->data.data() + b * in_stride, col.data(), g);
                gemm_abt_acc(g_b, col.data(), w_node->grad.data(), c_out, spatial, k_dim);
            }
            if (in_node->requires_grad) {
                std::fill(dcol.begin(), dcol.end(), T(0));
                gemm_atb_acc(w_node->data.data(), g_b, dcol.data(), c_out, k_dim, spatial);
                col2im_acc(dcol.data(), in_node->grad.data() + b * in_stride, g);
            }
            if (b_node->requires_grad) {
                for (std::size_t co = 0; co < c_out; ++co) {
                    T acc = T(0);
                    const T* row = g_b + co * spatial;
                    for (std::size_t q = 0; q < spatial; ++q) acc += row[q];
                    b_node->grad[co] += acc;
                }
            }
        }
    };

    return Tensor<T>::make_op_result(std::move(out_shape), std::move(out),
                                     {input, weight, bias}, std::move(backward));
}

// ---------------------------------------------------------------------------
// conv2d_transpose
// ---------------------------------------------------------------------------

// input [C_in,H,W] or [B,C_in,H,W]; weight [C_in,C_out,kH,kW]; bias [C_out].
// Output spatial dims: (H-1)*stride - 2*pad + kH + output_pad per axis.
// Forward equals the input-backward of conv2d with the same weight tensor,
// which makes the pair exact adjoints.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, std::size_t stride, std::size_t pad,
                           std::size_t output_pad_h, std::size_t output_pad_w) {
    const auto dims = detail::split_conv_input(input.shape(), "conv2d_transpose");
    if (weight.rank() != 4) {
        throw ShapeError("conv2d_transpose: weight must be [C_in,C_out,kH,kW], got " +
                         shape_str(weight.shape()));
    }
    if (weight.shape()[0] != dims.c_in) {
        throw ShapeError("conv2d_transpose: input channels " + std::to_string(dims.c_in) +
                         " do not match weight C_in " + std::to_string(weight.shape()[0]));
    }
    const std::size_t c_out = weight.shape()[1];
    const std::size_t kh = weight.shape()[2];
    const std::size_t kw = weight.shape()[3];
    if (bias.rank() != 1 || bias.shape()[0] != c_out) {
        throw ShapeError("conv2d_transpose: bias must be [C_out]=" + std::to_string(c_out) +
                         ", got " + shape_str(bias.shape()));
    }
    if (stride < 1) throw ShapeError("conv2d_transpose: stride must be >= 1");
    if (output_pad_h >= stride || output_pad_w >= stride) {
        throw ShapeError("conv2d_transpose: output_pad must be < stride");
    }
    if ((dims.h - 1) * stride + kh + output_pad_h < 2 * pad + 1 ||
        (dims.w - 1) * stride + kw + output_pad_w < 2 * pad + 1) {
        throw ShapeError("conv2d_transpose: padding too large for kernel/input size");
    }

    ConvGeom g;
    g.channels = c_out;
    g.big_h = (dims.h - 1) * stride - 2 * pad + kh + output_pad_h;
    g.big_w = (dims.w - 1) * stride - 2 * pad + kw + output_pad_w;
    g.small_h = dims.h;
    g.small_w = dims.w;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.pad = pad;

    const std::size_t k_dim = g.col_rows(); // c_out*kh*kw
    const std::size_t spatial = g.col_cols(); // h*w of the input
    const std::size_t in_stride = dims.c_in * spatial;
    const std::size_t out_stride = c_out * g.big_h * g.big_w;

    std::vector<T> out(dims.batch * out_stride, T(0));
    std::vector<T> col(k_dim * spatial);
    for (std::size_t b = 0; b < dims.batch; ++b) {
        std::fill(col.begin(), col.end(), T(0));
        // col[C_out*k*k, H*W] = W^T[C_out*k*k, C_in] * x[C_in, H*W]
        gemm_atb_acc(weight.data().data(), input.data().data() + b * in_stride, col.data(),
                     dims.c_in, k_dim, spatial);
        T* out_b = out.data() + b * out_stride;
        col2im_acc(col.data(), out_b, g);
        for (std::size_t co = 0; co < c_out; ++co) {
            const T bv = bias.data()[co];
            T* plane = out_b + co * g.big_h * g.big_w;
            for (std::size_t q = 0; q < g.big_h * g.big_w; ++q) plane[q] += bv;
        }
    }

    Shape out_shape = dims.batched ? Shape{dims.batch, c_out, g.big_h, g.big_w}
                                   : Shape{c_out, g.big_h, g.big_w};

    auto in_node = input.node();
    auto w_node = weight.node();
    auto b_node = bias.node();
    auto backward = [in_node, w_node, b_node, g, dims, k_dim, spatial, in_stride,
                     out_stride](TensorNode<T>& self) {
        const T* grad_out = self.grad.data();
        const std::size_t c_out = g.channels;
        std::vector<T> col_g(k_dim * spatial);
        if (in_node->requires_grad) in_node->ensure_grad();
        if (w_node->requires_grad) w_node->ensure_grad();
        if (b_node->requires_grad) b_node->ensure_grad();

        for (std::size_t b = 0; b < dims.batch; ++b) {
            const T* g_b = grad_out + b * out_stride;
            if (in_node->requires_grad || w_node->requires_grad) {
                im2col(g_b, col_g.data(), g);
            }
            if (in_node->requires_grad) {
                // d_x[C_in, H*W] += W[C_in, C_out*k*k] * col_g
                gemm_acc(w_node->data.data(), col_g.data(),
                         in_node->grad.data() + b * in_stride, dims.c_in, k_dim, spatial);
            }
            if (w_node->requires_grad) {
                // d_W[C_in, C_out*k*k] += x[C_in, H*W] * col_g^T
                gemm_abt_acc(in_node->data.data() + b * in_stride, col_g.data(),
                             w_node->grad.data(), dims.c_in, spatial, k_dim);
            }
            if (b_node->requires_grad) {
                const std::size_t plane = g.big_h * g.big_w;
                for (std::size_t co = 0; co < c_out; ++co) {
                    T acc = T(0);
                    const T* row = g_b + co * plane;
                    for (std::size_t q = 0; q < plane; ++q) acc += row[q];
                    b_node->grad[co] += acc;
                }
            }
        }
    };

    return Tensor<T>::make_op_result(std::move(out_shape), std::move(out),
                                     {input, weight, bias}, std::move(backward));
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, std::size_t stride, std::size_t pad,
                           std::size_t output_pad = 0) {
    return conv2d_transpose(input, weight, bias, stride, pad, output_pad, output_pad);
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

// y[B,M] = x[B,N] * w[M,N]^T + bias[M]
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (input.rank() != 2 || weight.rank() != 2) {
        throw ShapeError("linear: expected input [B,N] and weight [M,N], got " +
                         shape_str(input.shape()) + " and " + shape_str(weight.shape()));
    }
    const std::size_t batch = input.shape()[0];
    const std::size_t n = input.shape()[1];
    const std::size_t m = weight.shape()[0];
    if (weight.shape()[1] != n) {
        throw ShapeError("linear: inner dims disagree, input " + shape_str(input.shape()) +
                         " vs weight " + shape_str(weight.shape()));
    }
    if (bias.rank() != 1 || bias.shape()[0] != m) {
        throw ShapeError("linear: bias must be [M]=" + std::to_string(m) + ", got " +
                         shape_str(bias.shape()));
    }

    std::vector<T> out(batch * m, T(0));
    gemm_abt_acc(input.data().data(), weight.data().data(), out.data(), batch, n, m);
    for (std::size_t b = 0; b < batch; ++b) {
        T* row = out.data() + b * m;
        const T* bb = bias.data().data();
        for (std::size_t j = 0; j < m; ++j) row[j] += bb[j];
    }

    auto in_node = input.node();
    auto w_node = weight.node();
    auto b_node = bias.node();
    auto backward = [in_node, w_node, b_node, batch, n, m](TensorNode<T>& self) {
        const T* g = self.grad.data();
        if (in_node->requires_grad) {
            in_node->ensure_grad();
            gemm_acc(g, w_node->data.data(), in_node->grad.data(), batch, m, n);
        }
        if (w_node->requires_grad) {
            w_node->ensure_grad();
            gemm_atb_acc(g, in_node->data.data(), w_node->grad.data(), batch, m, n);
        }
        if (b_node->requires_grad) {
            b_node->ensure_grad();
            for (std::size_t b = 0; b < batch; ++b) {
                const T* row = g + b * m;
                for (std::size_t j = 0; j < m; ++j) b_node->grad[j] += row[j];
            }
        }
    };

    return Tensor<T>::make_op_result({batch, m}, std::move(out), {input, weight, bias},
                                     std::move(backward));
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope) {
    std::vector<T> out(input.numel());
    const auto& x = input.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : slope * x[i];

    auto in_node = input.node();
    auto backward = [in_node, slope](TensorNode<T>& self) {
        if (!in_node->requires_grad) return;
        in_node->ensure_grad();
        const T* g = self.grad.data();
        const T* x = in_node->data.data();
        T* dst = in_node->grad.data();
        for (std::size_t i = 0; i < self.data.size(); ++i) {
            dst[i] += x[i] > T(0) ? g[i] : slope * g[i];
        }
    };
    return Tensor<T>::make_op_result(input.shape(), std::move(out), {input},
                                     std::move(backward));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    return leaky_relu(input, T(0));
}

// ---------------------------------------------------------------------------
// avg_pool2d
// ---------------------------------------------------------------------------

// Non-overlapping factor x factor mean pooling; spatial dims must divide.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t factor) {
    const auto dims = detail::split_conv_input(input.shape(), "avg_pool2d");
    if (factor < 1) throw ShapeError("avg_pool2d: factor must be >= 1");
    if (dims.h % factor != 0 || dims.w % factor != 0) {
        throw ShapeError("avg_pool2d: input " + shape_str(input.shape()) +
                         " not divisible by factor " + std::to_string(factor));
    }
    const std::size_t oh = dims.h / factor;
    const std::size_t ow = dims.w / factor;
    const std::size_t planes = dims.batch * dims.c_in;
    const T inv = T(1) / static_cast<T>(factor * factor);

    std::vector<T> out(planes * oh * ow);
    const T* x = input.data().data();
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x + p * dims.h * dims.w;
        T* dst = out.data() + p * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                T acc = T(0);
                for (std::size_t di = 0; di < factor; ++di) {
                    const T* row = src + (i * factor + di) * dims.w + j * factor;
                    for (std::size_t dj = 0; dj < factor; ++dj) acc += row[dj];
                }
                dst[i * ow + j] = acc * inv;
            }
        }
    }

    Shape out_shape = dims.batched ? Shape{dims.batch, dims.c_in, oh, ow}
                                   : Shape{dims.c_in, oh, ow};

    auto in_node = input.node();
    auto backward = [in_node, dims, factor, oh, ow, inv, planes](TensorNode<T>& self) {
        if (!in_node->requires_grad) return;
        in_node->ensure_grad();
        const T* g = self.grad.data();
        for (std::size_t p = 0; p < planes; ++p) {
            T* dst = in_node->grad.data() + p * dims.h * dims.w;
            const T* src = g + p * oh * ow;
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    const T gv = src[i * ow + j] * inv;
                    for (std::size_t di = 0; di < factor; ++di) {
                        T* row = dst + (i * factor + di) * dims.w + j * factor;
                        for (std::size_t dj = 0; dj < factor; ++dj) row[dj] += gv;
                    }
                }
            }
        }
    };
    return Tensor<T>::make_op_result(std::move(out_shape), std::move(out), {input},
                                     std::move(backward));
}

// ---------------------------------------------------------------------------
// mse
// ---------------------------------------------------------------------------

// Mean over all elements of the squared difference. Gradients flow into both
// arguments; callers that want a frozen target pass a tensor that does not
// require gradients.
template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("mse: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    }
    const std::size_t n = pred.numel();
    if (n == 0) throw ShapeError("mse: empty tensors");
    const T* p = pred.data().data();
    const T* t = target.data().data();
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T d = p[i] - t[i];
        acc += d * d;
    }
    acc /= static_cast<T>(n);

    auto p_node = pred.node();
    auto t_node = target.node();
    auto backward = [p_node, t_node, n](TensorNode<T>& self) {
        const T g = self.grad[0];
        const T scale = g * T(2) / static_cast<T>(n);
        const T* p = p_node->data.data();
        const T* t = t_node->data.data();
        if (p_node->requires_grad) {
            p_node->ensure_grad();
            T* dst = p_node->grad.data();
            for (std::size_t i = 0; i < n; ++i) dst[i] += scale * (p[i] - t[i]);
        }
        if (t_node->requires_grad) {
            t_node->ensure_grad();
            T* dst = t_node->grad.data();
            for (std::size_t i = 0; i < n; ++i) dst[i] -= scale * (p[i] - t[i]);
        }
    };
    return Tensor<T>::make_op_result({1}, {acc}, {pred, target}, std::move(backward));
}

// ---------------------------------------------------------------------------
// elementwise / structural glue
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];

    auto a_node = a.node();
    auto b_node = b.node();
    auto backward = [a_node, b_node](TensorNode<T>& self) {
        accumulate_grad(a_node, self.grad.data());
        accumulate_grad(b_node, self.grad.data());
    };
    return Tensor<T>::make_op_result(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];

    auto a_node = a.node();
    auto b_node = b.node();
    auto backward = [a_node, b_node](TensorNode<T>& self) {
        const T* g = self.grad.data();
        if (a_node->requires_grad) {
            a_node->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                a_node->grad[i] += g[i] * b_node->data[i];
            }
        }
        if (b_node->requires_grad) {
            b_node->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                b_node->grad[i] += g[i] * a_node->data[i];
            }
        }
    };
    return Tensor<T>::make_op_result(a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    auto a_node = a.node();
    auto backward = [a_node](TensorNode<T>& self) {
        if (!a_node->requires_grad) return;
        a_node->ensure_grad();
        const T g = self.grad[0];
        for (auto& v : a_node->grad) v += g;
    };
    return Tensor<T>::make_op_result({1}, {acc}, {a}, std::move(backward));
}

// Fresh tensor with the same values in a new shape; the gradient is carried
// straight back since the element order is unchanged.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    }
    auto a_node = a.node();
    auto backward = [a_node](TensorNode<T>& self) {
        accumulate_grad(a_node, self.grad.data());
    };
    return Tensor<T>::make_op_result(std::move(shape), a.data(), {a}, std::move(backward));
}

template <typename T>
Tensor<T> flatten_per_item(const Tensor<T>& a) {
    if (a.rank() < 2) throw ShapeError("flatten_per_item: rank must be >= 2");
    return reshape(a, {a.shape()[0], a.numel() / a.shape()[0]});
}

} // namespace food
