#include <cblas.h>

#include <cstring>

#include "trajmask/tensor.hpp"

namespace trajmask::nn {

namespace {

template <class S>
const std::vector<S>& cdata(const TensorImpl* t);
template <>
const std::vector<float>& cdata<float>(const TensorImpl* t) {
    return t->store->f;
}
template <>
const std::vector<double>& cdata<double>(const TensorImpl* t) {
    return t->store->d;
}

template <class S>
std::vector<S>& mdata(TensorImpl* t);
template <>
std::vector<float>& mdata<float>(TensorImpl* t) {
    return t->store->f;
}
template <>
std::vector<double>& mdata<double>(TensorImpl* t) {
    return t->store->d;
}

template <class S>
std::vector<S>& gradv(TensorImpl* t);
template <>
std::vector<float>& gradv<float>(TensorImpl* t) {
    return t->grad_f;
}
template <>
std::vector<double>& gradv<double>(TensorImpl* t) {
    return t->grad_d;
}

template <class S>
void ensure_grad(TensorImpl* t) {
    if (!t->grad_alloc) {
        gradv<S>(t).assign(t->numel(), S(0));
        t->grad_alloc = true;
    }
}

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

struct ConvDims {
    int n, c, h, w, co, kh, kw, stride, oh, ow;
    bool batched;  // false when the caller passed a rank-3 input
};

template <class S>
void im2col(const S* img, S* cols, const ConvDims& d) {
    // cols[(c*kh+i)*kw+j, y*ow+x] = img[c, y*stride+i, x*stride+j]
    for (int c = 0; c < d.c; ++c) {
        const S* ch = img + static_cast<std::size_t>(c) * d.h * d.w;
        for (int i = 0; i < d.kh; ++i)
            for (int j = 0; j < d.kw; ++j) {
                S* row = cols + (static_cast<std::size_t>(c) * d.kh * d.kw +
                                 static_cast<std::size_t>(i) * d.kw + j) *
                                    d.oh * d.ow;
                for (int y = 0; y < d.oh; ++y) {
                    const S* src = ch + static_cast<std::size_t>(y * d.stride + i) * d.w +
                                   j;
                    if (d.stride == 1) {
                        std::memcpy(row + static_cast<std::size_t>(y) * d.ow, src,
                                    static_cast<std::size_t>(d.ow) * sizeof(S));
                    } else {
                        for (int x = 0; x < d.ow; ++x)
                            row[static_cast<std::size_t>(y) * d.ow + x] =
                                src[static_cast<std::size_t>(x) * d.stride];
                    }
                }
            }
    }
}

template <class S>
void col2im_add(const S* cols, S* img, const ConvDims& d) {
    for (int c = 0; c < d.c; ++c) {
        S* ch = img + static_cast<std::size_t>(c) * d.h * d.w;
        for (int i = 0; i < d.kh; ++i)
            for (int j = 0; j < d.kw; ++j) {
                const S* row = cols + (static_cast<std::size_t>(c) * d.kh * d.kw +
                                       static_cast<std::size_t>(i) * d.kw + j) *
                                          d.oh * d.ow;
                for (int y = 0; y < d.oh; ++y) {
                    S* dst = ch + static_cast<std::size_t>(y * d.stride + i) * d.w + j;
                    for (int x = 0; x < d.ow; ++x)
                        dst[static_cast<std::size_t>(x) * d.stride] +=
                            row[static_cast<std::size_t>(y) * d.ow + x];
                }
            }
    }
}

template <class S>
void conv_forward(const TensorImpl* in, const TensorImpl* ker, TensorImpl* out,
                  const ConvDims& d) {
    const S* iv = cdata<S>(in).data();
    const S* kv = cdata<S>(ker).data();
    S* ov = mdata<S>(out).data();
    const int ckk = d.c * d.kh * d.kw;
    const int ohow = d.oh * d.ow;
    const bool pointwise = d.kh == 1 && d.kw == 1 && d.stride == 1;
    std::vector<S> cols;
    if (!pointwise) cols.resize(static_cast<std::size_t>(ckk) * ohow);
    for (int img = 0; img < d.n; ++img) {
        const S* src = iv + static_cast<std::size_t>(img) * d.c * d.h * d.w;
        const S* mat = src;
        if (!pointwise) {
            im2col<S>(src, cols.data(), d);
            mat = cols.data();
        }
        gemm(false, false, d.co, ohow, ckk, S(1), kv, ckk, mat, ohow, S(0),
             ov + static_cast<std::size_t>(img) * d.co * ohow, ohow);
    }
}

template <class S>
void conv_backward(TensorImpl* in, TensorImpl* ker, TensorImpl* out, const ConvDims& d) {
    const S* iv = cdata<S>(in).data();
    const S* kv = cdata<S>(ker).data();
    const S* go = gradv<S>(out).data();
    const int ckk = d.c * d.kh * d.kw;
    const int ohow = d.oh * d.ow;
    const bool pointwise = d.kh == 1 && d.kw == 1 && d.stride == 1;
    bool need_in = in->requires_grad, need_ker = ker->requires_grad;
    if (need_in) ensure_grad<S>(in);
    if (need_ker) ensure_grad<S>(ker);
    S* gi = need_in ? gradv<S>(in).data() : nullptr;
    S* gk = need_ker ? gradv<S>(ker).data() : nullptr;
    std::vector<S> cols, dcols;
    if (!pointwise) {
        cols.resize(static_cast<std::size_t>(ckk) * ohow);
        if (need_in) dcols.resize(static_cast<std::size_t>(ckk) * ohow);
    }
    for (int img = 0; img < d.n; ++img) {
        const S* src = iv + static_cast<std::size_t>(img) * d.c * d.h * d.w;
        const S* gout = go + static_cast<std::size_t>(img) * d.co * ohow;
        const S* mat = src;
        if (!pointwise) {
            im2col<S>(src, cols.data(), d);
            mat = cols.data();
        }
        if (need_ker) {
            // dW += dOut * cols^T
            gemm(false, true, d.co, ckk, ohow, S(1), gout, ohow, mat, ohow, S(1), gk, ckk);
        }
        if (need_in) {
            if (pointwise) {
                // dIn += W^T * dOut, written straight into the input gradient
                gemm(true, false, ckk, ohow, d.co, S(1), kv, ckk, gout, ohow, S(1),
                     gi + static_cast<std::size_t>(img) * d.c * d.h * d.w, ohow);
            } else {
                gemm(true, false, ckk, ohow, d.co, S(1), kv, ckk, gout, ohow, S(0), dcols.data(),
                     ohow);
                col2im_add<S>(dcols.data(), gi + static_cast<std::size_t>(img) * d.c * d.h * d.w,
                              d);
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride) {
    if (input.dtype() != kernel.dtype()) throw ContractError("conv2d: mixed dtypes");
    if (kernel.rank() != 4)
        throw ShapeError("conv2d: kernel must be [Co,C,kh,kw], got " + shape_str(kernel.shape()));
    if (input.rank() != 3 && input.rank() != 4)
        throw ShapeError("conv2d: input must be [C,H,W] or [N,C,H,W], got " +
                         shape_str(input.shape()));
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
    ConvDims d{};
    d.batched = input.rank() == 4;
    d.n = d.batched ? input.dim(0) : 1;
    d.c = input.dim(d.batched ? 1 : 0);
    d.h = input.dim(d.batched ? 2 : 1);
    d.w = input.dim(d.batched ? 3 : 2);
    d.co = kernel.dim(0);
    d.kh = kernel.dim(2);
    d.kw = kernel.dim(3);
    d.stride = stride;
    if (kernel.dim(1) != d.c)
        throw ShapeError("conv2d: channel mismatch, input " + shape_str(input.shape()) +
                         " vs kernel " + shape_str(kernel.shape()));
    if (d.kh > d.h || d.kw > d.w)
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than input " +
                         shape_str(input.shape()));
    d.oh = (d.h - d.kh) / stride + 1;
    d.ow = (d.w - d.kw) / stride + 1;

    std::vector<int> out_shape =
        d.batched ? std::vector<int>{d.n, d.co, d.oh, d.ow} : std::vector<int>{d.co, d.oh, d.ow};
    Tensor out = Tensor::zeros(out_shape, input.dtype());
    if (input.dtype() == Dtype::F32)
        conv_forward<float>(input.impl(), kernel.impl(), out.impl(), d);
    else
        conv_forward<double>(input.impl(), kernel.impl(), out.impl(), d);

    if (Tape::recording({input, kernel})) {
        auto ii = input.impl_ptr(), ki = kernel.impl_ptr(), oi = out.impl_ptr();
        Tape::record("conv2d", {input, kernel}, out, [=]() {
            if (oi->dtype == Dtype::F32)
                conv_backward<float>(ii.get(), ki.get(), oi.get(), d);
            else
                conv_backward<double>(ii.get(), ki.get(), oi.get(), d);
        });
    }
    if (finite_checks_enabled() && !all_finite(out))
        throw ContractError("conv2d: produced non-finite values");
    return out;
}

}  // namespace trajmask::nn
