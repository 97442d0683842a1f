#include <cblas.h>

#include <mutex>

#include "trajmask/tensor.hpp"

extern "C" void openblas_set_num_threads(int);

namespace trajmask::nn {

namespace {

// BLAS must stay single-threaded: training is deterministic per run and
// parallel experiment cells each run their own math on their own thread.
void blas_init() {
    static std::once_flag once;
    std::call_once(once, [] { openblas_set_num_threads(1); });
}

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

inline void blas_gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                      const float* b, int ldb, float beta, float* c, int ldc) {
    blas_init();
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void blas_gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                      int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    blas_init();
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <class S>
void matmul_backward(TensorImpl* ai, TensorImpl* bi, TensorImpl* oi, int m, int k, int n,
                     bool b_transposed) {
    const S* go = gradv<S>(oi).data();
    const S* av = cdata<S>(ai).data();
    const S* bv = cdata<S>(bi).data();
    if (ai->requires_grad) {
        ensure_grad<S>(ai);
        // dA = dC * B^T (or dC * B when b was given transposed)
        blas_gemm(false, !b_transposed, m, k, n, S(1), go, n, bv, b_transposed ? k : n, S(1),
                  gradv<S>(ai).data(), k);
    }
    if (bi->requires_grad) {
        ensure_grad<S>(bi);
        if (!b_transposed) {
            // dB = A^T * dC, [k,n]
            blas_gemm(true, false, k, n, m, S(1), av, k, go, n, S(1), gradv<S>(bi).data(), n);
        } else {
            // b stored [n,k]; dB = dC^T * A
            blas_gemm(true, false, n, k, m, S(1), go, n, av, k, S(1), gradv<S>(bi).data(), k);
        }
    }
}

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool b_transposed, const char* name) {
    if (a.dtype() != b.dtype())
        throw ContractError(std::string(name) + ": mixed dtypes");
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError(std::string(name) + ": expected rank-2 operands, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1);
    int bk = b_transposed ? b.dim(1) : b.dim(0);
    int n = b_transposed ? b.dim(0) : b.dim(1);
    if (k != bk)
        throw ShapeError(std::string(name) + ": inner dimensions disagree, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor out = Tensor::zeros({m, n}, a.dtype());
    if (a.dtype() == Dtype::F32) {
        blas_gemm(false, b_transposed, m, n, k, 1.0f, a.data_f32(), k, b.data_f32(),
                  b_transposed ? k : n, 0.0f, out.mutable_f32(), n);
    } else {
        blas_gemm(false, b_transposed, m, n, k, 1.0, a.data_f64(), k, b.data_f64(),
                  b_transposed ? k : n, 0.0, out.mutable_f64(), n);
    }
    if (Tape::recording({a, b})) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::record(name, {a, b}, out, [=]() {
            if (oi->dtype == Dtype::F32)
                matmul_backward<float>(ai.get(), bi.get(), oi.get(), m, k, n, b_transposed);
            else
                matmul_backward<double>(ai.get(), bi.get(), oi.get(), m, k, n, b_transposed);
        });
    }
    if (finite_checks_enabled() && !all_finite(out))
        throw ContractError(std::string(name) + ": produced non-finite values");
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false, "matmul"); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true, "matmul_nt"); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
        throw ShapeError("linear: expected x[n,in] w[out,in] b[out], got " + shape_str(x.shape()) +
                         " " + shape_str(w.shape()) + " " + shape_str(b.shape()));
    if (x.dim(1) != w.dim(1) || w.dim(0) != b.dim(0))
        throw ShapeError("linear: incompatible " + shape_str(x.shape()) + " " +
                         shape_str(w.shape()) + " " + shape_str(b.shape()));
    Tensor y = matmul_nt(x, w);
    return add(y, b);
}

}  // namespace trajmask::nn
