#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "trajmask/common.hpp"

namespace trajmask::nn {

enum class Dtype : std::uint8_t { F32, F64 };

inline const char* dtype_name(Dtype dt) { return dt == Dtype::F32 ? "f32" : "f64"; }

// ----------------------------- tensor -----------------------------
//
// Dense n-d array with reverse-mode gradient tracking. Data lives in a
// shared storage block (reshape aliases it); gradients are per-tensor and
// accumulate additively across tape nodes. Values are float32 by default;
// float64 is the verification mode used by the finite-difference checks.

struct Storage {
    std::vector<float> f;
    std::vector<double> d;
};

struct TensorImpl {
    std::vector<int> shape;
    Dtype dtype = Dtype::F32;
    std::shared_ptr<Storage> store;
    std::vector<float> grad_f;   // allocated lazily on first accumulation
    std::vector<double> grad_d;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::int64_t id = 0;

    std::size_t numel() const {
        std::size_t n = 1;
        for (int s : shape) n *= static_cast<std::size_t>(s);
        return n;
    }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, Dtype dt = Dtype::F32);
    static Tensor full(std::vector<int> shape, double value, Dtype dt = Dtype::F32);
    static Tensor from_data(std::vector<int> shape, const std::vector<double>& values,
                            Dtype dt = Dtype::F32);
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                        Dtype dt = Dtype::F32);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::size_t numel() const { return impl_->numel(); }
    Dtype dtype() const { return impl_->dtype; }
    std::int64_t id() const { return impl_->id; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        impl_->requires_grad = rg;
        return *this;
    }

    // element access (reads convert to double regardless of dtype)
    double at(std::size_t i) const;
    void set(std::size_t i, double v);  // raw data write; never tracked
    double item() const;                // scalar tensors only

    std::vector<double> to_vector() const;
    const float* data_f32() const;
    float* mutable_f32();
    const double* data_f64() const;
    double* mutable_f64();

    bool has_grad() const { return impl_->grad_alloc; }
    double grad_at(std::size_t i) const;
    std::vector<double> grad_to_vector() const;
    void zero_grad();
    void accumulate_grad(const std::vector<double>& g);  // used by the tape

    Tensor detached_copy() const;  // deep copy, no grad, not a graph node

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

    static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Throws ShapeError naming both shapes when a and b differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);
std::string shape_str(const std::vector<int>& s);

// ----------------------------- tape -----------------------------
//
// Records one node per differentiable op, in execution order (so reverse
// iteration is a valid reverse-topological order). backward() seeds the
// scalar loss with gradient 1, walks nodes once in reverse, and marks the
// tape consumed.

struct TapeNode {
    const char* op;
    std::vector<std::int64_t> input_ids;
    std::int64_t output_id;
    std::function<void()> backward;
};

class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void backward(const Tensor& loss);

    const std::vector<TapeNode>& nodes() const { return nodes_; }
    bool consumed() const { return consumed_; }

    static Tape* active();
    static void record(const char* op, const std::vector<Tensor>& inputs, const Tensor& output,
                       std::function<void()> fn);
    // true when a tape is active, grad mode is on, and any input requires grad
    static bool recording(const std::vector<Tensor>& inputs);

private:
    std::vector<TapeNode> nodes_;
    bool consumed_ = false;
    Tape* prev_ = nullptr;
};

// Suppresses recording for its scope (evaluation / target-network passes).
class NoGrad {
public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

private:
    bool prev_;
};

// When enabled, every public op checks its output for NaN/Inf and throws
// ContractError on violation. Off by default (used by tests).
void set_finite_checks(bool on);
bool finite_checks_enabled();
bool all_finite(const Tensor& t);

// ----------------------------- ops -----------------------------

// elementwise, with numpy-style right-aligned broadcasting
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

// unary
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor neg(const Tensor& a);

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T -> [m,n]
// x [n,in] * w[out,in]^T + b[out] -> [n,out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// valid (no padding) cross-correlation; input [N,C,H,W] or [C,H,W],
// kernel [Co,C,kh,kw]
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride);

// normalization / similarity
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor softmax(const Tensor& x);  // along last dim
Tensor cosine_similarity(const Tensor& a, const Tensor& b);  // vectors -> scalar
Tensor row_normalize(const Tensor& x, double eps = 1e-8);    // rows to unit L2 norm

// reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_rows(const Tensor& a);  // [n,m] -> [n]

// structure
Tensor reshape(const Tensor& a, std::vector<int> new_shape);
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);  // [n,d] -> [k,d]
Tensor slice_rows(const Tensor& a, int start, int len);
Tensor slice_cols(const Tensor& a, int start, int len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor take_per_row(const Tensor& a, const std::vector<int>& col);  // [n,m] -> [n]

// detached helpers (constants from the graph's point of view)
Tensor rows_max_detached(const Tensor& a, const std::vector<int>& exclude_col);

// scalar-tensor backward entry point; equivalent to tape->backward(loss)
void backward(const Tensor& loss);

}  // namespace trajmask::nn
