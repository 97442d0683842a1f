#include "trajmask/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace trajmask::nn {

namespace {

std::atomic<std::int64_t> g_next_id{1};
thread_local Tape* g_active_tape = nullptr;
thread_local bool g_no_grad = false;
std::atomic<bool> g_finite_checks{false};

template <class S>
std::vector<S>& data_of(TensorImpl* t);
template <>
std::vector<float>& data_of<float>(TensorImpl* t) {
    return t->store->f;
}
template <>
std::vector<double>& data_of<double>(TensorImpl* t) {
    return t->store->d;
}

template <class S>
std::vector<S>& grad_of(TensorImpl* t);
template <>
std::vector<float>& grad_of<float>(TensorImpl* t) {
    return t->grad_f;
}
template <>
std::vector<double>& grad_of<double>(TensorImpl* t) {
    return t->grad_d;
}

template <class S>
void ensure_grad(TensorImpl* t) {
    if (!t->grad_alloc) {
        grad_of<S>(t).assign(t->numel(), S(0));
        t->grad_alloc = true;
    }
}

template <class F>
decltype(auto) dispatch(Dtype dt, F&& f) {
    if (dt == Dtype::F32) return f(float{});
    return f(double{});
}

std::shared_ptr<TensorImpl> make_impl(std::vector<int> shape, Dtype dt) {
    for (int s : shape) {
        if (s <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->dtype = dt;
    impl->store = std::make_shared<Storage>();
    impl->id = g_next_id.fetch_add(1);
    if (dt == Dtype::F32)
        impl->store->f.assign(impl->numel(), 0.0f);
    else
        impl->store->d.assign(impl->numel(), 0.0);
    return impl;
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw ContractError(std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) + " vs " +
                            dtype_name(b.dtype()));
}

Tensor finite_guard(Tensor t, const char* op) {
    if (finite_checks_enabled() && !all_finite(t))
        throw ContractError(std::string(op) + ": produced non-finite values");
    return t;
}

// ----------------------------- broadcasting -----------------------------

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b,
                                 const char* op) {
    std::size_t r = std::max(a.size(), b.size());
    std::vector<int> out(r);
    for (std::size_t i = 0; i < r; ++i) {
        int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da == db)
            out[i] = da;
        else if (da == 1)
            out[i] = db;
        else if (db == 1)
            out[i] = da;
        else
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                             shape_str(b));
    }
    return out;
}

// element strides of `shape` right-aligned into `out`, 0 on broadcast dims
std::vector<std::size_t> broadcast_strides(const std::vector<int>& shape,
                                           const std::vector<int>& out) {
    std::vector<std::size_t> st(out.size(), 0);
    std::size_t acc = 1;
    std::size_t off = out.size() - shape.size();
    for (std::size_t i = shape.size(); i-- > 0;) {
        st[i + off] = (shape[i] == 1 && out[i + off] != 1) ? 0 : acc;
        acc *= static_cast<std::size_t>(shape[i]);
    }
    return st;
}

// Walks an output shape while tracking two (possibly broadcast) input offsets.
template <class Fn>
void broadcast_walk(const std::vector<int>& out_shape, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, Fn&& fn) {
    std::size_t rank = out_shape.size();
    if (rank == 0) {
        fn(0, 0, 0);
        return;
    }
    std::vector<std::size_t> counter(rank, 0);
    std::size_t total = 1;
    for (int d : out_shape) total *= static_cast<std::size_t>(d);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < total; ++i) {
        fn(i, oa, ob);
        for (std::size_t d = rank; d-- > 0;) {
            counter[d]++;
            oa += sa[d];
            ob += sb[d];
            if (counter[d] < static_cast<std::size_t>(out_shape[d])) break;
            oa -= sa[d] * counter[d];
            ob -= sb[d] * counter[d];
            counter[d] = 0;
        }
    }
}

enum class EwOp { Add, Sub, Mul };

template <class S>
void ew_forward(EwOp op, const S* a, const S* b, S* out, const std::vector<int>& out_shape,
                const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                bool same_shape, std::size_t n) {
    if (same_shape) {
        switch (op) {
            case EwOp::Add:
                for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
                break;
            case EwOp::Sub:
                for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
                break;
            case EwOp::Mul:
                for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
                break;
        }
        return;
    }
    broadcast_walk(out_shape, sa, sb, [&](std::size_t i, std::size_t oa, std::size_t ob) {
        switch (op) {
            case EwOp::Add: out[i] = a[oa] + b[ob]; break;
            case EwOp::Sub: out[i] = a[oa] - b[ob]; break;
            case EwOp::Mul: out[i] = a[oa] * b[ob]; break;
        }
    });
}

template <class S>
void ew_backward(EwOp op, TensorImpl* ai, TensorImpl* bi, TensorImpl* oi,
                 const std::vector<int>& out_shape, const std::vector<std::size_t>& sa,
                 const std::vector<std::size_t>& sb) {
    const std::vector<S>& go = grad_of<S>(oi);
    const S* av = data_of<S>(ai).data();
    const S* bv = data_of<S>(bi).data();
    bool need_a = ai->requires_grad, need_b = bi->requires_grad;
    if (need_a) ensure_grad<S>(ai);
    if (need_b) ensure_grad<S>(bi);
    S* ga = need_a ? grad_of<S>(ai).data() : nullptr;
    S* gb = need_b ? grad_of<S>(bi).data() : nullptr;
    broadcast_walk(out_shape, sa, sb, [&](std::size_t i, std::size_t oa, std::size_t ob) {
        S g = go[i];
        switch (op) {
            case EwOp::Add:
                if (need_a) ga[oa] += g;
                if (need_b) gb[ob] += g;
                break;
            case EwOp::Sub:
                if (need_a) ga[oa] += g;
                if (need_b) gb[ob] -= g;
                break;
            case EwOp::Mul:
                if (need_a) ga[oa] += g * bv[ob];
                if (need_b) gb[ob] += g * av[oa];
                break;
        }
    });
}

Tensor elementwise(EwOp op, const char* name, const Tensor& a, const Tensor& b) {
    check_same_dtype(a, b, name);
    auto out_shape = broadcast_shape(a.shape(), b.shape(), name);
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    bool same = a.shape() == b.shape();
    Tensor out = Tensor::wrap(make_impl(out_shape, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        ew_forward<S>(op, data_of<S>(a.impl()).data(), data_of<S>(b.impl()).data(),
                      data_of<S>(out.impl()).data(), out_shape, sa, sb, same, out.numel());
    });
    if (Tape::recording({a, b})) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::record(name, {a, b}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ew_backward<S>(op, ai.get(), bi.get(), oi.get(), oi->shape, sa, sb);
            });
        });
    }
    return finite_guard(out, name);
}

// ----------------------------- unary kernels -----------------------------

enum class UnOp { Relu, Sigmoid, Tanh, Exp, Log, Neg };

template <class S>
void un_forward(UnOp op, const S* a, S* out, std::size_t n) {
    switch (op) {
        case UnOp::Relu:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > S(0) ? a[i] : S(0);
            break;
        case UnOp::Sigmoid:
            for (std::size_t i = 0; i < n; ++i) out[i] = S(1) / (S(1) + std::exp(-a[i]));
            break;
        case UnOp::Tanh:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
            break;
        case UnOp::Exp:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
            break;
        case UnOp::Log:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::log(a[i]);
            break;
        case UnOp::Neg:
            for (std::size_t i = 0; i < n; ++i) out[i] = -a[i];
            break;
    }
}

template <class S>
void un_backward(UnOp op, TensorImpl* ai, TensorImpl* oi) {
    ensure_grad<S>(ai);
    S* ga = grad_of<S>(ai).data();
    const S* go = grad_of<S>(oi).data();
    const S* av = data_of<S>(ai).data();
    const S* ov = data_of<S>(oi).data();
    std::size_t n = oi->numel();
    switch (op) {
        case UnOp::Relu:
            for (std::size_t i = 0; i < n; ++i) ga[i] += av[i] > S(0) ? go[i] : S(0);
            break;
        case UnOp::Sigmoid:
            for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * ov[i] * (S(1) - ov[i]);
            break;
        case UnOp::Tanh:
            for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * (S(1) - ov[i] * ov[i]);
            break;
        case UnOp::Exp:
            for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * ov[i];
            break;
        case UnOp::Log:
            for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] / av[i];
            break;
        case UnOp::Neg:
            for (std::size_t i = 0; i < n; ++i) ga[i] -= go[i];
            break;
    }
}

Tensor unary(UnOp op, const char* name, const Tensor& a) {
    Tensor out = Tensor::wrap(make_impl(a.shape(), a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        un_forward<S>(op, data_of<S>(a.impl()).data(), data_of<S>(out.impl()).data(), a.numel());
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        Tape::record(name, {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                un_backward<S>(op, ai.get(), oi.get());
            });
        });
    }
    return finite_guard(out, name);
}

}  // namespace

// ----------------------------- Tensor -----------------------------

Tensor Tensor::zeros(std::vector<int> shape, Dtype dt) {
    return wrap(make_impl(std::move(shape), dt));
}

Tensor Tensor::full(std::vector<int> shape, double value, Dtype dt) {
    Tensor t = zeros(std::move(shape), dt);
    dispatch(dt, [&](auto tag) {
        using S = decltype(tag);
        auto& v = data_of<S>(t.impl());
        std::fill(v.begin(), v.end(), static_cast<S>(value));
    });
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, const std::vector<double>& values, Dtype dt) {
    Tensor t = zeros(std::move(shape), dt);
    if (t.numel() != values.size())
        throw ShapeError("from_data: " + std::to_string(values.size()) + " values for shape " +
                         shape_str(t.shape()));
    dispatch(dt, [&](auto tag) {
        using S = decltype(tag);
        auto& v = data_of<S>(t.impl());
        for (std::size_t i = 0; i < values.size(); ++i) v[i] = static_cast<S>(values[i]);
    });
    return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, Dtype dt) {
    Tensor t = zeros(std::move(shape), dt);
    dispatch(dt, [&](auto tag) {
        using S = decltype(tag);
        auto& v = data_of<S>(t.impl());
        for (auto& x : v) x = static_cast<S>(rng.normal(0.0, stddev));
    });
    return t;
}

double Tensor::at(std::size_t i) const {
    return dispatch(impl_->dtype, [&](auto tag) -> double {
        using S = decltype(tag);
        return static_cast<double>(data_of<S>(impl_.get())[i]);
    });
}

void Tensor::set(std::size_t i, double v) {
    dispatch(impl_->dtype, [&](auto tag) {
        using S = decltype(tag);
        data_of<S>(impl_.get())[i] = static_cast<S>(v);
    });
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
    return at(0);
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
    return out;
}

const float* Tensor::data_f32() const { return impl_->store->f.data(); }
float* Tensor::mutable_f32() { return impl_->store->f.data(); }
const double* Tensor::data_f64() const { return impl_->store->d.data(); }
double* Tensor::mutable_f64() { return impl_->store->d.data(); }

double Tensor::grad_at(std::size_t i) const {
    if (!impl_->grad_alloc) return 0.0;
    return dispatch(impl_->dtype, [&](auto tag) -> double {
        using S = decltype(tag);
        return static_cast<double>(grad_of<S>(impl_.get())[i]);
    });
}

std::vector<double> Tensor::grad_to_vector() const {
    std::vector<double> out(numel(), 0.0);
    if (!impl_->grad_alloc) return out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = grad_at(i);
    return out;
}

void Tensor::zero_grad() {
    if (!impl_->grad_alloc) return;
    dispatch(impl_->dtype, [&](auto tag) {
        using S = decltype(tag);
        auto& g = grad_of<S>(impl_.get());
        std::fill(g.begin(), g.end(), S(0));
    });
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != numel()) throw ShapeError("accumulate_grad: size mismatch");
    dispatch(impl_->dtype, [&](auto tag) {
        using S = decltype(tag);
        ensure_grad<S>(impl_.get());
        auto& gv = grad_of<S>(impl_.get());
        for (std::size_t i = 0; i < g.size(); ++i) gv[i] += static_cast<S>(g[i]);
    });
}

Tensor Tensor::detached_copy() const {
    Tensor t = zeros(shape(), dtype());
    dispatch(dtype(), [&](auto tag) {
        using S = decltype(tag);
        data_of<S>(t.impl()) = data_of<S>(impl_.get());
    });
    return t;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// ----------------------------- Tape -----------------------------

Tape::Tape() {
    prev_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

bool Tape::recording(const std::vector<Tensor>& inputs) {
    if (g_active_tape == nullptr || g_no_grad) return false;
    for (const auto& t : inputs)
        if (t.requires_grad()) return true;
    return false;
}

void Tape::record(const char* op, const std::vector<Tensor>& inputs, const Tensor& output,
                  std::function<void()> fn) {
    TapeNode node;
    node.op = op;
    for (const auto& t : inputs) node.input_ids.push_back(t.id());
    node.output_id = output.id();
    node.backward = std::move(fn);
    output.impl()->requires_grad = true;
    g_active_tape->nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw ContractError("backward: tape already consumed");
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar, got shape " +
                                               shape_str(loss.shape()));
    consumed_ = true;
    dispatch(loss.dtype(), [&](auto tag) {
        using S = decltype(tag);
        ensure_grad<S>(loss.impl());
        grad_of<S>(loss.impl())[0] += S(1);
    });
    for (std::size_t i = nodes_.size(); i-- > 0;) nodes_[i].backward();
    nodes_.clear();
}

void backward(const Tensor& loss) {
    Tape* t = Tape::active();
    if (t == nullptr) throw ContractError("backward: no active tape");
    t->backward(loss);
}

NoGrad::NoGrad() : prev_(g_no_grad) { g_no_grad = true; }
NoGrad::~NoGrad() { g_no_grad = prev_; }

void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

bool all_finite(const Tensor& t) {
    return dispatch(t.dtype(), [&](auto tag) -> bool {
        using S = decltype(tag);
        const auto& v = data_of<S>(t.impl());
        for (S x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    });
}

// ----------------------------- elementwise / unary -----------------------------

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Sub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Mul, "mul", a, b); }

Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = Tensor::wrap(make_impl(a.shape(), a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const auto& av = data_of<S>(a.impl());
        auto& ov = data_of<S>(out.impl());
        for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + static_cast<S>(s);
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        Tape::record("add_scalar", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                auto& ga = grad_of<S>(ai.get());
                const auto& go = grad_of<S>(oi.get());
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
            });
        });
    }
    return finite_guard(out, "add_scalar");
}

Tensor mul_scalar(const Tensor& a, double s) {
    Tensor out = Tensor::wrap(make_impl(a.shape(), a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const auto& av = data_of<S>(a.impl());
        auto& ov = data_of<S>(out.impl());
        for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * static_cast<S>(s);
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        Tape::record("mul_scalar", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                auto& ga = grad_of<S>(ai.get());
                const auto& go = grad_of<S>(oi.get());
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * static_cast<S>(s);
            });
        });
    }
    return finite_guard(out, "mul_scalar");
}

Tensor relu(const Tensor& a) { return unary(UnOp::Relu, "relu", a); }
Tensor sigmoid(const Tensor& a) { return unary(UnOp::Sigmoid, "sigmoid", a); }
Tensor tanh_op(const Tensor& a) { return unary(UnOp::Tanh, "tanh", a); }
Tensor exp_op(const Tensor& a) { return unary(UnOp::Exp, "exp", a); }
Tensor log_op(const Tensor& a) { return unary(UnOp::Log, "log", a); }
Tensor neg(const Tensor& a) { return unary(UnOp::Neg, "neg", a); }

// ----------------------------- normalization -----------------------------

namespace {

template <class S>
void layer_norm_forward(const S* x, const S* g, const S* b, S* y, S* xhat, S* inv_std,
                        std::size_t rows, std::size_t d, double eps) {
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xr = x + r * d;
        S* yr = y + r * d;
        S* hr = xhat + r * d;
        S mu = 0;
        for (std::size_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<S>(d);
        S var = 0;
        for (std::size_t i = 0; i < d; ++i) {
            S c = xr[i] - mu;
            var += c * c;
        }
        var /= static_cast<S>(d);
        S is = S(1) / std::sqrt(var + static_cast<S>(eps));
        inv_std[r] = is;
        for (std::size_t i = 0; i < d; ++i) {
            hr[i] = (xr[i] - mu) * is;
            yr[i] = hr[i] * g[i] + b[i];
        }
    }
}

template <class S>
void layer_norm_backward(TensorImpl* xi, TensorImpl* gi, TensorImpl* bi, TensorImpl* oi,
                         const std::vector<S>& xhat, const std::vector<S>& inv_std,
                         std::size_t rows, std::size_t d) {
    const S* go = grad_of<S>(oi).data();
    const S* gv = data_of<S>(gi).data();
    bool need_x = xi->requires_grad, need_g = gi->requires_grad, need_b = bi->requires_grad;
    if (need_x) ensure_grad<S>(xi);
    if (need_g) ensure_grad<S>(gi);
    if (need_b) ensure_grad<S>(bi);
    S* gx = need_x ? grad_of<S>(xi).data() : nullptr;
    S* gg = need_g ? grad_of<S>(gi).data() : nullptr;
    S* gb = need_b ? grad_of<S>(bi).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
        const S* gor = go + r * d;
        const S* hr = xhat.data() + r * d;
        S is = inv_std[r];
        S sum_dh = 0, sum_dh_h = 0;
        for (std::size_t i = 0; i < d; ++i) {
            S dh = gor[i] * gv[i];
            sum_dh += dh;
            sum_dh_h += dh * hr[i];
            if (need_g) gg[i] += gor[i] * hr[i];
            if (need_b) gb[i] += gor[i];
        }
        if (need_x) {
            S* gxr = gx + r * d;
            S invd = S(1) / static_cast<S>(d);
            for (std::size_t i = 0; i < d; ++i) {
                S dh = gor[i] * gv[i];
                gxr[i] += is * (dh - invd * sum_dh - hr[i] * invd * sum_dh_h);
            }
        }
    }
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    check_same_dtype(x, gain, "layer_norm");
    check_same_dtype(x, bias, "layer_norm");
    if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
    std::size_t d = static_cast<std::size_t>(x.shape().back());
    if (gain.numel() != d || bias.numel() != d)
        throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " do not match last dim of " +
                         shape_str(x.shape()));
    if (eps < 0) throw ContractError("layer_norm: eps must be >= 0");
    std::size_t rows = x.numel() / d;
    Tensor out = Tensor::wrap(make_impl(x.shape(), x.dtype()));
    bool rec = Tape::recording({x, gain, bias});
    dispatch(x.dtype(), [&](auto tag) {
        using S = decltype(tag);
        auto xhat = std::make_shared<std::vector<S>>(x.numel());
        auto inv_std = std::make_shared<std::vector<S>>(rows);
        layer_norm_forward<S>(data_of<S>(x.impl()).data(), data_of<S>(gain.impl()).data(),
                              data_of<S>(bias.impl()).data(), data_of<S>(out.impl()).data(),
                              xhat->data(), inv_std->data(), rows, d, eps);
        if (rec) {
            auto xi = x.impl_ptr(), gi = gain.impl_ptr(), bi = bias.impl_ptr(), oi = out.impl_ptr();
            Tape::record("layer_norm", {x, gain, bias}, out, [=]() {
                layer_norm_backward<S>(xi.get(), gi.get(), bi.get(), oi.get(), *xhat, *inv_std,
                                       rows, d);
            });
        }
    });
    return finite_guard(out, "layer_norm");
}

Tensor softmax(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("softmax: rank-0 input");
    std::size_t d = static_cast<std::size_t>(x.shape().back());
    std::size_t rows = x.numel() / d;
    Tensor out = Tensor::wrap(make_impl(x.shape(), x.dtype()));
    dispatch(x.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* xv = data_of<S>(x.impl()).data();
        S* ov = data_of<S>(out.impl()).data();
        for (std::size_t r = 0; r < rows; ++r) {
            const S* xr = xv + r * d;
            S* orow = ov + r * d;
            S mx = xr[0];
            for (std::size_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
            S sum = 0;
            for (std::size_t i = 0; i < d; ++i) {
                orow[i] = std::exp(xr[i] - mx);
                sum += orow[i];
            }
            S inv = S(1) / sum;
            for (std::size_t i = 0; i < d; ++i) orow[i] *= inv;
        }
    });
    if (Tape::recording({x})) {
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::record("softmax", {x}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(xi.get());
                S* gx = grad_of<S>(xi.get()).data();
                const S* go = grad_of<S>(oi.get()).data();
                const S* y = data_of<S>(oi.get()).data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const S* yr = y + r * d;
                    const S* gor = go + r * d;
                    S dot = 0;
                    for (std::size_t i = 0; i < d; ++i) dot += gor[i] * yr[i];
                    S* gxr = gx + r * d;
                    for (std::size_t i = 0; i < d; ++i) gxr[i] += yr[i] * (gor[i] - dot);
                }
            });
        });
    }
    return finite_guard(out, "softmax");
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    check_same_dtype(a, b, "cosine_similarity");
    check_same_shape(a, b, "cosine_similarity");
    constexpr double kEps = 1e-8;
    std::size_t n = a.numel();
    Tensor out = Tensor::wrap(make_impl({1}, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* av = data_of<S>(a.impl()).data();
        const S* bv = data_of<S>(b.impl()).data();
        S dot = 0, na2 = 0, nb2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += av[i] * bv[i];
            na2 += av[i] * av[i];
            nb2 += bv[i] * bv[i];
        }
        S na = std::max(std::sqrt(na2), static_cast<S>(kEps));
        S nb = std::max(std::sqrt(nb2), static_cast<S>(kEps));
        data_of<S>(out.impl())[0] = dot / (na * nb);
    });
    if (Tape::recording({a, b})) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        Tape::record("cosine_similarity", {a, b}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                const S* av = data_of<S>(ai.get()).data();
                const S* bv = data_of<S>(bi.get()).data();
                S g = grad_of<S>(oi.get())[0];
                S s = data_of<S>(oi.get())[0];
                S na2 = 0, nb2 = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    na2 += av[i] * av[i];
                    nb2 += bv[i] * bv[i];
                }
                S ra = std::sqrt(na2), rb = std::sqrt(nb2);
                S na = std::max(ra, static_cast<S>(kEps));
                S nb = std::max(rb, static_cast<S>(kEps));
                if (ai->requires_grad) {
                    ensure_grad<S>(ai.get());
                    S* ga = grad_of<S>(ai.get()).data();
                    // d sim/da = b/(na*nb) - sim*a/na^2, second term only when the
                    // norm is above the eps floor (floor is constant w.r.t. a)
                    for (std::size_t i = 0; i < n; ++i) {
                        S t = bv[i] / (na * nb);
                        if (ra > static_cast<S>(kEps)) t -= s * av[i] / (na * na);
                        ga[i] += g * t;
                    }
                }
                if (bi->requires_grad) {
                    ensure_grad<S>(bi.get());
                    S* gb = grad_of<S>(bi.get()).data();
                    for (std::size_t i = 0; i < n; ++i) {
                        S t = av[i] / (na * nb);
                        if (rb > static_cast<S>(kEps)) t -= s * bv[i] / (nb * nb);
                        gb[i] += g * t;
                    }
                }
            });
        });
    }
    return finite_guard(out, "cosine_similarity");
}

Tensor row_normalize(const Tensor& x, double eps) {
    if (x.rank() != 2) throw ShapeError("row_normalize: expected rank-2, got " + shape_str(x.shape()));
    std::size_t n = static_cast<std::size_t>(x.dim(0));
    std::size_t d = static_cast<std::size_t>(x.dim(1));
    Tensor out = Tensor::wrap(make_impl(x.shape(), x.dtype()));
    dispatch(x.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* xv = data_of<S>(x.impl()).data();
        S* ov = data_of<S>(out.impl()).data();
        for (std::size_t r = 0; r < n; ++r) {
            const S* xr = xv + r * d;
            S nrm2 = 0;
            for (std::size_t i = 0; i < d; ++i) nrm2 += xr[i] * xr[i];
            S k = std::max(std::sqrt(nrm2), static_cast<S>(eps));
            S inv = S(1) / k;
            for (std::size_t i = 0; i < d; ++i) ov[r * d + i] = xr[i] * inv;
        }
    });
    if (Tape::recording({x})) {
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        Tape::record("row_normalize", {x}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(xi.get());
                S* gx = grad_of<S>(xi.get()).data();
                const S* go = grad_of<S>(oi.get()).data();
                const S* xv = data_of<S>(xi.get()).data();
                const S* yv = data_of<S>(oi.get()).data();
                for (std::size_t r = 0; r < n; ++r) {
                    const S* xr = xv + r * d;
                    const S* yr = yv + r * d;
                    const S* gr = go + r * d;
                    S nrm2 = 0;
                    for (std::size_t i = 0; i < d; ++i) nrm2 += xr[i] * xr[i];
                    S nrm = std::sqrt(nrm2);
                    if (nrm > static_cast<S>(eps)) {
                        S dot = 0;
                        for (std::size_t i = 0; i < d; ++i) dot += gr[i] * yr[i];
                        S inv = S(1) / nrm;
                        for (std::size_t i = 0; i < d; ++i)
                            gx[r * d + i] += (gr[i] - yr[i] * dot) * inv;
                    } else {
                        S inv = S(1) / static_cast<S>(eps);
                        for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += gr[i] * inv;
                    }
                }
            });
        });
    }
    return finite_guard(out, "row_normalize");
}

// ----------------------------- reductions -----------------------------

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::wrap(make_impl({1}, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const auto& av = data_of<S>(a.impl());
        // accumulate in double to keep large reductions stable
        double acc = 0;
        for (S v : av) acc += static_cast<double>(v);
        data_of<S>(out.impl())[0] = static_cast<S>(acc);
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        Tape::record("sum", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                auto& ga = grad_of<S>(ai.get());
                S g = grad_of<S>(oi.get())[0];
                for (auto& v : ga) v += g;
            });
        });
    }
    return finite_guard(out, "sum");
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_rows(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("sum_rows: expected rank-2, got " + shape_str(a.shape()));
    std::size_t n = static_cast<std::size_t>(a.dim(0)), m = static_cast<std::size_t>(a.dim(1));
    Tensor out = Tensor::wrap(make_impl({a.dim(0)}, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* av = data_of<S>(a.impl()).data();
        S* ov = data_of<S>(out.impl()).data();
        for (std::size_t r = 0; r < n; ++r) {
            double acc = 0;
            for (std::size_t c = 0; c < m; ++c) acc += static_cast<double>(av[r * m + c]);
            ov[r] = static_cast<S>(acc);
        }
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        Tape::record("sum_rows", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                S* ga = grad_of<S>(ai.get()).data();
                const S* go = grad_of<S>(oi.get()).data();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < m; ++c) ga[r * m + c] += go[r];
            });
        });
    }
    return finite_guard(out, "sum_rows");
}

// ----------------------------- structure -----------------------------

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
    std::size_t n = 1;
    for (int s : new_shape) n *= static_cast<std::size_t>(s);
    if (n != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(new_shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(new_shape);
    impl->dtype = a.dtype();
    impl->store = a.impl()->store;  // alias the data
    impl->id = g_next_id.fetch_add(1);
    Tensor out = Tensor::wrap(impl);
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        Tape::record("reshape", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                auto& ga = grad_of<S>(ai.get());
                const auto& go = grad_of<S>(oi.get());
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
            });
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
    if (a.rank() != 2) throw ShapeError("gather_rows: expected rank-2, got " + shape_str(a.shape()));
    int n = a.dim(0);
    std::size_t d = static_cast<std::size_t>(a.dim(1));
    for (int i : idx)
        if (i < 0 || i >= n)
            throw ContractError("gather_rows: index " + std::to_string(i) + " out of [0," +
                                std::to_string(n) + ")");
    Tensor out = Tensor::wrap(make_impl({static_cast<int>(idx.size()), a.dim(1)}, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* av = data_of<S>(a.impl()).data();
        S* ov = data_of<S>(out.impl()).data();
        for (std::size_t r = 0; r < idx.size(); ++r)
            std::memcpy(ov + r * d, av + static_cast<std::size_t>(idx[r]) * d, d * sizeof(S));
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        auto ix = idx;
        Tape::record("gather_rows", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                S* ga = grad_of<S>(ai.get()).data();
                const S* go = grad_of<S>(oi.get()).data();
                for (std::size_t r = 0; r < ix.size(); ++r) {
                    S* dst = ga + static_cast<std::size_t>(ix[r]) * d;
                    const S* src = go + r * d;
                    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                }
            });
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& a, int start, int len) {
    if (a.rank() != 2) throw ShapeError("slice_rows: expected rank-2, got " + shape_str(a.shape()));
    if (start < 0 || len <= 0 || start + len > a.dim(0))
        throw ContractError("slice_rows: [" + std::to_string(start) + "," +
                            std::to_string(start + len) + ") out of " + shape_str(a.shape()));
    std::size_t d = static_cast<std::size_t>(a.dim(1));
    Tensor out = Tensor::wrap(make_impl({len, a.dim(1)}, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* av = data_of<S>(a.impl()).data();
        std::memcpy(data_of<S>(out.impl()).data(), av + static_cast<std::size_t>(start) * d,
                    static_cast<std::size_t>(len) * d * sizeof(S));
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        Tape::record("slice_rows", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                S* ga = grad_of<S>(ai.get()).data() + static_cast<std::size_t>(start) * d;
                const S* go = grad_of<S>(oi.get()).data();
                for (std::size_t i = 0; i < static_cast<std::size_t>(len) * d; ++i) ga[i] += go[i];
            });
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& a, int start, int len) {
    if (a.rank() != 2) throw ShapeError("slice_cols: expected rank-2, got " + shape_str(a.shape()));
    if (start < 0 || len <= 0 || start + len > a.dim(1))
        throw ContractError("slice_cols: [" + std::to_string(start) + "," +
                            std::to_string(start + len) + ") out of " + shape_str(a.shape()));
    std::size_t n = static_cast<std::size_t>(a.dim(0));
    std::size_t m = static_cast<std::size_t>(a.dim(1));
    std::size_t L = static_cast<std::size_t>(len);
    Tensor out = Tensor::wrap(make_impl({a.dim(0), len}, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* av = data_of<S>(a.impl()).data();
        S* ov = data_of<S>(out.impl()).data();
        for (std::size_t r = 0; r < n; ++r)
            std::memcpy(ov + r * L, av + r * m + static_cast<std::size_t>(start), L * sizeof(S));
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        Tape::record("slice_cols", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                S* ga = grad_of<S>(ai.get()).data();
                const S* go = grad_of<S>(oi.get()).data();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < L; ++c)
                        ga[r * m + static_cast<std::size_t>(start) + c] += go[r * L + c];
            });
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    int d = parts[0].dim(1);
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(1) != d)
            throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()));
        check_same_dtype(parts[0], p, "concat_rows");
        total += p.dim(0);
    }
    Tensor out = Tensor::wrap(make_impl({total, d}, parts[0].dtype()));
    std::vector<int> offsets(parts.size());
    dispatch(parts[0].dtype(), [&](auto tag) {
        using S = decltype(tag);
        S* ov = data_of<S>(out.impl()).data();
        std::size_t off = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            offsets[i] = static_cast<int>(off);
            const auto& pv = data_of<S>(parts[i].impl());
            std::memcpy(ov + off * static_cast<std::size_t>(d), pv.data(), pv.size() * sizeof(S));
            off += static_cast<std::size_t>(parts[i].dim(0));
        }
    });
    if (Tape::recording(parts)) {
        auto oi = out.impl_ptr();
        std::vector<std::shared_ptr<TensorImpl>> pis;
        for (const auto& p : parts) pis.push_back(p.impl_ptr());
        Tape::record("concat_rows", parts, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                const S* go = grad_of<S>(oi.get()).data();
                for (std::size_t i = 0; i < pis.size(); ++i) {
                    if (!pis[i]->requires_grad) continue;
                    ensure_grad<S>(pis[i].get());
                    auto& gp = grad_of<S>(pis[i].get());
                    const S* src = go + static_cast<std::size_t>(offsets[i]) * static_cast<std::size_t>(d);
                    for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += src[k];
                }
            });
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    int n = parts[0].dim(0);
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != n)
            throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()));
        check_same_dtype(parts[0], p, "concat_cols");
        total += p.dim(1);
    }
    Tensor out = Tensor::wrap(make_impl({n, total}, parts[0].dtype()));
    std::vector<int> offsets(parts.size());
    dispatch(parts[0].dtype(), [&](auto tag) {
        using S = decltype(tag);
        S* ov = data_of<S>(out.impl()).data();
        int off = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            offsets[i] = off;
            const S* pv = data_of<S>(parts[i].impl()).data();
            std::size_t w = static_cast<std::size_t>(parts[i].dim(1));
            for (std::size_t r = 0; r < static_cast<std::size_t>(n); ++r)
                std::memcpy(ov + r * static_cast<std::size_t>(total) + off, pv + r * w, w * sizeof(S));
            off += parts[i].dim(1);
        }
    });
    if (Tape::recording(parts)) {
        auto oi = out.impl_ptr();
        std::vector<std::shared_ptr<TensorImpl>> pis;
        for (const auto& p : parts) pis.push_back(p.impl_ptr());
        Tape::record("concat_cols", parts, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                const S* go = grad_of<S>(oi.get()).data();
                for (std::size_t i = 0; i < pis.size(); ++i) {
                    if (!pis[i]->requires_grad) continue;
                    ensure_grad<S>(pis[i].get());
                    S* gp = grad_of<S>(pis[i].get()).data();
                    std::size_t w = static_cast<std::size_t>(pis[i]->shape[1]);
                    for (std::size_t r = 0; r < static_cast<std::size_t>(n); ++r)
                        for (std::size_t c = 0; c < w; ++c)
                            gp[r * w + c] +=
                                go[r * static_cast<std::size_t>(total) + static_cast<std::size_t>(offsets[i]) + c];
                }
            });
        });
    }
    return out;
}

Tensor take_per_row(const Tensor& a, const std::vector<int>& col) {
    if (a.rank() != 2) throw ShapeError("take_per_row: expected rank-2, got " + shape_str(a.shape()));
    std::size_t n = static_cast<std::size_t>(a.dim(0));
    std::size_t m = static_cast<std::size_t>(a.dim(1));
    if (col.size() != n) throw ContractError("take_per_row: need one column index per row");
    for (int c : col)
        if (c < 0 || c >= a.dim(1))
            throw ContractError("take_per_row: column " + std::to_string(c) + " out of range");
    Tensor out = Tensor::wrap(make_impl({a.dim(0)}, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* av = data_of<S>(a.impl()).data();
        S* ov = data_of<S>(out.impl()).data();
        for (std::size_t r = 0; r < n; ++r) ov[r] = av[r * m + static_cast<std::size_t>(col[r])];
    });
    if (Tape::recording({a})) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        auto cols = col;
        Tape::record("take_per_row", {a}, out, [=]() {
            dispatch(oi->dtype, [&](auto tag) {
                using S = decltype(tag);
                ensure_grad<S>(ai.get());
                S* ga = grad_of<S>(ai.get()).data();
                const S* go = grad_of<S>(oi.get()).data();
                for (std::size_t r = 0; r < n; ++r)
                    ga[r * m + static_cast<std::size_t>(cols[r])] += go[r];
            });
        });
    }
    return out;
}

Tensor rows_max_detached(const Tensor& a, const std::vector<int>& exclude_col) {
    if (a.rank() != 2)
        throw ShapeError("rows_max_detached: expected rank-2, got " + shape_str(a.shape()));
    std::size_t n = static_cast<std::size_t>(a.dim(0));
    std::size_t m = static_cast<std::size_t>(a.dim(1));
    if (!exclude_col.empty() && exclude_col.size() != n)
        throw ContractError("rows_max_detached: exclude list size mismatch");
    Tensor out = Tensor::wrap(make_impl({a.dim(0)}, a.dtype()));
    dispatch(a.dtype(), [&](auto tag) {
        using S = decltype(tag);
        const S* av = data_of<S>(a.impl()).data();
        S* ov = data_of<S>(out.impl()).data();
        for (std::size_t r = 0; r < n; ++r) {
            int ex = exclude_col.empty() ? -1 : exclude_col[r];
            bool got = false;
            S mx = 0;
            for (std::size_t c = 0; c < m; ++c) {
                if (static_cast<int>(c) == ex) continue;
                S v = av[r * m + c];
                if (!got || v > mx) {
                    mx = v;
                    got = true;
                }
            }
            ov[r] = got ? mx : S(0);
        }
    });
    return out;  // detached: never recorded
}

}  // namespace trajmask::nn
