#include <cmath>

#include <doctest.h>

#include "test_util.hpp"
#include "trajmask/optim.hpp"
#include "trajmask/tensor.hpp"

using namespace trajmask;
using namespace trajmask::nn;
using tmtest::grad_check;

namespace {

Tensor leaf(std::vector<int> shape, std::vector<double> vals, Dtype dt = Dtype::F64) {
    Tensor t = Tensor::from_data(std::move(shape), vals, dt);
    t.set_requires_grad(true);
    return t;
}

}  // namespace

TEST_CASE("matmul identity and hand values") {
    Tensor a = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from_data({2, 2}, {3, 4, 5, 6});
    Tensor c = matmul(a, b);
    CHECK(c.to_vector() == std::vector<double>{3, 4, 5, 6});

    Tensor r = matmul(Tensor::from_data({1, 2}, {1, 2}), Tensor::from_data({2, 1}, {3, 4}));
    CHECK(r.item() == doctest::Approx(11.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,5]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, Dtype::F64);
    Tensor b = Tensor::randn({4, 2}, rng, 1.0, Dtype::F64);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    auto res = grad_check({a, b}, [&] { return sum(matmul(a, b)); });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("matmul_nt agrees with matmul") {
    Rng rng(3);
    Tensor a = Tensor::randn({3, 5}, rng);
    Tensor b = Tensor::randn({4, 5}, rng);
    Tensor nt = matmul_nt(a, b);
    // same product via explicit transpose of b
    std::vector<double> bt(5 * 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) bt[static_cast<std::size_t>(j) * 4 + i] = b.at(static_cast<std::size_t>(i) * 5 + j);
    Tensor ref = matmul(a, Tensor::from_data({5, 4}, bt));
    for (std::size_t i = 0; i < nt.numel(); ++i)
        CHECK(nt.at(i) == doctest::Approx(ref.at(i)).epsilon(1e-5));
}

TEST_CASE("conv2d hand values") {
    Tensor ones_in = Tensor::full({1, 3, 3}, 1.0);
    Tensor ones_k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor out = conv2d(ones_in, ones_k, 1);
    CHECK(out.shape() == std::vector<int>{1, 1, 1});
    CHECK(out.item() == doctest::Approx(9.0));

    Tensor x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
    Tensor k = Tensor::from_data({1, 1, 1, 1}, {2});
    Tensor y = conv2d(x, k, 1);
    CHECK(y.to_vector() == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("conv2d kernel larger than input") {
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), 1), ShapeError);
}

TEST_CASE("conv2d gradient matches finite differences") {
    Rng rng(13);
    Tensor x = Tensor::randn({2, 8, 8}, rng, 1.0, Dtype::F64);
    Tensor k = Tensor::randn({4, 2, 3, 3}, rng, 0.5, Dtype::F64);
    x.set_requires_grad(true);
    k.set_requires_grad(true);
    auto res = grad_check({x, k}, [&] { return sum(conv2d(x, k, 2)); });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("layer_norm hand values") {
    Tensor x = Tensor::from_data({3}, {1, 1, 1});
    Tensor g = Tensor::full({3}, 1.0);
    Tensor b = Tensor::zeros({3});
    Tensor y = layer_norm(x, g, b, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(0.0).epsilon(1e-4));

    Tensor x2 = Tensor::from_data({2}, {0, 2});
    Tensor y2 = layer_norm(x2, Tensor::full({2}, 1.0), Tensor::full({2}, 5.0), 0.0);
    CHECK(y2.at(0) == doctest::Approx(4.0));
    CHECK(y2.at(1) == doctest::Approx(6.0));
}

TEST_CASE("layer_norm normalizes and gradient passes") {
    Rng rng(5);
    Tensor x = Tensor::randn({16}, rng, 2.0, Dtype::F64);
    Tensor g = Tensor::full({16}, 1.0, Dtype::F64);
    Tensor b = Tensor::zeros({16}, Dtype::F64);
    Tensor y = layer_norm(x, g, b, 1e-10);
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 16; ++i) mean += y.at(i);
    mean /= 16;
    for (std::size_t i = 0; i < 16; ++i) var += (y.at(i) - mean) * (y.at(i) - mean);
    var /= 16;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(std::fabs(var - 1.0) < 1e-5);

    x.set_requires_grad(true);
    g.set_requires_grad(true);
    b.set_requires_grad(true);
    Rng wrng(6);
    Tensor w = Tensor::randn({16}, wrng, 1.0, Dtype::F64);  // random weighting of outputs
    auto res = grad_check({x, g, b}, [&] { return sum(mul(w, layer_norm(x, g, b, 1e-5))); });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("softmax symmetry, stability, gradient") {
    Tensor u = softmax(Tensor::from_data({3}, {0, 0, 0}));
    for (std::size_t i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3));

    Tensor big = softmax(Tensor::from_data({2}, {1000, 1000}));
    CHECK(big.at(0) == doctest::Approx(0.5));
    CHECK(all_finite(big));

    Rng rng(17);
    Tensor x = Tensor::randn({8}, rng, 3.0, Dtype::F64);
    x.set_requires_grad(true);
    Tensor s = softmax(x);
    double total = 0;
    for (std::size_t i = 0; i < 8; ++i) total += s.at(i);
    CHECK(std::fabs(total - 1.0) < 1e-6);

    Rng wrng(18);
    Tensor w = Tensor::randn({8}, wrng, 1.0, Dtype::F64);
    auto res = grad_check({x}, [&] { return sum(mul(w, softmax(x))); });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("softmax properties under large shifts") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        double shift = (trial % 2 == 0 ? 1.0 : -1.0) * 1e4;
        std::vector<double> vals(9);
        for (auto& v : vals) v = rng.normal(0, 2) + shift;
        Tensor s = softmax(Tensor::from_data({9}, vals));
        double total = 0;
        for (std::size_t i = 0; i < 9; ++i) {
            CHECK(s.at(i) >= 0.0);
            total += s.at(i);
        }
        CHECK(std::fabs(total - 1.0) < 1e-6);
    }
}

TEST_CASE("cosine similarity hand values and range") {
    Tensor a = Tensor::from_data({2}, {3, 4});
    CHECK(cosine_similarity(a, a).item() == doctest::Approx(1.0));
    CHECK(cosine_similarity(Tensor::from_data({2}, {1, 0}), Tensor::from_data({2}, {0, 1})).item() ==
          doctest::Approx(0.0));
    CHECK(cosine_similarity(Tensor::from_data({3}, {1, 2, 3}),
                            Tensor::from_data({3}, {-1, -2, -3}))
              .item() == doctest::Approx(-1.0));

    Rng rng(29);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> v(6);
        for (auto& x : v) x = rng.normal(0, 3);
        Tensor u = Tensor::from_data({6}, v);
        double s = cosine_similarity(u, u).item();
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("cosine similarity gradient") {
    Rng rng(31);
    Tensor a = Tensor::randn({5}, rng, 1.0, Dtype::F64);
    Tensor b = Tensor::randn({5}, rng, 1.0, Dtype::F64);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    auto res = grad_check({a, b}, [&] { return cosine_similarity(a, b); });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("backward hand values") {
    Tensor x = leaf({3}, {1, 2, 3});
    {
        Tape tape;
        tape.backward(sum(x));
    }
    CHECK(x.grad_to_vector() == std::vector<double>{1, 1, 1});
    x.zero_grad();
    {
        Tape tape;
        tape.backward(sum(mul(x, x)));
    }
    CHECK(x.grad_to_vector() == std::vector<double>{2, 4, 6});
}

TEST_CASE("backward contract errors") {
    Tensor x = leaf({3}, {1, 2, 3});
    Tape tape;
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);  // non-scalar
    Tensor s = sum(y);
    tape.backward(s);
    CHECK_THROWS_AS(tape.backward(s), ContractError);  // consumed
}

TEST_CASE("gradients accumulate additively until zeroed") {
    Tensor x = leaf({2}, {1, 2});
    {
        Tape t1;
        t1.backward(sum(x));
    }
    {
        Tape t2;
        t2.backward(sum(x));
    }
    CHECK(x.grad_to_vector() == std::vector<double>{2, 2});
    x.zero_grad();
    CHECK(x.grad_to_vector() == std::vector<double>{0, 0});
}

TEST_CASE("broadcasting add/mul with gradients") {
    Rng rng(37);
    Tensor a = Tensor::randn({2, 3}, rng, 1.0, Dtype::F64);
    Tensor brow = Tensor::randn({3}, rng, 1.0, Dtype::F64);
    Tensor bcol = Tensor::randn({2, 1}, rng, 1.0, Dtype::F64);
    a.set_requires_grad(true);
    brow.set_requires_grad(true);
    bcol.set_requires_grad(true);
    auto res = grad_check({a, brow, bcol},
                          [&] { return sum(mul(add(a, brow), add(a, bcol))); });
    CHECK(res.max_rel_err < 1e-4);

    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), ShapeError);
}

TEST_CASE("structural ops gradients") {
    Rng rng(41);
    Tensor a = Tensor::randn({4, 3}, rng, 1.0, Dtype::F64);
    a.set_requires_grad(true);
    Rng wrng(42);
    Tensor w = Tensor::randn({3, 3}, wrng, 1.0, Dtype::F64);
    auto res = grad_check({a}, [&] {
        Tensor g = gather_rows(a, {2, 0, 2});  // duplicate row: scatter-add path
        Tensor s = mul(w, g);
        return sum(s);
    });
    CHECK(res.max_rel_err < 1e-4);

    auto res2 = grad_check({a}, [&] {
        Tensor c = concat_cols({slice_cols(a, 1, 2), slice_cols(a, 0, 1)});
        Tensor r = concat_rows({slice_rows(c, 0, 2), slice_rows(c, 2, 2)});
        return sum(mul(r, r));
    });
    CHECK(res2.max_rel_err < 1e-4);

    auto res3 = grad_check({a}, [&] { return sum(take_per_row(a, {2, 1, 0, 2})); });
    CHECK(res3.max_rel_err < 1e-4);

    auto res4 = grad_check({a}, [&] { return sum(exp_op(row_normalize(reshape(a, {3, 4})))); });
    CHECK(res4.max_rel_err < 1e-4);
}

TEST_CASE("unary op gradients") {
    Rng rng(43);
    Tensor a = Tensor::randn({6}, rng, 0.8, Dtype::F64);
    a.set_requires_grad(true);
    auto res = grad_check({a}, [&] {
        Tensor t = add_scalar(mul_scalar(tanh_op(a), 0.5), 2.0);
        return sum(mul(sigmoid(a), log_op(t)));
    });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("no-grad scope suppresses recording") {
    Tensor x = leaf({2}, {1, 2});
    Tape tape;
    Tensor inside;
    {
        NoGrad ng;
        inside = mul(x, x);
    }
    CHECK_FALSE(inside.requires_grad());
    CHECK(tape.nodes().empty());
}

TEST_CASE("tape nodes are topologically ordered") {
    Tensor x = leaf({2}, {1, 2});
    Tape tape;
    Tensor y = mul(add_scalar(x, 1.0), x);
    Tensor loss = sum(y);
    // every node's inputs must appear as an earlier output or be a leaf
    std::vector<std::int64_t> seen;
    seen.push_back(x.id());
    for (const auto& node : tape.nodes()) {
        for (auto in : node.input_ids) {
            bool ok = false;
            for (auto s : seen)
                if (s == in) ok = true;
            CHECK(ok);
        }
        seen.push_back(node.output_id);
    }
    tape.backward(loss);
}

TEST_CASE("finite check guard") {
    set_finite_checks(true);
    CHECK_THROWS_AS(log_op(Tensor::from_data({1}, {-1.0})), ContractError);
    set_finite_checks(false);
    CHECK(all_finite(log_op(Tensor::from_data({1}, {2.0}))));
}

TEST_CASE("deterministic forward+backward") {
    auto run = [] {
        Rng rng(99);
        Tensor w = Tensor::randn({8, 8}, rng, 0.3);
        Tensor x = Tensor::randn({4, 8}, rng, 1.0);
        w.set_requires_grad(true);
        Tape tape;
        Tensor loss = sum(mul(relu(matmul_nt(x, w)), relu(matmul_nt(x, w))));
        tape.backward(loss);
        std::vector<double> out = w.grad_to_vector();
        out.push_back(loss.item());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("adam hand-computed single step") {
    Tensor p = Tensor::from_data({1}, {1.0});
    p.set_requires_grad(true);
    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam opt({p}, cfg);
    p.accumulate_grad({1.0});
    opt.step();
    // m_hat = 1, v_hat = 1 after bias correction: p = 1 - 0.1/(1 + 1e-8)
    CHECK(p.at(0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam zero gradient leaves params unchanged") {
    Tensor p = Tensor::from_data({3}, {1, -2, 0.5});
    p.set_requires_grad(true);
    Adam opt({p});
    opt.zero_grad();
    p.accumulate_grad({0, 0, 0});
    opt.step();
    CHECK(p.to_vector() == std::vector<double>{1, -2, 0.5});
}

TEST_CASE("adam converges on a quadratic") {
    Tensor p = Tensor::from_data({1}, {0.0});
    p.set_requires_grad(true);
    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam opt({p}, cfg);
    for (int i = 0; i < 200; ++i) {
        Tape tape;
        Tensor d = add_scalar(p, -3.0);
        tape.backward(sum(mul(d, d)));
        opt.step();
        opt.zero_grad();
    }
    CHECK(std::fabs(p.at(0) - 3.0) < 0.05);
}

TEST_CASE("adam rejects bad betas") {
    Tensor p = Tensor::zeros({1});
    AdamConfig cfg;
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(Adam({p}, cfg), ContractError);
}
