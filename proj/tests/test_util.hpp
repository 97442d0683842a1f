#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "trajmask/tensor.hpp"

namespace tmtest {

using trajmask::nn::Tensor;

// Central-finite-difference oracle. `forward` rebuilds the scalar loss from
// the current parameter values on every call; analytic gradients come from
// one taped backward pass and are compared element by element. Relative
// error uses a unit floor so near-zero gradients compare absolutely.
struct GradCheck {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::string worst;  // "param#k[i]"
};

inline GradCheck grad_check(const std::vector<Tensor>& params,
                            const std::function<Tensor()>& forward, double h = 1e-5) {
    using namespace trajmask;
    std::vector<std::vector<double>> analytic;
    {
        nn::Tape tape;
        Tensor loss = forward();
        tape.backward(loss);
        for (const auto& p : params) analytic.push_back(p.grad_to_vector());
    }
    for (auto p : params) p.zero_grad();

    GradCheck res;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double orig = p.at(i);
            p.set(i, orig + h);
            double up = forward().item();
            p.set(i, orig - h);
            double down = forward().item();
            p.set(i, orig);
            double fd = (up - down) / (2.0 * h);
            double a = analytic[k][i];
            double rel = std::fabs(fd - a) / std::max({1.0, std::fabs(fd), std::fabs(a)});
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "param#" + std::to_string(k) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

// fresh scratch directory under the build tree
inline std::string scratch_dir(const std::string& name) {
    std::filesystem::path p = std::filesystem::temp_directory_path() / ("trajmask_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

inline std::vector<char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
}

}  // namespace tmtest
