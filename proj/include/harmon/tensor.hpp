#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace harmon {

// Logit sentinel recognized by softmax_rows. A logit equal to kNegInf is
// treated as "blocked": it contributes exactly zero attention weight and is
// excluded from the row max. It is a distinguished value, not an ordinary
// operand of arithmetic.
inline constexpr double kNegInf = std::numeric_limits<double>::lowest();

// Rows-per-block layout of a concatenated tensor: first extent == m * count.
struct BlockIndex {
    std::size_t m = 0;
    std::size_t count = 3;
};

// Dense row-major array of doubles, rank 1..3.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);

    std::size_t rank() const { return shape.size(); }
    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 0 : shape[1]; }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    double* row_ptr(std::size_t i) { return data.data() + i * shape[1]; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * shape[1]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

Tensor zeros(std::vector<std::size_t> shape);

// Seeded Gaussian fill; bit-reproducible for a fixed seed on a given build.
Tensor random_normal(std::vector<std::size_t> shape, std::uint64_t seed, double stddev = 1.0);

// Standard product with a fixed left-to-right reduction over the inner
// extent, so results are bit-identical across runs and thread counts.
Tensor matmul(const Tensor& a, const Tensor& b);

// Numerically stable row softmax. kNegInf entries map to exactly 0 and are
// excluded from the per-row max; a row with no finite entry is an error.
Tensor softmax_rows(const Tensor& logits);

Tensor block_concat(const std::vector<Tensor>& parts);
std::vector<Tensor> block_split(const Tensor& whole, const BlockIndex& block);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
void add_inplace(Tensor& a, const Tensor& b);

double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
// ||a - b|| / ||b||, with an epsilon guard for ||b|| == 0.
double rel_l2_diff(const Tensor& a, const Tensor& b);

namespace detail {
// Runs fn over [0, n) split into contiguous chunks, one chunk per worker.
// Each index is processed by exactly one worker, so any per-index computation
// with a fixed internal order is deterministic regardless of thread count.
void parallel_rows(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);
}  // namespace detail

}  // namespace harmon
