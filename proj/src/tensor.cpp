#include "harmon/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <random>
#include <stdexcept>
#include <thread>

namespace harmon {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    if (shape.empty() || shape.size() > 3) throw std::invalid_argument("tensor rank must be 1..3");
    data.assign(shape_product(shape), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
}

Tensor random_normal(std::vector<std::size_t> shape, std::uint64_t seed, double stddev) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data) v = dist(rng);
    return t;
}

namespace detail {

void parallel_rows(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    static const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(hw, n == 0 ? 1 : n);
    if (workers <= 1 || n < 64) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, w, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    try {
        fn(0, std::min(n, chunk));
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 tensors");
    require(a.cols() == b.rows(), "matmul inner extents mismatch");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    detail::parallel_rows(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* o = out.row_ptr(i);
            const double* ar = a.row_ptr(i);
            for (std::size_t p = 0; p < k; ++p) {
                const double aik = ar[p];
                const double* br = b.row_ptr(p);
                for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
            }
        }
    });
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    require(logits.rank() == 2, "softmax_rows expects a rank-2 tensor");
    const std::size_t m = logits.rows(), n = logits.cols();
    Tensor out({m, n});
    detail::parallel_rows(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double* in = logits.row_ptr(i);
            double* o = out.row_ptr(i);
            double mx = kNegInf;
            bool any = false;
            for (std::size_t j = 0; j < n; ++j) {
                if (in[j] == kNegInf) continue;
                any = true;
                if (in[j] > mx) mx = in[j];
            }
            if (!any) throw std::invalid_argument("fully masked row");
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double e = in[j] == kNegInf ? 0.0 : std::exp(in[j] - mx);
                o[j] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < n; ++j) o[j] /= sum;
        }
    });
    return out;
}

Tensor block_concat(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "block_concat needs at least one part");
    const Tensor& first = parts.front();
    require(first.rank() == 2, "block_concat expects rank-2 parts");
    for (const Tensor& p : parts) {
        require(p.same_shape(first), "block_concat parts must share shape");
    }
    Tensor out({first.rows() * parts.size(), first.cols()});
    double* dst = out.data.data();
    for (const Tensor& p : parts) {
        std::copy(p.data.begin(), p.data.end(), dst);
        dst += p.size();
    }
    return out;
}

std::vector<Tensor> block_split(const Tensor& whole, const BlockIndex& block) {
    require(whole.rank() == 2, "block_split expects a rank-2 tensor");
    require(block.m > 0 && block.count > 0, "block_split needs positive block extents");
    require(whole.rows() == block.m * block.count, "block_split extent mismatch");
    std::vector<Tensor> parts;
    parts.reserve(block.count);
    const std::size_t stride = block.m * whole.cols();
    for (std::size_t b = 0; b < block.count; ++b) {
        Tensor p({block.m, whole.cols()});
        std::copy(whole.data.begin() + b * stride, whole.data.begin() + (b + 1) * stride,
                  p.data.begin());
        parts.push_back(std::move(p));
    }
    return parts;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "elementwise shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "elementwise shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (double& v : out.data) v *= c;
    return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "elementwise shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

double max_abs(const Tensor& a) {
    double mx = 0.0;
    for (double v : a.data) mx = std::max(mx, std::abs(v));
    return mx;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "elementwise shape mismatch");
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
    }
    return mx;
}

double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

double rel_l2_diff(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "elementwise shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        num += d * d;
        den += b.data[i] * b.data[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace harmon
