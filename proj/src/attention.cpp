#include "harmon/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace harmon {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Accepts IEEE -inf as a synonym for the blocked sentinel.
double canonical_entry(double v) {
    if (v == -std::numeric_limits<double>::infinity()) return kNegInf;
    if (!std::isfinite(v)) throw std::invalid_argument("mask entry must be finite or blocked");
    return v;
}

Tensor row_block(const Tensor& t, std::size_t b, std::size_t m) {
    Tensor out({m, t.cols()});
    std::copy(t.row_ptr(b * m), t.row_ptr(b * m) + m * t.cols(), out.data.begin());
    return out;
}

Tensor col_slice(const Tensor& t, std::size_t c0, std::size_t nc) {
    Tensor out({t.rows(), nc});
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const double* src = t.row_ptr(i) + c0;
        std::copy(src, src + nc, out.row_ptr(i));
    }
    return out;
}

void write_block(Tensor& dst, std::size_t r0, std::size_t c0, const Tensor& src) {
    for (std::size_t i = 0; i < src.rows(); ++i) {
        std::copy(src.row_ptr(i), src.row_ptr(i) + src.cols(), dst.row_ptr(r0 + i) + c0);
    }
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += a[c] * b[c];
    return s;
}

// softmax((q k^T) * inv_sqrt) v over a single block pair. self_attention and
// the reference row-blocks of shared_attention both go through here, which
// keeps them bit-identical.
Tensor single_block_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              double inv_sqrt) {
    const std::size_t mq = q.rows(), mk = k.rows(), d = q.cols();
    Tensor logits({mq, mk});
    detail::parallel_rows(mq, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double* qr = q.row_ptr(i);
            double* out = logits.row_ptr(i);
            for (std::size_t j = 0; j < mk; ++j) {
                out[j] = dot(qr, k.row_ptr(j), d) * inv_sqrt;
            }
        }
    });
    return matmul(softmax_rows(logits), v);
}

struct ActiveSource {
    std::size_t block;  // 0 fg, 1 bg, 2 self
    double entry;
};

std::vector<ActiveSource> active_sources(const SimilarityMask& mask) {
    std::vector<ActiveSource> act;
    if (!mask.alpha_blocked()) act.push_back({0, mask.alpha});
    if (!mask.beta_blocked()) act.push_back({1, mask.beta});
    if (!mask.gamma_blocked()) act.push_back({2, mask.gamma});
    return act;
}

// Composite-row logits against the active key blocks, width m * |active|.
// Entries scale the raw similarity before the sqrt(d) division.
Tensor composite_logits(const Tensor& q, const Tensor& k, std::size_t m,
                        const std::vector<ActiveSource>& act, double inv_sqrt) {
    const std::size_t d = q.cols();
    Tensor qc = row_block(q, 2, m);
    Tensor logits({m, m * act.size()});
    detail::parallel_rows(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double* qr = qc.row_ptr(i);
            double* out = logits.row_ptr(i);
            for (std::size_t s = 0; s < act.size(); ++s) {
                const double entry = act[s].entry;
                const double* kbase = k.row_ptr(act[s].block * m);
                double* o = out + s * m;
                for (std::size_t j = 0; j < m; ++j) {
                    o[j] = (entry * dot(qr, kbase + j * d, d)) * inv_sqrt;
                }
            }
        }
    });
    return logits;
}

// probs (m x m*|active|) times the stacked active value blocks.
Tensor composite_apply(const Tensor& probs, const Tensor& v, std::size_t m,
                       const std::vector<ActiveSource>& act) {
    const std::size_t d = v.cols();
    Tensor out({m, d});
    detail::parallel_rows(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* o = out.row_ptr(i);
            const double* pr = probs.row_ptr(i);
            for (std::size_t s = 0; s < act.size(); ++s) {
                const double* vbase = v.row_ptr(act[s].block * m);
                const double* p = pr + s * m;
                for (std::size_t j = 0; j < m; ++j) {
                    const double w = p[j];
                    const double* vr = vbase + j * d;
                    for (std::size_t c = 0; c < d; ++c) o[c] += w * vr[c];
                }
            }
        }
    });
    return out;
}

void validate_projections(const AttentionProjections& proj, const SimilarityMask& mask,
                          std::size_t& m_out, std::size_t& dh_out) {
    require(proj.q.rank() == 2, "projections must be rank-2");
    require(proj.q.same_shape(proj.k) && proj.q.same_shape(proj.v),
            "q/k/v shapes must agree");
    require(proj.q.rows() % 3 == 0, "first extent must be divisible by 3");
    const std::size_t m = proj.q.rows() / 3;
    require(m > 0, "empty blocks");
    if (mask.block.m != 0) {
        require(mask.block.m == m && mask.block.count == 3, "mask block extent mismatch");
    }
    require(!(mask.alpha_blocked() && mask.beta_blocked() && mask.gamma_blocked()),
            "composite rows fully masked");
    require(proj.head_count > 0, "head_count must be positive");
    require(proj.q.cols() % static_cast<std::size_t>(proj.head_count) == 0,
            "feature width must divide evenly into heads");
    m_out = m;
    dh_out = proj.q.cols() / static_cast<std::size_t>(proj.head_count);
}

}  // namespace

SimilarityMask build_mask(double alpha, double beta, double gamma, std::size_t m) {
    SimilarityMask mask;
    mask.alpha = canonical_entry(alpha);
    mask.beta = canonical_entry(beta);
    mask.gamma = canonical_entry(gamma);
    mask.block = BlockIndex{m, 3};
    if (mask.alpha_blocked() && mask.beta_blocked() && mask.gamma_blocked()) {
        throw std::invalid_argument("composite rows fully masked");
    }
    return mask;
}

SimilarityMask reconstruct_mask(std::size_t m) { return build_mask(kNegInf, kNegInf, 1.0, m); }
SimilarityMask disentangle_mask(std::size_t m) { return build_mask(1.0, 1.0, kNegInf, m); }
SimilarityMask reweight_mask(double alpha, double beta, std::size_t m) {
    return build_mask(alpha, beta, kNegInf, m);
}

Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, "attention expects rank-2 tensors");
    require(q.cols() == k.cols() && q.cols() > 0, "q/k widths must agree");
    require(k.rows() == v.rows(), "k/v lengths must agree");
    return single_block_attention(q, k, v, 1.0 / std::sqrt(static_cast<double>(q.cols())));
}

Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v, int head_count) {
    require(head_count > 0, "head_count must be positive");
    if (head_count == 1) return self_attention(q, k, v);
    require(q.rank() == 2 && q.cols() % static_cast<std::size_t>(head_count) == 0,
            "feature width must divide evenly into heads");
    const std::size_t dh = q.cols() / static_cast<std::size_t>(head_count);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor out({q.rows(), q.cols()});
    for (int h = 0; h < head_count; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        Tensor shard = single_block_attention(col_slice(q, c0, dh), col_slice(k, c0, dh),
                                              col_slice(v, c0, dh), inv_sqrt);
        write_block(out, 0, c0, shard);
    }
    return out;
}

Tensor shared_attention(const AttentionProjections& proj, const SimilarityMask& mask) {
    std::size_t m = 0, dh = 0;
    validate_projections(proj, mask, m, dh);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::vector<ActiveSource> act = active_sources(mask);
    Tensor out({3 * m, proj.q.cols()});

    for (int h = 0; h < proj.head_count; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        Tensor qs, ks, vs;
        const Tensor* qh = &proj.q;
        const Tensor* kh = &proj.k;
        const Tensor* vh = &proj.v;
        if (proj.head_count > 1) {
            qs = col_slice(proj.q, c0, dh);
            ks = col_slice(proj.k, c0, dh);
            vs = col_slice(proj.v, c0, dh);
            qh = &qs;
            kh = &ks;
            vh = &vs;
        }
        // Reference row-blocks attend only to their own block with entry 1.
        for (std::size_t b = 0; b < 2; ++b) {
            Tensor shard = single_block_attention(row_block(*qh, b, m), row_block(*kh, b, m),
                                                  row_block(*vh, b, m), inv_sqrt);
            write_block(out, b * m, c0, shard);
        }
        Tensor probs = softmax_rows(composite_logits(*qh, *kh, m, act, inv_sqrt));
        write_block(out, 2 * m, c0, composite_apply(probs, *vh, m, act));
    }
    return out;
}

std::uint64_t SourceHistogram::total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : counts) t += c;
    return t;
}

namespace {

SourceHistogram make_histogram(const std::vector<double>& sims) {
    SourceHistogram h;
    if (sims.empty()) return h;
    h.lo = *std::min_element(sims.begin(), sims.end());
    h.hi = *std::max_element(sims.begin(), sims.end());
    const double width = (h.hi - h.lo) / 64.0;
    for (double s : sims) {
        std::size_t bin = 0;
        if (width > 0.0) {
            bin = std::min<std::size_t>(63, static_cast<std::size_t>((s - h.lo) / width));
        }
        ++h.counts[bin];
    }
    return h;
}

}  // namespace

AttentionDiagnostics attention_diagnostics(const AttentionProjections& proj,
                                           const SimilarityMask& mask) {
    std::size_t m = 0, dh = 0;
    validate_projections(proj, mask, m, dh);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::vector<ActiveSource> act = active_sources(mask);

    AttentionDiagnostics diag;
    diag.mass_to_fg = zeros({m});
    diag.mass_to_bg = zeros({m});
    diag.mass_to_self = zeros({m});
    std::array<std::vector<double>, 3> sims;

    for (int h = 0; h < proj.head_count; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        Tensor qs, ks;
        const Tensor* qh = &proj.q;
        const Tensor* kh = &proj.k;
        if (proj.head_count > 1) {
            qs = col_slice(proj.q, c0, dh);
            ks = col_slice(proj.k, c0, dh);
            qh = &qs;
            kh = &ks;
        }
        Tensor logits = composite_logits(*qh, *kh, m, act, inv_sqrt);
        for (std::size_t s = 0; s < act.size(); ++s) {
            auto& dst = sims[act[s].block];
            for (std::size_t i = 0; i < m; ++i) {
                const double* row = logits.row_ptr(i) + s * m;
                dst.insert(dst.end(), row, row + m);
            }
        }
        Tensor probs = softmax_rows(logits);
        for (std::size_t i = 0; i < m; ++i) {
            const double* pr = probs.row_ptr(i);
            for (std::size_t s = 0; s < act.size(); ++s) {
                double sum = 0.0;
                for (std::size_t j = 0; j < m; ++j) sum += pr[s * m + j];
                Tensor& mass = act[s].block == 0   ? diag.mass_to_fg
                               : act[s].block == 1 ? diag.mass_to_bg
                                                   : diag.mass_to_self;
                mass(i) += sum;
            }
        }
    }
    const double inv_heads = 1.0 / static_cast<double>(proj.head_count);
    for (std::size_t i = 0; i < m; ++i) {
        diag.mass_to_fg(i) *= inv_heads;
        diag.mass_to_bg(i) *= inv_heads;
        diag.mass_to_self(i) *= inv_heads;
    }
    diag.hist_fg = make_histogram(sims[0]);
    diag.hist_bg = make_histogram(sims[1]);
    diag.hist_self = make_histogram(sims[2]);
    return diag;
}

}  // namespace harmon
