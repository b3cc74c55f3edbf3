#pragma once

#include <array>
#include <cstdint>

#include "harmon/tensor.hpp"

namespace harmon {

// Block-structured mask over the joint (3m)x(3m) logits of a shared-attention
// call. Row-blocks 0 (foreground) and 1 (background) are fixed: entry 1 on
// their own diagonal block, blocked everywhere else. Row-block 2 (composite)
// carries the three adjustable entries. An entry equal to kNegInf blocks the
// corresponding source: the logit is forced to kNegInf unconditionally; a
// finite entry multiplies the scaled similarity.
struct SimilarityMask {
    double alpha = kNegInf;  // composite -> foreground reference
    double beta = kNegInf;   // composite -> background reference
    double gamma = 1.0;      // composite -> itself
    BlockIndex block{0, 3};  // m == 0 means "resolved from the projections"

    bool alpha_blocked() const { return alpha == kNegInf; }
    bool beta_blocked() const { return beta == kNegInf; }
    bool gamma_blocked() const { return gamma == kNegInf; }
};

// Validated constructor. Rejects the all-blocked composite row configuration.
SimilarityMask build_mask(double alpha, double beta, double gamma, std::size_t m = 0);

// Canonical presets.
SimilarityMask reconstruct_mask(std::size_t m = 0);   // (blocked, blocked, 1)
SimilarityMask disentangle_mask(std::size_t m = 0);   // (1, 1, blocked)
SimilarityMask reweight_mask(double alpha = 0.9, double beta = 1.1, std::size_t m = 0);

// Q/K/V over the concatenated triplet, first extent 3m. Heads partition the
// feature width evenly; the mask applies identically per head.
struct AttentionProjections {
    Tensor q, k, v;
    int head_count = 1;
};

// Plain scaled dot-product attention, softmax(q k^T / sqrt(d)) v.
Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v);
// Multi-head variant: an even partition of the feature width, each head
// scaled by sqrt(d / head_count). head_count == 1 reduces to the above.
Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v, int head_count);

// Masked shared attention over the triplet. Computed blockwise; the dense
// (3m)x(3m) mask is never materialized. Foreground and background output
// blocks are bit-identical to self_attention on their own block.
Tensor shared_attention(const AttentionProjections& proj, const SimilarityMask& mask);

struct SourceHistogram {
    double lo = 0.0;
    double hi = 0.0;
    std::array<std::uint64_t, 64> counts{};
    std::uint64_t total() const;
};

// Per-composite-query routing of post-softmax probability mass to each
// source, plus histograms of the pre-softmax scaled similarities per source
// (64 uniform bins over the observed range; blocked sources stay empty).
struct AttentionDiagnostics {
    Tensor mass_to_fg, mass_to_bg, mass_to_self;  // [m]
    SourceHistogram hist_fg, hist_bg, hist_self;
};

AttentionDiagnostics attention_diagnostics(const AttentionProjections& proj,
                                           const SimilarityMask& mask);

}  // namespace harmon
