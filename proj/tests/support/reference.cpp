#include "reference.hpp"

#include <algorithm>
#include <cmath>

namespace ref {

namespace {

using deepinsert::numerics::Matrix;

std::vector<double> layer_norm(const std::vector<double>& x, const Matrix& gain, const Matrix& bias, double eps) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - mean) / std::sqrt(var + eps) * gain.data()[i] + bias.data()[i];
    }
    return out;
}

// x (1 x in) times w (in x out).
std::vector<double> linear(const std::vector<double>& x, const Matrix& w) {
    std::vector<double> out(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) out[j] += x[i] * w(i, j);
    }
    return out;
}

void rotate(std::vector<double>& v, std::int64_t pos, std::size_t head_dim) {
    for (std::size_t h = 0; h < v.size(); h += head_dim) {
        for (std::size_t j = 0; j < head_dim / 2; ++j) {
            const double freq = 1.0 / std::pow(10000.0, static_cast<double>(2 * j) / static_cast<double>(head_dim));
            const double c = std::cos(static_cast<double>(pos) * freq), s = std::sin(static_cast<double>(pos) * freq);
            const double a = v[h + 2 * j], b = v[h + 2 * j + 1];
            v[h + 2 * j] = a * c - b * s;
            v[h + 2 * j + 1] = a * s + b * c;
        }
    }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

std::vector<double> overwrite_and_mask_logits(const std::vector<std::int64_t>& tokens, std::int64_t mm_begin,
                                              const Matrix& mm, const deepinsert::model::Weights& w,
                                              const deepinsert::model::ModelConfig& cfg) {
    const std::size_t T = tokens.size(), d = cfg.d_model, H = cfg.n_heads, dh = d / H;
    const auto mm_end = mm_begin + static_cast<std::int64_t>(mm.rows());
    auto is_mm = [&](std::size_t t) {
        return static_cast<std::int64_t>(t) >= mm_begin && static_cast<std::int64_t>(t) < mm_end;
    };
    Rows x(T, std::vector<double>(d, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
        if (is_mm(t)) continue;
        for (std::size_t c = 0; c < d; ++c) x[t][c] = w.token_embedding(static_cast<std::size_t>(tokens[t]), c);
    }
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        if (l == cfg.insert_layer) {
            for (std::size_t t = 0; t < T; ++t) {
                if (is_mm(t)) {
                    for (std::size_t c = 0; c < d; ++c) x[t][c] = mm(static_cast<std::size_t>(t - mm_begin), c);
                }
            }
        }
        const bool mm_visible = l >= cfg.insert_layer;
        const auto& lw = w.layers[l];
        Rows q(T), k(T), v(T);
        for (std::size_t t = 0; t < T; ++t) {
            const auto h = layer_norm(x[t], lw.ln1_gain, lw.ln1_bias, cfg.norm_eps);
            q[t] = linear(h, lw.wq);
            k[t] = linear(h, lw.wk);
            v[t] = linear(h, lw.wv);
            rotate(q[t], static_cast<std::int64_t>(t), dh);
            rotate(k[t], static_cast<std::int64_t>(t), dh);
        }
        Rows next = x;
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> ctx(d, 0.0);
            for (std::size_t head = 0; head < H; ++head) {
                std::vector<double> score(t + 1, -INFINITY);
                double mx = -INFINITY;
                for (std::size_t s = 0; s <= t; ++s) {
                    if (!mm_visible && is_mm(s) && s != t) continue;
                    double dot = 0.0;
                    for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) dot += q[t][c] * k[s][c];
                    score[s] = dot / std::sqrt(static_cast<double>(dh));
                    mx = std::max(mx, score[s]);
                }
                double z = 0.0;
                for (double& sc : score) z += (sc = std::isinf(sc) ? 0.0 : std::exp(sc - mx));
                for (std::size_t s = 0; s <= t; ++s) {
                    for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) ctx[c] += score[s] / z * v[s][c];
                }
            }
            const auto o = linear(ctx, lw.wo);
            for (std::size_t c = 0; c < d; ++c) next[t][c] += o[c];
            const auto h2 = layer_norm(next[t], lw.ln2_gain, lw.ln2_bias, cfg.norm_eps);
            auto f = linear(h2, lw.w_ff1);
            for (double& a : f) a = gelu(a);
            const auto f2 = linear(f, lw.w_ff2);
            for (std::size_t c = 0; c < d; ++c) next[t][c] += f2[c];
        }
        x = std::move(next);
    }
    const auto h = layer_norm(x.back(), w.final_gain, w.final_bias, cfg.norm_eps);
    std::vector<double> logits(cfg.vocab_size, 0.0);
    for (std::size_t tok = 0; tok < cfg.vocab_size; ++tok) {
        for (std::size_t c = 0; c < d; ++c) logits[tok] += h[c] * w.token_embedding(tok, c);
    }
    return logits;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return a.size() == b.size() ? m : INFINITY;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double scale = 0.0;
    for (double v : b) scale = std::max(scale, std::abs(v));
    return max_abs_diff(a, b) / std::max(scale, 1e-12);
}

std::vector<double> row_of(const Matrix& m, std::size_t r) {
    auto row = m.row(r);
    return {row.begin(), row.end()};
}

}  // namespace ref
