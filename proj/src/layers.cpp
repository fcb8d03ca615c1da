#include "eegdann/layers.hpp"

#include <algorithm>
#include <cmath>

#include "eegdann/error.hpp"
#include "eegdann/ops.hpp"

namespace eegdann::nn {

using ad::grad_of;
using ad::Node;
using ad::record;
using ad::to_string;

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require(weight.dim() == 2 && bias.dim() == 1 && bias.extent(0) == weight.extent(0),
            "linear: bad parameter shapes " + to_string(weight.shape()) + ", " +
                to_string(bias.shape()));
    const std::size_t out_f = weight.extent(0);
    const std::size_t in_f = weight.extent(1);
    const bool vector_input = x.dim() == 1;
    require((vector_input && x.extent(0) == in_f) || (x.dim() == 2 && x.extent(1) == in_f),
            "linear: input " + to_string(x.shape()) + " does not match weight " +
                to_string(weight.shape()));
    const std::size_t n = vector_input ? 1 : x.extent(0);
    const double* xv = x.values().data();
    const double* wv = weight.values().data();
    const double* bv = bias.values().data();
    std::vector<double> out(n * out_f);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t o = 0; o < out_f; ++o) {
            double acc = bv[o];
            for (std::size_t i = 0; i < in_f; ++i) {
                acc += wv[o * in_f + i] * xv[r * in_f + i];
            }
            out[r * out_f + o] = acc;
        }
    }
    Shape shape = vector_input ? Shape{out_f} : Shape{n, out_f};
    return record("linear", std::move(shape), std::move(out), {x, weight, bias},
                  [n, in_f, out_f](const Node& node, std::span<const double> g) {
                      const auto& x = node.inputs[0];
                      const auto& w = node.inputs[1];
                      const auto& b = node.inputs[2];
                      const double* xv = x.values().data();
                      const double* wv = w.values().data();
                      if (x.requires_grad()) {
                          auto gx = grad_of(x);
                          for (std::size_t r = 0; r < n; ++r) {
                              for (std::size_t o = 0; o < out_f; ++o) {
                                  const double go = g[r * out_f + o];
                                  for (std::size_t i = 0; i < in_f; ++i) {
                                      gx[r * in_f + i] += go * wv[o * in_f + i];
                                  }
                              }
                          }
                      }
                      if (w.requires_grad()) {
                          auto gw = grad_of(w);
                          for (std::size_t r = 0; r < n; ++r) {
                              for (std::size_t o = 0; o < out_f; ++o) {
                                  const double go = g[r * out_f + o];
                                  for (std::size_t i = 0; i < in_f; ++i) {
                                      gw[o * in_f + i] += go * xv[r * in_f + i];
                                  }
                              }
                          }
                      }
                      if (b.requires_grad()) {
                          auto gb = grad_of(b);
                          for (std::size_t r = 0; r < n; ++r) {
                              for (std::size_t o = 0; o < out_f; ++o) {
                                  gb[o] += g[r * out_f + o];
                              }
                          }
                      }
                  });
}

namespace {

struct ConvGeometry {
    std::size_t batch, in_c, out_c, kernel, in_len, out_len, stride, padding;

    // Output positions lo whose input index lo*stride + k - padding is in range.
    std::pair<std::size_t, std::size_t> valid_range(std::size_t k) const {
        const auto p = static_cast<std::ptrdiff_t>(padding);
        const auto kk = static_cast<std::ptrdiff_t>(k);
        const auto s = static_cast<std::ptrdiff_t>(stride);
        const auto len = static_cast<std::ptrdiff_t>(in_len);
        std::ptrdiff_t lo_min = 0;
        if (p > kk) {
            lo_min = (p - kk + s - 1) / s;
        }
        std::ptrdiff_t last = len - 1 - kk + p;
        std::ptrdiff_t lo_max = last < 0 ? 0 : last / s + 1;
        lo_max = std::min<std::ptrdiff_t>(lo_max, static_cast<std::ptrdiff_t>(out_len));
        if (lo_max < lo_min) {
            lo_max = lo_min;
        }
        return {static_cast<std::size_t>(lo_min), static_cast<std::size_t>(lo_max)};
    }

    std::ptrdiff_t shift(std::size_t k) const {
        return static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(padding);
    }
};

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require(weight.dim() == 3, "conv1d: weight must be [out, in, kernel], got " +
                                   to_string(weight.shape()));
    require(bias.dim() == 1 && bias.extent(0) == weight.extent(0), "conv1d: bias shape mismatch");
    require(stride >= 1, "conv1d: stride must be positive");
    const bool unbatched = x.dim() == 2;
    require(unbatched || x.dim() == 3, "conv1d: input must be [N, C, L] or [C, L]");
    ConvGeometry geo{};
    geo.batch = unbatched ? 1 : x.extent(0);
    geo.in_c = x.extent(unbatched ? 0 : 1);
    geo.in_len = x.extent(unbatched ? 1 : 2);
    geo.out_c = weight.extent(0);
    geo.kernel = weight.extent(2);
    geo.stride = stride;
    geo.padding = padding;
    require(weight.extent(1) == geo.in_c, "conv1d: input has " + std::to_string(geo.in_c) +
                                              " channels, weight expects " +
                                              std::to_string(weight.extent(1)));
    require(geo.in_len + 2 * padding >= geo.kernel, "conv1d: input shorter than kernel");
    geo.out_len = (geo.in_len + 2 * padding - geo.kernel) / stride + 1;

    const double* xv = x.values().data();
    const double* wv = weight.values().data();
    const double* bv = bias.values().data();
    std::vector<double> out(geo.batch * geo.out_c * geo.out_len);
    for (std::size_t n = 0; n < geo.batch; ++n) {
        for (std::size_t co = 0; co < geo.out_c; ++co) {
            double* orow = out.data() + (n * geo.out_c + co) * geo.out_len;
            std::fill(orow, orow + geo.out_len, bv[co]);
            for (std::size_t ci = 0; ci < geo.in_c; ++ci) {
                const double* xrow = xv + (n * geo.in_c + ci) * geo.in_len;
                for (std::size_t k = 0; k < geo.kernel; ++k) {
                    const double w = wv[(co * geo.in_c + ci) * geo.kernel + k];
                    const auto [lo, hi] = geo.valid_range(k);
                    const std::ptrdiff_t sh = geo.shift(k);
                    if (stride == 1) {
                        const double* src = xrow + sh;
                        for (std::size_t l = lo; l < hi; ++l) {
                            orow[l] += w * src[l];
                        }
                    } else {
                        for (std::size_t l = lo; l < hi; ++l) {
                            orow[l] += w * xrow[static_cast<std::ptrdiff_t>(l * stride) + sh];
                        }
                    }
                }
            }
        }
    }
    Shape shape = unbatched ? Shape{geo.out_c, geo.out_len}
                            : Shape{geo.batch, geo.out_c, geo.out_len};
    return record(
        "conv1d", std::move(shape), std::move(out), {x, weight, bias},
        [geo](const Node& node, std::span<const double> g) {
            const auto& x = node.inputs[0];
            const auto& w = node.inputs[1];
            const auto& b = node.inputs[2];
            const double* xv = x.values().data();
            const double* wv = w.values().data();
            double* gx = x.requires_grad() ? grad_of(x).data() : nullptr;
            double* gw = w.requires_grad() ? grad_of(w).data() : nullptr;
            double* gb = b.requires_grad() ? grad_of(b).data() : nullptr;
            for (std::size_t n = 0; n < geo.batch; ++n) {
                for (std::size_t co = 0; co < geo.out_c; ++co) {
                    const double* grow = g.data() + (n * geo.out_c + co) * geo.out_len;
                    if (gb != nullptr) {
                        double acc = 0.0;
                        for (std::size_t l = 0; l < geo.out_len; ++l) {
                            acc += grow[l];
                        }
                        gb[co] += acc;
                    }
                    for (std::size_t ci = 0; ci < geo.in_c; ++ci) {
                        const std::size_t xoff = (n * geo.in_c + ci) * geo.in_len;
                        for (std::size_t k = 0; k < geo.kernel; ++k) {
                            const std::size_t widx = (co * geo.in_c + ci) * geo.kernel + k;
                            const auto [lo, hi] = geo.valid_range(k);
                            const std::ptrdiff_t sh = geo.shift(k);
                            if (geo.stride == 1) {
                                if (gw != nullptr) {
                                    const double* src = xv + xoff + sh;
                                    double acc = 0.0;
                                    for (std::size_t l = lo; l < hi; ++l) {
                                        acc += grow[l] * src[l];
                                    }
                                    gw[widx] += acc;
                                }
                                if (gx != nullptr) {
                                    const double wk = wv[widx];
                                    double* dst = gx + xoff + sh;
                                    for (std::size_t l = lo; l < hi; ++l) {
                                        dst[l] += wk * grow[l];
                                    }
                                }
                            } else {
                                for (std::size_t l = lo; l < hi; ++l) {
                                    const auto xi = static_cast<std::ptrdiff_t>(xoff + l * geo.stride) + sh;
                                    if (gw != nullptr) {
                                        gw[widx] += grow[l] * xv[xi];
                                    }
                                    if (gx != nullptr) {
                                        gx[xi] += wv[widx] * grow[l];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

Tensor max_pool1d(const Tensor& x, std::size_t kernel, std::size_t stride) {
    require(kernel >= 1 && stride >= 1, "max_pool1d: kernel and stride must be positive");
    require(x.dim() >= 1, "max_pool1d: scalar input");
    const std::size_t len = x.shape().back();
    require(len >= kernel, "max_pool1d: length " + std::to_string(len) + " shorter than kernel " +
                               std::to_string(kernel));
    const std::size_t out_len = (len - kernel) / stride + 1;
    const std::size_t rows = x.size() / len;
    auto xv = x.values();
    std::vector<double> out(rows * out_len);
    std::vector<std::size_t> argmax(rows * out_len);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out_len; ++o) {
            std::size_t best = r * len + o * stride;
            for (std::size_t k = 1; k < kernel; ++k) {
                const std::size_t idx = r * len + o * stride + k;
                if (xv[idx] > xv[best]) {
                    best = idx;
                }
            }
            out[r * out_len + o] = xv[best];
            argmax[r * out_len + o] = best;
        }
    }
    Shape shape = x.shape();
    shape.back() = out_len;
    return record("max_pool1d", std::move(shape), std::move(out), {x},
                  [argmax = std::move(argmax)](const Node& node, std::span<const double> g) {
                      auto gx = grad_of(node.inputs[0]);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[argmax[i]] += g[i];
                      }
                  });
}

Tensor global_avg_pool(const Tensor& x) {
    require(x.dim() >= 2, "global_avg_pool: input must be [C, L] or [N, C, L]");
    const std::size_t len = x.shape().back();
    const std::size_t rows = x.size() / len;
    auto xv = x.values();
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t l = 0; l < len; ++l) {
            acc += xv[r * len + l];
        }
        out[r] = acc / static_cast<double>(len);
    }
    Shape shape(x.shape().begin(), x.shape().end() - 1);
    return record("global_avg_pool", std::move(shape), std::move(out), {x},
                  [len](const Node& node, std::span<const double> g) {
                      auto gx = grad_of(node.inputs[0]);
                      const double inv = 1.0 / static_cast<double>(len);
                      for (std::size_t r = 0; r < g.size(); ++r) {
                          for (std::size_t l = 0; l < len; ++l) {
                              gx[r * len + l] += g[r] * inv;
                          }
                      }
                  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, BatchNormOptions options, Mode mode) {
    require(x.dim() == 2 || x.dim() == 3, "batch_norm: input must be [N, C] or [N, C, L], got " +
                                              to_string(x.shape()));
    const std::size_t n = x.extent(0);
    const std::size_t ch = x.extent(1);
    const std::size_t len = x.dim() == 3 ? x.extent(2) : 1;
    require(gamma.size() == ch && beta.size() == ch && running_mean.size() == ch &&
                running_var.size() == ch,
            "batch_norm: parameter size does not match channel count " + std::to_string(ch));
    const std::size_t count = n * len;
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();

    std::vector<double> mean(ch);
    std::vector<double> inv_std(ch);
    if (mode == Mode::train) {
        require(count >= 2, "batch_norm: training mode needs at least 2 values per channel");
        auto rm = running_mean.values_mut();
        auto rv = running_var.values_mut();
        for (std::size_t c = 0; c < ch; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = xv.data() + (i * ch + c) * len;
                for (std::size_t l = 0; l < len; ++l) {
                    s += row[l];
                }
            }
            const double m = s / static_cast<double>(count);
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = xv.data() + (i * ch + c) * len;
                for (std::size_t l = 0; l < len; ++l) {
                    const double d = row[l] - m;
                    ss += d * d;
                }
            }
            const double var = ss / static_cast<double>(count);
            mean[c] = m;
            inv_std[c] = 1.0 / std::sqrt(var + options.eps);
            const double unbiased = ss / static_cast<double>(count - 1);
            rm[c] = (1.0 - options.momentum) * rm[c] + options.momentum * m;
            rv[c] = (1.0 - options.momentum) * rv[c] + options.momentum * unbiased;
        }
    } else {
        auto rm = running_mean.values();
        auto rv = running_var.values();
        for (std::size_t c = 0; c < ch; ++c) {
            mean[c] = rm[c];
            inv_std[c] = 1.0 / std::sqrt(std::max(rv[c], 0.0) + options.eps);
        }
    }

    std::vector<double> xhat(x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t off = (i * ch + c) * len;
            for (std::size_t l = 0; l < len; ++l) {
                const double h = (xv[off + l] - mean[c]) * inv_std[c];
                xhat[off + l] = h;
                out[off + l] = gv[c] * h + bv[c];
            }
        }
    }
    const bool batch_stats = mode == Mode::train;
    return record(
        "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
        [xhat = std::move(xhat), inv_std = std::move(inv_std), n, ch, len, count,
         batch_stats](const Node& node, std::span<const double> g) {
            const auto& x = node.inputs[0];
            const auto& gamma = node.inputs[1];
            const auto& beta = node.inputs[2];
            auto gv = gamma.values();
            std::vector<double> sum_g(ch, 0.0);
            std::vector<double> sum_gx(ch, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < ch; ++c) {
                    const std::size_t off = (i * ch + c) * len;
                    double sg = 0.0;
                    double sgx = 0.0;
                    for (std::size_t l = 0; l < len; ++l) {
                        sg += g[off + l];
                        sgx += g[off + l] * xhat[off + l];
                    }
                    sum_g[c] += sg;
                    sum_gx[c] += sgx;
                }
            }
            if (gamma.requires_grad()) {
                auto gg = grad_of(gamma);
                for (std::size_t c = 0; c < ch; ++c) {
                    gg[c] += sum_gx[c];
                }
            }
            if (beta.requires_grad()) {
                auto gb = grad_of(beta);
                for (std::size_t c = 0; c < ch; ++c) {
                    gb[c] += sum_g[c];
                }
            }
            if (!x.requires_grad()) {
                return;
            }
            auto gx = grad_of(x);
            const double inv_count = 1.0 / static_cast<double>(count);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < ch; ++c) {
                    const std::size_t off = (i * ch + c) * len;
                    const double k = gv[c] * inv_std[c];
                    if (batch_stats) {
                        const double mg = sum_g[c] * inv_count;
                        const double mgx = sum_gx[c] * inv_count;
                        for (std::size_t l = 0; l < len; ++l) {
                            gx[off + l] += k * (g[off + l] - mg - xhat[off + l] * mgx);
                        }
                    } else {
                        for (std::size_t l = 0; l < len; ++l) {
                            gx[off + l] += k * g[off + l];
                        }
                    }
                }
            }
        });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];
    }
    return record("leaky_relu", x.shape(), std::move(out), {x},
                  [slope](const Node& node, std::span<const double> g) {
                      auto xv = node.inputs[0].values();
                      auto gx = grad_of(node.inputs[0]);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += xv[i] >= 0.0 ? g[i] : slope * g[i];
                      }
                  });
}

Tensor softmax(const Tensor& x) {
    require(x.dim() >= 1, "softmax: scalar input");
    const std::size_t width = x.shape().back();
    const std::size_t rows = x.size() / width;
    auto xv = x.values();
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * width;
        double* o = out.data() + r * width;
        const double mx = *std::max_element(in, in + width);
        double total = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < width; ++j) {
            o[j] /= total;
        }
    }
    auto saved = out;
    return record("softmax", x.shape(), std::move(out), {x},
                  [saved = std::move(saved), width, rows](const Node& node,
                                                          std::span<const double> g) {
                      auto gx = grad_of(node.inputs[0]);
                      for (std::size_t r = 0; r < rows; ++r) {
                          const double* y = saved.data() + r * width;
                          const double* gr = g.data() + r * width;
                          double inner = 0.0;
                          for (std::size_t j = 0; j < width; ++j) {
                              inner += gr[j] * y[j];
                          }
                          for (std::size_t j = 0; j < width; ++j) {
                              gx[r * width + j] += y[j] * (gr[j] - inner);
                          }
                      }
                  });
}

Tensor grad_reversal(const Tensor& x, double lambda) {
    require(lambda >= 0.0, "grad_reversal: lambda must be non-negative");
    std::vector<double> values(x.values().begin(), x.values().end());
    return record("grad_reversal", x.shape(), std::move(values), {x},
                  [lambda](const Node& node, std::span<const double> g) {
                      auto gx = grad_of(node.inputs[0]);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += -lambda * g[i];
                      }
                  });
}

namespace {
inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

Tensor lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& w_ih,
                 const Tensor& w_hh, const Tensor& bias) {
    require(x.dim() == 1 && h.dim() == 1 && c.dim() == 1, "lstm_cell: x, h, c must be vectors");
    const std::size_t in = x.extent(0);
    const std::size_t hid = h.extent(0);
    require(c.extent(0) == hid, "lstm_cell: h and c sizes differ");
    require(w_ih.shape() == Shape{4 * hid, in}, "lstm_cell: w_ih shape " +
                                                    to_string(w_ih.shape()) + " expected " +
                                                    to_string(Shape{4 * hid, in}));
    require(w_hh.shape() == Shape{4 * hid, hid}, "lstm_cell: w_hh shape mismatch");
    require(bias.shape() == Shape{4 * hid}, "lstm_cell: bias shape mismatch");

    const double* xv = x.values().data();
    const double* hv = h.values().data();
    const double* cv = c.values().data();
    const double* wi = w_ih.values().data();
    const double* wh = w_hh.values().data();
    const double* bv = bias.values().data();

    // gates: [i, f, g, o] post-activation
    std::vector<double> gates(4 * hid);
    for (std::size_t r = 0; r < 4 * hid; ++r) {
        double z = bv[r];
        for (std::size_t j = 0; j < in; ++j) {
            z += wi[r * in + j] * xv[j];
        }
        for (std::size_t j = 0; j < hid; ++j) {
            z += wh[r * hid + j] * hv[j];
        }
        gates[r] = r / hid == 2 ? std::tanh(z) : logistic(z);
    }
    std::vector<double> out(2 * hid);
    std::vector<double> tanh_c(hid);
    for (std::size_t k = 0; k < hid; ++k) {
        const double cn = gates[hid + k] * cv[k] + gates[k] * gates[2 * hid + k];
        tanh_c[k] = std::tanh(cn);
        out[k] = gates[3 * hid + k] * tanh_c[k];
        out[hid + k] = cn;
    }
    return record(
        "lstm_cell", {2 * hid}, std::move(out), {x, h, c, w_ih, w_hh, bias},
        [gates = std::move(gates), tanh_c = std::move(tanh_c), in, hid](
            const Node& node, std::span<const double> g) {
            const auto& x = node.inputs[0];
            const auto& h = node.inputs[1];
            const auto& c = node.inputs[2];
            const auto& w_ih = node.inputs[3];
            const auto& w_hh = node.inputs[4];
            const auto& bias = node.inputs[5];
            const double* cv = c.values().data();
            std::vector<double> dz(4 * hid);
            std::vector<double> dc_prev(hid);
            for (std::size_t k = 0; k < hid; ++k) {
                const double ig = gates[k];
                const double fg = gates[hid + k];
                const double gg = gates[2 * hid + k];
                const double og = gates[3 * hid + k];
                const double dh = g[k];
                const double dc = g[hid + k] + dh * og * (1.0 - tanh_c[k] * tanh_c[k]);
                dz[k] = dc * gg * ig * (1.0 - ig);
                dz[hid + k] = dc * cv[k] * fg * (1.0 - fg);
                dz[2 * hid + k] = dc * ig * (1.0 - gg * gg);
                dz[3 * hid + k] = dh * tanh_c[k] * og * (1.0 - og);
                dc_prev[k] = dc * fg;
            }
            if (c.requires_grad()) {
                auto gc = grad_of(c);
                for (std::size_t k = 0; k < hid; ++k) {
                    gc[k] += dc_prev[k];
                }
            }
            const double* xv = x.values().data();
            const double* hv = h.values().data();
            const double* wi = w_ih.values().data();
            const double* wh = w_hh.values().data();
            if (bias.requires_grad()) {
                auto gb = grad_of(bias);
                for (std::size_t r = 0; r < 4 * hid; ++r) {
                    gb[r] += dz[r];
                }
            }
            if (w_ih.requires_grad()) {
                auto gw = grad_of(w_ih);
                for (std::size_t r = 0; r < 4 * hid; ++r) {
                    for (std::size_t j = 0; j < in; ++j) {
                        gw[r * in + j] += dz[r] * xv[j];
                    }
                }
            }
            if (w_hh.requires_grad()) {
                auto gw = grad_of(w_hh);
                for (std::size_t r = 0; r < 4 * hid; ++r) {
                    for (std::size_t j = 0; j < hid; ++j) {
                        gw[r * hid + j] += dz[r] * hv[j];
                    }
                }
            }
            if (x.requires_grad()) {
                auto gx = grad_of(x);
                for (std::size_t r = 0; r < 4 * hid; ++r) {
                    for (std::size_t j = 0; j < in; ++j) {
                        gx[j] += dz[r] * wi[r * in + j];
                    }
                }
            }
            if (h.requires_grad()) {
                auto gh = grad_of(h);
                for (std::size_t r = 0; r < 4 * hid; ++r) {
                    for (std::size_t j = 0; j < hid; ++j) {
                        gh[j] += dz[r] * wh[r * hid + j];
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(ad::numel(shape));
    for (double& v : values) {
        v = dist(rng);
    }
    return Tensor::from(std::move(shape), std::move(values), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    weight = uniform_param({out, in}, bound, rng);
    bias = uniform_param({out}, bound, rng);
}

void Linear::append_params(NamedTensors& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

Conv1d::Conv1d(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng, std::size_t stride_,
               std::size_t padding_)
    : stride(stride_), padding(padding_) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in * kernel));
    weight = uniform_param({out, in, kernel}, bound, rng);
    bias = uniform_param({out}, bound, rng);
}

void Conv1d::append_params(NamedTensors& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

BatchNorm1d::BatchNorm1d(std::size_t channels, BatchNormOptions opts)
    : gamma(Tensor::filled({channels}, 1.0, true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::filled({channels}, 1.0)),
      options(opts) {}

Tensor BatchNorm1d::forward(const Tensor& x, Mode mode) {
    return batch_norm(x, gamma, beta, running_mean, running_var, options, mode);
}

void BatchNorm1d::append_params(NamedTensors& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

void BatchNorm1d::append_buffers(NamedTensors& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".running_mean", running_mean);
    out.emplace_back(prefix + ".running_var", running_var);
}

LstmDirection::LstmDirection(std::size_t input, std::size_t hidden_size, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(hidden_size));
    w_ih = uniform_param({4 * hidden_size, input}, bound, rng);
    w_hh = uniform_param({4 * hidden_size, hidden_size}, bound, rng);
    bias = uniform_param({4 * hidden_size}, bound, rng);
}

Tensor LstmDirection::run(const Tensor& seq, bool reverse) const {
    require(seq.dim() == 2, "lstm: sequence must be [T, F], got " + to_string(seq.shape()));
    const std::size_t steps = seq.extent(0);
    const std::size_t hid = hidden();
    Tensor h = Tensor::zeros({hid});
    Tensor c = Tensor::zeros({hid});
    std::vector<Tensor> outputs(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        Tensor hc = lstm_cell(ad::row(seq, t), h, c, w_ih, w_hh, bias);
        h = ad::slice(hc, 0, hid);
        c = ad::slice(hc, hid, 2 * hid);
        outputs[t] = h;
    }
    return ad::stack(outputs);
}

void LstmDirection::append_params(NamedTensors& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w_ih", w_ih);
    out.emplace_back(prefix + ".w_hh", w_hh);
    out.emplace_back(prefix + ".bias", bias);
}

BiLstm::BiLstm(std::size_t input, std::size_t hidden_size, std::size_t num_layers, Rng& rng) {
    require(num_layers >= 1, "bilstm: need at least one layer");
    std::size_t width = input;
    for (std::size_t l = 0; l < num_layers; ++l) {
        layers.push_back({LstmDirection(width, hidden_size, rng),
                          LstmDirection(width, hidden_size, rng)});
        width = 2 * hidden_size;
    }
}

Tensor BiLstm::forward(const Tensor& seq) const {
    require(seq.dim() == 2 && seq.extent(0) >= 1, "bilstm: empty or malformed sequence");
    Tensor current = seq;
    for (const auto& layer : layers) {
        Tensor fwd = layer[0].run(current, false);
        Tensor bwd = layer[1].run(current, true);
        current = ad::concat_columns(fwd, bwd);
    }
    return current;
}

void BiLstm::append_params(NamedTensors& out, const std::string& prefix) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l][0].append_params(out, prefix + ".l" + std::to_string(l) + ".fwd");
        layers[l][1].append_params(out, prefix + ".l" + std::to_string(l) + ".bwd");
    }
}

}  // namespace eegdann::nn
