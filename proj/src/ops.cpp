#include "eegdann/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eegdann/error.hpp"

namespace eegdann::ad {

std::span<double> grad_of(const Tensor& t) {
    Tensor handle = t;
    return handle.grad_mut();
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                        " vs " + to_string(b.shape()));
}

template <typename F>
Tensor unary(const Tensor& x, std::string_view op, F&& f, BackwardFn backward) {
    auto in = x.values();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = f(in[i]);
    }
    return record(op, x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = av[i] + bv[i];
    }
    return record("add", a.shape(), std::move(out), {a, b},
                  [](const Node& n, std::span<const double> g) {
                      for (const auto& in : n.inputs) {
                          if (in.requires_grad()) {
                              auto gi = grad_of(in);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  gi[i] += g[i];
                              }
                          }
                      }
                  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = av[i] - bv[i];
    }
    return record("sub", a.shape(), std::move(out), {a, b},
                  [](const Node& n, std::span<const double> g) {
                      for (std::size_t k = 0; k < 2; ++k) {
                          if (!n.inputs[k].requires_grad()) {
                              continue;
                          }
                          const double sign = k == 0 ? 1.0 : -1.0;
                          auto gi = grad_of(n.inputs[k]);
                          for (std::size_t i = 0; i < g.size(); ++i) {
                              gi[i] += sign * g[i];
                          }
                      }
                  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = av[i] * bv[i];
    }
    return record("mul", a.shape(), std::move(out), {a, b},
                  [](const Node& n, std::span<const double> g) {
                      const auto& a = n.inputs[0];
                      const auto& b = n.inputs[1];
                      if (a.requires_grad()) {
                          auto ga = grad_of(a);
                          auto bv = b.values();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                              ga[i] += g[i] * bv[i];
                          }
                      }
                      if (b.requires_grad()) {
                          auto gb = grad_of(b);
                          auto av = a.values();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                              gb[i] += g[i] * av[i];
                          }
                      }
                  });
}

Tensor scale(const Tensor& x, double factor) {
    return unary(x, "scale", [factor](double v) { return v * factor; },
                 [factor](const Node& n, std::span<const double> g) {
                     auto gx = grad_of(n.inputs[0]);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                         gx[i] += factor * g[i];
                     }
                 });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) {
        total += v;
    }
    return record("sum", {1}, {total}, {x}, [](const Node& n, std::span<const double> g) {
        auto gx = grad_of(n.inputs[0]);
        for (double& v : gx) {
            v += g[0];
        }
    });
}

Tensor mean(const Tensor& x) {
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    return sum(mul(a, b));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.dim() == 2 && b.dim() == 2 && a.extent(1) == b.extent(0),
            "matmul: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
    const std::size_t m = a.extent(0);
    const std::size_t k = a.extent(1);
    const std::size_t n = b.extent(1);
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += aip * bv[p * n + j];
            }
        }
    }
    return record("matmul", {m, n}, std::move(out), {a, b},
                  [m, k, n](const Node& node, std::span<const double> g) {
                      const auto& a = node.inputs[0];
                      const auto& b = node.inputs[1];
                      if (a.requires_grad()) {
                          auto ga = grad_of(a);
                          auto bv = b.values();
                          for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                  double acc = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      acc += g[i * n + j] * bv[p * n + j];
                                  }
                                  ga[i * k + p] += acc;
                              }
                          }
                      }
                      if (b.requires_grad()) {
                          auto gb = grad_of(b);
                          auto av = a.values();
                          for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                  const double aip = av[i * k + p];
                                  for (std::size_t j = 0; j < n; ++j) {
                                      gb[p * n + j] += aip * g[i * n + j];
                                  }
                              }
                          }
                      }
                  });
}

Tensor tanh(const Tensor& x) {
    auto in = x.values();
    std::vector<double> y(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        y[i] = std::tanh(in[i]);
    }
    auto saved = y;
    return record("tanh", x.shape(), std::move(y), {x},
                  [saved = std::move(saved)](const Node& n, std::span<const double> g) {
                      auto gx = grad_of(n.inputs[0]);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += g[i] * (1.0 - saved[i] * saved[i]);
                      }
                  });
}

Tensor sigmoid(const Tensor& x) {
    auto in = x.values();
    std::vector<double> y(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        y[i] = 1.0 / (1.0 + std::exp(-in[i]));
    }
    auto saved = y;
    return record("sigmoid", x.shape(), std::move(y), {x},
                  [saved = std::move(saved)](const Node& n, std::span<const double> g) {
                      auto gx = grad_of(n.inputs[0]);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += g[i] * saved[i] * (1.0 - saved[i]);
                      }
                  });
}

Tensor exp(const Tensor& x) {
    auto in = x.values();
    std::vector<double> y(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        y[i] = std::exp(in[i]);
    }
    auto saved = y;
    return record("exp", x.shape(), std::move(y), {x},
                  [saved = std::move(saved)](const Node& n, std::span<const double> g) {
                      auto gx = grad_of(n.inputs[0]);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += g[i] * saved[i];
                      }
                  });
}

Tensor log(const Tensor& x) {
    for (double v : x.values()) {
        require(v > 0.0, "log: non-positive input");
    }
    return unary(x, "log", [](double v) { return std::log(v); },
                 [](const Node& n, std::span<const double> g) {
                     auto xv = n.inputs[0].values();
                     auto gx = grad_of(n.inputs[0]);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                         gx[i] += g[i] / xv[i];
                     }
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(numel(shape) == x.size(),
            "reshape: " + to_string(x.shape()) + " cannot become " + to_string(shape));
    std::vector<double> values(x.values().begin(), x.values().end());
    return record("reshape", std::move(shape), std::move(values), {x},
                  [](const Node& n, std::span<const double> g) {
                      auto gx = grad_of(n.inputs[0]);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += g[i];
                      }
                  });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
    require(begin < end && end <= x.size(), "slice: invalid range [" + std::to_string(begin) + ", " +
                                                std::to_string(end) + ") for size " +
                                                std::to_string(x.size()));
    auto xv = x.values();
    std::vector<double> values(xv.begin() + static_cast<std::ptrdiff_t>(begin),
                               xv.begin() + static_cast<std::ptrdiff_t>(end));
    return record("slice", {end - begin}, std::move(values), {x},
                  [begin](const Node& n, std::span<const double> g) {
                      auto gx = grad_of(n.inputs[0]);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[begin + i] += g[i];
                      }
                  });
}

Tensor concat(std::span<const Tensor> parts) {
    require(!parts.empty(), "concat: no inputs");
    std::vector<double> values;
    for (const auto& p : parts) {
        values.insert(values.end(), p.values().begin(), p.values().end());
    }
    const std::size_t total = values.size();
    return record("concat", {total}, std::move(values), {parts.begin(), parts.end()},
                  [](const Node& n, std::span<const double> g) {
                      std::size_t offset = 0;
                      for (const auto& in : n.inputs) {
                          if (in.requires_grad()) {
                              auto gi = grad_of(in);
                              for (std::size_t i = 0; i < gi.size(); ++i) {
                                  gi[i] += g[offset + i];
                              }
                          }
                          offset += in.size();
                      }
                  });
}

Tensor stack(std::span<const Tensor> parts) {
    require(!parts.empty(), "stack: no inputs");
    const Shape& inner = parts.front().shape();
    std::vector<double> values;
    values.reserve(parts.size() * parts.front().size());
    for (const auto& p : parts) {
        require(p.shape() == inner, "stack: shape mismatch " + to_string(p.shape()) + " vs " +
                                        to_string(inner));
        values.insert(values.end(), p.values().begin(), p.values().end());
    }
    Shape shape{parts.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    return record("stack", std::move(shape), std::move(values), {parts.begin(), parts.end()},
                  [](const Node& n, std::span<const double> g) {
                      std::size_t offset = 0;
                      for (const auto& in : n.inputs) {
                          if (in.requires_grad()) {
                              auto gi = grad_of(in);
                              for (std::size_t i = 0; i < gi.size(); ++i) {
                                  gi[i] += g[offset + i];
                              }
                          }
                          offset += in.size();
                      }
                  });
}

Tensor concat_columns(const Tensor& a, const Tensor& b) {
    require(a.dim() == 2 && b.dim() == 2 && a.extent(0) == b.extent(0),
            "concat_columns: incompatible shapes " + to_string(a.shape()) + ", " +
                to_string(b.shape()));
    const std::size_t rows = a.extent(0);
    const std::size_t wa = a.extent(1);
    const std::size_t wb = b.extent(1);
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> values(rows * (wa + wb));
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * wa), wa,
                    values.begin() + static_cast<std::ptrdiff_t>(r * (wa + wb)));
        std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(r * wb), wb,
                    values.begin() + static_cast<std::ptrdiff_t>(r * (wa + wb) + wa));
    }
    return record("concat_columns", {rows, wa + wb}, std::move(values), {a, b},
                  [rows, wa, wb](const Node& n, std::span<const double> g) {
                      const auto& a = n.inputs[0];
                      const auto& b = n.inputs[1];
                      if (a.requires_grad()) {
                          auto ga = grad_of(a);
                          for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < wa; ++j) {
                                  ga[r * wa + j] += g[r * (wa + wb) + j];
                              }
                          }
                      }
                      if (b.requires_grad()) {
                          auto gb = grad_of(b);
                          for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < wb; ++j) {
                                  gb[r * wb + j] += g[r * (wa + wb) + wa + j];
                              }
                          }
                      }
                  });
}

Tensor row(const Tensor& x, std::size_t i) {
    require(x.dim() >= 2, "row: need at least 2 dimensions, got " + to_string(x.shape()));
    require(i < x.extent(0), "row: index out of range");
    const std::size_t stride = x.size() / x.extent(0);
    auto xv = x.values();
    std::vector<double> values(xv.begin() + static_cast<std::ptrdiff_t>(i * stride),
                               xv.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    Shape shape(x.shape().begin() + 1, x.shape().end());
    return record("row", std::move(shape), std::move(values), {x},
                  [offset = i * stride](const Node& n, std::span<const double> g) {
                      auto gx = grad_of(n.inputs[0]);
                      for (std::size_t k = 0; k < g.size(); ++k) {
                          gx[offset + k] += g[k];
                      }
                  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
    require(x.dim() >= 1 && !indices.empty(), "gather_rows: empty selection");
    const std::size_t stride = x.size() / x.extent(0);
    auto xv = x.values();
    std::vector<double> values;
    values.reserve(indices.size() * stride);
    for (auto i : indices) {
        require(i < x.extent(0), "gather_rows: index out of range");
        values.insert(values.end(), xv.begin() + static_cast<std::ptrdiff_t>(i * stride),
                      xv.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    }
    Shape shape = x.shape();
    shape[0] = indices.size();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return record("gather_rows", std::move(shape), std::move(values), {x},
                  [idx = std::move(idx), stride](const Node& n, std::span<const double> g) {
                      auto gx = grad_of(n.inputs[0]);
                      for (std::size_t j = 0; j < idx.size(); ++j) {
                          for (std::size_t k = 0; k < stride; ++k) {
                              gx[idx[j] * stride + k] += g[j * stride + k];
                          }
                      }
                  });
}

}  // namespace eegdann::ad
