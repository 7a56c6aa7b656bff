// SPDX-License-Identifier: Apache-2.0
#include "trisense/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

namespace trisense {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t n = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
}

void accumulate(const Tensor& t, std::span<const double> delta) {
    auto g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

bool Graph::tracks(std::initializer_list<const Tensor*> inputs) const {
    if (mode_ == Mode::Inference) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor Graph::record(Tensor output, std::vector<Tensor> inputs, GradRule rule) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (mode_ == Mode::Inference || !any) {
        output.set_requires_grad(false);
        return output;
    }
    output.set_requires_grad(true);
    records_.push_back(Record{std::move(inputs), output, std::move(rule)});
    return output;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    auto mismatch = [&] {
        return DimensionError("matmul: incompatible shapes " + shape_to_string(sa) + " and " + shape_to_string(sb));
    };
    if (sa.size() < 2 || sb.size() < 2) throw mismatch();
    const std::size_t m = sa[sa.size() - 2];
    const std::size_t k = sa.back();
    if (sb[sb.size() - 2] != k) throw mismatch();
    const std::size_t n = sb.back();
    const bool shared_rhs = sb.size() == 2;
    if (!shared_rhs && (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin()))) {
        throw mismatch();
    }
    const std::size_t batch = shape_numel(sa) / (m * k);

    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    Tensor out = Tensor::zeros(out_shape);

    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    if (shared_rhs) {
        ConstMatMap A(av.data(), static_cast<Eigen::Index>(batch * m), static_cast<Eigen::Index>(k));
        ConstMatMap B(bv.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        MatMap C(ov.data(), static_cast<Eigen::Index>(batch * m), static_cast<Eigen::Index>(n));
        C.noalias() = A * B;
    } else {
        for (std::size_t i = 0; i < batch; ++i) {
            ConstMatMap A(av.data() + i * m * k, m, k);
            ConstMatMap B(bv.data() + i * k * n, k, n);
            MatMap C(ov.data() + i * m * n, m, n);
            C.noalias() = A * B;
        }
    }
    if (!tracks({&a, &b})) return out;

    return record(out, {a, b}, [a, b, out, batch, m, k, n, shared_rhs]() mutable {
        auto g = std::as_const(out).grad();
        auto av = a.values();
        auto bv = b.values();
        const auto rows = static_cast<Eigen::Index>(batch * m);
        if (shared_rhs) {
            ConstMatMap G(g.data(), rows, n);
            if (a.requires_grad()) {
                MatMap dA(a.grad().data(), rows, k);
                ConstMatMap B(bv.data(), k, n);
                dA.noalias() += G * B.transpose();
            }
            if (b.requires_grad()) {
                MatMap dB(b.grad().data(), k, n);
                ConstMatMap A(av.data(), rows, k);
                dB.noalias() += A.transpose() * G;
            }
            return;
        }
        for (std::size_t i = 0; i < batch; ++i) {
            ConstMatMap G(g.data() + i * m * n, m, n);
            if (a.requires_grad()) {
                MatMap dA(a.grad().data() + i * m * k, m, k);
                ConstMatMap B(bv.data() + i * k * n, k, n);
                dA.noalias() += G * B.transpose();
            }
            if (b.requires_grad()) {
                MatMap dB(b.grad().data() + i * k * n, k, n);
                ConstMatMap A(av.data() + i * m * k, m, k);
                dB.noalias() += A.transpose() * G;
            }
        }
    });
}

Tensor Graph::transpose(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_to_string(s));
    const std::size_t r = s[s.size() - 2];
    const std::size_t c = s.back();
    const std::size_t batch = x.numel() / (r * c);
    Shape os = s;
    std::swap(os[os.size() - 2], os.back());
    Tensor out = Tensor::zeros(os);
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ov[b * r * c + j * r + i] = xv[b * r * c + i * c + j];
        }
    }
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out, batch, r, c]() mutable {
        auto g = std::as_const(out).grad();
        auto dx = x.grad();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) dx[b * r * c + i * c + j] += g[b * r * c + j * r + i];
            }
        }
    });
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (!tracks({&a, &b})) return out;
    return record(out, {a, b}, [a, b, out]() mutable {
        auto g = std::as_const(out).grad();
        if (a.requires_grad()) accumulate(a, g);
        if (b.requires_grad()) accumulate(b, g);
    });
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    if (!tracks({&a, &b})) return out;
    return record(out, {a, b}, [a, b, out]() mutable {
        auto g = std::as_const(out).grad();
        if (a.requires_grad()) accumulate(a, g);
        if (b.requires_grad()) {
            auto db = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
        }
    });
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (!tracks({&a, &b})) return out;
    return record(out, {a, b}, [a, b, out]() mutable {
        auto g = std::as_const(out).grad();
        auto av = a.values();
        auto bv = b.values();
        if (a.requires_grad()) {
            auto da = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
        }
        if (b.requires_grad()) {
            auto db = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
        }
    });
}

Tensor Graph::scale(const Tensor& x, double factor) {
    Tensor out = Tensor::zeros(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * factor;
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out, factor]() mutable {
        auto g = std::as_const(out).grad();
        auto dx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
    });
}

Tensor Graph::add_bias(const Tensor& x, const Tensor& bias) {
    const std::size_t n = x.shape().back();
    if (bias.numel() != n) {
        throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match last axis of " +
                             shape_to_string(x.shape()));
    }
    Tensor out = Tensor::zeros(x.shape());
    auto xv = x.values();
    auto bv = bias.values();
    auto ov = out.values();
    for (std::size_t r = 0; r < ov.size(); r += n) {
        for (std::size_t j = 0; j < n; ++j) ov[r + j] = xv[r + j] + bv[j];
    }
    if (!tracks({&x, &bias})) return out;
    return record(out, {x, bias}, [x, bias, out, n]() mutable {
        auto g = std::as_const(out).grad();
        if (x.requires_grad()) accumulate(x, g);
        if (bias.requires_grad()) {
            auto db = bias.grad();
            for (std::size_t r = 0; r < g.size(); r += n) {
                for (std::size_t j = 0; j < n; ++j) db[j] += g[r + j];
            }
        }
    });
}

Tensor Graph::scale_by(const Tensor& x, const Tensor& weights, std::size_t column) {
    const auto& ws = weights.shape();
    if (ws.size() != 2 || x.rank() < 1 || ws[0] != x.dim(0) || column >= ws[1]) {
        throw DimensionError("scale_by: weights " + shape_to_string(ws) + " incompatible with " +
                             shape_to_string(x.shape()) + " at column " + std::to_string(column));
    }
    const std::size_t batch = ws[0];
    const std::size_t cols = ws[1];
    const std::size_t per = x.numel() / batch;
    Tensor out = Tensor::zeros(x.shape());
    auto xv = x.values();
    auto wv = weights.values();
    auto ov = out.values();
    for (std::size_t b = 0; b < batch; ++b) {
        const double w = wv[b * cols + column];
        for (std::size_t i = 0; i < per; ++i) ov[b * per + i] = xv[b * per + i] * w;
    }
    if (!tracks({&x, &weights})) return out;
    return record(out, {x, weights}, [x, weights, out, batch, cols, per, column]() mutable {
        auto g = std::as_const(out).grad();
        auto xv = x.values();
        auto wv = weights.values();
        if (x.requires_grad()) {
            auto dx = x.grad();
            for (std::size_t b = 0; b < batch; ++b) {
                const double w = wv[b * cols + column];
                for (std::size_t i = 0; i < per; ++i) dx[b * per + i] += g[b * per + i] * w;
            }
        }
        if (weights.requires_grad()) {
            auto dw = weights.grad();
            for (std::size_t b = 0; b < batch; ++b) {
                double acc = 0.0;
                for (std::size_t i = 0; i < per; ++i) acc += g[b * per + i] * xv[b * per + i];
                dw[b * cols + column] += acc;
            }
        }
    });
}

Tensor Graph::linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add_bias(matmul(x, weight), bias);
}

Tensor Graph::softmax(const Tensor& x, std::size_t axis, double temperature, std::span<const std::uint8_t> mask) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ParameterError("softmax temperature must be positive, got " + std::to_string(temperature));
    }
    if (!mask.empty() && mask.size() != x.numel()) {
        throw DimensionError("softmax mask has " + std::to_string(mask.size()) + " entries for tensor " +
                             shape_to_string(x.shape()));
    }
    const auto sp = split_at(x.shape(), axis);
    Tensor out = Tensor::zeros(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    const double inv_t = 1.0 / temperature;
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.inner; ++j) {
            const std::size_t base = o * sp.n * sp.inner + j;
            double mx = -std::numeric_limits<double>::infinity();
            bool any = false;
            for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t idx = base + i * sp.inner;
                if (!mask.empty() && !mask[idx]) continue;
                mx = std::max(mx, xv[idx]);
                any = true;
            }
            if (!any) throw ParameterError("softmax: every entry along the axis is masked");
            double total = 0.0;
            for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t idx = base + i * sp.inner;
                if (!mask.empty() && !mask[idx]) continue;
                ov[idx] = std::exp((xv[idx] - mx) * inv_t);
                total += ov[idx];
            }
            for (std::size_t i = 0; i < sp.n; ++i) ov[base + i * sp.inner] /= total;
        }
    }
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out, sp, inv_t]() mutable {
        auto g = std::as_const(out).grad();
        auto y = std::as_const(out).values();
        auto dx = x.grad();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t j = 0; j < sp.inner; ++j) {
                const std::size_t base = o * sp.n * sp.inner + j;
                double dot = 0.0;
                for (std::size_t i = 0; i < sp.n; ++i) dot += y[base + i * sp.inner] * g[base + i * sp.inner];
                for (std::size_t i = 0; i < sp.n; ++i) {
                    const std::size_t idx = base + i * sp.inner;
                    dx[idx] += y[idx] * (g[idx] - dot) * inv_t;
                }
            }
        }
    });
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t n = x.shape().back();
    if (gain.numel() != n || bias.numel() != n) {
        throw DimensionError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias " +
                             shape_to_string(bias.shape()) + " do not match last axis of " +
                             shape_to_string(x.shape()));
    }
    if (eps < 0.0) throw ParameterError("layer_norm: eps must be nonnegative");
    if (n == 1 && eps == 0.0) throw ParameterError("layer_norm: last axis of size 1 with eps = 0 divides by zero");
    const std::size_t rows = x.numel() / n;
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> xhat(x.numel());
    std::vector<double> rstd(rows);
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    auto ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * n;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += row[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<double>(n);
        if (var + eps <= 0.0) throw ParameterError("layer_norm: zero variance with eps = 0");
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < n; ++i) {
            xhat[r * n + i] = (row[i] - mu) * rstd[r];
            ov[r * n + i] = gv[i] * xhat[r * n + i] + bv[i];
        }
    }
    if (!tracks({&x, &gain, &bias})) return out;
    return record(out, {x, gain, bias},
                  [x, gain, bias, out, xhat = std::move(xhat), rstd = std::move(rstd), n, rows]() mutable {
                      auto g = std::as_const(out).grad();
                      auto gv = gain.values();
                      if (gain.requires_grad()) {
                          auto dg = gain.grad();
                          for (std::size_t i = 0; i < g.size(); ++i) dg[i % n] += g[i] * xhat[i];
                      }
                      if (bias.requires_grad()) {
                          auto db = bias.grad();
                          for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
                      }
                      if (!x.requires_grad()) return;
                      auto dx = x.grad();
                      const double inv_n = 1.0 / static_cast<double>(n);
                      for (std::size_t r = 0; r < rows; ++r) {
                          double mean_d = 0.0;
                          double mean_dx = 0.0;
                          for (std::size_t i = 0; i < n; ++i) {
                              const double d = g[r * n + i] * gv[i];
                              mean_d += d;
                              mean_dx += d * xhat[r * n + i];
                          }
                          mean_d *= inv_n;
                          mean_dx *= inv_n;
                          for (std::size_t i = 0; i < n; ++i) {
                              const double d = g[r * n + i] * gv[i];
                              dx[r * n + i] += rstd[r] * (d - mean_d - xhat[r * n + i] * mean_dx);
                          }
                      }
                  });
}

Tensor Graph::mean(const Tensor& x, std::size_t axis) {
    const auto sp = split_at(x.shape(), axis);
    Shape os;
    for (std::size_t i = 0; i < x.rank(); ++i) {
        if (i != axis) os.push_back(x.shape()[i]);
    }
    if (os.empty()) os = {1};
    Tensor out = Tensor::zeros(os);
    auto xv = x.values();
    auto ov = out.values();
    const double inv_n = 1.0 / static_cast<double>(sp.n);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.inner; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < sp.n; ++i) acc += xv[(o * sp.n + i) * sp.inner + j];
            ov[o * sp.inner + j] = acc * inv_n;
        }
    }
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out, sp, inv_n]() mutable {
        auto g = std::as_const(out).grad();
        auto dx = x.grad();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.n; ++i) {
                for (std::size_t j = 0; j < sp.inner; ++j) dx[(o * sp.n + i) * sp.inner + j] += g[o * sp.inner + j] * inv_n;
            }
        }
    });
}

Tensor Graph::sum(const Tensor& x) {
    auto xv = x.values();
    Tensor out = Tensor::scalar(std::accumulate(xv.begin(), xv.end(), 0.0));
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out]() mutable {
        const double g = std::as_const(out).grad()[0];
        for (auto& d : x.grad()) d += g;
    });
}

Tensor Graph::gelu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        const double v = xv[i];
        ov[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out]() mutable {
        auto g = std::as_const(out).grad();
        auto xv = x.values();
        auto dx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = xv[i];
            const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
            const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            dx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
    });
}

Tensor Graph::tanh(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out]() mutable {
        auto g = std::as_const(out).grad();
        auto y = std::as_const(out).values();
        auto dx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Tensor Graph::gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2, got " + shape_to_string(table.shape()));
    if (ids.empty()) throw DimensionError("gather_rows: empty id list");
    const std::size_t rows = table.dim(0);
    const std::size_t d = table.dim(1);
    Tensor out = Tensor::zeros({ids.size(), d});
    auto tv = table.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= rows) {
            throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                                 std::to_string(rows) + " rows");
        }
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, ov.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    if (!tracks({&table})) return out;
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    return record(out, {table}, [table, out, idv = std::move(idv), d]() mutable {
        auto g = std::as_const(out).grad();
        auto dt = table.grad();
        for (std::size_t i = 0; i < idv.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) dt[idv[i] * d + j] += g[i * d + j];
        }
    });
}

Tensor Graph::concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Shape& ref = parts.front().shape();
    split_at(ref, axis);
    Shape os = ref;
    os[axis] = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
        if (!ok) {
            throw DimensionError("concat: shape " + shape_to_string(s) + " incompatible with " +
                                 shape_to_string(ref) + " along axis " + std::to_string(axis));
        }
        os[axis] += s[axis];
    }
    Tensor out = Tensor::zeros(os);
    const auto osp = split_at(os, axis);
    auto ov = out.values();
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const auto sp = split_at(p.shape(), axis);
        auto pv = p.values();
        const std::size_t chunk = sp.n * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                        ov.begin() + static_cast<std::ptrdiff_t>(o * osp.n * osp.inner + offset * osp.inner));
        }
        offset += sp.n;
    }
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (mode_ == Mode::Inference || !any) return out;
    return record(out, parts, [parts, out, offsets, axis, osp]() mutable {
        auto g = std::as_const(out).grad();
        for (std::size_t k = 0; k < parts.size(); ++k) {
            auto& p = parts[k];
            if (!p.requires_grad()) continue;
            const auto sp = split_at(p.shape(), axis);
            auto dp = p.grad();
            const std::size_t chunk = sp.n * sp.inner;
            for (std::size_t o = 0; o < sp.outer; ++o) {
                const std::size_t src = o * osp.n * osp.inner + offsets[k] * osp.inner;
                for (std::size_t i = 0; i < chunk; ++i) dp[o * chunk + i] += g[src + i];
            }
        }
    });
}

Tensor Graph::slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    const auto sp = split_at(x.shape(), axis);
    if (length == 0 || start + length > sp.n) {
        throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") out of range for axis " + std::to_string(axis) + " of " + shape_to_string(x.shape()));
    }
    Shape os = x.shape();
    os[axis] = length;
    Tensor out = Tensor::zeros(os);
    auto xv = x.values();
    auto ov = out.values();
    const std::size_t chunk = length * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * sp.n + start) * sp.inner), chunk,
                    ov.begin() + static_cast<std::ptrdiff_t>(o * chunk));
    }
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out, sp, start, chunk]() mutable {
        auto g = std::as_const(out).grad();
        auto dx = x.grad();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            const std::size_t dst = (o * sp.n + start) * sp.inner;
            for (std::size_t i = 0; i < chunk; ++i) dx[dst + i] += g[o * chunk + i];
        }
    });
}

Tensor Graph::reshape(const Tensor& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
    }
    auto xv = x.values();
    Tensor out(shape, std::vector<double>(xv.begin(), xv.end()));
    if (!tracks({&x})) return out;
    return record(out, {x}, [x, out]() mutable { accumulate(x, std::as_const(out).grad()); });
}

Tensor Graph::cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
    if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
        throw DimensionError("cross_entropy: logits " + shape_to_string(logits.shape()) + " vs " +
                             std::to_string(targets.size()) + " targets");
    }
    const std::size_t rows = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    auto lv = logits.values();
    std::vector<double> probs(lv.size());
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] >= classes) {
            throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) + " outside " +
                                 std::to_string(classes) + " classes");
        }
        const double* row = lv.data() + r * classes;
        const double mx = *std::max_element(row, row + classes);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            probs[r * classes + c] = std::exp(row[c] - mx);
            total += probs[r * classes + c];
        }
        for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= total;
        loss += mx + std::log(total) - row[targets[r]];
    }
    Tensor out = Tensor::scalar(loss);
    if (!tracks({&logits})) return out;
    std::vector<std::size_t> tv(targets.begin(), targets.end());
    return record(out, {logits}, [logits, out, probs = std::move(probs), tv = std::move(tv), classes]() mutable {
        const double g = std::as_const(out).grad()[0];
        auto dl = logits.grad();
        for (std::size_t i = 0; i < probs.size(); ++i) dl[i] += g * probs[i];
        for (std::size_t r = 0; r < tv.size(); ++r) dl[r * classes + tv[r]] -= g;
    });
}

void Graph::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw DimensionError("backward needs a scalar loss, got " + shape_to_string(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    for (auto& rec : records_) rec.output.zero_grad();
    Tensor seed = loss;
    seed.grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->rule();
}

void backward(Graph& graph, const Tensor& loss) { graph.backward(loss); }

}  // namespace trisense
