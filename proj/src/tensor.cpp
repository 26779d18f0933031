#include "kgcoop/tensor.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>
#include <utility>

namespace kgcoop {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

static std::size_t num_elems(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

static void check_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.ndim() != rank)
    throw ShapeError(std::string(op) + ": expected rank-" +
                     std::to_string(rank) + " tensor, got " +
                     shape_str(t.shape()));
}

static void check_same_shape(const char* op, const Tensor& a,
                             const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " do not match");
}

Tensor Tensor::zeros(Shape shape, bool trainable) {
  auto d = std::make_shared<detail::TensorData>();
  d->shape = std::move(shape);
  if (d->shape.empty() || d->shape.size() > 2)
    throw ShapeError("tensor rank must be 1 or 2, got " +
                     shape_str(d->shape));
  d->data.assign(num_elems(d->shape), 0.0);
  d->trainable = trainable;
  return Tensor(std::move(d));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool trainable) {
  Tensor t = zeros(std::move(shape), trainable);
  if (data.size() != t.size())
    throw ShapeError("from_data: " + std::to_string(data.size()) +
                     " values do not fill shape " + shape_str(t.shape()));
  t.d_->data = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

std::size_t Tensor::rows() const {
  return d_->shape.size() == 2 ? d_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  return d_->shape.size() == 2 ? d_->shape[1] : d_->shape[0];
}

double Tensor::item() const {
  if (!is_scalar())
    throw ContractError("item: tensor of shape " + shape_str(shape()) +
                        " is not a scalar");
  return d_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad())
    throw ContractError("grad: no gradient materialized for this tensor");
  return d_->grad;
}

Tensor Tensor::clone() const {
  auto d = std::make_shared<detail::TensorData>();
  d->shape = d_->shape;
  d->data = d_->data;
  d->trainable = d_->trainable;
  return Tensor(std::move(d));
}

std::vector<double>& GradStore::of(const Tensor& t) {
  auto [it, inserted] = bufs_.try_emplace(t.key());
  if (inserted) it->second.assign(t.size(), 0.0);
  return it->second;
}

void Graph::record(std::vector<Tensor> inputs, Tensor output, BackwardFn back) {
  nodes_.push_back({std::move(inputs), std::move(output), std::move(back)});
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar())
    throw ContractError("backward: loss must be a scalar tensor");
  GradStore gs;
  gs.of(loss)[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back(gs);

  // Export gradients to trainable leaves only; everything else stays local
  // to this pass, so frozen tensors shared across runs are never written.
  std::unordered_set<const detail::TensorData*> done;
  auto export_grad = [&](const Tensor& t) {
    if (!t.trainable() || !done.insert(t.key()).second) return;
    auto found = gs.bufs_.find(t.key());
    if (found != gs.bufs_.end()) t.d_->grad = found->second;
  };
  export_grad(loss);
  for (const auto& n : nodes_) {
    export_grad(n.output);
    for (const auto& in : n.inputs) export_grad(in);
  }
}

// --- operations -----------------------------------------------------------

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  check_rank("matmul", a, 2);
  check_rank("matmul", b, 2);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not fit");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += aip * bv[p * n + j];
    }
  g.record({a, b}, out, [a, b, out, m, k, n](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& da = gs.of(a);
    auto& db = gs.of(b);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double d = dout[i * n + j];
        for (std::size_t p = 0; p < k; ++p) {
          da[i * k + p] += d * bv[p * n + j];
          db[p * n + j] += av[i * k + p] * d;
        }
      }
  });
  return out;
}

Tensor matmul_nt(Graph& g, const Tensor& a, const Tensor& b) {
  check_rank("matmul_nt", a, 2);
  check_rank("matmul_nt", b, 2);
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not fit");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::zeros({m, n});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
      ov[i * n + j] = s;
    }
  g.record({a, b}, out, [a, b, out, m, k, n](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& da = gs.of(a);
    auto& db = gs.of(b);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double d = dout[i * n + j];
        for (std::size_t p = 0; p < k; ++p) {
          da[i * k + p] += d * bv[j * k + p];
          db[j * k + p] += d * av[i * k + p];
        }
      }
  });
  return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  g.record({a, b}, out, [a, b, out](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& da = gs.of(a);
    auto& db = gs.of(b);
    for (std::size_t i = 0; i < dout.size(); ++i) {
      da[i] += dout[i];
      db[i] += dout[i];
    }
  });
  return out;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  g.record({a, b}, out, [a, b, out](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& da = gs.of(a);
    auto& db = gs.of(b);
    for (std::size_t i = 0; i < dout.size(); ++i) {
      da[i] += dout[i];
      db[i] -= dout[i];
    }
  });
  return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  g.record({a, b}, out, [a, b, out](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& da = gs.of(a);
    auto& db = gs.of(b);
    for (std::size_t i = 0; i < dout.size(); ++i) {
      da[i] += dout[i] * b.values()[i];
      db[i] += dout[i] * a.values()[i];
    }
  });
  return out;
}

Tensor affine(Graph& g, const Tensor& x, double scale, double shift) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.values()[i] = scale * x.values()[i] + shift;
  g.record({x}, out, [x, out, scale](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dx = gs.of(x);
    for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += scale * dout[i];
  });
  return out;
}

Tensor add_rowwise(Graph& g, const Tensor& x, const Tensor& bias) {
  if (bias.size() != x.cols())
    throw ShapeError("add_rowwise: bias " + shape_str(bias.shape()) +
                     " does not match row width of " + shape_str(x.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.values()[i * d + j] = x.values()[i * d + j] + bias.values()[j];
  g.record({x, bias}, out, [x, bias, out, n, d](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dx = gs.of(x);
    auto& db = gs.of(bias);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        dx[i * d + j] += dout[i * d + j];
        db[j] += dout[i * d + j];
      }
  });
  return out;
}

Tensor gelu(Graph& g, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.values()[i];
    out.values()[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2));
  }
  g.record({x}, out, [x, out](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dx = gs.of(x);
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < dout.size(); ++i) {
      const double v = x.values()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      dx[i] += dout[i] * (cdf + v * pdf);
    }
  });
  return out;
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d)
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) +
                     " / bias " + shape_str(bias.shape()) +
                     " do not match row width of " + shape_str(x.shape()));
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(n * d), inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x.values()[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.values()[i * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (x.values()[i * d + j] - mean) * inv_std[i];
      out.values()[i * d + j] =
          gain.values()[j] * xhat[i * d + j] + bias.values()[j];
    }
  }
  g.record({x, gain, bias}, out,
           [x, gain, bias, out, n, d, xhat = std::move(xhat),
            inv_std = std::move(inv_std)](GradStore& gs) {
             const auto& dout = gs.of(out);
             auto& dx = gs.of(x);
             auto& dgain = gs.of(gain);
             auto& dbias = gs.of(bias);
             for (std::size_t i = 0; i < n; ++i) {
               double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
               for (std::size_t j = 0; j < d; ++j) {
                 const double dxh = dout[i * d + j] * gain.values()[j];
                 sum_dxhat += dxh;
                 sum_dxhat_xhat += dxh * xhat[i * d + j];
                 dgain[j] += dout[i * d + j] * xhat[i * d + j];
                 dbias[j] += dout[i * d + j];
               }
               const double inv_d = 1.0 / static_cast<double>(d);
               for (std::size_t j = 0; j < d; ++j) {
                 const double dxh = dout[i * d + j] * gain.values()[j];
                 dx[i * d + j] +=
                     inv_std[i] * (dxh - inv_d * sum_dxhat -
                                   inv_d * xhat[i * d + j] * sum_dxhat_xhat);
               }
             }
           });
  return out;
}

Tensor softmax_rows(Graph& g, const Tensor& z) {
  const std::size_t n = z.rows(), d = z.cols();
  Tensor out = Tensor::zeros(z.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double zmax = z.values()[i * d];
    for (std::size_t j = 1; j < d; ++j)
      zmax = std::max(zmax, z.values()[i * d + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = std::exp(z.values()[i * d + j] - zmax);
      out.values()[i * d + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < d; ++j) out.values()[i * d + j] /= denom;
  }
  g.record({z}, out, [z, out, n, d](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dz = gs.of(z);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        dot += dout[i * d + j] * out.values()[i * d + j];
      for (std::size_t j = 0; j < d; ++j)
        dz[i * d + j] += out.values()[i * d + j] * (dout[i * d + j] - dot);
    }
  });
  return out;
}

Tensor log_softmax_rows(Graph& g, const Tensor& z) {
  const std::size_t n = z.rows(), d = z.cols();
  Tensor out = Tensor::zeros(z.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double zmax = z.values()[i * d];
    for (std::size_t j = 1; j < d; ++j)
      zmax = std::max(zmax, z.values()[i * d + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      denom += std::exp(z.values()[i * d + j] - zmax);
    const double lse = zmax + std::log(denom);
    for (std::size_t j = 0; j < d; ++j)
      out.values()[i * d + j] = z.values()[i * d + j] - lse;
  }
  g.record({z}, out, [z, out, n, d](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dz = gs.of(z);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < d; ++j) sum += dout[i * d + j];
      for (std::size_t j = 0; j < d; ++j)
        dz[i * d + j] +=
            dout[i * d + j] - std::exp(out.values()[i * d + j]) * sum;
    }
  });
  return out;
}

Tensor normalize_rows(Graph& g, const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = x.values()[i * d + j];
      s += v * v;
    }
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0)
      throw DegenerateInputError("normalize_rows: row " + std::to_string(i) +
                                 " has zero norm");
    for (std::size_t j = 0; j < d; ++j)
      out.values()[i * d + j] = x.values()[i * d + j] / norms[i];
  }
  g.record({x}, out, [x, out, n, d, norms = std::move(norms)](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dx = gs.of(x);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        dot += dout[i * d + j] * out.values()[i * d + j];
      for (std::size_t j = 0; j < d; ++j)
        dx[i * d + j] +=
            (dout[i * d + j] - out.values()[i * d + j] * dot) / norms[i];
    }
  });
  return out;
}

Tensor cosine_similarity(Graph& g, const Tensor& x, const Tensor& w) {
  check_same_shape("cosine_similarity", x, w);
  double dot = 0.0, nx2 = 0.0, nw2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x.values()[i] * w.values()[i];
    nx2 += x.values()[i] * x.values()[i];
    nw2 += w.values()[i] * w.values()[i];
  }
  const double nx = std::sqrt(nx2), nw = std::sqrt(nw2);
  if (nx == 0.0 || nw == 0.0)
    throw DegenerateInputError(
        "cosine_similarity: zero-norm operand (|x|=" + std::to_string(nx) +
        ", |w|=" + std::to_string(nw) + ")");
  const double s = dot / (nx * nw);
  Tensor out = Tensor::scalar(s);
  g.record({x, w}, out, [x, w, out, s, nx, nw](GradStore& gs) {
    const double d = gs.of(out)[0];
    auto& dx = gs.of(x);
    auto& dw = gs.of(w);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += d * (w.values()[i] / (nx * nw) - s * x.values()[i] / (nx * nx));
      dw[i] += d * (x.values()[i] / (nx * nw) - s * w.values()[i] / (nw * nw));
    }
  });
  return out;
}

Tensor squared_l2(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape("squared_l2", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double c = a.values()[i] - b.values()[i];
    s += c * c;
  }
  Tensor out = Tensor::scalar(s);
  g.record({a, b}, out, [a, b, out](GradStore& gs) {
    const double d = gs.of(out)[0];
    auto& da = gs.of(a);
    auto& db = gs.of(b);
    for (std::size_t i = 0; i < da.size(); ++i) {
      const double c = 2.0 * (a.values()[i] - b.values()[i]) * d;
      da[i] += c;
      db[i] -= c;
    }
  });
  return out;
}

Tensor sum_all(Graph& g, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  g.record({x}, out, [x, out](GradStore& gs) {
    const double d = gs.of(out)[0];
    auto& dx = gs.of(x);
    for (auto& v : dx) v += d;
  });
  return out;
}

Tensor mean_all(Graph& g, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double inv_n = 1.0 / static_cast<double>(x.size());
  Tensor out = Tensor::scalar(s * inv_n);
  g.record({x}, out, [x, out, inv_n](GradStore& gs) {
    const double d = gs.of(out)[0] * inv_n;
    auto& dx = gs.of(x);
    for (auto& v : dx) v += d;
  });
  return out;
}

Tensor pick(Graph& g, const Tensor& x, const std::vector<int>& cols) {
  check_rank("pick", x, 2);
  const std::size_t n = x.rows(), d = x.cols();
  if (cols.size() != n)
    throw ShapeError("pick: " + std::to_string(cols.size()) +
                     " indices for " + std::to_string(n) + " rows");
  Tensor out = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= d)
      throw ContractError("pick: index " + std::to_string(cols[i]) +
                          " at row " + std::to_string(i) + " outside [0, " +
                          std::to_string(d) + ")");
    out.values()[i] = x.values()[i * d + cols[i]];
  }
  g.record({x}, out, [x, out, cols, n, d](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dx = gs.of(x);
    for (std::size_t i = 0; i < n; ++i) dx[i * d + cols[i]] += dout[i];
  });
  return out;
}

Tensor concat_rows(Graph& g, const Tensor& top, const Tensor& bottom_row) {
  check_rank("concat_rows", top, 2);
  if (bottom_row.size() != top.cols())
    throw ShapeError("concat_rows: row " + shape_str(bottom_row.shape()) +
                     " does not match width of " + shape_str(top.shape()));
  const std::size_t m = top.rows(), d = top.cols();
  Tensor out = Tensor::zeros({m + 1, d});
  for (std::size_t i = 0; i < m * d; ++i) out.values()[i] = top.values()[i];
  for (std::size_t j = 0; j < d; ++j)
    out.values()[m * d + j] = bottom_row.values()[j];
  g.record({top, bottom_row}, out, [top, bottom_row, out, m, d](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dt = gs.of(top);
    auto& db = gs.of(bottom_row);
    for (std::size_t i = 0; i < m * d; ++i) dt[i] += dout[i];
    for (std::size_t j = 0; j < d; ++j) db[j] += dout[m * d + j];
  });
  return out;
}

Tensor stack_rows(Graph& g, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows given");
  const std::size_t d = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != d)
      throw ShapeError("stack_rows: row shapes " + shape_str(rows[0].shape()) +
                       " and " + shape_str(r.shape()) + " differ");
  const std::size_t n = rows.size();
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.values()[i * d + j] = rows[i].values()[j];
  g.record(rows, out, [rows, out, n, d](GradStore& gs) {
    const auto& dout = gs.of(out);
    for (std::size_t i = 0; i < n; ++i) {
      auto& dr = gs.of(rows[i]);
      for (std::size_t j = 0; j < d; ++j) dr[j] += dout[i * d + j];
    }
  });
  return out;
}

Tensor slice_cols(Graph& g, const Tensor& x, std::size_t c0, std::size_t c1) {
  check_rank("slice_cols", x, 2);
  if (c0 >= c1 || c1 > x.cols())
    throw ShapeError("slice_cols: [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") invalid for " +
                     shape_str(x.shape()));
  const std::size_t n = x.rows(), d = x.cols(), w = c1 - c0;
  Tensor out = Tensor::zeros({n, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j)
      out.values()[i * w + j] = x.values()[i * d + c0 + j];
  g.record({x}, out, [x, out, n, d, w, c0](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dx = gs.of(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j)
        dx[i * d + c0 + j] += dout[i * w + j];
  });
  return out;
}

Tensor concat_cols(Graph& g, const Tensor& a, const Tensor& b) {
  check_rank("concat_cols", a, 2);
  check_rank("concat_cols", b, 2);
  if (a.rows() != b.rows())
    throw ShapeError("concat_cols: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not fit");
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  Tensor out = Tensor::zeros({n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j)
      out.values()[i * (p + q) + j] = a.values()[i * p + j];
    for (std::size_t j = 0; j < q; ++j)
      out.values()[i * (p + q) + p + j] = b.values()[i * q + j];
  }
  g.record({a, b}, out, [a, b, out, n, p, q](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& da = gs.of(a);
    auto& db = gs.of(b);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j)
        da[i * p + j] += dout[i * (p + q) + j];
      for (std::size_t j = 0; j < q; ++j)
        db[i * q + j] += dout[i * (p + q) + p + j];
    }
  });
  return out;
}

Tensor take_row(Graph& g, const Tensor& x, std::size_t r) {
  check_rank("take_row", x, 2);
  if (r >= x.rows())
    throw ShapeError("take_row: row " + std::to_string(r) + " outside " +
                     shape_str(x.shape()));
  const std::size_t d = x.cols();
  Tensor out = Tensor::zeros({d});
  for (std::size_t j = 0; j < d; ++j) out.values()[j] = x.values()[r * d + j];
  g.record({x}, out, [x, out, r, d](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dx = gs.of(x);
    for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += dout[j];
  });
  return out;
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  Tensor out = Tensor::zeros(shape);
  if (out.size() != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " does not hold " +
                     shape_str(shape) + " elements");
  out.values() = x.values();
  g.record({x}, out, [x, out](GradStore& gs) {
    const auto& dout = gs.of(out);
    auto& dx = gs.of(x);
    for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i];
  });
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be > 0");
  Tensor probe = x.clone();
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + h;
    const double fp = f(probe);
    probe.values()[i] = orig - h;
    const double fm = f(probe);
    probe.values()[i] = orig;
    out.values()[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

}  // namespace kgcoop
