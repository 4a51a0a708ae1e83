#include "intentkg/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace intentkg {

int Tape::push(Mat val, std::function<void()> back) {
  Node n;
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

Var Tape::leaf(const Mat& value) {
  return Var{push(value, {})};
}

void Tape::backward(Var root) {
  if (nodes_[root.id].val.rows() != 1 || nodes_[root.id].val.cols() != 1) {
    throw std::logic_error("backward: root must be 1x1");
  }
  for (Node& n : nodes_) {
    n.grad = Mat(n.val.rows(), n.val.cols());
  }
  nodes_[root.id].grad.at(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back();
  }
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  if (trans_a && trans_b) throw std::logic_error("matmul: tt form not supported");
  Mat out = intentkg::matmul(value(a), value(b), trans_a, trans_b);
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a, b, trans_a, trans_b]() {
    const Mat& g = nodes_[id].grad;
    if (!trans_a && !trans_b) {
      matmul_acc(grad_mut(a), g, nodes_[b.id].val, false, true);
      matmul_acc(grad_mut(b), nodes_[a.id].val, g, true, false);
    } else if (!trans_a && trans_b) {
      matmul_acc(grad_mut(a), g, nodes_[b.id].val, false, false);
      matmul_acc(grad_mut(b), g, nodes_[a.id].val, true, false);
    } else {
      matmul_acc(grad_mut(a), nodes_[b.id].val, g, false, true);
      matmul_acc(grad_mut(b), nodes_[a.id].val, g, false, false);
    }
  };
  return Var{id};
}

Var Tape::add(Var a, Var b) {
  Mat out = value(a);
  add_inplace(out, value(b));
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a, b]() {
    add_inplace(grad_mut(a), nodes_[id].grad);
    add_inplace(grad_mut(b), nodes_[id].grad);
  };
  return Var{id};
}

Var Tape::add_rowvec(Var a, Var row) {
  const Mat& r = value(row);
  if (r.rows() != 1 || r.cols() != value(a).cols()) {
    throw std::logic_error("add_rowvec: row must be 1 x cols(a)");
  }
  Mat out = value(a);
  for (int i = 0; i < out.rows(); ++i) {
    for (int j = 0; j < out.cols(); ++j) out.at(i, j) += r.at(0, j);
  }
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a, row]() {
    const Mat& g = nodes_[id].grad;
    add_inplace(grad_mut(a), g);
    Mat& gr = grad_mut(row);
    for (int i = 0; i < g.rows(); ++i) {
      for (int j = 0; j < g.cols(); ++j) gr.at(0, j) += g.at(i, j);
    }
  };
  return Var{id};
}

Var Tape::add_const(Var a, const Mat& c) {
  Mat out = value(a);
  add_inplace(out, c);
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a]() { add_inplace(grad_mut(a), nodes_[id].grad); };
  return Var{id};
}

Var Tape::scale(Var a, double s) {
  Mat out = value(a);
  for (double& v : out.data()) v *= s;
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a, s]() { add_inplace(grad_mut(a), nodes_[id].grad, s); };
  return Var{id};
}

Var Tape::relu(Var a) {
  Mat out = value(a);
  for (double& v : out.data()) {
    if (v < 0.0) v = 0.0;
  }
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a]() {
    const Mat& g = nodes_[id].grad;
    const Mat& x = nodes_[a.id].val;
    Mat& ga = grad_mut(a);
    for (size_t i = 0; i < x.size(); ++i) {
      if (x.data()[i] > 0.0) ga.data()[i] += g.data()[i];
    }
  };
  return Var{id};
}

Var Tape::softmax_rows(Var a) {
  Mat out = value(a);
  for (int i = 0; i < out.rows(); ++i) {
    double* row = out.row(i);
    double mx = row[0];
    for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < out.cols(); ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < out.cols(); ++j) row[j] /= sum;
  }
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a]() {
    const Mat& g = nodes_[id].grad;
    const Mat& y = nodes_[id].val;
    Mat& ga = grad_mut(a);
    for (int i = 0; i < y.rows(); ++i) {
      double inner = 0.0;
      for (int j = 0; j < y.cols(); ++j) inner += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols(); ++j) {
        ga.at(i, j) += y.at(i, j) * (g.at(i, j) - inner);
      }
    }
  };
  return Var{id};
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Mat& xv = value(x);
  const Mat& gv = value(gain);
  const Mat& bv = value(bias);
  const int n = xv.cols();
  if (gv.rows() != 1 || gv.cols() != n || bv.rows() != 1 || bv.cols() != n) {
    throw std::logic_error("layer_norm: gain/bias must be 1 x cols(x)");
  }
  Mat out(xv.rows(), n);
  Mat xhat(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  for (int i = 0; i < xv.rows(); ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xv.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < n; ++j) {
      double xh = (xv.at(i, j) - mean) * is;
      xhat.at(i, j) = xh;
      out.at(i, j) = xh * gv.at(0, j) + bv.at(0, j);
    }
  }
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, x, gain, bias, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)]() {
    const Mat& g = nodes_[id].grad;
    const Mat& gv = nodes_[gain.id].val;
    Mat& gx = grad_mut(x);
    Mat& gg = grad_mut(gain);
    Mat& gb = grad_mut(bias);
    const int n = g.cols();
    for (int i = 0; i < g.rows(); ++i) {
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int j = 0; j < n; ++j) {
        double dxhat = g.at(i, j) * gv.at(0, j);
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat.at(i, j);
        gg.at(0, j) += g.at(i, j) * xhat.at(i, j);
        gb.at(0, j) += g.at(i, j);
      }
      for (int j = 0; j < n; ++j) {
        double dxhat = g.at(i, j) * gv.at(0, j);
        gx.at(i, j) +=
            inv_std[i] * (dxhat - sum_dxhat / n - xhat.at(i, j) * sum_dxhat_xhat / n);
      }
    }
  };
  return Var{id};
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Mat& av = value(a);
  Mat out(av.rows(), c1 - c0);
  for (int i = 0; i < av.rows(); ++i) {
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = av.at(i, j);
  }
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a, c0]() {
    const Mat& g = nodes_[id].grad;
    Mat& ga = grad_mut(a);
    for (int i = 0; i < g.rows(); ++i) {
      for (int j = 0; j < g.cols(); ++j) ga.at(i, c0 + j) += g.at(i, j);
    }
  };
  return Var{id};
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  const Mat& av = value(a);
  Mat out(r1 - r0, av.cols());
  for (int i = r0; i < r1; ++i) {
    for (int j = 0; j < av.cols(); ++j) out.at(i - r0, j) = av.at(i, j);
  }
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, a, r0]() {
    const Mat& g = nodes_[id].grad;
    Mat& ga = grad_mut(a);
    for (int i = 0; i < g.rows(); ++i) {
      for (int j = 0; j < g.cols(); ++j) ga.at(r0 + i, j) += g.at(i, j);
    }
  };
  return Var{id};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  int rows = value(parts.front()).rows();
  int cols = 0;
  for (Var p : parts) cols += value(p).cols();
  Mat out(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Mat& pv = value(p);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < pv.cols(); ++j) out.at(i, off + j) = pv.at(i, j);
    }
    off += pv.cols();
  }
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, parts]() {
    const Mat& g = nodes_[id].grad;
    int off = 0;
    for (Var p : parts) {
      Mat& gp = grad_mut(p);
      for (int i = 0; i < g.rows(); ++i) {
        for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(i, off + j);
      }
      off += gp.cols();
    }
  };
  return Var{id};
}

Var Tape::embed_rows(const std::vector<Var>& tables,
                     const std::vector<std::vector<int>>& indices) {
  const int dim = value(tables.front()).cols();
  Mat out(static_cast<int>(indices.size()), dim);
  for (size_t r = 0; r < indices.size(); ++r) {
    if (indices[r].size() != tables.size()) {
      throw std::logic_error("embed_rows: index arity mismatch");
    }
    for (size_t t = 0; t < tables.size(); ++t) {
      int idx = indices[r][t];
      if (idx < 0) continue;
      const Mat& tab = value(tables[t]);
      if (idx >= tab.rows()) throw std::out_of_range("embed_rows: index out of table");
      for (int j = 0; j < dim; ++j) out.at(static_cast<int>(r), j) += tab.at(idx, j);
    }
  }
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, tables, indices]() {
    const Mat& g = nodes_[id].grad;
    for (size_t r = 0; r < indices.size(); ++r) {
      for (size_t t = 0; t < tables.size(); ++t) {
        int idx = indices[r][t];
        if (idx < 0) continue;
        Mat& gt = grad_mut(tables[t]);
        for (int j = 0; j < g.cols(); ++j) {
          gt.at(idx, j) += g.at(static_cast<int>(r), j);
        }
      }
    }
  };
  return Var{id};
}

Var Tape::cross_entropy_rows(Var logits, const std::vector<int>& targets) {
  const Mat& z = value(logits);
  if (static_cast<int>(targets.size()) != z.rows()) {
    throw std::logic_error("cross_entropy_rows: one target per row required");
  }
  Mat probs(z.rows(), z.cols());
  double loss = 0.0;
  for (int i = 0; i < z.rows(); ++i) {
    double mx = z.at(i, 0);
    for (int j = 1; j < z.cols(); ++j) mx = std::max(mx, z.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < z.cols(); ++j) {
      double e = std::exp(z.at(i, j) - mx);
      probs.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < z.cols(); ++j) probs.at(i, j) /= sum;
    if (targets[i] >= 0) {
      loss -= std::log(std::max(probs.at(i, targets[i]), 1e-300));
    }
  }
  Mat out(1, 1);
  out.at(0, 0) = loss;
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, logits, targets, probs = std::move(probs)]() {
    double g = nodes_[id].grad.at(0, 0);
    Mat& gl = grad_mut(logits);
    for (int i = 0; i < gl.rows(); ++i) {
      if (targets[i] < 0) continue;
      for (int j = 0; j < gl.cols(); ++j) {
        double delta = probs.at(i, j) - (j == targets[i] ? 1.0 : 0.0);
        gl.at(i, j) += g * delta;
      }
    }
  };
  return Var{id};
}

Var Tape::add_scalars(const std::vector<Var>& scalars, double scale) {
  Mat out(1, 1);
  for (Var s : scalars) out.at(0, 0) += value(s).at(0, 0);
  out.at(0, 0) *= scale;
  int id = push(std::move(out), {});
  nodes_[id].back = [this, id, scalars, scale]() {
    double g = nodes_[id].grad.at(0, 0) * scale;
    for (Var s : scalars) grad_mut(s).at(0, 0) += g;
  };
  return Var{id};
}

}  // namespace intentkg
