#pragma once

#include <array>
#include <functional>
#include <vector>

#include "intentkg/matrix.hpp"

namespace intentkg {

// Reverse-mode tape over Mat. Build a computation with the op methods, call
// backward() on a 1x1 result, then read grad() of any leaf. One tape per
// training step; nodes are append-only so Vars stay valid.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Var leaf(const Mat& value);

  const Mat& value(Var v) const { return nodes_[v.id].val; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  // Seeds d(root)/d(root) = 1 and propagates; root must be 1x1.
  void backward(Var root);

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var add(Var a, Var b);
  Var add_rowvec(Var a, Var row);  // row is 1 x C, broadcast over rows
  Var add_const(Var a, const Mat& c);
  Var scale(Var a, double s);
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var slice_cols(Var a, int c0, int c1);
  Var slice_rows(Var a, int r0, int r1);
  Var concat_cols(const std::vector<Var>& parts);

  // Sum of one row gathered from each table per output row; index -1 skips
  // that table (used for the zero-padded intent slot of the decoder).
  Var embed_rows(const std::vector<Var>& tables, const std::vector<std::vector<int>>& indices);

  // Sum over rows of -log softmax(logits)[target]; rows with target < 0 are
  // ignored. Returns a 1x1 node.
  Var cross_entropy_rows(Var logits, const std::vector<int>& targets);

  // scale * (sum of 1x1 scalars)
  Var add_scalars(const std::vector<Var>& scalars, double scale);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void()> back;  // empty for leaves
  };
  int push(Mat val, std::function<void()> back);
  Mat& grad_mut(Var v) { return nodes_[v.id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace intentkg
