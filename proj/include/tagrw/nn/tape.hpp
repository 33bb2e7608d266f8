// Minimal reverse-mode autodiff over Eigen double matrices. A Tape owns a
// DAG of eagerly evaluated nodes; backward() runs the reverse sweep in
// creation order, which is topological by construction. Leaf parameters bind
// to external gradient sinks so one parameter set can accumulate gradients
// across many per-instance tapes.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace tagrw::nn {

using Matrix = Eigen::MatrixXd;
using NodeId = int;

class Tape {
 public:
  NodeId constant(Matrix value);
  /// Parameter leaf: value is referenced (not copied) and must outlive the
  /// tape; gradients accumulate into *grad_sink (same shape, may be null).
  NodeId leaf(const Matrix& value, Matrix* grad_sink);
  /// Embedding-table row gather bound directly to external storage, so big
  /// tables are never copied onto the tape.
  NodeId embed(const Matrix* table, Matrix* grad_sink, std::vector<int> ids);

  NodeId add(NodeId a, NodeId b);
  NodeId add_rowvec(NodeId mat, NodeId row); // row: 1 x cols, broadcast to every row
  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b); // a * b^T
  NodeId scale(NodeId a, double factor);
  NodeId gelu(NodeId a);
  NodeId tanh_act(NodeId a);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta); // row-wise, gamma/beta 1 x cols
  NodeId softmax_rows(NodeId logits);
  /// Row-wise log softmax of (logits + mask); mask is an additive constant
  /// (0 for legal entries, a large negative number elsewhere).
  NodeId log_softmax_rows(NodeId logits, Matrix mask);
  NodeId gather_rows(NodeId a, std::vector<int> rows);
  NodeId cols(NodeId a, int first, int count);
  NodeId hcat(const std::vector<NodeId>& parts);
  NodeId repeat_rows_each(NodeId a, int times); // each row repeated `times` consecutively
  NodeId tile_rows(NodeId a, int times);        // whole block stacked `times` times
  NodeId reshape_rowmajor(NodeId a, int rows, int cols);
  /// 1x1 node holding the sum of entries picked per row: sum_i a(i, picks[i]).
  NodeId pick_sum(NodeId a, std::vector<int> picks);

  const Matrix& value(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = seed (root must be 1x1) and sweeps backwards,
  /// accumulating into every bound grad sink.
  void backward(NodeId root, double seed = 1.0);

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr; // set only for uncopied parameter leaves
    Matrix grad;                      // empty until touched by backward
    std::function<void(Tape&, Node&)> back;
    Matrix* grad_sink = nullptr;
  };

  NodeId push(Matrix value, std::function<void(Tape&, Node&)> back);
  Matrix& grad_of(NodeId id);
  bool has_grad(NodeId id) const;

  std::vector<Node> nodes_;
};

} // namespace tagrw::nn
