#include "tagrw/nn/tape.hpp"

#include <cassert>
#include <cmath>

namespace tagrw::nn {
namespace {

constexpr double kGeluScale = 0.7978845608028654; // sqrt(2/pi)

double gelu_fwd(double x) {
  double c = 0.044715 * x * x * x;
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + c)));
}

double gelu_bwd(double x) {
  double c = 0.044715 * x * x * x;
  double t = std::tanh(kGeluScale * (x + c));
  double sech2 = 1.0 - t * t;
  return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluScale * (1.0 + 3.0 * 0.044715 * x * x);
}

} // namespace

NodeId Tape::push(Matrix value, std::function<void(Tape&, Node&)> back) {
  Node n;
  n.owned = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Matrix& Tape::value(NodeId id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.owned;
}

Matrix& Tape::grad_of(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = n.external ? *n.external : n.owned;
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

bool Tape::has_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() != 0; }

NodeId Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

NodeId Tape::leaf(const Matrix& value, Matrix* grad_sink) {
  Node n;
  n.external = &value;
  n.grad_sink = grad_sink;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::embed(const Matrix* table, Matrix* grad_sink, std::vector<int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table->cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table->row(ids[i]);
  return push(std::move(out), [grad_sink, ids = std::move(ids)](Tape&, Node& self) {
    if (!grad_sink) return;
    for (std::size_t i = 0; i < ids.size(); ++i)
      grad_sink->row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

NodeId Tape::add(NodeId a, NodeId b) {
  assert(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols());
  return push(value(a) + value(b), [a, b](Tape& t, Node& self) {
    t.grad_of(a) += self.grad;
    t.grad_of(b) += self.grad;
  });
}

NodeId Tape::add_rowvec(NodeId mat, NodeId row) {
  assert(value(row).rows() == 1 && value(row).cols() == value(mat).cols());
  Matrix out = value(mat);
  out.rowwise() += value(row).row(0);
  return push(std::move(out), [mat, row](Tape& t, Node& self) {
    t.grad_of(mat) += self.grad;
    t.grad_of(row).row(0) += self.grad.colwise().sum();
  });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  return push(value(a) * value(b), [a, b](Tape& t, Node& self) {
    t.grad_of(a) += self.grad * t.value(b).transpose();
    t.grad_of(b) += t.value(a).transpose() * self.grad;
  });
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  return push(value(a) * value(b).transpose(), [a, b](Tape& t, Node& self) {
    t.grad_of(a) += self.grad * t.value(b);
    t.grad_of(b) += self.grad.transpose() * t.value(a);
  });
}

NodeId Tape::scale(NodeId a, double factor) {
  return push(value(a) * factor,
              [a, factor](Tape& t, Node& self) { t.grad_of(a) += self.grad * factor; });
}

NodeId Tape::gelu(NodeId a) {
  return push(value(a).unaryExpr(&gelu_fwd), [a](Tape& t, Node& self) {
    t.grad_of(a) += self.grad.cwiseProduct(t.value(a).unaryExpr(&gelu_bwd));
  });
}

NodeId Tape::tanh_act(NodeId a) {
  Matrix out = value(a).array().tanh();
  return push(std::move(out), [a](Tape& t, Node& self) {
    t.grad_of(a).array() += self.grad.array() * (1.0 - self.owned.array().square());
  });
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta) {
  constexpr double eps = 1e-5;
  const Matrix& xv = value(x);
  const Eigen::Index rows = xv.rows(), dim = xv.cols();
  Matrix xhat(rows, dim);
  Eigen::VectorXd inv_sigma(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double mean = xv.row(i).mean();
    double var = (xv.row(i).array() - mean).square().sum() / static_cast<double>(dim);
    inv_sigma(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mean) * inv_sigma(i);
  }
  Matrix out = xhat;
  for (Eigen::Index i = 0; i < rows; ++i)
    out.row(i) = xhat.row(i).cwiseProduct(value(gamma).row(0)) + value(beta).row(0);
  return push(std::move(out),
              [x, gamma, beta, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](
                  Tape& t, Node& self) {
                const Eigen::Index rows = self.grad.rows(), dim = self.grad.cols();
                Matrix& gx = t.grad_of(x);
                Matrix& gg = t.grad_of(gamma);
                Matrix& gb = t.grad_of(beta);
                for (Eigen::Index i = 0; i < rows; ++i) {
                  gb.row(0) += self.grad.row(i);
                  gg.row(0) += self.grad.row(i).cwiseProduct(xhat.row(i));
                  Eigen::RowVectorXd dxhat =
                      self.grad.row(i).cwiseProduct(t.value(gamma).row(0));
                  double m1 = dxhat.mean();
                  double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
                  gx.row(i) += inv_sigma(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2)
                                   .matrix()
                                   .eval();
                  (void)dim;
                }
              });
}

NodeId Tape::softmax_rows(NodeId logits) {
  const Matrix& z = value(logits);
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::RowVectorXd e = (z.row(i).array() - z.row(i).maxCoeff()).exp();
    out.row(i) = e / e.sum();
  }
  return push(std::move(out), [logits](Tape& t, Node& self) {
    const Matrix& p = self.owned;
    Matrix& gz = t.grad_of(logits);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double dot = p.row(i).cwiseProduct(self.grad.row(i)).sum();
      gz.row(i) += p.row(i).cwiseProduct(
          (self.grad.row(i).array() - dot).matrix().eval());
    }
  });
}

NodeId Tape::log_softmax_rows(NodeId logits, Matrix mask) {
  const Matrix& raw = value(logits);
  assert(raw.rows() == mask.rows() && raw.cols() == mask.cols());
  Matrix z = raw + mask;
  Matrix logp(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double m = z.row(i).maxCoeff();
    double lse = m + std::log((z.row(i).array() - m).exp().sum());
    logp.row(i) = z.row(i).array() - lse;
  }
  return push(std::move(logp), [logits](Tape& t, Node& self) {
    Matrix& gz = t.grad_of(logits);
    for (Eigen::Index i = 0; i < self.owned.rows(); ++i) {
      double gsum = self.grad.row(i).sum();
      gz.row(i) += self.grad.row(i) -
                   (self.owned.row(i).array().exp() * gsum).matrix().eval();
    }
  });
}

NodeId Tape::gather_rows(NodeId a, std::vector<int> rows) {
  const Matrix& av = value(a);
  Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
  return push(std::move(out), [a, rows = std::move(rows)](Tape& t, Node& self) {
    Matrix& ga = t.grad_of(a);
    for (std::size_t i = 0; i < rows.size(); ++i)
      ga.row(rows[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

NodeId Tape::cols(NodeId a, int first, int count) {
  return push(value(a).middleCols(first, count), [a, first, count](Tape& t, Node& self) {
    t.grad_of(a).middleCols(first, count) += self.grad;
  });
}

NodeId Tape::hcat(const std::vector<NodeId>& parts) {
  assert(!parts.empty());
  Eigen::Index rows = value(parts[0]).rows(), total = 0;
  for (NodeId p : parts) total += value(p).cols();
  Matrix out(rows, total);
  Eigen::Index off = 0;
  for (NodeId p : parts) {
    out.middleCols(off, value(p).cols()) = value(p);
    off += value(p).cols();
  }
  return push(std::move(out), [parts](Tape& t, Node& self) {
    Eigen::Index off = 0;
    for (NodeId p : parts) {
      Eigen::Index c = t.value(p).cols();
      t.grad_of(p) += self.grad.middleCols(off, c);
      off += c;
    }
  });
}

NodeId Tape::repeat_rows_each(NodeId a, int times) {
  const Matrix& av = value(a);
  Matrix out(av.rows() * times, av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i)
    for (int k = 0; k < times; ++k) out.row(i * times + k) = av.row(i);
  return push(std::move(out), [a, times](Tape& t, Node& self) {
    Matrix& ga = t.grad_of(a);
    for (Eigen::Index i = 0; i < ga.rows(); ++i)
      for (int k = 0; k < times; ++k) ga.row(i) += self.grad.row(i * times + k);
  });
}

NodeId Tape::tile_rows(NodeId a, int times) {
  const Matrix& av = value(a);
  Matrix out(av.rows() * times, av.cols());
  for (int k = 0; k < times; ++k) out.middleRows(static_cast<Eigen::Index>(k) * av.rows(), av.rows()) = av;
  return push(std::move(out), [a, times](Tape& t, Node& self) {
    Matrix& ga = t.grad_of(a);
    for (int k = 0; k < times; ++k)
      ga += self.grad.middleRows(static_cast<Eigen::Index>(k) * ga.rows(), ga.rows());
  });
}

NodeId Tape::reshape_rowmajor(NodeId a, int rows, int cols) {
  const Matrix& av = value(a);
  assert(av.rows() * av.cols() == static_cast<Eigen::Index>(rows) * cols);
  Matrix out(rows, cols);
  const Eigen::Index src_cols = av.cols();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    // flat index in row-major order of both shapes
    Eigen::Index r = i / cols, c = i % cols;
    Eigen::Index sr = i / src_cols, sc = i % src_cols;
    out(r, c) = av(sr, sc);
  }
  return push(std::move(out), [a, cols](Tape& t, Node& self) {
    Matrix& ga = t.grad_of(a);
    const Eigen::Index src_cols = ga.cols();
    for (Eigen::Index i = 0; i < self.grad.size(); ++i) {
      Eigen::Index r = i / cols, c = i % cols;
      Eigen::Index sr = i / src_cols, sc = i % src_cols;
      ga(sr, sc) += self.grad(r, c);
    }
  });
}

NodeId Tape::pick_sum(NodeId a, std::vector<int> picks) {
  const Matrix& av = value(a);
  assert(static_cast<Eigen::Index>(picks.size()) == av.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < picks.size(); ++i)
    total += av(static_cast<Eigen::Index>(i), picks[i]);
  Matrix out(1, 1);
  out(0, 0) = total;
  return push(std::move(out), [a, picks = std::move(picks)](Tape& t, Node& self) {
    Matrix& ga = t.grad_of(a);
    for (std::size_t i = 0; i < picks.size(); ++i)
      ga(static_cast<Eigen::Index>(i), picks[i]) += self.grad(0, 0);
  });
}

void Tape::backward(NodeId root, double seed) {
  assert(value(root).rows() == 1 && value(root).cols() == 1);
  grad_of(root)(0, 0) += seed;
  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue; // not on a path to the root
    if (n.grad_sink) *n.grad_sink += n.grad;
    if (n.back) n.back(*this, n);
  }
}

} // namespace tagrw::nn
