#pragma once

// Minimal reverse-mode tape. Nodes hold a value and a gradient slot; every
// non-leaf node carries a closure that scatters its output gradient into its
// inputs. backward() replays the closures in exact reverse creation order.

#include <cstdint>
#include <functional>
#include <vector>

#include "crossview/ops.hpp"

namespace crossview::numcore {

class Tape {
 public:
  using NodeId = std::size_t;

  NodeId leaf(Vec v) { return push(std::move(v), {}); }

  NodeId push(Vec v, std::function<void(Tape&)> back) {
    const std::size_t n = v.size();
    nodes_.push_back(Node{std::move(v), Vec(n, 0.0), std::move(back)});
    return nodes_.size() - 1;
  }

  const Vec& val(NodeId id) const { return nodes_[id].val; }
  Vec& grad(NodeId id) { return nodes_[id].grad; }
  const Vec& grad(NodeId id) const { return nodes_[id].grad; }

  // seeds d(root)/d(root) = 1 and runs every closure newest to oldest
  void backward(NodeId root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Vec val;
    Vec grad;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;
};

// Recorded primitives. Each returns the output node id. W is stored flat,
// row-major, m*n long.
Tape::NodeId t_affine(Tape& t, Tape::NodeId W, Tape::NodeId b, Tape::NodeId x,
                      std::size_t m, std::size_t n);
// same, but with a frozen input vector (no gradient into x)
Tape::NodeId t_affine_const(Tape& t, Tape::NodeId W, Tape::NodeId b, const Vec& x,
                            std::size_t m, std::size_t n);
Tape::NodeId t_gelu(Tape& t, Tape::NodeId x);
Tape::NodeId t_layer_norm(Tape& t, Tape::NodeId x, Tape::NodeId gain, Tape::NodeId bias,
                          double eps = 1e-5);
Tape::NodeId t_l2_normalize(Tape& t, Tape::NodeId x);
Tape::NodeId t_softmax(Tape& t, Tape::NodeId x);
Tape::NodeId t_dropout(Tape& t, Tape::NodeId x, double rate, std::uint64_t seed,
                       bool training);
Tape::NodeId t_add(Tape& t, Tape::NodeId a, Tape::NodeId b);
// out_i = v_i + s[0]
Tape::NodeId t_add_broadcast(Tape& t, Tape::NodeId v, Tape::NodeId s);
// scalar node: sum_i a_i * c_i, with c frozen
Tape::NodeId t_dot_const(Tape& t, Tape::NodeId a, const Vec& c);
// gathers scalar nodes into one vector node
Tape::NodeId t_pack(Tape& t, const std::vector<Tape::NodeId>& scalars);
// sum_k weights_k * rows_k over frozen rows
Tape::NodeId t_weighted_sum(Tape& t, Tape::NodeId weights, const std::vector<Vec>& rows);

}  // namespace crossview::numcore
