#include "har/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "har/errors.hpp"

namespace har {

Var Graph::leaf(Tensor value, bool requires_grad) {
  NodeRec n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.op = "leaf";
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::node(Tensor value, const std::vector<Var>& inputs,
                BackwardFn backward, const char* op) {
  NodeRec n;
  n.value = std::move(value);
  n.op = op;
  n.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    n.requires_grad = n.requires_grad || rec(v).requires_grad;
    n.inputs.push_back(v.id);
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::grad(Var v) const {
  const NodeRec& n = rec(v);
  if (n.grad.empty())
    throw StateError("no gradient recorded for node (run backward first)");
  return n.grad;
}

void Graph::backward(Var loss) {
  if (backward_done_)
    throw StateError("backward already ran on this graph; call reset_grads()");
  const NodeRec& top = rec(loss);
  if (top.value.size() != 1)
    throw ContractError("backward requires a scalar loss, got size " +
                        std::to_string(top.value.size()));
  backward_done_ = true;
  const double one = 1.0;
  accumulate(loss, std::span<const double>(&one, 1));
  for (int id = loss.id; id >= 0; --id) {
    NodeRec& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

void Graph::reset_grads() {
  for (NodeRec& n : nodes_) n.grad = Tensor();
  backward_done_ = false;
}

void Graph::accumulate(Var v, std::span<const double> g) {
  NodeRec& n = rec(v);
  if (!n.requires_grad) return;
  if (g.size() != n.value.size())
    throw DimensionError("gradient size " + std::to_string(g.size()) +
                         " does not match value size " +
                         std::to_string(n.value.size()));
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  double* dst = n.grad.data().data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Graph::NodeRec& Graph::rec(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw ContractError("invalid node handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Graph::NodeRec& Graph::rec(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw ContractError("invalid node handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2)
    throw DimensionError(std::string(what) + " must be a rank-2 tensor");
}

}  // namespace

Var affine(Graph& g, Var x, Var w, Var b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  require_rank2(xv, "affine input");
  require_rank2(wv, "affine weight");
  if (bv.rank() != 1)
    throw DimensionError("affine bias must be a rank-1 tensor");
  const std::size_t n = xv.rows(), d = xv.cols(), m = wv.cols();
  if (wv.rows() != d)
    throw DimensionError("affine weight rows " + std::to_string(wv.rows()) +
                         " do not match input cols " + std::to_string(d));
  if (bv.size() != m)
    throw DimensionError("affine bias size " + std::to_string(bv.size()) +
                         " does not match weight cols " + std::to_string(m));

  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> xi = xv.row_span(i);
    std::span<double> oi = out.row_span(i);
    for (std::size_t j = 0; j < m; ++j) oi[j] = bv[j];
    for (std::size_t k = 0; k < d; ++k) {
      const double xik = xi[k];
      std::span<const double> wk = wv.row_span(k);
      for (std::size_t j = 0; j < m; ++j) oi[j] += xik * wk[j];
    }
  }

  const int xi_id = x.id, wi_id = w.id, bi_id = b.id;
  return g.node(
      std::move(out), {x, w, b},
      [xi_id, wi_id, bi_id, n, d, m](Graph& gr, int self) {
        const Var xs{xi_id}, ws{wi_id}, bs{bi_id};
        const Tensor& go = gr.grad(Var{self});
        const Tensor& xv2 = gr.value(xs);
        const Tensor& wv2 = gr.value(ws);
        if (gr.requires_grad(xs)) {
          Tensor gx({n, d});
          for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> gi = go.row_span(i);
            std::span<double> gxi = gx.row_span(i);
            for (std::size_t k = 0; k < d; ++k) {
              double acc = 0.0;
              std::span<const double> wk = wv2.row_span(k);
              for (std::size_t j = 0; j < m; ++j) acc += gi[j] * wk[j];
              gxi[k] = acc;
            }
          }
          gr.accumulate(xs, gx.data());
        }
        if (gr.requires_grad(ws)) {
          Tensor gw({d, m});
          for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> xi2 = xv2.row_span(i);
            std::span<const double> gi = go.row_span(i);
            for (std::size_t k = 0; k < d; ++k) {
              const double xik = xi2[k];
              std::span<double> gwk = gw.row_span(k);
              for (std::size_t j = 0; j < m; ++j) gwk[j] += xik * gi[j];
            }
          }
          gr.accumulate(ws, gw.data());
        }
        if (gr.requires_grad(bs)) {
          Tensor gb({m});
          for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> gi = go.row_span(i);
            for (std::size_t j = 0; j < m; ++j) gb[j] += gi[j];
          }
          gr.accumulate(bs, gb.data());
        }
      },
      "affine");
}

Var relu(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i)
    out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const int x_id = x.id;
  return g.node(
      std::move(out), {x},
      [x_id](Graph& gr, int self) {
        const Var xs{x_id};
        const Tensor& go = gr.grad(Var{self});
        const Tensor& xv2 = gr.value(xs);
        Tensor gx(xv2.shape());
        for (std::size_t i = 0; i < gx.size(); ++i)
          gx[i] = xv2[i] > 0.0 ? go[i] : 0.0;
        gr.accumulate(xs, gx.data());
      },
      "relu");
}

Var softmax(Graph& g, Var logits) {
  const Tensor& lv = g.value(logits);
  require_rank2(lv, "softmax input");
  const std::size_t n = lv.rows(), c = lv.cols();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> li = lv.row_span(i);
    std::span<double> oi = out.row_span(i);
    double mx = li[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, li[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      oi[j] = std::exp(li[j] - mx);
      z += oi[j];
    }
    for (std::size_t j = 0; j < c; ++j) oi[j] /= z;
  }
  const int l_id = logits.id;
  return g.node(
      std::move(out), {logits},
      [l_id, n, c](Graph& gr, int self) {
        const Var ls{l_id};
        const Tensor& go = gr.grad(Var{self});
        const Tensor& pv = gr.value(Var{self});
        Tensor gl({n, c});
        for (std::size_t i = 0; i < n; ++i) {
          std::span<const double> pi = pv.row_span(i);
          std::span<const double> gi = go.row_span(i);
          std::span<double> gli = gl.row_span(i);
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += pi[j] * gi[j];
          for (std::size_t j = 0; j < c; ++j) gli[j] = pi[j] * (gi[j] - dot);
        }
        gr.accumulate(ls, gl.data());
      },
      "softmax");
}

Var cross_entropy(Graph& g, Var probs, std::vector<int> labels) {
  const Tensor& pv = g.value(probs);
  require_rank2(pv, "cross_entropy probabilities");
  const std::size_t n = pv.rows(), c = pv.cols();
  if (labels.size() != n)
    throw DimensionError("cross_entropy got " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw DomainError("cross_entropy label " + std::to_string(y) +
                        " outside [0, " + std::to_string(c) + ")");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    loss -= std::log(std::max(pv.at(i, static_cast<std::size_t>(labels[i])),
                              kProbFloor));
  loss /= static_cast<double>(n);

  const int p_id = probs.id;
  return g.node(
      Tensor::scalar(loss), {probs},
      [p_id, n, c, labels = std::move(labels)](Graph& gr, int self) {
        const Var ps{p_id};
        const double gs = gr.grad(Var{self}).item();
        const Tensor& pv2 = gr.value(ps);
        Tensor gp({n, c});
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t y = static_cast<std::size_t>(labels[i]);
          const double p = pv2.at(i, y);
          if (p >= kProbFloor)
            gp.at(i, y) = -gs / (static_cast<double>(n) * p);
        }
        gr.accumulate(ps, gp.data());
      },
      "cross_entropy");
}

Var kl_divergence(Graph& g, Var p, Var q) {
  const Tensor& pv = g.value(p);
  const Tensor& qv = g.value(q);
  require_rank2(pv, "kl_divergence p");
  require_rank2(qv, "kl_divergence q");
  if (!pv.same_shape(qv))
    throw DimensionError("kl_divergence operands must share a shape");
  const std::size_t n = pv.rows(), c = pv.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double pe = pv[i];
    if (pe == 0.0) continue;
    total += pe * (std::log(std::max(pe, kProbFloor)) -
                   std::log(std::max(qv[i], kProbFloor)));
  }
  total /= static_cast<double>(n);

  const int p_id = p.id, q_id = q.id;
  return g.node(
      Tensor::scalar(total), {p, q},
      [p_id, q_id, n, c](Graph& gr, int self) {
        const Var ps{p_id}, qs{q_id};
        const double gs = gr.grad(Var{self}).item();
        const Tensor& pv2 = gr.value(ps);
        const Tensor& qv2 = gr.value(qs);
        const double inv_n = 1.0 / static_cast<double>(n);
        if (gr.requires_grad(ps)) {
          Tensor gp({n, c});
          for (std::size_t i = 0; i < pv2.size(); ++i) {
            const double pe = pv2[i];
            if (pe == 0.0) continue;
            const double lp = std::log(std::max(pe, kProbFloor));
            const double lq = std::log(std::max(qv2[i], kProbFloor));
            gp[i] = gs * inv_n * (lp - lq + (pe >= kProbFloor ? 1.0 : 0.0));
          }
          gr.accumulate(ps, gp.data());
        }
        if (gr.requires_grad(qs)) {
          Tensor gq({n, c});
          for (std::size_t i = 0; i < qv2.size(); ++i) {
            const double pe = pv2[i];
            const double qe = qv2[i];
            if (pe == 0.0 || qe < kProbFloor) continue;
            gq[i] = -gs * inv_n * pe / qe;
          }
          gr.accumulate(qs, gq.data());
        }
      },
      "kl_divergence");
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (!av.same_shape(bv))
    throw DimensionError("add operands must share a shape");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const int a_id = a.id, b_id = b.id;
  return g.node(
      std::move(out), {a, b},
      [a_id, b_id](Graph& gr, int self) {
        const Tensor& go = gr.grad(Var{self});
        gr.accumulate(Var{a_id}, go.data());
        gr.accumulate(Var{b_id}, go.data());
      },
      "add");
}

Var scale(Graph& g, Var a, double c) {
  const Tensor& av = g.value(a);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * av[i];
  const int a_id = a.id;
  return g.node(
      std::move(out), {a},
      [a_id, c](Graph& gr, int self) {
        const Tensor& go = gr.grad(Var{self});
        Tensor ga(go.shape());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = c * go[i];
        gr.accumulate(Var{a_id}, ga.data());
      },
      "scale");
}

Var sum(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i];
  const int a_id = a.id;
  return g.node(
      Tensor::scalar(total), {a},
      [a_id](Graph& gr, int self) {
        const double gs = gr.grad(Var{self}).item();
        const Tensor& av2 = gr.value(Var{a_id});
        Tensor ga(av2.shape());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = gs;
        gr.accumulate(Var{a_id}, ga.data());
      },
      "sum");
}

}  // namespace har
