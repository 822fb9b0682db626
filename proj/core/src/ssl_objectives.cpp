// SPDX-License-Identifier: Apache-2.0

#include "kaizen/ssl_objectives.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "kaizen/ops.hpp"

namespace kaizen::ssl {

SSLKind kind_from_string(const std::string& name) {
  std::string key = name;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  if (key == "simclr") return SSLKind::kSimCLR;
  if (key == "mocov2+" || key == "mocov2plus" || key == "moco") return SSLKind::kMoCoV2Plus;
  if (key == "byol") return SSLKind::kBYOL;
  if (key == "vicreg") return SSLKind::kVICReg;
  throw std::invalid_argument("unknown SSL kind '" + name + "' (expected SimCLR, MoCoV2+, BYOL or VICReg)");
}

std::string to_string(SSLKind kind) {
  switch (kind) {
    case SSLKind::kSimCLR: return "simclr";
    case SSLKind::kMoCoV2Plus: return "mocov2+";
    case SSLKind::kBYOL: return "byol";
    case SSLKind::kVICReg: return "vicreg";
  }
  return "unknown";
}

bool uses_momentum_encoder(SSLKind kind) { return kind == SSLKind::kBYOL || kind == SSLKind::kMoCoV2Plus; }
bool uses_queue(SSLKind kind) { return kind == SSLKind::kMoCoV2Plus; }

SSLHyperparameters SSLHyperparameters::defaults(SSLKind kind) {
  SSLHyperparameters h;
  switch (kind) {
    case SSLKind::kSimCLR: h.temperature = 0.5; break;
    case SSLKind::kMoCoV2Plus:
      h.temperature = 0.2;
      h.queue_size = 65536;
      h.ema_momentum = 0.99;
      break;
    case SSLKind::kBYOL: h.ema_momentum = 0.996; break;
    case SSLKind::kVICReg: h.vicreg = {25.0, 25.0, 1.0}; break;
  }
  return h;
}

namespace {

void check_pair(const Var& a, const Var& b, const char* what) {
  if (a.value().rank() != 2 || b.value().rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": embeddings must be rank-2 [N, D]");
  }
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

struct Normalized {
  RowMatrix unit;
  Eigen::VectorXd norm;
};

Normalized normalize_rows(const Tensor& x) {
  Normalized out;
  out.unit = x.matrix();
  out.norm = out.unit.rowwise().norm().cwiseMax(1e-12);
  for (Eigen::Index i = 0; i < out.unit.rows(); ++i) out.unit.row(i) /= out.norm(i);
  return out;
}

// d/dx of a loss given d/du where u = x / |x|.
void backprop_normalize(const Normalized& n, const RowMatrix& grad_unit, double scale, Tensor& grad_x) {
  MatrixMap gx = grad_x.matrix();
  for (Eigen::Index i = 0; i < n.unit.rows(); ++i) {
    const double dot = grad_unit.row(i).dot(n.unit.row(i));
    gx.row(i) += scale * (grad_unit.row(i) - dot * n.unit.row(i)) / n.norm(i);
  }
}

}  // namespace

Var nt_xent_loss(const Var& a, const Var& b, double temperature) {
  check_pair(a, b, "nt_xent_loss");
  if (!(temperature > 0.0)) throw std::invalid_argument("nt_xent_loss: temperature must be > 0");
  const int64_t n = a.shape()[0];
  if (n < 2) throw std::invalid_argument("nt_xent_loss: batch size must be >= 2 to provide negatives");
  const int64_t m = 2 * n;
  const Normalized na = normalize_rows(a.value());
  const Normalized nb = normalize_rows(b.value());
  RowMatrix u(m, na.unit.cols());
  u.topRows(n) = na.unit;
  u.bottomRows(n) = nb.unit;
  const RowMatrix sim = (u * u.transpose()) / temperature;

  // P holds softmax over k != i; the loss gradient w.r.t. sim is (P - onehot) / m.
  RowMatrix grad_sim = RowMatrix::Zero(m, m);
  double loss = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    const int64_t pos = i < n ? i + n : i - n;
    double mx = -INFINITY;
    for (int64_t k = 0; k < m; ++k)
      if (k != i) mx = std::max(mx, sim(i, k));
    double z = 0.0;
    for (int64_t k = 0; k < m; ++k)
      if (k != i) z += std::exp(sim(i, k) - mx);
    const double lse = mx + std::log(z);
    loss += lse - sim(i, pos);
    for (int64_t k = 0; k < m; ++k)
      if (k != i) grad_sim(i, k) = std::exp(sim(i, k) - lse);
    grad_sim(i, pos) -= 1.0;
  }
  loss /= static_cast<double>(m);
  grad_sim /= static_cast<double>(m);

  return make_op(Tensor({1}, {loss}), {a, b}, [na, nb, u, grad_sim, n, temperature](const Tensor& g, std::vector<Tensor*>& in) {
    const RowMatrix grad_u = ((grad_sim + grad_sim.transpose()) * u) / temperature;
    if (in[0]) backprop_normalize(na, grad_u.topRows(n), g[0], *in[0]);
    if (in[1]) backprop_normalize(nb, grad_u.bottomRows(n), g[0], *in[1]);
  });
}

Var info_nce_loss(const Var& queries, const Var& keys, const Tensor& queue, double temperature) {
  check_pair(queries, keys, "info_nce_loss");
  if (!(temperature > 0.0)) throw std::invalid_argument("info_nce_loss: temperature must be > 0");
  const int64_t n = queries.shape()[0];
  const int64_t d = queries.shape()[1];
  if (n < 2) throw std::invalid_argument("info_nce_loss: batch size must be >= 2");
  const int64_t kq = queue.empty() ? 0 : queue.dim(0);
  if (kq > 0 && queue.dim(1) != d) {
    throw std::invalid_argument("info_nce_loss: queue width " + std::to_string(queue.dim(1)) +
                                " does not match embedding width " + std::to_string(d));
  }
  const Normalized nq = normalize_rows(queries.value());
  const Normalized nk = normalize_rows(keys.value());
  const RowMatrix qmat = kq > 0 ? RowMatrix(queue.matrix()) : RowMatrix(0, d);
  RowMatrix logits(n, 1 + kq);
  logits.col(0) = (nq.unit.cwiseProduct(nk.unit)).rowwise().sum() / temperature;
  if (kq > 0) logits.rightCols(kq) = (nq.unit * qmat.transpose()) / temperature;

  RowMatrix grad_logits(n, 1 + kq);
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    loss += lse - logits(i, 0);
    grad_logits.row(i) = (logits.row(i).array() - lse).exp();
    grad_logits(i, 0) -= 1.0;
  }
  loss /= static_cast<double>(n);
  grad_logits /= static_cast<double>(n);

  return make_op(Tensor({1}, {loss}), {queries, keys},
                 [nq, nk, qmat, grad_logits, kq, temperature](const Tensor& g, std::vector<Tensor*>& in) {
                   if (in[0]) {
                     RowMatrix grad_q = grad_logits.col(0).asDiagonal() * nk.unit;
                     if (kq > 0) grad_q += grad_logits.rightCols(kq) * qmat;
                     grad_q /= temperature;
                     backprop_normalize(nq, grad_q, g[0], *in[0]);
                   }
                   if (in[1]) {
                     const RowMatrix grad_k = (grad_logits.col(0).asDiagonal() * nq.unit) / temperature;
                     backprop_normalize(nk, grad_k, g[0], *in[1]);
                   }
                 });
}

Var byol_loss(const Var& predictions, const Var& targets) {
  check_pair(predictions, targets, "byol_loss");
  const int64_t n = predictions.shape()[0];
  if (n < 1) throw std::invalid_argument("byol_loss: empty batch");
  const Normalized np = normalize_rows(predictions.value());
  const Normalized nz = normalize_rows(targets.value());
  const Eigen::VectorXd cos = np.unit.cwiseProduct(nz.unit).rowwise().sum();
  const double loss = (2.0 - 2.0 * cos.array()).mean();
  return make_op(Tensor({1}, {loss}), {predictions, targets}, [np, nz, n](const Tensor& g, std::vector<Tensor*>& in) {
    const double s = -2.0 / static_cast<double>(n);
    if (in[0]) backprop_normalize(np, nz.unit, s * g[0], *in[0]);
    if (in[1]) backprop_normalize(nz, np.unit, s * g[0], *in[1]);
  });
}

namespace {

constexpr double kVicregEps = 1e-4;

struct VicregSide {
  RowMatrix centered;
  Eigen::RowVectorXd stddev;
  RowMatrix cov;
};

VicregSide vicreg_side(const Tensor& x) {
  VicregSide s;
  const auto n = static_cast<double>(x.dim(0));
  s.centered = x.matrix();
  const Eigen::RowVectorXd mean = s.centered.colwise().mean();
  s.centered.rowwise() -= mean;
  const Eigen::RowVectorXd var = s.centered.colwise().squaredNorm() / (n - 1.0);
  s.stddev = (var.array() + kVicregEps).sqrt();
  s.cov = (s.centered.transpose() * s.centered) / (n - 1.0);
  return s;
}

double variance_term(const VicregSide& s) {
  return (1.0 - s.stddev.array()).max(0.0).mean();
}

double covariance_term(const VicregSide& s) {
  const auto d = static_cast<double>(s.cov.rows());
  return (s.cov.squaredNorm() - s.cov.diagonal().squaredNorm()) / d;
}

}  // namespace

VicregTerms vicreg_terms(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b) || a.rank() != 2) throw std::invalid_argument("vicreg_terms: shape mismatch");
  if (a.dim(0) < 2) throw std::invalid_argument("vicreg_terms: batch size must be >= 2");
  const VicregSide sa = vicreg_side(a);
  const VicregSide sb = vicreg_side(b);
  VicregTerms t;
  t.invariance = (a.matrix() - b.matrix()).squaredNorm() / static_cast<double>(a.numel());
  t.variance = 0.5 * variance_term(sa) + 0.5 * variance_term(sb);
  t.covariance = covariance_term(sa) + covariance_term(sb);
  return t;
}

Var vicreg_loss(const Var& a, const Var& b, const VicregWeights& w) {
  check_pair(a, b, "vicreg_loss");
  const VicregTerms t = vicreg_terms(a.value(), b.value());
  const double loss = w.invariance * t.invariance + w.variance * t.variance + w.covariance * t.covariance;
  const VicregSide sa = vicreg_side(a.value());
  const VicregSide sb = vicreg_side(b.value());
  const RowMatrix diff = a.value().matrix() - b.value().matrix();
  const int64_t n = a.shape()[0];
  const int64_t d = a.shape()[1];

  auto side_grad = [w, n, d](const VicregSide& s) {
    const auto nd = static_cast<double>(n);
    const auto dd = static_cast<double>(d);
    RowMatrix g = RowMatrix::Zero(n, d);
    // variance hinge: 0.5 * mean_d relu(1 - std_d)
    for (int64_t j = 0; j < d; ++j) {
      if (s.stddev(j) < 1.0) {
        g.col(j) += w.variance * (-0.5 / dd) * s.centered.col(j) / ((nd - 1.0) * s.stddev(j));
      }
    }
    // covariance: sum_{i != j} C_ij^2 / d
    RowMatrix off = s.cov;
    off.diagonal().setZero();
    g += w.covariance * (4.0 / (dd * (nd - 1.0))) * (s.centered * off);
    return g;
  };
  RowMatrix ga = side_grad(sa);
  RowMatrix gb = side_grad(sb);
  const double inv_scale = w.invariance * 2.0 / static_cast<double>(n * d);
  ga += inv_scale * diff;
  gb -= inv_scale * diff;

  return make_op(Tensor({1}, {loss}), {a, b}, [ga, gb](const Tensor& g, std::vector<Tensor*>& in) {
    if (in[0]) in[0]->matrix() += g[0] * ga;
    if (in[1]) in[1]->matrix() += g[0] * gb;
  });
}

SSLObjective::SSLObjective(SSLKind kind, SSLHyperparameters hyper, int64_t embedding_dim, uint64_t seed)
    : kind_(kind), hyper_(hyper), dim_(embedding_dim) {
  if (embedding_dim <= 0) throw std::invalid_argument("SSLObjective: embedding_dim must be positive");
  if ((kind == SSLKind::kSimCLR || kind == SSLKind::kMoCoV2Plus) && !(hyper.temperature > 0.0)) {
    throw std::invalid_argument("SSLObjective: temperature must be > 0");
  }
  if (!(hyper.ema_momentum >= 0.0 && hyper.ema_momentum <= 1.0)) {
    throw std::invalid_argument("SSLObjective: momentum coefficient must lie in [0, 1]");
  }
  if (uses_queue(kind)) {
    if (hyper.queue_size < 1) throw std::invalid_argument("SSLObjective: queue_size must be >= 1");
    capacity_ = hyper.queue_size;
    // Random unit keys until real keys displace them.
    Rng rng(derive_seed(seed, 0x0e0e));
    Tensor init({capacity_, dim_});
    for (double& v : init.values()) v = rng.normal();
    const Normalized n = normalize_rows(init);
    storage_.assign(n.unit.data(), n.unit.data() + n.unit.size());
  }
}

void SSLObjective::queue_update(const Tensor& keys) {
  if (!uses_queue(kind_)) throw std::logic_error("queue_update called on " + to_string(kind_) + " objective");
  if (keys.rank() != 2 || keys.dim(1) != dim_) {
    throw std::invalid_argument("queue_update: keys must be [N, " + std::to_string(dim_) + "]");
  }
  const Normalized n = normalize_rows(keys);
  for (Eigen::Index i = 0; i < n.unit.rows(); ++i) {
    std::copy(n.unit.row(i).data(), n.unit.row(i).data() + dim_, storage_.begin() + head_ * dim_);
    head_ = (head_ + 1) % capacity_;
  }
}

Tensor SSLObjective::queue() const {
  Tensor out({capacity_, dim_});
  for (int64_t i = 0; i < capacity_; ++i) {
    const int64_t slot = (head_ + i) % capacity_;
    std::copy(storage_.begin() + slot * dim_, storage_.begin() + (slot + 1) * dim_, out.data() + i * dim_);
  }
  return out;
}

void SSLObjective::restore_queue(std::vector<double> storage, int64_t head) {
  if (static_cast<int64_t>(storage.size()) != capacity_ * dim_ || head < 0 || (capacity_ > 0 && head >= capacity_)) {
    throw std::invalid_argument("restore_queue: state does not match queue geometry");
  }
  storage_ = std::move(storage);
  head_ = head;
}

Var SSLObjective::directional_loss(const Var& online, const Var& target) const {
  switch (kind_) {
    case SSLKind::kSimCLR: return nt_xent_loss(online, target, hyper_.temperature);
    case SSLKind::kMoCoV2Plus: {
      check_pair(online, target, "ssl_loss");
      if (online.shape()[1] != dim_) throw std::invalid_argument("ssl_loss: embedding width does not match the queue");
      return info_nce_loss(online, target, queue(), hyper_.temperature);
    }
    case SSLKind::kBYOL: return byol_loss(online, target);
    case SSLKind::kVICReg: return vicreg_loss(online, target, hyper_.vicreg);
  }
  throw std::logic_error("unhandled SSL kind");
}

Var SSLObjective::loss(const Var& online, const Var& target) const {
  check_pair(online, target, "ssl_loss");
  const bool asymmetric = kind_ == SSLKind::kBYOL || kind_ == SSLKind::kMoCoV2Plus;
  if (hyper_.symmetrize && asymmetric) {
    return ops::scale(ops::add(directional_loss(online, target), directional_loss(target, online)), 0.5);
  }
  return directional_loss(online, target);
}

nn::Sequential make_projector(SSLKind kind, int64_t in_dim, int64_t hidden_dim, int64_t out_dim, Rng& rng) {
  nn::Sequential p;
  p.emplace<nn::Linear>(in_dim, hidden_dim, rng);
  p.emplace<nn::BatchNorm>(hidden_dim);
  p.emplace<nn::ReLU>();
  if (kind == SSLKind::kVICReg) {
    p.emplace<nn::Linear>(hidden_dim, hidden_dim, rng);
    p.emplace<nn::BatchNorm>(hidden_dim);
    p.emplace<nn::ReLU>();
  }
  p.emplace<nn::Linear>(hidden_dim, out_dim, rng);
  return p;
}

nn::Sequential make_predictor(int64_t dim, int64_t hidden_dim, Rng& rng) {
  nn::Sequential p;
  p.emplace<nn::Linear>(dim, hidden_dim, rng);
  p.emplace<nn::BatchNorm>(hidden_dim);
  p.emplace<nn::ReLU>();
  p.emplace<nn::Linear>(hidden_dim, dim, rng);
  return p;
}

}  // namespace kaizen::ssl
