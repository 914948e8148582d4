#include "mass/gan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mass/gan/network.hpp"

namespace mass::gan {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// users x steps view of one channel of a sequence.
Matrix channel(const Sequence& seq, Eigen::Index col) {
  Matrix s(seq.front().rows(), static_cast<Eigen::Index>(seq.size()));
  for (std::size_t k = 0; k < seq.size(); ++k) s.col(k) = seq[k].col(col);
  return s;
}

// Adds a users x steps gradient into column `col` of a sequence gradient.
void scatter(const Matrix& ds, Eigen::Index col, double weight, Sequence& out) {
  for (std::size_t k = 0; k < out.size(); ++k) out[k].col(col) += weight * ds.col(k);
}

Sequence zeros_like(const Sequence& seq) {
  Sequence out(seq.size());
  for (std::size_t k = 0; k < seq.size(); ++k)
    out[k] = Matrix::Zero(seq[k].rows(), seq[k].cols());
  return out;
}

// Pearson r of two rows with dr/dx, dr/dy. Constant rows give r = 0 and
// zero gradient.
double pearson_grad(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                    const Eigen::Ref<const Eigen::RowVectorXd>& y, Eigen::RowVectorXd* dx,
                    Eigen::RowVectorXd* dy) {
  const Eigen::RowVectorXd cx = x.array() - x.mean();
  const Eigen::RowVectorXd cy = y.array() - y.mean();
  const double sxx = cx.squaredNorm(), syy = cy.squaredNorm(), sxy = cx.dot(cy);
  if (sxx == 0.0 || syy == 0.0) {
    if (dx) dx->setZero(x.size());
    if (dy) dy->setZero(y.size());
    return 0.0;
  }
  const double norm = std::sqrt(sxx * syy);
  if (dx) *dx = (cy - (sxy / sxx) * cx) / norm;
  if (dy) *dy = (cx - (sxy / syy) * cy) / norm;
  return sxy / norm;
}

double corr_term(const Matrix& xs, const Matrix& ys, double c_target, Matrix* dxs,
                 Matrix* dys) {
  const Eigen::Index users = xs.rows();
  std::vector<Eigen::RowVectorXd> gx(users), gy(users);
  double mean_r = 0.0;
  for (Eigen::Index i = 0; i < users; ++i)
    mean_r += pearson_grad(xs.row(i), ys.row(i), dxs ? &gx[i] : nullptr,
                           dys ? &gy[i] : nullptr);
  mean_r /= static_cast<double>(users);
  const double diff = mean_r - c_target;
  if (dxs) {
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    const double w = sign / static_cast<double>(users);
    dxs->resize(xs.rows(), xs.cols());
    dys->resize(ys.rows(), ys.cols());
    for (Eigen::Index i = 0; i < users; ++i) {
      dxs->row(i) = w * gx[i];
      dys->row(i) = w * gy[i];
    }
  }
  return std::abs(diff);
}

double moment_term(const Matrix& s, const metrics::MomentTriple& target, Matrix* ds) {
  const Eigen::Index users = s.rows();
  const double n = static_cast<double>(s.cols());
  struct Row {
    double mu, m2, m3, sigma, skew;
  };
  std::vector<Row> rows(users);
  double sum_mu = 0.0, sum_sigma = 0.0, sum_skew = 0.0;
  for (Eigen::Index i = 0; i < users; ++i) {
    const double mu = s.row(i).mean();
    const Eigen::RowVectorXd c = s.row(i).array() - mu;
    const double m2 = c.squaredNorm() / n;
    const double m3 = c.array().cube().sum() / n;
    const double sigma = std::sqrt(m2);
    const double skew = m2 > 0.0 ? m3 / (m2 * sigma) : 0.0;
    rows[i] = {mu, m2, m3, sigma, skew};
    sum_mu += mu;
    sum_sigma += sigma;
    sum_skew += skew;
  }
  const double b = static_cast<double>(users);
  const double e_mu = target.mu - sum_mu / b;
  const double e_sigma = target.sigma - sum_sigma / b;
  const double e_skew = target.skew - sum_skew / b;
  if (ds) {
    const double g_mu = -2.0 * e_mu / b, g_sigma = -2.0 * e_sigma / b,
                 g_skew = -2.0 * e_skew / b;
    ds->resize(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < users; ++i) {
      const Row& r = rows[i];
      const Eigen::RowVectorXd c = s.row(i).array() - r.mu;
      Eigen::RowVectorXd g = Eigen::RowVectorXd::Constant(s.cols(), g_mu / n);
      if (r.m2 > 0.0) {
        g += (g_sigma / (n * r.sigma)) * c;
        const Eigen::RowVectorXd dm3 = (3.0 * c.array().square() - 3.0 * r.m2) / n;
        const Eigen::RowVectorXd dm2 = 2.0 * c / n;
        g += g_skew * (dm3 / std::pow(r.m2, 1.5) - 1.5 * r.m3 / std::pow(r.m2, 2.5) * dm2);
      }
      ds->row(i) = g;
    }
  }
  return e_mu * e_mu + e_sigma * e_sigma + e_skew * e_skew;
}

// log(max(1 - D_i, eps)) averaged over users, with dL/dlogits.
double disc_term(const Sequence& logits, Sequence* d_logits) {
  const Eigen::Index users = logits.front().rows();
  const double steps = static_cast<double>(logits.size());
  std::vector<double> d(users, 0.0);
  for (const auto& l : logits)
    for (Eigen::Index i = 0; i < users; ++i) d[i] += sigmoid(l(i, 0)) / steps;
  double loss = 0.0;
  std::vector<double> coef(users, 0.0);
  for (Eigen::Index i = 0; i < users; ++i) {
    const double arg = 1.0 - d[i];
    if (arg > kLogClamp) {
      loss += std::log(arg);
      coef[i] = -1.0 / arg;
    } else {
      loss += std::log(kLogClamp);
    }
  }
  const double b = static_cast<double>(users);
  if (d_logits) {
    d_logits->resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
      Matrix g(users, 1);
      for (Eigen::Index i = 0; i < users; ++i) {
        const double p = sigmoid(logits[k](i, 0));
        g(i, 0) = coef[i] / b * p * (1.0 - p) / steps;
      }
      (*d_logits)[k] = std::move(g);
    }
  }
  return loss / b;
}

Sequence masked(const Sequence& seq, Eigen::Index keep) {
  Sequence out = seq;
  for (auto& m : out) m.col(1 - keep).setZero();
  return out;
}

Matrix logits_matrix(const Sequence& logits) { return channel(logits, 0); }

Sequence to_logit_sequence(const Matrix& ds) {
  Sequence out(ds.cols());
  for (Eigen::Index k = 0; k < ds.cols(); ++k) out[k] = ds.col(k);
  return out;
}

struct Evaluation {
  LossTerms terms;
  Sequence d_disc, d_corr, d_mom;
};

// Generator-side loss terms on a generated sequence, optionally with their
// gradients with respect to the sequence.
Evaluation evaluate(const GanModel& model, const Sequence& y, StatsMode mode,
                    bool want_disc, bool want_stats, bool want_grad) {
  Evaluation ev;
  const auto& cfg = model.config;
  if (want_disc) {
    auto tape = discriminator_forward(cfg, model.discriminator, y);
    Sequence d_logits;
    ev.terms.disc = disc_term(tape.logits, want_grad ? &d_logits : nullptr);
    if (want_grad)
      discriminator_backward(cfg, model.discriminator, tape, d_logits, {}, &ev.d_disc);
  }
  if (!want_stats) return ev;

  if (mode == StatsMode::raw) {
    const Matrix dl = channel(y, 0), ul = channel(y, 1);
    Matrix d_dl, d_ul, dm_dl, dm_ul;
    ev.terms.corr = corr_term(dl, ul, model.stats.c_target, want_grad ? &d_dl : nullptr,
                              want_grad ? &d_ul : nullptr);
    ev.terms.mom = moment_term(dl, model.stats.moments[0], want_grad ? &dm_dl : nullptr) +
                   moment_term(ul, model.stats.moments[1], want_grad ? &dm_ul : nullptr);
    if (want_grad) {
      ev.d_corr = zeros_like(y);
      ev.d_mom = zeros_like(y);
      scatter(d_dl, 0, 1.0, ev.d_corr);
      scatter(d_ul, 1, 1.0, ev.d_corr);
      scatter(dm_dl, 0, 1.0, ev.d_mom);
      scatter(dm_ul, 1, 1.0, ev.d_mom);
    }
    return ev;
  }

  // Representation mode: logits of each channel with the other zeroed.
  auto tape_dl = discriminator_forward(cfg, model.discriminator, masked(y, 0));
  auto tape_ul = discriminator_forward(cfg, model.discriminator, masked(y, 1));
  const Matrix r_dl = logits_matrix(tape_dl.logits), r_ul = logits_matrix(tape_ul.logits);
  Matrix d_dl, d_ul, dm_dl, dm_ul;
  ev.terms.corr = corr_term(r_dl, r_ul, model.stats.c_target, want_grad ? &d_dl : nullptr,
                            want_grad ? &d_ul : nullptr);
  ev.terms.mom = moment_term(r_dl, model.stats.moments[0], want_grad ? &dm_dl : nullptr) +
                 moment_term(r_ul, model.stats.moments[1], want_grad ? &dm_ul : nullptr);
  if (want_grad) {
    auto input_grad = [&](const DiscriminatorTape& tape, const Matrix& ds, Eigen::Index col) {
      Sequence d_in;
      discriminator_backward(cfg, model.discriminator, tape, to_logit_sequence(ds), {}, &d_in);
      Sequence out = zeros_like(y);
      for (std::size_t k = 0; k < y.size(); ++k) out[k].col(col) = d_in[k].col(col);
      return out;
    };
    ev.d_corr = input_grad(tape_dl, d_dl, 0);
    const Sequence ul_part = input_grad(tape_ul, d_ul, 1);
    ev.d_mom = input_grad(tape_dl, dm_dl, 0);
    const Sequence ul_mom = input_grad(tape_ul, dm_ul, 1);
    for (std::size_t k = 0; k < y.size(); ++k) {
      ev.d_corr[k] += ul_part[k];
      ev.d_mom[k] += ul_mom[k];
    }
  }
  return ev;
}

void require_finite(double v, const char* what, const ParamVector& params) {
  if (std::isfinite(v)) return;
  double max_abs = 0.0;
  std::size_t bad = 0;
  for (double p : params) {
    if (!std::isfinite(p)) ++bad;
    else max_abs = std::max(max_abs, std::abs(p));
  }
  std::ostringstream msg;
  msg << what << " is not finite (max |param| = " << max_abs << ", non-finite params = "
      << bad << ")";
  throw Error(msg.str());
}

}  // namespace

std::vector<double> DiscriminatorOutput::trace_probs() const {
  std::vector<double> out(users, 0.0);
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t k = 0; k < steps; ++k) out[u] += probs[u * steps + k];
    out[u] /= static_cast<double>(steps);
  }
  return out;
}

TraceTensor generator_forward(const GanModel& model, const LatentBatch& z) {
  auto tape = generator_forward(model.config, model.generator, to_sequence(z));
  return to_trace(tape.output);
}

DiscriminatorOutput discriminator_forward(const GanModel& model, const TraceTensor& trace) {
  auto tape = discriminator_forward(model.config, model.discriminator, to_sequence(trace));
  DiscriminatorOutput out{trace.users(), trace.steps(), {}, {}};
  out.logits.resize(trace.users() * trace.steps());
  out.probs.resize(out.logits.size());
  for (std::size_t u = 0; u < trace.users(); ++u)
    for (std::size_t k = 0; k < trace.steps(); ++k) {
      const double l = tape.logits[k](u, 0);
      out.logits[u * trace.steps() + k] = l;
      out.probs[u * trace.steps() + k] = sigmoid(l);
    }
  return out;
}

double loss_discrimination(std::span<const double> gen_probs) {
  if (gen_probs.empty()) throw Error("loss_discrimination: empty batch");
  double sum = 0.0;
  for (double p : gen_probs) sum += std::log(std::max(1.0 - p, kLogClamp));
  return sum / static_cast<double>(gen_probs.size());
}

double loss_discriminator_train(std::span<const double> real_probs,
                                std::span<const double> gen_probs) {
  if (real_probs.size() != gen_probs.size() || real_probs.empty())
    throw Error("loss_discriminator_train: batches must be equal and non-empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < real_probs.size(); ++i)
    sum += -std::log(std::max(real_probs[i], kLogClamp)) -
           std::log(std::max(1.0 - gen_probs[i], kLogClamp));
  return sum / static_cast<double>(real_probs.size());
}

double loss_corr_dist(const GanModel& model, const TraceTensor& gen, StatsMode mode) {
  return evaluate(model, to_sequence(gen), mode, false, true, false).terms.corr;
}

double loss_mom_dist(const GanModel& model, const TraceTensor& gen, StatsMode mode) {
  return evaluate(model, to_sequence(gen), mode, false, true, false).terms.mom;
}

double loss_total(const LossTerms& terms, Deltas deltas) {
  return terms.disc + deltas.corr * terms.corr + deltas.mom * terms.mom;
}

LossTerms generator_loss_terms(const GanModel& model, const TraceTensor& gen,
                               StatsMode mode) {
  return evaluate(model, to_sequence(gen), mode, true, true, false).terms;
}

Gradient generator_gradient(const GanModel& model, const LatentBatch& z,
                            LossSelector selector, Deltas deltas, StatsMode mode) {
  const auto& cfg = model.config;
  auto tape = generator_forward(cfg, model.generator, to_sequence(z));
  const bool need_disc = selector == LossSelector::disc || selector == LossSelector::total;
  const bool need_stats = selector != LossSelector::disc;
  Evaluation ev = evaluate(model, tape.output, mode, need_disc, need_stats, true);

  double w_disc = 0.0, w_corr = 0.0, w_mom = 0.0;
  switch (selector) {
    case LossSelector::disc:
      w_disc = 1.0;
      break;
    case LossSelector::corr:
      w_corr = 1.0;
      break;
    case LossSelector::mom:
      w_mom = 1.0;
      break;
    case LossSelector::total:
      w_disc = 1.0;
      w_corr = deltas.corr;
      w_mom = deltas.mom;
      break;
  }

  Gradient out;
  out.terms = ev.terms;
  out.loss = w_disc * ev.terms.disc + w_corr * ev.terms.corr + w_mom * ev.terms.mom;
  require_finite(out.loss, "generator loss", model.generator);

  Sequence d_y = zeros_like(tape.output);
  for (std::size_t k = 0; k < d_y.size(); ++k) {
    if (w_disc != 0.0) d_y[k] += w_disc * ev.d_disc[k];
    if (w_corr != 0.0) d_y[k] += w_corr * ev.d_corr[k];
    if (w_mom != 0.0) d_y[k] += w_mom * ev.d_mom[k];
  }
  out.grad.assign(model.generator.size(), 0.0);
  generator_backward(cfg, model.generator, tape, d_y, out.grad);
  for (double g : out.grad) require_finite(g, "generator gradient", model.generator);
  out.generated = to_trace(tape.output);
  return out;
}

Gradient discriminator_gradient(const GanModel& model, const TraceTensor& real,
                                const TraceTensor& gen) {
  if (real.users() != gen.users() || real.steps() != gen.steps())
    throw Error("discriminator_gradient: real and generated batches differ in shape");
  const auto& cfg = model.config;
  auto tape_real = discriminator_forward(cfg, model.discriminator, to_sequence(real));
  auto tape_gen = discriminator_forward(cfg, model.discriminator, to_sequence(gen));
  const Eigen::Index users = static_cast<Eigen::Index>(real.users());
  const double steps = static_cast<double>(real.steps());
  const double b = static_cast<double>(users);

  auto trace_prob = [&](const Sequence& logits) {
    std::vector<double> d(users, 0.0);
    for (const auto& l : logits)
      for (Eigen::Index i = 0; i < users; ++i) d[i] += sigmoid(l(i, 0)) / steps;
    return d;
  };
  const auto d_real = trace_prob(tape_real.logits);
  const auto d_gen = trace_prob(tape_gen.logits);

  Gradient out;
  out.loss = loss_discriminator_train(d_real, d_gen);
  require_finite(out.loss, "discriminator loss", model.discriminator);

  // dL/dD_i for both halves, then through the mean-of-sigmoids pooling.
  std::vector<double> c_real(users, 0.0), c_gen(users, 0.0);
  for (Eigen::Index i = 0; i < users; ++i) {
    if (d_real[i] > kLogClamp) c_real[i] = -1.0 / d_real[i];
    if (1.0 - d_gen[i] > kLogClamp) c_gen[i] = 1.0 / (1.0 - d_gen[i]);
  }
  auto d_logits = [&](const Sequence& logits, const std::vector<double>& coef) {
    Sequence out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
      Matrix g(users, 1);
      for (Eigen::Index i = 0; i < users; ++i) {
        const double p = sigmoid(logits[k](i, 0));
        g(i, 0) = coef[i] / b * p * (1.0 - p) / steps;
      }
      out[k] = std::move(g);
    }
    return out;
  };
  out.grad.assign(model.discriminator.size(), 0.0);
  discriminator_backward(cfg, model.discriminator, tape_real,
                         d_logits(tape_real.logits, c_real), out.grad, nullptr);
  discriminator_backward(cfg, model.discriminator, tape_gen,
                         d_logits(tape_gen.logits, c_gen), out.grad, nullptr);
  for (double g : out.grad) require_finite(g, "discriminator gradient", model.discriminator);
  return out;
}

}  // namespace mass::gan
