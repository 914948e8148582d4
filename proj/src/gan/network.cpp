#include "mass/gan/network.hpp"

#include <cmath>
#include <random>

namespace mass::gan {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using ConstRow = Eigen::Map<const Eigen::RowVectorXd>;
using MutRow = Eigen::Map<Eigen::RowVectorXd>;

struct CellShape {
  std::size_t input;
  std::size_t hidden;

  std::size_t count() const { return (input + hidden) * 4 * hidden + 4 * hidden; }
};

struct CellParams {
  ConstMap wx, wh;
  ConstRow b;
};

CellParams cell_params(const double* p, const CellShape& s) {
  const std::size_t g = 4 * s.hidden;
  return {ConstMap(p, s.input, g), ConstMap(p + s.input * g, s.hidden, g),
          ConstRow(p + (s.input + s.hidden) * g, g)};
}

struct CellGrads {
  MutMap wx, wh;
  MutRow b;
};

CellGrads cell_grads(double* p, const CellShape& s) {
  const std::size_t g = 4 * s.hidden;
  return {MutMap(p, s.input, g), MutMap(p + s.input * g, s.hidden, g),
          MutRow(p + (s.input + s.hidden) * g, g)};
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Vectorized through Eigen's packet exp. Inputs are clamped so exp never
// overflows; both functions are saturated well before the clamp.
template <typename Block>
void sigmoid_inplace(Block&& b) {
  b = (1.0 + (-b.array().max(-40.0).min(40.0)).exp()).inverse().matrix();
}

template <typename Block>
void tanh_inplace(Block&& b) {
  b = (2.0 / (1.0 + (-2.0 * b.array().max(-20.0).min(20.0)).exp()) - 1.0).matrix();
}

LstmTape lstm_forward(const double* p, const CellShape& s, const Sequence& xs,
                      bool reverse) {
  const std::size_t steps = xs.size();
  const Eigen::Index batch = xs.front().rows();
  const Eigen::Index h = static_cast<Eigen::Index>(s.hidden);
  const CellParams w = cell_params(p, s);

  LstmTape tape;
  tape.reverse = reverse;
  tape.inputs = xs;
  tape.gates.resize(steps);
  tape.cells.resize(steps);
  tape.hidden.resize(steps);
  tape.tanh_cells.resize(steps);

  Matrix h_prev = Matrix::Zero(batch, h);
  Matrix c_prev = Matrix::Zero(batch, h);
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t t = reverse ? steps - 1 - n : n;
    Matrix a = xs[t] * w.wx + h_prev * w.wh;
    a.rowwise() += w.b;
    sigmoid_inplace(a.leftCols(2 * h));
    tanh_inplace(a.middleCols(2 * h, h));
    sigmoid_inplace(a.rightCols(h));
    Matrix c = a.middleCols(h, h).cwiseProduct(c_prev) +
               a.leftCols(h).cwiseProduct(a.middleCols(2 * h, h));
    Matrix tc = c;
    tanh_inplace(tc);
    Matrix hn = a.rightCols(h).cwiseProduct(tc);
    tape.gates[t] = std::move(a);
    tape.cells[t] = c;
    tape.tanh_cells[t] = std::move(tc);
    tape.hidden[t] = hn;
    h_prev = std::move(hn);
    c_prev = std::move(c);
  }
  return tape;
}

// d_hidden[t] is dL/dh_t from above. Parameter gradients accumulate into
// `grad` when non-null; dL/dx_t goes to d_inputs when non-null.
void lstm_backward(const double* p, const CellShape& s, const LstmTape& tape,
                   const Sequence& d_hidden, double* grad, Sequence* d_inputs) {
  const std::size_t steps = tape.inputs.size();
  const Eigen::Index batch = tape.inputs.front().rows();
  const Eigen::Index h = static_cast<Eigen::Index>(s.hidden);
  const CellParams w = cell_params(p, s);

  if (d_inputs) d_inputs->assign(steps, Matrix());
  Matrix dh_next = Matrix::Zero(batch, h);
  Matrix dc_next = Matrix::Zero(batch, h);
  Matrix da(batch, 4 * h);
  const Matrix zeros = Matrix::Zero(batch, h);

  for (std::size_t n = steps; n-- > 0;) {
    const std::size_t t = tape.reverse ? steps - 1 - n : n;
    const bool first = n == 0;
    const std::size_t t_prev = tape.reverse ? t + 1 : t - 1;
    const Matrix& c_prev = first ? zeros : tape.cells[t_prev];
    const Matrix& h_prev = first ? zeros : tape.hidden[t_prev];
    const Matrix& gates = tape.gates[t];
    const Matrix& tc = tape.tanh_cells[t];

    Matrix dh = d_hidden[t] + dh_next;
    for (Eigen::Index r = 0; r < batch; ++r) {
      const double* gr = gates.row(r).data();
      const double* tcr = tc.row(r).data();
      const double* dhr = dh.row(r).data();
      const double* cpr = c_prev.row(r).data();
      double* dcn = dc_next.row(r).data();
      double* dar = da.row(r).data();
      for (Eigen::Index j = 0; j < h; ++j) {
        const double i = gr[j], f = gr[h + j], g = gr[2 * h + j], o = gr[3 * h + j];
        const double dc = dhr[j] * o * (1.0 - tcr[j] * tcr[j]) + dcn[j];
        const double d_o = dhr[j] * tcr[j];
        dar[j] = dc * g * i * (1.0 - i);
        dar[h + j] = dc * cpr[j] * f * (1.0 - f);
        dar[2 * h + j] = dc * i * (1.0 - g * g);
        dar[3 * h + j] = d_o * o * (1.0 - o);
        dcn[j] = dc * f;
      }
    }
    if (grad) {
      CellGrads gw = cell_grads(grad, s);
      gw.wx.noalias() += tape.inputs[t].transpose() * da;
      if (!first) gw.wh.noalias() += h_prev.transpose() * da;
      gw.b += da.colwise().sum();
    }
    if (d_inputs) (*d_inputs)[t].noalias() = da * w.wx.transpose();
    dh_next.noalias() = da * w.wh.transpose();
  }
}

std::vector<CellShape> generator_cells(const GanConfig& cfg) {
  std::vector<CellShape> cells;
  for (std::size_t l = 0; l < cfg.num_layers; ++l)
    cells.push_back({l == 0 ? GanConfig::latent_dim : cfg.hidden_size, cfg.hidden_size});
  return cells;
}

// Forward and backward cell per layer, interleaved.
std::vector<CellShape> discriminator_cells(const GanConfig& cfg) {
  std::vector<CellShape> cells;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::size_t in = l == 0 ? GanConfig::feature_dim : 2 * cfg.hidden_size;
    cells.push_back({in, cfg.hidden_size});
    cells.push_back({in, cfg.hidden_size});
  }
  return cells;
}

void check_sequence(const Sequence& seq, std::size_t width, const char* what) {
  if (seq.empty()) throw Error(std::string(what) + ": empty sequence");
  for (const auto& m : seq)
    if (static_cast<std::size_t>(m.cols()) != width || m.rows() != seq.front().rows())
      throw Error(std::string(what) + ": dimension mismatch");
}

}  // namespace

namespace {

void init_cell(double* p, const CellShape& s, std::mt19937_64& rng, double forget_bias) {
  const std::size_t g = 4 * s.hidden;
  auto fill = [&](double* w, std::size_t n, double bound) {
    std::uniform_real_distribution<double> d(-bound, bound);
    for (std::size_t i = 0; i < n; ++i) w[i] = d(rng);
  };
  fill(p, s.input * g, std::sqrt(3.0 / static_cast<double>(s.input)));
  fill(p + s.input * g, s.hidden * g, std::sqrt(3.0 / static_cast<double>(s.hidden)));
  double* b = p + (s.input + s.hidden) * g;
  for (std::size_t j = 0; j < g; ++j) b[j] = j >= s.hidden && j < 2 * s.hidden ? forget_bias : 0.0;
}

}  // namespace

void init_generator(const GanConfig& cfg, std::span<double> theta, std::mt19937_64& rng) {
  double* p = theta.data();
  for (const auto& cell : generator_cells(cfg)) {
    init_cell(p, cell, rng, 1.0);
    p += cell.count();
  }
  std::uniform_real_distribution<double> d(-std::sqrt(3.0 / cfg.hidden_size),
                                           std::sqrt(3.0 / cfg.hidden_size));
  for (std::size_t i = 0; i < cfg.hidden_size * GanConfig::feature_dim; ++i) *p++ = d(rng);
  for (std::size_t i = 0; i < GanConfig::feature_dim; ++i) *p++ = 0.0;
}

void init_discriminator(const GanConfig& cfg, std::span<double> omega, std::mt19937_64& rng) {
  double* p = omega.data();
  for (const auto& cell : discriminator_cells(cfg)) {
    init_cell(p, cell, rng, 1.0);
    p += cell.count();
  }
  const double bound = std::sqrt(3.0 / (2.0 * cfg.hidden_size));
  std::uniform_real_distribution<double> d(-bound, bound);
  for (std::size_t i = 0; i < 2 * cfg.hidden_size; ++i) *p++ = d(rng);
  *p = 0.0;
}

std::size_t generator_param_count(const GanConfig& cfg) {
  std::size_t n = 0;
  for (const auto& c : generator_cells(cfg)) n += c.count();
  return n + cfg.hidden_size * GanConfig::feature_dim + GanConfig::feature_dim;
}

std::size_t discriminator_param_count(const GanConfig& cfg) {
  std::size_t n = 0;
  for (const auto& c : discriminator_cells(cfg)) n += c.count();
  return n + 2 * cfg.hidden_size + 1;
}

Sequence to_sequence(const TraceTensor& trace) {
  Sequence seq(trace.steps(), Matrix(trace.users(), kFeatureCount));
  for (std::size_t u = 0; u < trace.users(); ++u)
    for (std::size_t k = 0; k < trace.steps(); ++k)
      for (std::size_t f = 0; f < kFeatureCount; ++f)
        seq[k](u, f) = trace.at(u, k, static_cast<Feature>(f));
  return seq;
}

Sequence to_sequence(const LatentBatch& z) {
  Sequence seq(z.steps, Matrix(z.users, GanConfig::latent_dim));
  for (std::size_t u = 0; u < z.users; ++u)
    for (std::size_t k = 0; k < z.steps; ++k)
      for (std::size_t d = 0; d < GanConfig::latent_dim; ++d) seq[k](u, d) = z.at(u, k, d);
  return seq;
}

TraceTensor to_trace(const Sequence& seq) {
  if (seq.empty()) return {};
  TraceTensor trace(seq.front().rows(), seq.size());
  for (std::size_t k = 0; k < seq.size(); ++k)
    for (Eigen::Index u = 0; u < seq[k].rows(); ++u)
      for (std::size_t f = 0; f < kFeatureCount; ++f)
        trace.at(u, k, static_cast<Feature>(f)) = seq[k](u, f);
  return trace;
}

GeneratorTape generator_forward(const GanConfig& cfg, std::span<const double> theta,
                                const Sequence& latent) {
  if (theta.size() != generator_param_count(cfg))
    throw Error("generator_forward: parameter count mismatch");
  check_sequence(latent, GanConfig::latent_dim, "generator_forward");

  GeneratorTape tape;
  const double* p = theta.data();
  const Sequence* xs = &latent;
  for (const auto& cell : generator_cells(cfg)) {
    tape.layers.push_back(lstm_forward(p, cell, *xs, false));
    xs = &tape.layers.back().hidden;
    p += cell.count();
  }
  ConstMap w(p, cfg.hidden_size, GanConfig::feature_dim);
  ConstRow b(p + cfg.hidden_size * GanConfig::feature_dim, GanConfig::feature_dim);
  tape.output.resize(latent.size());
  for (std::size_t t = 0; t < latent.size(); ++t) {
    Matrix y = (*xs)[t] * w;
    y.rowwise() += b;
    tape.output[t] = y.unaryExpr([](double v) { return sigmoid(v); });
  }
  return tape;
}

void generator_backward(const GanConfig& cfg, std::span<const double> theta,
                        const GeneratorTape& tape, const Sequence& d_output,
                        std::span<double> grad) {
  if (grad.size() != theta.size()) throw Error("generator_backward: gradient size mismatch");
  const auto cells = generator_cells(cfg);
  std::vector<const double*> offsets;
  std::vector<double*> grad_offsets;
  const double* p = theta.data();
  double* g = grad.data();
  for (const auto& cell : cells) {
    offsets.push_back(p);
    grad_offsets.push_back(g);
    p += cell.count();
    g += cell.count();
  }
  ConstMap w(p, cfg.hidden_size, GanConfig::feature_dim);
  MutMap gw(g, cfg.hidden_size, GanConfig::feature_dim);
  MutRow gb(g + cfg.hidden_size * GanConfig::feature_dim, GanConfig::feature_dim);

  const Sequence& top = tape.layers.back().hidden;
  Sequence d_hidden(top.size());
  for (std::size_t t = 0; t < top.size(); ++t) {
    const Matrix& y = tape.output[t];
    Matrix d_pre = d_output[t].cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
    gw.noalias() += top[t].transpose() * d_pre;
    gb += d_pre.colwise().sum();
    d_hidden[t].noalias() = d_pre * w.transpose();
  }
  for (std::size_t l = cells.size(); l-- > 0;) {
    Sequence d_in;
    lstm_backward(offsets[l], cells[l], tape.layers[l], d_hidden, grad_offsets[l],
                  l > 0 ? &d_in : nullptr);
    d_hidden = std::move(d_in);
  }
}

DiscriminatorTape discriminator_forward(const GanConfig& cfg,
                                        std::span<const double> omega,
                                        const Sequence& input) {
  if (omega.size() != discriminator_param_count(cfg))
    throw Error("discriminator_forward: parameter count mismatch");
  check_sequence(input, GanConfig::feature_dim, "discriminator_forward");

  const auto cells = discriminator_cells(cfg);
  const Eigen::Index h = static_cast<Eigen::Index>(cfg.hidden_size);
  DiscriminatorTape tape;
  const double* p = omega.data();
  Sequence xs = input;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    tape.forward_layers.push_back(lstm_forward(p, cells[2 * l], xs, false));
    p += cells[2 * l].count();
    tape.backward_layers.push_back(lstm_forward(p, cells[2 * l + 1], xs, true));
    p += cells[2 * l + 1].count();
    for (std::size_t t = 0; t < xs.size(); ++t) {
      Matrix both(xs[t].rows(), 2 * h);
      both.leftCols(h) = tape.forward_layers.back().hidden[t];
      both.rightCols(h) = tape.backward_layers.back().hidden[t];
      xs[t] = std::move(both);
    }
  }
  ConstMap w(p, 2 * cfg.hidden_size, 1);
  const double b = p[2 * cfg.hidden_size];
  tape.logits.resize(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    tape.logits[t] = xs[t] * w;
    tape.logits[t].array() += b;
  }
  tape.top = std::move(xs);
  return tape;
}

void discriminator_backward(const GanConfig& cfg, std::span<const double> omega,
                            const DiscriminatorTape& tape, const Sequence& d_logits,
                            std::span<double> grad, Sequence* d_input) {
  const bool want_params = !grad.empty();
  if (want_params && grad.size() != omega.size())
    throw Error("discriminator_backward: gradient size mismatch");
  const auto cells = discriminator_cells(cfg);
  const Eigen::Index h = static_cast<Eigen::Index>(cfg.hidden_size);
  std::vector<const double*> offsets;
  std::vector<double*> grad_offsets;
  const double* p = omega.data();
  double* g = want_params ? grad.data() : nullptr;
  for (const auto& cell : cells) {
    offsets.push_back(p);
    grad_offsets.push_back(g);
    p += cell.count();
    if (g) g += cell.count();
  }
  ConstMap w(p, 2 * cfg.hidden_size, 1);

  const std::size_t steps = d_logits.size();
  Sequence d_top(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    if (want_params) {
      MutMap gw(g, 2 * cfg.hidden_size, 1);
      gw.noalias() += tape.top[t].transpose() * d_logits[t];
      g[2 * cfg.hidden_size] += d_logits[t].sum();
    }
    d_top[t].noalias() = d_logits[t] * w.transpose();
  }

  for (std::size_t l = cfg.num_layers; l-- > 0;) {
    Sequence d_fwd(steps), d_bwd(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      d_fwd[t] = d_top[t].leftCols(h);
      d_bwd[t] = d_top[t].rightCols(h);
    }
    const bool need_input = l > 0 || d_input != nullptr;
    Sequence dx_fwd, dx_bwd;
    lstm_backward(offsets[2 * l], cells[2 * l], tape.forward_layers[l], d_fwd,
                  grad_offsets[2 * l], need_input ? &dx_fwd : nullptr);
    lstm_backward(offsets[2 * l + 1], cells[2 * l + 1], tape.backward_layers[l], d_bwd,
                  grad_offsets[2 * l + 1], need_input ? &dx_bwd : nullptr);
    if (!need_input) break;
    for (std::size_t t = 0; t < steps; ++t) dx_fwd[t] += dx_bwd[t];
    d_top = std::move(dx_fwd);
  }
  if (d_input) *d_input = std::move(d_top);
}

}  // namespace mass::gan
