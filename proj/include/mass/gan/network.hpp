#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mass/gan/model.hpp"

namespace mass::gan {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One batch x width matrix per time step.
using Sequence = std::vector<Matrix>;

Sequence to_sequence(const TraceTensor& trace);
Sequence to_sequence(const LatentBatch& z);
TraceTensor to_trace(const Sequence& seq);

/// Cached activations of one LSTM cell run over a sequence.
struct LstmTape {
  bool reverse = false;
  Sequence inputs;
  Sequence gates;  // activated [i f g o], batch x 4H
  Sequence cells;
  Sequence hidden;
  Sequence tanh_cells;
};

struct GeneratorTape {
  std::vector<LstmTape> layers;
  Sequence output;  // batch x 2 in (0,1)
};

struct DiscriminatorTape {
  std::vector<LstmTape> forward_layers;
  std::vector<LstmTape> backward_layers;
  Sequence top;     // batch x 2H, input of the logit head
  Sequence logits;  // batch x 1
};

/// Fan-in scaled uniform weights (bound sqrt(3 / fan_in) per weight
/// matrix), zero biases except the forget gates, which start at 1.
void init_generator(const GanConfig& cfg, std::span<double> theta, std::mt19937_64& rng);
void init_discriminator(const GanConfig& cfg, std::span<double> omega, std::mt19937_64& rng);

/// Runs the generator; the tape keeps what backprop needs.
GeneratorTape generator_forward(const GanConfig& cfg, std::span<const double> theta,
                                const Sequence& latent);

/// Accumulates dL/dtheta into `grad` given dL/d(output).
void generator_backward(const GanConfig& cfg, std::span<const double> theta,
                        const GeneratorTape& tape, const Sequence& d_output,
                        std::span<double> grad);

DiscriminatorTape discriminator_forward(const GanConfig& cfg,
                                        std::span<const double> omega,
                                        const Sequence& input);

/// Backprop from dL/d(logits). Parameter gradients are accumulated when
/// `grad` is non-empty; input gradients are written when `d_input` is set.
void discriminator_backward(const GanConfig& cfg, std::span<const double> omega,
                            const DiscriminatorTape& tape, const Sequence& d_logits,
                            std::span<double> grad, Sequence* d_input);

}  // namespace mass::gan
