// Attention-based GRU encoder-decoder with hand-written backpropagation.
//
// Shapes (E = embed_dim, H = hidden_dim, C = 2H annotation size, A = H
// attention size, V = vocabulary sizes). Vectors are matrix columns; a batch
// of B sentences is B columns. Per-position source quantities are stored
// side by side: column j*B + b holds position j of sentence b.
//
//   annotations h_j   = [fwd_j ; bwd_j]                      (C)
//   initial state s_0 = tanh(W_init * mean_j h_j + b_init)   (H)
//   score e_tj        = v_a . tanh(W_a s_{t-1} + U_a h_j)
//   context c_t       = sum_j softmax(e_t)_j h_j            (C)
//   s_t               = GRU(s_{t-1}, [emb(y_{t-1}) ; c_t])
//   p(y_t)            = softmax(W_out [s_t ; c_t ; emb(y_{t-1})] + b_out)
//
// The first decoder input is the end-of-sequence embedding.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "s2t/corpus.hpp"

namespace s2t {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::uint64_t seed = 1234;
  double dropout_rate = 0.0;

  void check() const;
  bool operator==(const ModelConfig&) const = default;
};

// Gate blocks are stacked as [update; reset; candidate].
struct GruParams {
  Matrix W;  // 3H x input
  Matrix U;  // 3H x H
  Matrix b;  // 3H x 1
};

struct ModelParams {
  ModelConfig config;

  Matrix src_embed;  // E x Vs
  Matrix tgt_embed;  // E x Vt
  GruParams enc_fwd;
  GruParams enc_bwd;
  GruParams dec;  // input is [embedding ; context]
  Matrix att_state;  // A x H
  Matrix att_annot;  // A x C
  Matrix att_score;  // A x 1
  Matrix init_W;     // H x C
  Matrix init_b;     // H x 1
  Matrix out_W;      // Vt x (H + C + E)
  Matrix out_b;      // Vt x 1

  // Every tensor with its canonical name, in a fixed order.
  template <class F>
  void for_each(F&& f) {
    for_each_impl(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    for_each_impl(*this, f);
  }

  static ModelParams zeros(const ModelConfig& config);
  std::size_t num_parameters() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> values);
  bool all_finite() const;

  bool operator==(const ModelParams& other) const;

 private:
  template <class Self, class F>
  static void for_each_impl(Self& p, F& f) {
    f("src_embed", p.src_embed);
    f("tgt_embed", p.tgt_embed);
    f("enc_fwd.W", p.enc_fwd.W);
    f("enc_fwd.U", p.enc_fwd.U);
    f("enc_fwd.b", p.enc_fwd.b);
    f("enc_bwd.W", p.enc_bwd.W);
    f("enc_bwd.U", p.enc_bwd.U);
    f("enc_bwd.b", p.enc_bwd.b);
    f("dec.W", p.dec.W);
    f("dec.U", p.dec.U);
    f("dec.b", p.dec.b);
    f("att_state", p.att_state);
    f("att_annot", p.att_annot);
    f("att_score", p.att_score);
    f("init_W", p.init_W);
    f("init_b", p.init_b);
    f("out_W", p.out_W);
    f("out_b", p.out_b);
  }
};

ModelParams init_params(const ModelConfig& config);

// Encoded source side of a batch.
struct EncodedSource {
  std::size_t length = 0;  // padded source length S
  std::size_t batch = 0;   // B
  Matrix annotations;      // C x (S*B)
  Matrix projected;        // A x (S*B), U_a * annotations
  Matrix mask;             // S x B, 1 for real positions
  std::vector<std::size_t> lengths;

  // Annotations of sentence b as a C x S_b matrix.
  Matrix annotations_of(std::size_t b) const;
  // Copies a single encoded sentence into `k` identical columns.
  EncodedSource replicate(std::size_t k) const;
};

EncodedSource encode(const ModelParams& params, const IdSequence& src_ids);
EncodedSource encode_batch(const ModelParams& params, std::span<const IdSequence> sources);

Matrix initial_state(const ModelParams& params, const EncodedSource& enc);  // H x B

struct Attention {
  Matrix context;  // C x B
  Matrix weights;  // S x B, columns sum to 1
};

Attention attend(const ModelParams& params, const Matrix& state, const EncodedSource& enc);

struct DecodeStep {
  Matrix probs;    // Vt x B
  Matrix state;    // H x B
  Matrix weights;  // S x B
};

DecodeStep decode_step(const ModelParams& params, std::span<const TokenId> prev_ids, const Matrix& state,
                       const EncodedSource& enc);

// Natural-log probability of `target` (end-of-sequence included) by chaining decode_step.
double sequence_log_prob(const ModelParams& params, const IdSequence& source, const IdSequence& target);

struct LossAndGrads {
  double loss = 0.0;  // mean token-level negative log-likelihood
  std::size_t tokens = 0;
  ModelParams grads;
};

// Dropout is applied only when `dropout_seed` is given and the config rate is positive.
LossAndGrads loss_and_grads(const ModelParams& params, std::span<const ParallelPair> batch,
                            const std::uint64_t* dropout_seed = nullptr);
// Forward pass only; returns the summed NLL and token count.
std::pair<double, std::size_t> batch_nll(const ModelParams& params, std::span<const ParallelPair> batch);
double mean_nll(const ModelParams& params, std::span<const ParallelPair> pairs, std::size_t batch_size = 40);

struct OptState {
  ModelParams sq_grad;    // running E[g^2]
  ModelParams sq_update;  // running E[dx^2]
  double rho = 0.95;
  double eps = 1e-6;

  static OptState for_params(const ModelParams& params, double rho = 0.95, double eps = 1e-6);
};

void adadelta_step(ModelParams& params, const ModelParams& grads, OptState& state);

struct Checkpoint {
  ModelParams params;
  std::size_t updates_seen = 0;
  double dev_loss = 0.0;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary file plus "<path>.manifest" listing names, shapes and checksums.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

struct TrainOptions {
  std::size_t batch_size = 40;
  std::size_t checkpoint_every = 200;
  std::size_t patience = 10;
  std::size_t max_updates = 200000;
  double rho = 0.95;
  double eps = 1e-6;
  // Gradients with a larger global L2 norm are rescaled; 0 disables clipping.
  double clip_norm = 1.0;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::size_t best = 0;
  std::size_t updates = 0;
};

TrainResult train(const ModelConfig& config, std::span<const ParallelPair> train_pairs,
                  std::span<const ParallelPair> dev_pairs, const TrainOptions& options = {});

}  // namespace s2t
