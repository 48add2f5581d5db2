#include "s2t/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace s2t {

namespace {

using Eigen::Index;

Index idx(std::size_t n) { return static_cast<Index>(n); }

Matrix sigmoid(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

// Per-column softmax; masked entries (mask == 0) get probability exactly 0.
Matrix masked_softmax(const Matrix& scores, const Matrix* mask) {
  Matrix out(scores.rows(), scores.cols());
  for (Index b = 0; b < scores.cols(); ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < scores.rows(); ++j)
      if (!mask || (*mask)(j, b) > 0) mx = std::max(mx, scores(j, b));
    double sum = 0.0;
    for (Index j = 0; j < scores.rows(); ++j) {
      double e = (!mask || (*mask)(j, b) > 0) ? std::exp(scores(j, b) - mx) : 0.0;
      out(j, b) = e;
      sum += e;
    }
    out.col(b) /= sum;
  }
  return out;
}

Matrix gather_columns(const Matrix& table, std::span<const TokenId> ids) {
  Matrix out(table.rows(), idx(ids.size()));
  for (std::size_t b = 0; b < ids.size(); ++b) out.col(idx(b)) = table.col(ids[b]);
  return out;
}

void scatter_add_columns(Matrix& table, std::span<const TokenId> ids, const Matrix& grads) {
  for (std::size_t b = 0; b < ids.size(); ++b) table.col(ids[b]) += grads.col(idx(b));
}

// Inverted dropout mask, or an empty matrix when dropout is off.
Matrix dropout_mask(Index rows, Index cols, double rate, std::mt19937_64* rng) {
  if (!rng || rate <= 0.0) return {};
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix m(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = keep(*rng) ? scale : 0.0;
  return m;
}

Matrix apply_mask(const Matrix& x, const Matrix& mask) {
  return mask.size() == 0 ? x : Matrix(x.cwiseProduct(mask));
}

struct GruStepCache {
  Matrix h_prev, z, r, n, rh;
};

// gx = W x + b, precomputed by the caller.
Matrix gru_step(const GruParams& p, const Matrix& gx, const Matrix& h_prev, GruStepCache* cache) {
  const Index H = h_prev.rows();
  Matrix zr = gx.topRows(2 * H) + p.U.topRows(2 * H) * h_prev;
  Matrix z = sigmoid(zr.topRows(H));
  Matrix r = sigmoid(zr.bottomRows(H));
  Matrix rh = r.cwiseProduct(h_prev);
  Matrix n = (gx.bottomRows(H) + p.U.bottomRows(H) * rh).array().tanh().matrix();
  Matrix h = h_prev + z.cwiseProduct(n - h_prev);
  if (cache) *cache = {h_prev, std::move(z), std::move(r), std::move(n), std::move(rh)};
  return h;
}

// Given dL/dh_out, returns dL/dgx and dL/dh_prev; accumulates dL/dU.
void gru_step_backward(const GruParams& p, const GruStepCache& c, const Matrix& dh, Matrix& dgx, Matrix& dU,
                       Matrix& dh_prev) {
  const Index H = dh.rows();
  Matrix dz = dh.cwiseProduct(c.n - c.h_prev);
  Matrix dn_pre = (dh.array() * c.z.array() * (1.0 - c.n.array().square())).matrix();
  dh_prev = (dh.array() * (1.0 - c.z.array())).matrix();

  dU.bottomRows(H).noalias() += dn_pre * c.rh.transpose();
  Matrix drh = p.U.bottomRows(H).transpose() * dn_pre;
  Matrix dr = drh.cwiseProduct(c.h_prev);
  dh_prev += drh.cwiseProduct(c.r);

  dgx.resize(3 * H, dh.cols());
  dgx.topRows(H) = (dz.array() * c.z.array() * (1.0 - c.z.array())).matrix();
  dgx.middleRows(H, H) = (dr.array() * c.r.array() * (1.0 - c.r.array())).matrix();
  dgx.bottomRows(H) = dn_pre;

  dU.topRows(2 * H).noalias() += dgx.topRows(2 * H) * c.h_prev.transpose();
  dh_prev.noalias() += p.U.topRows(2 * H).transpose() * dgx.topRows(2 * H);
}

// Source batch with right padding.
struct PaddedSource {
  std::size_t S = 0, B = 0;
  std::vector<TokenId> ids;  // position-major: ids[j*B + b]
  Matrix mask;               // S x B
  std::vector<std::size_t> lengths;
};

PaddedSource pad_sources(std::span<const IdSequence> sources) {
  PaddedSource ps;
  ps.B = sources.size();
  for (const auto& s : sources) {
    if (s.empty()) throw std::invalid_argument("empty source sequence");
    ps.S = std::max(ps.S, s.size());
    ps.lengths.push_back(s.size());
  }
  ps.ids.assign(ps.S * ps.B, kEosId);
  ps.mask = Matrix::Zero(idx(ps.S), idx(ps.B));
  for (std::size_t b = 0; b < ps.B; ++b)
    for (std::size_t j = 0; j < sources[b].size(); ++j) {
      ps.ids[j * ps.B + b] = sources[b][j];
      ps.mask(idx(j), idx(b)) = 1.0;
    }
  return ps;
}

struct EncoderCache {
  Matrix x_all;     // E x S*B after dropout
  Matrix drop;      // dropout mask for x_all (may be empty)
  std::vector<GruStepCache> fwd, bwd;
  Matrix hbar;      // C x B
  Matrix s0;        // H x B
};

// Runs one direction of the encoder; `reverse` walks positions S-1..0.
void run_direction(const GruParams& p, const Matrix& gx_all, const Matrix& mask, std::size_t S, std::size_t B,
                   bool reverse, Matrix& annotations, Index row_offset, std::vector<GruStepCache>* caches) {
  const Index H = p.U.cols();
  Matrix h = Matrix::Zero(H, idx(B));
  if (caches) caches->resize(S);
  for (std::size_t step = 0; step < S; ++step) {
    const std::size_t j = reverse ? S - 1 - step : step;
    Matrix h_new = gru_step(p, gx_all.middleCols(idx(j * B), idx(B)), h, caches ? &(*caches)[j] : nullptr);
    const auto m = mask.row(idx(j)).array();
    h = (h_new.array().rowwise() * m + h.array().rowwise() * (1.0 - m)).matrix();
    annotations.block(row_offset, idx(j * B), H, idx(B)) = h;
  }
}

EncodedSource encode_impl(const ModelParams& params, std::span<const IdSequence> sources, EncoderCache* cache,
                          std::mt19937_64* rng) {
  PaddedSource ps = pad_sources(sources);
  const std::size_t S = ps.S, B = ps.B;
  const Index H = idx(params.config.hidden_dim);

  Matrix x_all = gather_columns(params.src_embed, ps.ids);
  Matrix drop = dropout_mask(x_all.rows(), x_all.cols(), params.config.dropout_rate, rng);
  x_all = apply_mask(x_all, drop);

  Matrix gx_f = (params.enc_fwd.W * x_all).colwise() + params.enc_fwd.b.col(0);
  Matrix gx_b = (params.enc_bwd.W * x_all).colwise() + params.enc_bwd.b.col(0);

  EncodedSource enc;
  enc.length = S;
  enc.batch = B;
  enc.mask = ps.mask;
  enc.lengths = ps.lengths;
  enc.annotations = Matrix::Zero(2 * H, idx(S * B));
  run_direction(params.enc_fwd, gx_f, ps.mask, S, B, false, enc.annotations, 0, cache ? &cache->fwd : nullptr);
  run_direction(params.enc_bwd, gx_b, ps.mask, S, B, true, enc.annotations, H, cache ? &cache->bwd : nullptr);
  enc.projected = params.att_annot * enc.annotations;
  if (cache) {
    cache->x_all = std::move(x_all);
    cache->drop = std::move(drop);
  }
  return enc;
}

Matrix mean_annotation(const EncodedSource& enc) {
  const Index B = idx(enc.batch);
  Matrix hbar = Matrix::Zero(enc.annotations.rows(), B);
  for (std::size_t j = 0; j < enc.length; ++j)
    hbar += (enc.annotations.middleCols(idx(j) * B, B).array().rowwise() * enc.mask.row(idx(j)).array()).matrix();
  for (Index b = 0; b < B; ++b) hbar.col(b) /= static_cast<double>(enc.lengths[static_cast<std::size_t>(b)]);
  return hbar;
}

struct AttentionCache {
  Matrix pre_tanh_out;  // A x S*B, tanh(W_a s + U_a h_j)
};

Attention attend_impl(const ModelParams& params, const Matrix& state, const EncodedSource& enc,
                      AttentionCache* cache) {
  const Index B = idx(enc.batch);
  const Index S = idx(enc.length);
  Matrix ws = params.att_state * state;
  Matrix t_all = enc.projected;
  for (Index j = 0; j < S; ++j) t_all.middleCols(j * B, B) += ws;
  t_all = t_all.array().tanh().matrix();
  Matrix flat = params.att_score.transpose() * t_all;  // 1 x S*B
  Matrix scores(S, B);
  for (Index j = 0; j < S; ++j) scores.row(j) = flat.middleCols(j * B, B);

  Attention out;
  out.weights = masked_softmax(scores, &enc.mask);
  out.context = Matrix::Zero(enc.annotations.rows(), B);
  for (Index j = 0; j < S; ++j)
    out.context +=
        (enc.annotations.middleCols(j * B, B).array().rowwise() * out.weights.row(j).array()).matrix();
  if (cache) cache->pre_tanh_out = std::move(t_all);
  return out;
}

struct DecoderStepCache {
  Matrix s_prev;
  AttentionCache attn;
  Matrix weights;   // S x B
  Matrix context;   // C x B
  Matrix emb;       // E x B after dropout
  Matrix emb_drop;  // may be empty
  Matrix x;         // (E + C) x B
  GruStepCache gru;
  Matrix out_drop;  // H x B, may be empty
  Matrix o;         // (H + C + E) x B
  Matrix probs;     // Vt x B
};

// One decoder step given previous-token embeddings (already dropped out).
DecodeStep decoder_step_impl(const ModelParams& params, const Matrix& emb, const Matrix& state,
                             const EncodedSource& enc, DecoderStepCache* cache, std::mt19937_64* rng) {
  const Index E = emb.rows();
  const Index H = state.rows();
  const Index C = enc.annotations.rows();
  const Index B = state.cols();

  AttentionCache ac;
  Attention att = attend_impl(params, state, enc, cache ? &ac : nullptr);

  Matrix x(E + C, B);
  x.topRows(E) = emb;
  x.bottomRows(C) = att.context;
  Matrix gx = (params.dec.W * x).colwise() + params.dec.b.col(0);
  GruStepCache gc;
  Matrix s_new = gru_step(params.dec, gx, state, cache ? &gc : nullptr);

  Matrix out_drop = dropout_mask(H, B, params.config.dropout_rate, rng);
  Matrix o(H + C + E, B);
  o.topRows(H) = apply_mask(s_new, out_drop);
  o.middleRows(H, C) = att.context;
  o.bottomRows(E) = emb;
  Matrix logits = (params.out_W * o).colwise() + params.out_b.col(0);
  Matrix probs = masked_softmax(logits, nullptr);

  if (cache) {
    cache->s_prev = state;
    cache->attn = std::move(ac);
    cache->weights = att.weights;
    cache->context = att.context;
    cache->x = std::move(x);
    cache->gru = std::move(gc);
    cache->out_drop = std::move(out_drop);
    cache->o = std::move(o);
    cache->probs = probs;
  }
  return {std::move(probs), std::move(s_new), std::move(att.weights)};
}

struct BatchResult {
  double nll = 0.0;
  std::size_t tokens = 0;
};

BatchResult run_batch(const ModelParams& params, std::span<const ParallelPair> batch, ModelParams* grads,
                      std::mt19937_64* rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t B = batch.size();
  const Index Bi = idx(B);
  const Index E = idx(params.config.embed_dim);
  const Index H = idx(params.config.hidden_dim);
  const Index C = 2 * H;

  std::vector<IdSequence> sources;
  sources.reserve(B);
  std::size_t T = 0;
  for (const auto& p : batch) {
    sources.push_back(p.source);
    if (p.target.empty()) throw std::invalid_argument("empty target sequence");
    T = std::max(T, p.target.size());
  }

  const bool want = grads != nullptr;
  EncoderCache ec;
  EncodedSource enc = encode_impl(params, sources, want ? &ec : nullptr, rng);
  const std::size_t S = enc.length;

  Matrix hbar = mean_annotation(enc);
  Matrix s0 = ((params.init_W * hbar).colwise() + params.init_b.col(0)).array().tanh().matrix();

  // prev[t][b] feeds step t; gold[t][b] is predicted at step t.
  std::vector<std::vector<TokenId>> prev(T, std::vector<TokenId>(B, kEosId)), gold(T, std::vector<TokenId>(B, kEosId));
  Matrix tmask = Matrix::Zero(idx(T), Bi);
  std::size_t tokens = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& tgt = batch[b].target;
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      gold[t][b] = tgt[t];
      if (t + 1 < T) prev[t + 1][b] = tgt[t];
      tmask(idx(t), idx(b)) = 1.0;
    }
    tokens += tgt.size();
  }

  std::vector<DecoderStepCache> steps(want ? T : 0);
  Matrix state = s0;
  double nll = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    Matrix emb = gather_columns(params.tgt_embed, prev[t]);
    Matrix emb_drop = dropout_mask(E, Bi, params.config.dropout_rate, rng);
    emb = apply_mask(emb, emb_drop);
    DecoderStepCache* cache = want ? &steps[t] : nullptr;
    DecodeStep out = decoder_step_impl(params, emb, state, enc, cache, rng);
    for (std::size_t b = 0; b < B; ++b)
      if (tmask(idx(t), idx(b)) > 0) nll -= std::log(out.probs(gold[t][b], idx(b)));
    if (cache) {
      cache->emb = std::move(emb);
      cache->emb_drop = std::move(emb_drop);
    }
    state = std::move(out.state);
  }
  if (!want) return {nll, tokens};

  ModelParams& g = *grads;
  g = ModelParams::zeros(params.config);
  const double inv_n = 1.0 / static_cast<double>(tokens);

  Matrix d_annot = Matrix::Zero(C, idx(S * B));
  Matrix d_projected = Matrix::Zero(params.att_annot.rows(), idx(S * B));
  Matrix ds_next = Matrix::Zero(H, Bi);

  for (std::size_t tt = T; tt-- > 0;) {
    const DecoderStepCache& c = steps[tt];
    Matrix dlogits = c.probs;
    for (std::size_t b = 0; b < B; ++b) {
      const double m = tmask(idx(tt), idx(b));
      dlogits.col(idx(b)) *= m * inv_n;
      dlogits(gold[tt][b], idx(b)) -= m * inv_n;
    }
    g.out_W.noalias() += dlogits * c.o.transpose();
    g.out_b += dlogits.rowwise().sum();
    Matrix d_o = params.out_W.transpose() * dlogits;

    Matrix ds = ds_next + apply_mask(d_o.topRows(H), c.out_drop);
    Matrix d_context = d_o.middleRows(H, C);
    Matrix d_emb = d_o.bottomRows(E);

    Matrix dgx, ds_prev;
    gru_step_backward(params.dec, c.gru, ds, dgx, g.dec.U, ds_prev);
    g.dec.W.noalias() += dgx * c.x.transpose();
    g.dec.b += dgx.rowwise().sum();
    Matrix dx = params.dec.W.transpose() * dgx;
    d_emb += dx.topRows(E);
    d_context += dx.bottomRows(C);

    // Attention backward.
    const Matrix& alpha = c.weights;
    Matrix d_alpha(idx(S), Bi);
    for (std::size_t j = 0; j < S; ++j) {
      auto block = enc.annotations.middleCols(idx(j * B), Bi);
      d_alpha.row(idx(j)) = block.cwiseProduct(d_context).colwise().sum();
      d_annot.middleCols(idx(j * B), Bi) += (d_context.array().rowwise() * alpha.row(idx(j)).array()).matrix();
    }
    Matrix weighted = alpha.cwiseProduct(d_alpha);
    Matrix d_scores = weighted - (alpha.array().rowwise() * weighted.colwise().sum().array()).matrix();

    const Matrix& tanh_out = c.attn.pre_tanh_out;
    Matrix d_flat(1, idx(S * B));
    for (std::size_t j = 0; j < S; ++j) d_flat.middleCols(idx(j * B), Bi) = d_scores.row(idx(j));
    g.att_score.noalias() += tanh_out * d_flat.transpose();
    Matrix d_pre = ((params.att_score * d_flat).array() * (1.0 - tanh_out.array().square())).matrix();
    d_projected += d_pre;
    Matrix d_ws = Matrix::Zero(d_pre.rows(), Bi);
    for (std::size_t j = 0; j < S; ++j) d_ws += d_pre.middleCols(idx(j * B), Bi);
    g.att_state.noalias() += d_ws * c.s_prev.transpose();
    ds_prev.noalias() += params.att_state.transpose() * d_ws;

    d_emb = apply_mask(d_emb, c.emb_drop);
    scatter_add_columns(g.tgt_embed, prev[tt], d_emb);
    ds_next = std::move(ds_prev);
  }

  // Initial state.
  Matrix d_pre0 = (ds_next.array() * (1.0 - s0.array().square())).matrix();
  g.init_W.noalias() += d_pre0 * hbar.transpose();
  g.init_b += d_pre0.rowwise().sum();
  Matrix d_hbar = params.init_W.transpose() * d_pre0;
  for (Index b = 0; b < Bi; ++b) d_hbar.col(b) /= static_cast<double>(enc.lengths[static_cast<std::size_t>(b)]);
  for (std::size_t j = 0; j < S; ++j)
    d_annot.middleCols(idx(j * B), Bi) += (d_hbar.array().rowwise() * enc.mask.row(idx(j)).array()).matrix();

  g.att_annot.noalias() += d_projected * enc.annotations.transpose();
  d_annot.noalias() += params.att_annot.transpose() * d_projected;

  // Encoder backward, one direction at a time.
  auto direction_backward = [&](const GruParams& p, GruParams& gp, const std::vector<GruStepCache>& caches,
                                Index row_offset, bool reverse, Matrix& dgx_all) {
    dgx_all.resize(3 * H, idx(S * B));
    Matrix carry = Matrix::Zero(H, Bi);
    for (std::size_t step = 0; step < S; ++step) {
      // Undo the forward walk order.
      const std::size_t j = reverse ? step : S - 1 - step;
      const auto m = enc.mask.row(idx(j)).array();
      Matrix dh = d_annot.block(row_offset, idx(j * B), H, Bi) + carry;
      Matrix dh_new = (dh.array().rowwise() * m).matrix();
      Matrix passthrough = (dh.array().rowwise() * (1.0 - m)).matrix();
      Matrix dgx, dh_prev;
      gru_step_backward(p, caches[j], dh_new, dgx, gp.U, dh_prev);
      dgx_all.middleCols(idx(j * B), Bi) = dgx;
      carry = dh_prev + passthrough;
    }
    gp.W.noalias() += dgx_all * ec.x_all.transpose();
    gp.b += dgx_all.rowwise().sum();
  };
  Matrix dgx_f, dgx_b;
  direction_backward(params.enc_fwd, g.enc_fwd, ec.fwd, 0, false, dgx_f);
  direction_backward(params.enc_bwd, g.enc_bwd, ec.bwd, H, true, dgx_b);
  Matrix dx_all = params.enc_fwd.W.transpose() * dgx_f;
  dx_all.noalias() += params.enc_bwd.W.transpose() * dgx_b;
  dx_all = apply_mask(dx_all, ec.drop);
  PaddedSource ps = pad_sources(sources);
  for (std::size_t k = 0; k < ps.ids.size(); ++k) {
    const std::size_t j = k / B;
    const std::size_t b = k % B;
    if (ps.mask(idx(j), idx(b)) > 0) g.src_embed.col(ps.ids[k]) += dx_all.col(idx(k));
  }

  return {nll, tokens};
}

}  // namespace

void ModelConfig::check() const {
  if (src_vocab_size < 1 || tgt_vocab_size < 1 || embed_dim < 1 || hidden_dim < 1)
    throw std::invalid_argument("model dimensions must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.check();
  const Index E = idx(config.embed_dim), H = idx(config.hidden_dim), C = 2 * H, A = H;
  const Index Vs = idx(config.src_vocab_size), Vt = idx(config.tgt_vocab_size);
  ModelParams p;
  p.config = config;
  p.src_embed = Matrix::Zero(E, Vs);
  p.tgt_embed = Matrix::Zero(E, Vt);
  for (GruParams* g : {&p.enc_fwd, &p.enc_bwd}) {
    g->W = Matrix::Zero(3 * H, E);
    g->U = Matrix::Zero(3 * H, H);
    g->b = Matrix::Zero(3 * H, 1);
  }
  p.dec.W = Matrix::Zero(3 * H, E + C);
  p.dec.U = Matrix::Zero(3 * H, H);
  p.dec.b = Matrix::Zero(3 * H, 1);
  p.att_state = Matrix::Zero(A, H);
  p.att_annot = Matrix::Zero(A, C);
  p.att_score = Matrix::Zero(A, 1);
  p.init_W = Matrix::Zero(H, C);
  p.init_b = Matrix::Zero(H, 1);
  p.out_W = Matrix::Zero(Vt, H + C + E);
  p.out_b = Matrix::Zero(Vt, 1);
  return p;
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for_each([&](const char*, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for_each([&](const char*, const Matrix& m) { out.insert(out.end(), m.data(), m.data() + m.size()); });
  return out;
}

void ModelParams::unflatten(std::span<const double> values) {
  if (values.size() != num_parameters()) throw std::invalid_argument("flat parameter size mismatch");
  std::size_t off = 0;
  for_each([&](const char*, Matrix& m) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), m.size(), m.data());
    off += static_cast<std::size_t>(m.size());
  });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](const char*, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!(config == other.config)) return false;
  return flatten() == other.flatten();
}

ModelParams init_params(const ModelConfig& config) {
  ModelParams p = ModelParams::zeros(config);
  std::mt19937_64 rng(config.seed);
  p.for_each([&](const char* name, Matrix& m) {
    std::string_view n(name);
    bool is_bias = n.ends_with(".b") || n == "init_b" || n == "out_b";
    if (is_bias) return;
    const double r = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-r, r);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  });
  return p;
}

Matrix EncodedSource::annotations_of(std::size_t b) const {
  Matrix out(annotations.rows(), idx(lengths.at(b)));
  for (std::size_t j = 0; j < lengths[b]; ++j) out.col(idx(j)) = annotations.col(idx(j * batch + b));
  return out;
}

EncodedSource EncodedSource::replicate(std::size_t k) const {
  if (batch != 1) throw std::invalid_argument("replicate expects a single encoded sentence");
  EncodedSource out;
  out.length = length;
  out.batch = k;
  out.lengths.assign(k, lengths[0]);
  out.annotations.resize(annotations.rows(), idx(length * k));
  out.projected.resize(projected.rows(), idx(length * k));
  out.mask = Matrix::Ones(idx(length), idx(k));
  for (std::size_t j = 0; j < length; ++j) {
    out.annotations.middleCols(idx(j * k), idx(k)) = annotations.col(idx(j)).replicate(1, idx(k));
    out.projected.middleCols(idx(j * k), idx(k)) = projected.col(idx(j)).replicate(1, idx(k));
  }
  return out;
}

EncodedSource encode(const ModelParams& params, const IdSequence& src_ids) {
  return encode_impl(params, std::span<const IdSequence>(&src_ids, 1), nullptr, nullptr);
}

EncodedSource encode_batch(const ModelParams& params, std::span<const IdSequence> sources) {
  return encode_impl(params, sources, nullptr, nullptr);
}

Matrix initial_state(const ModelParams& params, const EncodedSource& enc) {
  return ((params.init_W * mean_annotation(enc)).colwise() + params.init_b.col(0)).array().tanh().matrix();
}

Attention attend(const ModelParams& params, const Matrix& state, const EncodedSource& enc) {
  return attend_impl(params, state, enc, nullptr);
}

DecodeStep decode_step(const ModelParams& params, std::span<const TokenId> prev_ids, const Matrix& state,
                       const EncodedSource& enc) {
  if (prev_ids.size() != static_cast<std::size_t>(state.cols()) || enc.batch != prev_ids.size())
    throw std::invalid_argument("decode_step: batch size mismatch");
  return decoder_step_impl(params, gather_columns(params.tgt_embed, prev_ids), state, enc, nullptr, nullptr);
}

double sequence_log_prob(const ModelParams& params, const IdSequence& source, const IdSequence& target) {
  EncodedSource enc = encode(params, source);
  Matrix state = initial_state(params, enc);
  TokenId prev = kEosId;
  double lp = 0.0;
  for (TokenId y : target) {
    DecodeStep step = decode_step(params, std::span<const TokenId>(&prev, 1), state, enc);
    lp += std::log(step.probs(y, 0));
    state = std::move(step.state);
    prev = y;
  }
  return lp;
}

LossAndGrads loss_and_grads(const ModelParams& params, std::span<const ParallelPair> batch,
                            const std::uint64_t* dropout_seed) {
  std::mt19937_64 rng(dropout_seed ? *dropout_seed : 0);
  const bool drop = dropout_seed && params.config.dropout_rate > 0.0;
  LossAndGrads out;
  BatchResult r = run_batch(params, batch, &out.grads, drop ? &rng : nullptr);
  out.loss = r.nll / static_cast<double>(r.tokens);
  out.tokens = r.tokens;
  return out;
}

std::pair<double, std::size_t> batch_nll(const ModelParams& params, std::span<const ParallelPair> batch) {
  BatchResult r = run_batch(params, batch, nullptr, nullptr);
  return {r.nll, r.tokens};
}

double mean_nll(const ModelParams& params, std::span<const ParallelPair> pairs, std::size_t batch_size) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < pairs.size(); i += batch_size) {
    auto [n, t] = batch_nll(params, pairs.subspan(i, std::min(batch_size, pairs.size() - i)));
    nll += n;
    tokens += t;
  }
  return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

OptState OptState::for_params(const ModelParams& params, double rho, double eps) {
  return {ModelParams::zeros(params.config), ModelParams::zeros(params.config), rho, eps};
}

void adadelta_step(ModelParams& params, const ModelParams& grads, OptState& state) {
  std::vector<Matrix*> p, g2, dx2;
  std::vector<const Matrix*> g;
  params.for_each([&](const char*, Matrix& m) { p.push_back(&m); });
  grads.for_each([&](const char*, const Matrix& m) { g.push_back(&m); });
  state.sq_grad.for_each([&](const char*, Matrix& m) { g2.push_back(&m); });
  state.sq_update.for_each([&](const char*, Matrix& m) { dx2.push_back(&m); });
  const double rho = state.rho, eps = state.eps;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (g[k]->rows() != p[k]->rows() || g[k]->cols() != p[k]->cols())
      throw std::invalid_argument("adadelta_step: gradient shape mismatch");
    auto ga = g[k]->array();
    auto eg = g2[k]->array();
    auto ed = dx2[k]->array();
    eg = rho * eg + (1.0 - rho) * ga.square();
    Eigen::ArrayXXd delta = -((ed + eps).sqrt() / (eg + eps).sqrt()) * ga;
    ed = rho * ed + (1.0 - rho) * delta.square();
    p[k]->array() += delta;
  }
}

TrainResult train(const ModelConfig& config, std::span<const ParallelPair> train_pairs,
                  std::span<const ParallelPair> dev_pairs, const TrainOptions& options) {
  if (train_pairs.empty() || dev_pairs.empty()) throw std::invalid_argument("train: empty corpus");
  if (options.batch_size == 0 || options.checkpoint_every == 0 || options.patience == 0)
    throw std::invalid_argument("train: batch size, checkpoint interval and patience must be positive");

  ModelParams params = init_params(config);
  OptState opt = OptState::for_params(params, options.rho, options.eps);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t updates = 0;
  bool stop = false;
  std::vector<ParallelPair> batch;

  auto checkpoint = [&] {
    double dev = mean_nll(params, dev_pairs, options.batch_size);
    result.checkpoints.push_back({params, updates, dev});
    if (dev < best_loss) {
      best_loss = dev;
      result.best = result.checkpoints.size() - 1;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (options.log) {
      std::ostringstream msg;
      msg << "update " << updates << " dev_nll " << dev << (since_best == 0 ? " (best)" : "");
      options.log(msg.str());
    }
    if (since_best >= options.patience) stop = true;
  };

  while (!stop && updates < options.max_updates) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size() && !stop && updates < options.max_updates;
         start += options.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + options.batch_size); ++k)
        batch.push_back(train_pairs[order[k]]);
      const std::uint64_t dropout_seed = rng();
      LossAndGrads lg = loss_and_grads(params, batch, &dropout_seed);
      if (options.clip_norm > 0.0) {
        double sq = 0.0;
        lg.grads.for_each([&](const char*, const Matrix& m) { sq += m.squaredNorm(); });
        const double norm = std::sqrt(sq);
        if (norm > options.clip_norm) {
          const double scale = options.clip_norm / norm;
          lg.grads.for_each([&](const char*, Matrix& m) { m *= scale; });
        }
      }
      adadelta_step(params, lg.grads, opt);
      ++updates;
      if (updates % options.checkpoint_every == 0) checkpoint();
    }
  }
  if (result.checkpoints.empty() || result.checkpoints.back().updates_seen != updates) checkpoint();
  result.updates = updates;
  return result;
}

}  // namespace s2t
