#include "tagrw/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace tagrw {

using nn::NodeId;
using nn::Tape;

namespace {

constexpr double kMaskOff = -1e30;

std::vector<Matrix*> tensor_list(TaggerParams& p) {
  std::vector<Matrix*> out;
  visit_tensors(p, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

Matrix randn(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// Softmax of (logits + mask) per row with exact zeros at masked entries.
// Eigen's vectorized exp clamps its argument and returns denormals for very
// negative inputs, so off-support entries are zeroed explicitly.
Matrix masked_softmax(const Matrix& logits, const Matrix& mask) {
  Matrix z = logits + mask;
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double m = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      if (mask(i, j) < -1e29) e(j) = 0.0;
    p.row(i) = e / e.sum();
  }
  return p;
}

} // namespace

std::vector<int> ModelInput::tag_positions() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(utterance_len) + 1);
  for (int i = 0; i < utterance_len; ++i) out.push_back(1 + context_len + i);
  out.push_back(end_pos());
  return out;
}

ModelInput build_model_input(const DialogueInstance& instance, const FlatContext& ctx,
                             const Vocab& vocab) {
  if (instance.utterance.empty()) throw DataError("build_model_input: empty utterance");
  ModelInput in;
  in.context_len = static_cast<int>(ctx.size());
  in.utterance_len = static_cast<int>(instance.utterance.size());
  const int n = in.context_len + in.utterance_len + 2;
  in.ids.reserve(static_cast<std::size_t>(n));
  in.regions.reserve(static_cast<std::size_t>(n));
  in.turn_of_position.reserve(static_cast<std::size_t>(n));

  in.ids.push_back(Vocab::kNull);
  in.regions.push_back(Region::Null);
  in.turn_of_position.push_back(-1);
  for (std::size_t k = 0; k < ctx.size(); ++k) {
    in.ids.push_back(vocab.id(ctx.tokens[k]));
    in.regions.push_back(Region::Context);
    in.turn_of_position.push_back(ctx.turn_ids[k]);
  }
  for (const auto& tok : instance.utterance) {
    in.ids.push_back(vocab.id(tok));
    in.regions.push_back(Region::Utterance);
    in.turn_of_position.push_back(-1);
  }
  in.ids.push_back(Vocab::kEnd);
  in.regions.push_back(Region::End);
  in.turn_of_position.push_back(-1);
  return in;
}

TaggerParams TaggerParams::init(const TaggerConfig& cfg, const Vocab& vocab,
                                std::uint64_t seed) {
  if (cfg.dim % cfg.heads != 0) throw DataError("TaggerParams: dim must divide by heads");
  std::mt19937_64 rng(seed);
  const double s = 0.02;
  const int d = cfg.dim;

  TaggerParams p;
  p.cfg = cfg;
  p.vocab = vocab;
  p.tok_emb = randn(vocab.size(), d, rng, s);
  p.pos_emb = randn(cfg.max_positions, d, rng, s);
  p.blocks.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& b : p.blocks) {
    b.wq = randn(d, d, rng, s);
    b.bq = Matrix::Zero(1, d);
    b.wk = randn(d, d, rng, s);
    b.bk = Matrix::Zero(1, d);
    b.wv = randn(d, d, rng, s);
    b.bv = Matrix::Zero(1, d);
    b.wo = randn(d, d, rng, s);
    b.bo = Matrix::Zero(1, d);
    b.ln1_g = Matrix::Ones(1, d);
    b.ln1_b = Matrix::Zero(1, d);
    b.ln2_g = Matrix::Ones(1, d);
    b.ln2_b = Matrix::Zero(1, d);
    b.ffn_w1 = randn(cfg.ffn_dim, d, rng, s);
    b.ffn_b1 = Matrix::Zero(1, cfg.ffn_dim);
    b.ffn_w2 = randn(d, cfg.ffn_dim, rng, s);
    b.ffn_b2 = Matrix::Zero(1, d);
  }
  p.lnf_g = Matrix::Ones(1, d);
  p.lnf_b = Matrix::Zero(1, d);
  p.del_w = randn(2, d, rng, s);
  p.del_b = Matrix::Zero(1, 2);
  for (auto* attn : {&p.attn_start, &p.attn_end}) {
    attn->wq = randn(d, d, rng, s);
    attn->wk = randn(d, d, rng, s);
    attn->bias = Matrix::Zero(1, d);
    attn->v = randn(d, 1, rng, s);
  }
  return p;
}

TaggerParams TaggerParams::zeros_like(const TaggerParams& other) {
  TaggerParams p = other;
  visit_tensors(p, [](const std::string&, Matrix& m) { m.setZero(); });
  return p;
}

void visit_tensors(TaggerParams& p,
                   const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("tok_emb", p.tok_emb);
  fn("pos_emb", p.pos_emb);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "block" + std::to_string(i) + ".";
    fn(pre + "wq", b.wq);
    fn(pre + "bq", b.bq);
    fn(pre + "wk", b.wk);
    fn(pre + "bk", b.bk);
    fn(pre + "wv", b.wv);
    fn(pre + "bv", b.bv);
    fn(pre + "wo", b.wo);
    fn(pre + "bo", b.bo);
    fn(pre + "ln1_g", b.ln1_g);
    fn(pre + "ln1_b", b.ln1_b);
    fn(pre + "ln2_g", b.ln2_g);
    fn(pre + "ln2_b", b.ln2_b);
    fn(pre + "ffn_w1", b.ffn_w1);
    fn(pre + "ffn_b1", b.ffn_b1);
    fn(pre + "ffn_w2", b.ffn_w2);
    fn(pre + "ffn_b2", b.ffn_b2);
  }
  fn("lnf_g", p.lnf_g);
  fn("lnf_b", p.lnf_b);
  fn("del_w", p.del_w);
  fn("del_b", p.del_b);
  fn("attn_start.wq", p.attn_start.wq);
  fn("attn_start.wk", p.attn_start.wk);
  fn("attn_start.bias", p.attn_start.bias);
  fn("attn_start.v", p.attn_start.v);
  fn("attn_end.wq", p.attn_end.wq);
  fn("attn_end.wk", p.attn_end.wk);
  fn("attn_end.bias", p.attn_end.bias);
  fn("attn_end.v", p.attn_end.v);
}

namespace {

NodeId linear(Tape& tape, NodeId x, NodeId w, NodeId b) {
  return tape.add_rowvec(tape.matmul_nt(x, w), b);
}

NodeId encoder_on_tape(Tape& tape, const ModelInput& input, const TaggerParams& params,
                       TaggerParams* grads) {
  const int n = input.size();
  const TaggerConfig& cfg = params.cfg;
  if (n > cfg.max_positions)
    throw DataError("encode: input of " + std::to_string(n) + " positions exceeds max of " +
                    std::to_string(cfg.max_positions));
  for (int id : input.ids)
    if (id < 0 || id >= params.vocab.size())
      throw DataError("encode: token id " + std::to_string(id) + " outside the vocabulary");

  std::vector<int> pos_ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pos_ids[static_cast<std::size_t>(i)] = i;

  NodeId x = tape.add(tape.embed(&params.tok_emb, grads ? &grads->tok_emb : nullptr, input.ids),
                      tape.embed(&params.pos_emb, grads ? &grads->pos_emb : nullptr, pos_ids));

  const int head_dim = cfg.dim / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  // The per-block gradient slots can't use the &value offset trick through a
  // vector, so bind them explicitly.
  for (std::size_t li = 0; li < params.blocks.size(); ++li) {
    const auto& b = params.blocks[li];
    auto* gb = grads ? &grads->blocks[li] : nullptr;
    auto bl = [&](const Matrix& v, Matrix TaggerParams::Block::* slot) {
      return tape.leaf(v, gb ? &(gb->*slot) : nullptr);
    };
    using B = TaggerParams::Block;

    NodeId a = tape.layer_norm(x, bl(b.ln1_g, &B::ln1_g), bl(b.ln1_b, &B::ln1_b));
    NodeId q = linear(tape, a, bl(b.wq, &B::wq), bl(b.bq, &B::bq));
    NodeId k = linear(tape, a, bl(b.wk, &B::wk), bl(b.bk, &B::bk));
    NodeId v = linear(tape, a, bl(b.wv, &B::wv), bl(b.bv, &B::bv));
    std::vector<NodeId> heads;
    for (int h = 0; h < cfg.heads; ++h) {
      NodeId qh = tape.cols(q, h * head_dim, head_dim);
      NodeId kh = tape.cols(k, h * head_dim, head_dim);
      NodeId vh = tape.cols(v, h * head_dim, head_dim);
      NodeId att = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), scale));
      heads.push_back(tape.matmul(att, vh));
    }
    NodeId o = linear(tape, tape.hcat(heads), bl(b.wo, &B::wo), bl(b.bo, &B::bo));
    x = tape.add(x, o);

    NodeId f = tape.layer_norm(x, bl(b.ln2_g, &B::ln2_g), bl(b.ln2_b, &B::ln2_b));
    f = tape.gelu(linear(tape, f, bl(b.ffn_w1, &B::ffn_w1), bl(b.ffn_b1, &B::ffn_b1)));
    f = linear(tape, f, bl(b.ffn_w2, &B::ffn_w2), bl(b.ffn_b2, &B::ffn_b2));
    x = tape.add(x, f);
  }
  return tape.layer_norm(x, tape.leaf(params.lnf_g, grads ? &grads->lnf_g : nullptr),
                         tape.leaf(params.lnf_b, grads ? &grads->lnf_b : nullptr));
}

NodeId additive_attention_logits(Tape& tape, NodeId queries, NodeId keys, int n_queries,
                                 int n_keys, const TaggerParams::AdditiveAttention& attn,
                                 TaggerParams::AdditiveAttention* gattn) {
  auto bind = [&](const Matrix& v, Matrix TaggerParams::AdditiveAttention::* slot) {
    return tape.leaf(v, gattn ? &(gattn->*slot) : nullptr);
  };
  using A = TaggerParams::AdditiveAttention;
  NodeId qp = tape.matmul_nt(queries, bind(attn.wq, &A::wq));
  NodeId kp = tape.matmul_nt(keys, bind(attn.wk, &A::wk));
  NodeId sum = tape.add_rowvec(
      tape.add(tape.repeat_rows_each(qp, n_keys), tape.tile_rows(kp, n_queries)),
      bind(attn.bias, &A::bias));
  NodeId scores = tape.matmul(tape.tanh_act(sum), bind(attn.v, &A::v));
  return tape.reshape_rowmajor(scores, n_queries, n_keys);
}

Matrix build_legal_mask(const ModelInput& input, int n_tags) {
  Matrix mask = Matrix::Constant(n_tags, input.size(), kMaskOff);
  mask.col(0).setZero();
  for (int k = 0; k < input.context_len; ++k) mask.col(input.ctx_pos(k)).setZero();
  return mask;
}

} // namespace

TapeForward forward_on_tape(Tape& tape, const ModelInput& input, const TaggerParams& params,
                            TaggerParams* grads) {
  TapeForward fwd;
  fwd.enc = encoder_on_tape(tape, input, params, grads);

  const std::vector<int> tag_pos = input.tag_positions();
  const int n_tags = static_cast<int>(tag_pos.size());
  NodeId eu = tape.gather_rows(fwd.enc, tag_pos);

  fwd.del_logits = linear(tape, eu, tape.leaf(params.del_w, grads ? &grads->del_w : nullptr),
                          tape.leaf(params.del_b, grads ? &grads->del_b : nullptr));
  fwd.start_logits =
      additive_attention_logits(tape, eu, fwd.enc, n_tags, input.size(), params.attn_start,
                                grads ? &grads->attn_start : nullptr);
  fwd.end_logits =
      additive_attention_logits(tape, eu, fwd.enc, n_tags, input.size(), params.attn_end,
                                grads ? &grads->attn_end : nullptr);
  fwd.legal_mask = build_legal_mask(input, n_tags);
  return fwd;
}

EncoderState encode(const ModelInput& input, const TaggerParams& params) {
  Tape tape;
  NodeId enc = encoder_on_tape(tape, input, params, nullptr);
  return EncoderState{tape.value(enc)};
}

TagDistributions tag_distributions(const EncoderState& enc, const ModelInput& input,
                                   const TaggerParams& params) {
  Tape tape;
  NodeId enc_node = tape.constant(enc.e);
  const std::vector<int> tag_pos = input.tag_positions();
  const int n_tags = static_cast<int>(tag_pos.size());
  NodeId eu = tape.gather_rows(enc_node, tag_pos);

  Tape& t = tape;
  NodeId del_logits =
      t.add_rowvec(t.matmul_nt(eu, t.constant(params.del_w)), t.constant(params.del_b));
  NodeId st_logits = additive_attention_logits(t, eu, enc_node, n_tags, input.size(),
                                               params.attn_start, nullptr);
  NodeId ed_logits = additive_attention_logits(t, eu, enc_node, n_tags, input.size(),
                                               params.attn_end, nullptr);

  TagDistributions dists;
  Matrix zero_mask = Matrix::Zero(n_tags, 2);
  dists.del = masked_softmax(t.value(del_logits), zero_mask);
  Matrix legal = build_legal_mask(input, n_tags);
  dists.start = masked_softmax(t.value(st_logits), legal);
  dists.end = masked_softmax(t.value(ed_logits), legal);
  return dists;
}

TagDistributions distributions_from_forward(const Tape& tape, const TapeForward& fwd) {
  TagDistributions dists;
  const Matrix& del_logits = tape.value(fwd.del_logits);
  dists.del = masked_softmax(del_logits, Matrix::Zero(del_logits.rows(), del_logits.cols()));
  dists.start = masked_softmax(tape.value(fwd.start_logits), fwd.legal_mask);
  dists.end = masked_softmax(tape.value(fwd.end_logits), fwd.legal_mask);
  return dists;
}

GoldTargets gold_targets(const TagProgram& gold, const ModelInput& input) {
  if (gold.tags.size() != static_cast<std::size_t>(input.utterance_len) + 1)
    throw DataError("gold program length does not match the input");
  GoldTargets t;
  for (const TokenTag& tag : gold.tags) {
    t.del.push_back(tag.deletion);
    if (tag.insertion.is_none()) {
      t.start.push_back(input.null_pos());
      t.end.push_back(input.null_pos());
    } else {
      if (tag.insertion.start < 0 || tag.insertion.end >= input.context_len)
        throw DataError("gold span outside the context support");
      t.start.push_back(input.ctx_pos(tag.insertion.start));
      t.end.push_back(input.ctx_pos(tag.insertion.end));
    }
  }
  return t;
}

nn::NodeId tagging_loss_on_tape(Tape& tape, const TapeForward& fwd, const TagProgram& gold,
                                const ModelInput& input) {
  GoldTargets targets = gold_targets(gold, input);
  const Eigen::Index n_tags = tape.value(fwd.del_logits).rows();
  NodeId del_logp = tape.log_softmax_rows(fwd.del_logits, Matrix::Zero(n_tags, 2));
  NodeId st_logp = tape.log_softmax_rows(fwd.start_logits, fwd.legal_mask);
  NodeId ed_logp = tape.log_softmax_rows(fwd.end_logits, fwd.legal_mask);
  NodeId picked = tape.add(tape.pick_sum(del_logp, targets.del),
                           tape.add(tape.pick_sum(st_logp, targets.start),
                                    tape.pick_sum(ed_logp, targets.end)));
  return tape.scale(picked, -1.0);
}

double tagging_loss(const TagDistributions& dists, const TagProgram& gold,
                    const ModelInput& input) {
  GoldTargets targets = gold_targets(gold, input);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < dists.del.rows(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    loss -= std::log(dists.del(i, targets.del[ui]));
    loss -= std::log(dists.start(i, targets.start[ui]));
    loss -= std::log(dists.end(i, targets.end[ui]));
  }
  return loss;
}

TagProgram greedy_decode(const TagDistributions& dists, const ModelInput& input) {
  TagProgram program;
  const int n_tags = static_cast<int>(dists.del.rows());
  program.tags.resize(static_cast<std::size_t>(n_tags));
  for (int i = 0; i < n_tags; ++i) {
    TokenTag tag;
    const bool is_end = i == n_tags - 1;
    tag.deletion = !is_end && dists.del(i, 1) > dists.del(i, 0) ? 1 : 0;

    // Joint span argmax over (NULL,NULL) and legal in-turn pairs. For each
    // start, the best end is a suffix max of the end distribution within the
    // turn; ties keep the smallest index.
    double best = dists.start(i, 0) * dists.end(i, 0);
    Span best_span = Span::none();
    for (int turn = 0; turn < static_cast<int>(input.turn_of_position.size()); ++turn) {
      int lo = -1, hi = -1;
      for (int k = 0; k < input.context_len; ++k) {
        if (input.turn_of_position[static_cast<std::size_t>(input.ctx_pos(k))] != turn) continue;
        if (lo < 0) lo = k;
        hi = k;
      }
      if (lo < 0) continue;
      std::vector<double> suffix_prob(static_cast<std::size_t>(hi - lo + 1));
      std::vector<int> suffix_arg(static_cast<std::size_t>(hi - lo + 1));
      for (int k = hi; k >= lo; --k) {
        double p = dists.end(i, input.ctx_pos(k));
        std::size_t idx = static_cast<std::size_t>(k - lo);
        if (k == hi || p >= suffix_prob[idx + 1]) {
          suffix_prob[idx] = p;
          suffix_arg[idx] = k;
        } else {
          suffix_prob[idx] = suffix_prob[idx + 1];
          suffix_arg[idx] = suffix_arg[idx + 1];
        }
      }
      for (int st = lo; st <= hi; ++st) {
        double joint = dists.start(i, input.ctx_pos(st)) *
                       suffix_prob[static_cast<std::size_t>(st - lo)];
        if (joint > best) {
          best = joint;
          best_span = Span{st, suffix_arg[static_cast<std::size_t>(st - lo)]};
        }
      }
    }
    tag.insertion = best_span;
    program.tags[static_cast<std::size_t>(i)] = tag;
  }
  return program;
}

void AdamState::update(TaggerParams& params, TaggerParams& grads, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  auto ps = tensor_list(params), gs = tensor_list(grads), ms = tensor_list(m),
       vs = tensor_list(v);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Matrix& g = *gs[i];
    *ms[i] = beta1 * *ms[i] + (1.0 - beta1) * g;
    *vs[i] = beta2 * *vs[i] + (1.0 - beta2) * g.cwiseProduct(g);
    Matrix mhat = *ms[i] / bc1;
    Matrix vhat = *vs[i] / bc2;
    ps[i]->array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

void train_more(TaggerParams& params, AdamState& adam, const std::vector<TrainExample>& corpus,
                int epochs, int batch, double lr, std::mt19937_64& rng, TrainReport* report) {
  if (corpus.empty()) throw DataError("train: empty corpus");
  if (batch < 1) throw DataError("train: batch must be positive");
  TaggerParams grads = TaggerParams::zeros_like(params);

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch));
      const double inv = 1.0 / static_cast<double>(end - begin);
      visit_tensors(grads, [](const std::string&, Matrix& g) { g.setZero(); });
      for (std::size_t k = begin; k < end; ++k) {
        const TrainExample& ex = corpus[order[k]];
        Tape tape;
        TapeForward fwd = forward_on_tape(tape, ex.input, params, &grads);
        NodeId loss = tagging_loss_on_tape(tape, fwd, ex.gold, ex.input);
        const double value = tape.value(loss)(0, 0);
        if (!std::isfinite(value))
          throw DataError("train: loss diverged (non-finite) at epoch " + std::to_string(epoch));
        epoch_loss += value;
        tape.backward(loss, inv);
      }
      adam.update(params, grads, lr);
    }
    if (report) report->epoch_loss.push_back(epoch_loss / static_cast<double>(corpus.size()));
  }
}

TaggerParams train(const std::vector<TrainExample>& corpus, const Vocab& vocab,
                   const TaggerConfig& cfg, const TrainConfig& tc, TrainReport* report) {
  TaggerParams params = TaggerParams::init(cfg, vocab, tc.seed);
  AdamState adam(params);
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  train_more(params, adam, corpus, tc.epochs, tc.batch, tc.lr, rng, report);
  return params;
}

// -- checkpoint ---------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[9] = "TAGRWCKP";
}

void save_checkpoint(const std::string& path, const TaggerParams& params) {
  nlohmann::json header;
  header["version"] = 1;
  header["dim"] = params.cfg.dim;
  header["layers"] = params.cfg.layers;
  header["heads"] = params.cfg.heads;
  header["ffn_dim"] = params.cfg.ffn_dim;
  header["max_positions"] = params.cfg.max_positions;
  header["mode"] = params.cfg.mode == TokenMode::Character ? "char" : "word";
  header["vocab"] = params.vocab.tokens;
  nlohmann::json tensors = nlohmann::json::array();
  auto& mutable_params = const_cast<TaggerParams&>(params);
  visit_tensors(mutable_params, [&](const std::string& name, Matrix& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  header["tensors"] = tensors;
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  visit_tensors(mutable_params, [&](const std::string&, Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double)) * m.size());
  });
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

TaggerParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("load_checkpoint: not a checkpoint file: " + path);
  std::uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw DataError("load_checkpoint: truncated header in " + path);

  nlohmann::json header = nlohmann::json::parse(head);
  TaggerConfig cfg;
  cfg.dim = header.at("dim").get<int>();
  cfg.layers = header.at("layers").get<int>();
  cfg.heads = header.at("heads").get<int>();
  cfg.ffn_dim = header.at("ffn_dim").get<int>();
  cfg.max_positions = header.at("max_positions").get<int>();
  cfg.mode = header.at("mode").get<std::string>() == "word" ? TokenMode::Word
                                                            : TokenMode::Character;
  Vocab vocab;
  vocab.tokens.clear();
  vocab.index.clear();
  for (const auto& tok : header.at("vocab")) {
    std::string t = tok.get<std::string>();
    vocab.index.emplace(t, static_cast<int>(vocab.tokens.size()));
    vocab.tokens.push_back(std::move(t));
  }

  TaggerParams params = TaggerParams::init(cfg, vocab, 0);
  std::size_t ti = 0;
  const auto& manifest = header.at("tensors");
  visit_tensors(params, [&](const std::string& name, Matrix& m) {
    if (ti >= manifest.size()) throw DataError("load_checkpoint: tensor manifest too short");
    const auto& entry = manifest[ti++];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<Eigen::Index>() != m.rows() ||
        entry.at("cols").get<Eigen::Index>() != m.cols())
      throw DataError("load_checkpoint: tensor mismatch at " + name);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double)) * m.size());
  });
  if (!in || ti != manifest.size())
    throw DataError("load_checkpoint: truncated tensor data in " + path);
  return params;
}

} // namespace tagrw
