// Trainable span tagger: a small transformer encoder shared by three heads —
// a binary deletion classifier and additive-attention start/end span
// pointers. Insertion spans are decoded jointly under the start <= end and
// same-turn constraints; "no insertion" is represented by attending to a
// dedicated NULL position.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>

#include "tagrw/nn/tape.hpp"
#include "tagrw/reconstructor.hpp"

namespace tagrw {

using nn::Matrix;

/// Closed vocabulary built from the training corpus. Ids 0..2 are reserved
/// for <unk>, the NULL sentinel and the END sentinel.
struct Vocab {
  static constexpr int kUnk = 0;
  static constexpr int kNull = 1;
  static constexpr int kEnd = 2;

  std::vector<std::string> tokens{"<unk>", "<null>", "<end>"};
  std::unordered_map<std::string, int> index{{"<unk>", 0}, {"<null>", 1}, {"<end>", 2}};

  int size() const { return static_cast<int>(tokens.size()); }
  int id(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kUnk : it->second;
  }
  void add(const std::string& token) {
    if (index.emplace(token, size()).second) tokens.push_back(token);
  }
};

enum class Region : std::uint8_t { Null, Context, Utterance, End };

/// Model input layout: position 0 is the NULL sentinel, positions 1..C hold
/// the flattened context, C+1..C+U the utterance, and the last position the
/// END sentinel. Context token k lives at position k+1.
struct ModelInput {
  std::vector<int> ids;
  std::vector<Region> regions;
  std::vector<int> turn_of_position; // -1 outside the context region
  int context_len = 0;
  int utterance_len = 0;

  int size() const { return static_cast<int>(ids.size()); }
  int null_pos() const { return 0; }
  int ctx_pos(int ctx_index) const { return 1 + ctx_index; }
  int ctx_index(int pos) const { return pos - 1; }
  int end_pos() const { return size() - 1; }
  /// Positions carrying tags: the utterance tokens followed by END.
  std::vector<int> tag_positions() const;
};

ModelInput build_model_input(const DialogueInstance& instance, const FlatContext& ctx,
                             const Vocab& vocab);

struct TaggerConfig {
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn_dim = 256;
  int max_positions = 512;
  TokenMode mode = TokenMode::Character;
};

/// All trainable weights. The same struct doubles as gradient / Adam moment
/// storage via zeros_like.
struct TaggerParams {
  TaggerConfig cfg;
  Vocab vocab;

  Matrix tok_emb, pos_emb;
  struct Block {
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix ln1_g, ln1_b, ln2_g, ln2_b;
    Matrix ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };
  std::vector<Block> blocks;
  Matrix lnf_g, lnf_b;
  Matrix del_w, del_b; // 2 x d, 1 x 2
  struct AdditiveAttention {
    Matrix wq, wk, bias, v; // h x d, h x d, 1 x h, h x 1
  };
  AdditiveAttention attn_start, attn_end;

  static TaggerParams init(const TaggerConfig& cfg, const Vocab& vocab, std::uint64_t seed);
  static TaggerParams zeros_like(const TaggerParams& other);
};

/// Visits every tensor with a stable name; visit order is fixed and shared
/// by the optimizer, the checkpoint format and the gradient checker.
void visit_tensors(TaggerParams& params,
                   const std::function<void(const std::string&, Matrix&)>& fn);

struct EncoderState {
  Matrix e; // one row per input position
};

/// Deterministic contextual encoding; throws DataError on out-of-vocabulary
/// ids or inputs longer than cfg.max_positions.
EncoderState encode(const ModelInput& input, const TaggerParams& params);

/// Per tag position: deletion distribution over {keep, delete} and start/end
/// distributions over model positions, with exactly zero mass outside
/// {NULL} + CONTEXT.
struct TagDistributions {
  Matrix del;   // U x 2
  Matrix start; // U x N
  Matrix end;   // U x N
};

TagDistributions tag_distributions(const EncoderState& enc, const ModelInput& input,
                                   const TaggerParams& params);

/// Cross-entropy over gold tags: deletion, start and end terms summed over
/// the utterance + END positions. A NONE gold span targets the NULL
/// position for both pointers. Gold spans outside the context raise
/// DataError.
double tagging_loss(const TagDistributions& dists, const TagProgram& gold,
                    const ModelInput& input);

/// Argmax deletion per position plus joint span argmax of p(start)*p(end)
/// over (NULL,NULL) and all legal context pairs (start <= end, same turn).
/// END deletion is forced to 0; the result always validates.
TagProgram greedy_decode(const TagDistributions& dists, const ModelInput& input);

struct TrainConfig {
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct TrainExample {
  ModelInput input;
  TagProgram gold;
};

struct TrainReport {
  std::vector<double> epoch_loss;
};

/// Adam with bias correction; state shapes mirror the parameters.
struct AdamState {
  TaggerParams m, v;
  std::int64_t step = 0;

  explicit AdamState(const TaggerParams& params)
      : m(TaggerParams::zeros_like(params)), v(TaggerParams::zeros_like(params)) {}
  void update(TaggerParams& params, TaggerParams& grads, double lr);
};

/// Minibatch Adam on the tagging loss; deterministic given the seed.
/// Divergence (non-finite loss) aborts with DataError.
TaggerParams train(const std::vector<TrainExample>& corpus, const Vocab& vocab,
                   const TaggerConfig& cfg, const TrainConfig& tc,
                   TrainReport* report = nullptr);

/// Resumable core of train(): runs `epochs` more epochs in place and appends
/// per-epoch mean losses to the report.
void train_more(TaggerParams& params, AdamState& adam, const std::vector<TrainExample>& corpus,
                int epochs, int batch, double lr, std::mt19937_64& rng,
                TrainReport* report = nullptr);

// -- tape plumbing shared with the RL trainer --------------------------------

struct TapeForward {
  nn::NodeId enc;                   // N x d encoder output
  nn::NodeId del_logits;            // U x 2
  nn::NodeId start_logits, end_logits; // U x N, raw (unmasked) pointer logits
  Matrix legal_mask;                // additive mask for {NULL} + CONTEXT support
};

TapeForward forward_on_tape(nn::Tape& tape, const ModelInput& input, const TaggerParams& params,
                            TaggerParams* grads);
nn::NodeId tagging_loss_on_tape(nn::Tape& tape, const TapeForward& fwd, const TagProgram& gold,
                                const ModelInput& input);
/// Same values tag_distributions produces, read off an existing forward pass.
TagDistributions distributions_from_forward(const nn::Tape& tape, const TapeForward& fwd);

/// Gold tag targets in model-position space (NULL position for NONE spans).
struct GoldTargets {
  std::vector<int> del, start, end;
};
GoldTargets gold_targets(const TagProgram& gold, const ModelInput& input);

// -- checkpoint ---------------------------------------------------------------

/// Self-describing binary container (config + vocab + tensors); round-trips
/// bitwise.
void save_checkpoint(const std::string& path, const TaggerParams& params);
TaggerParams load_checkpoint(const std::string& path);

} // namespace tagrw
