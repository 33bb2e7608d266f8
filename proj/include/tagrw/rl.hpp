// REINFORCE-with-baseline fine-tuning: sample a tag program, decode the
// greedy one, score both with sentence BLEU or an external language-model
// scorer, and descend on the mixed tagging + policy-gradient objective.
#pragma once

#include <optional>
#include <span>

#include "tagrw/model.hpp"

namespace tagrw {

/// External scorer unreachable or speaking the wrong protocol.
struct ScorerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SampledProgram {
  TagProgram program;
  double logprob = 0.0; // log-probability under the sampling procedure
};

/// Samples deletion and span tags per position. A NULL start forces a NULL
/// end (its unconditional probability enters the logprob); otherwise the end
/// is drawn from the end distribution renormalized over in-turn positions at
/// or after the start, so every sample is structurally valid. END deletion
/// is forced to 0 with no log term.
SampledProgram sample_program(const TagDistributions& dists, const ModelInput& input,
                              std::mt19937_64& rng);

/// Smoothing-3 sentence BLEU against the reference; an empty candidate
/// scores 0.
double bleu_reward(const Tokens& candidate, const Tokens& reference);

/// Client for the LM scorer wire protocol: POST {"texts":[...]} to the
/// endpoint, receive {"perplexities":[...]} aligned by index.
struct LmScorerClient {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string path = "/perplexity";
  int timeout_ms = 2000;
  int retries = 1;
  TokenMode join_mode = TokenMode::Character;

  /// Accepts "host:port" or "http://host:port[/path]".
  static LmScorerClient from_endpoint(const std::string& endpoint);
  /// One round trip, retried on transport failure; throws ScorerError after
  /// the final attempt or on malformed replies.
  std::vector<double> perplexities(const std::vector<std::string>& texts) const;
};

/// Reward = -ln(perplexity); the scorer is reference-free and never updated.
/// Requires a non-empty candidate.
double lm_reward(const Tokens& candidate, const LmScorerClient& scorer);

/// Eq-style self-critical objective: (r_greedy - r_sampled) * logprob. The
/// rewards are constants; gradient flows only through the logprob.
double rl_loss(double reward_greedy, double reward_sampled, double logprob_sampled);

enum class RewardKind { Bleu, ExternalLm };

struct RLConfig {
  double lambda = 0.5;
  RewardKind kind = RewardKind::Bleu;
  std::uint64_t seed = 1;
  double lr = 1e-4;
  std::optional<LmScorerClient> scorer; // required for ExternalLm
};

/// Everything one instance contributes to an RL step.
struct RlExample {
  ModelInput input;
  TagProgram gold;
  Tokens utterance;
  FlatContext ctx;
  Tokens reference;
};

struct RlStepReport {
  double loss_tagging = 0.0;  // batch mean
  double loss_rl = 0.0;       // batch mean, 0 when skipped
  double loss_combined = 0.0; // (1-lambda)*tagging + lambda*rl
  bool rl_skipped = false;    // scorer outage: tagging-only fallback
};

/// One optimizer step on a batch: greedy + sampled candidates, rewards,
/// combined descent. Scorer failures degrade the batch to tagging-only
/// instead of aborting.
RlStepReport combined_step(std::span<const RlExample> batch, TaggerParams& params,
                           TaggerParams& grads, AdamState& adam, const RLConfig& cfg,
                           std::mt19937_64& rng);

struct RlTrainReport {
  std::vector<double> epoch_combined;
  int skipped_batches = 0;
};

/// Stage-2 fine-tuning loop over a pretrained parameter set. One RNG stream
/// seeded from cfg.seed drives shuffling and sampling in batch order; reward
/// requests never consume randomness, so batching them (or fetching them
/// concurrently) cannot change which programs are sampled.
RlTrainReport rl_train(const std::vector<RlExample>& corpus, TaggerParams& params,
                       const RLConfig& cfg, int epochs, int batch);

} // namespace tagrw
