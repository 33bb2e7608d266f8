#include "tagrw/rl.hpp"

#include <algorithm>
#include <cmath>

#include "httplib.h"
#include "json.hpp"

#include "tagrw/metrics.hpp"

namespace tagrw {

using nn::NodeId;
using nn::Tape;

namespace {

constexpr double kMaskOff = -1e30;

// Draws an index from one row treated as a categorical distribution. Entries
// with zero probability are never chosen.
int sample_row(const Matrix& probs, Eigen::Index row, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cum = 0.0;
  int last_positive = -1;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    const double p = probs(row, j);
    if (p <= 0.0) continue;
    last_positive = static_cast<int>(j);
    cum += p;
    if (u < cum) return static_cast<int>(j);
  }
  return last_positive; // rounding left u just past the total mass
}

// In-turn context token indices at or after `start_ctx`.
std::vector<int> allowed_end_positions(const ModelInput& input, int start_ctx) {
  std::vector<int> out;
  const int start_pos = input.ctx_pos(start_ctx);
  const int turn = input.turn_of_position[static_cast<std::size_t>(start_pos)];
  for (int k = start_ctx; k < input.context_len; ++k) {
    const int pos = input.ctx_pos(k);
    if (input.turn_of_position[static_cast<std::size_t>(pos)] != turn) break;
    out.push_back(pos);
  }
  return out;
}

} // namespace

SampledProgram sample_program(const TagDistributions& dists, const ModelInput& input,
                              std::mt19937_64& rng) {
  SampledProgram out;
  const int n_tags = static_cast<int>(dists.del.rows());
  out.program.tags.resize(static_cast<std::size_t>(n_tags));

  for (int i = 0; i < n_tags; ++i) {
    TokenTag tag;
    const bool is_end = i == n_tags - 1;
    if (!is_end) {
      tag.deletion = sample_row(dists.del, i, rng);
      out.logprob += std::log(dists.del(i, tag.deletion));
    }

    const int st_pos = sample_row(dists.start, i, rng);
    out.logprob += std::log(dists.start(i, st_pos));
    if (st_pos == input.null_pos()) {
      out.logprob += std::log(dists.end(i, input.null_pos()));
      tag.insertion = Span::none();
    } else {
      const int st_ctx = input.ctx_index(st_pos);
      const std::vector<int> allowed = allowed_end_positions(input, st_ctx);
      double total = 0.0;
      for (int pos : allowed) total += dists.end(i, pos);
      std::uniform_real_distribution<double> uniform(0.0, 1.0);
      const double u = uniform(rng) * total;
      double cum = 0.0;
      int chosen = allowed.back();
      for (int pos : allowed) {
        cum += dists.end(i, pos);
        if (u < cum) {
          chosen = pos;
          break;
        }
      }
      out.logprob += std::log(dists.end(i, chosen) / total);
      tag.insertion = Span{st_ctx, input.ctx_index(chosen)};
    }
    out.program.tags[static_cast<std::size_t>(i)] = tag;
  }
  return out;
}

double bleu_reward(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty()) return 0.0;
  return sentence_bleu_smooth3(candidate, reference);
}

LmScorerClient LmScorerClient::from_endpoint(const std::string& endpoint) {
  LmScorerClient c;
  std::string rest = endpoint;
  if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
  const auto slash = rest.find('/');
  if (slash != std::string::npos) {
    c.path = rest.substr(slash);
    rest = rest.substr(0, slash);
  }
  const auto colon = rest.find(':');
  if (colon == std::string::npos || colon + 1 >= rest.size())
    throw ScorerError("scorer endpoint must look like host:port, got: " + endpoint);
  c.host = rest.substr(0, colon);
  try {
    c.port = std::stoi(rest.substr(colon + 1));
  } catch (const std::exception&) {
    throw ScorerError("scorer endpoint has a non-numeric port: " + endpoint);
  }
  return c;
}

std::vector<double> LmScorerClient::perplexities(const std::vector<std::string>& texts) const {
  nlohmann::json body;
  body["texts"] = texts;
  const std::string payload = body.dump();

  std::string last_error = "no attempts made";
  for (int attempt = 0; attempt <= retries; ++attempt) {
    httplib::Client cli(host, port);
    cli.set_connection_timeout(0, timeout_ms * 1000);
    cli.set_read_timeout(0, timeout_ms * 1000);
    auto res = cli.Post(path, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "scorer returned status " + std::to_string(res->status);
      continue;
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const std::exception& e) {
      throw ScorerError(std::string("scorer reply is not JSON: ") + e.what());
    }
    if (!reply.contains("perplexities") || !reply["perplexities"].is_array() ||
        reply["perplexities"].size() != texts.size())
      throw ScorerError("scorer reply missing aligned perplexities array");
    std::vector<double> out;
    out.reserve(texts.size());
    for (const auto& v : reply["perplexities"]) {
      const double ppl = v.get<double>();
      if (!(ppl > 0.0) || !std::isfinite(ppl))
        throw ScorerError("scorer returned a non-positive perplexity");
      out.push_back(ppl);
    }
    return out;
  }
  throw ScorerError("scorer unreachable after " + std::to_string(retries + 1) +
                    " attempts: " + last_error);
}

double lm_reward(const Tokens& candidate, const LmScorerClient& scorer) {
  if (candidate.empty()) throw ScorerError("lm_reward: empty candidate");
  const auto ppl = scorer.perplexities({join_tokens(candidate, scorer.join_mode)});
  return -std::log(ppl[0]);
}

double rl_loss(double reward_greedy, double reward_sampled, double logprob_sampled) {
  return (reward_greedy - reward_sampled) * logprob_sampled;
}

namespace {

// Log-probability of the sampled program under the sampling procedure,
// rebuilt on the tape so the policy gradient can flow. Rows whose start is
// NULL keep the unconditional end mask; others restrict the end softmax to
// the renormalization set actually sampled from.
NodeId sampled_logprob_on_tape(Tape& tape, const TapeForward& fwd, const SampledProgram& sample,
                               const ModelInput& input) {
  const GoldTargets targets = gold_targets(sample.program, input);
  const Eigen::Index n_tags = tape.value(fwd.del_logits).rows();
  const Eigen::Index n = tape.value(fwd.start_logits).cols();

  Matrix end_mask = Matrix::Constant(n_tags, n, kMaskOff);
  for (Eigen::Index i = 0; i < n_tags; ++i) {
    const Span span = sample.program.tags[static_cast<std::size_t>(i)].insertion;
    if (span.is_none()) {
      end_mask.row(i) = fwd.legal_mask.row(i);
    } else {
      for (int pos : allowed_end_positions(input, span.start)) end_mask(i, pos) = 0.0;
    }
  }

  NodeId st_logp = tape.log_softmax_rows(fwd.start_logits, fwd.legal_mask);
  NodeId ed_logp = tape.log_softmax_rows(fwd.end_logits, std::move(end_mask));
  NodeId total = tape.add(tape.pick_sum(st_logp, targets.start),
                          tape.pick_sum(ed_logp, targets.end));

  // Deletion terms cover the utterance positions only; END is forced.
  if (n_tags > 1) {
    std::vector<int> utt_rows(static_cast<std::size_t>(n_tags - 1));
    for (int i = 0; i + 1 < n_tags; ++i) utt_rows[static_cast<std::size_t>(i)] = i;
    NodeId del_logp = tape.log_softmax_rows(fwd.del_logits, Matrix::Zero(n_tags, 2));
    std::vector<int> del_picks(targets.del.begin(), targets.del.end() - 1);
    total = tape.add(total, tape.pick_sum(tape.gather_rows(del_logp, std::move(utt_rows)),
                                          std::move(del_picks)));
  }
  return total;
}

std::vector<double> batch_rewards(const std::vector<std::string>& texts, const RLConfig& cfg) {
  const auto ppls = cfg.scorer->perplexities(texts);
  std::vector<double> rewards(ppls.size());
  for (std::size_t i = 0; i < ppls.size(); ++i) rewards[i] = -std::log(ppls[i]);
  return rewards;
}

} // namespace

RlStepReport combined_step(std::span<const RlExample> batch, TaggerParams& params,
                           TaggerParams& grads, AdamState& adam, const RLConfig& cfg,
                           std::mt19937_64& rng) {
  if (batch.empty()) throw DataError("combined_step: empty batch");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0)
    throw DataError("combined_step: lambda must be in [0,1]");
  if (cfg.kind == RewardKind::ExternalLm && !cfg.scorer)
    throw DataError("combined_step: external LM reward requires a scorer");

  RlStepReport report;
  const double inv = 1.0 / static_cast<double>(batch.size());

  struct Prepared {
    Tape tape;
    TapeForward fwd;
    SampledProgram sample;
    NodeId tag_loss;
    Tokens greedy_text, sampled_text;
  };
  std::vector<Prepared> prepared(batch.size());

  for (std::size_t k = 0; k < batch.size(); ++k) {
    const RlExample& ex = batch[k];
    Prepared& p = prepared[k];
    p.fwd = forward_on_tape(p.tape, ex.input, params, &grads);
    p.tag_loss = tagging_loss_on_tape(p.tape, p.fwd, ex.gold, ex.input);
    const TagDistributions dists = distributions_from_forward(p.tape, p.fwd);
    p.sample = sample_program(dists, ex.input, rng);
    p.greedy_text = apply_tags(ex.utterance, ex.ctx, greedy_decode(dists, ex.input));
    p.sampled_text = apply_tags(ex.utterance, ex.ctx, p.sample.program);
  }

  // Rewards for the whole batch up front; an unreachable scorer downgrades
  // the step to tagging-only instead of killing the run.
  std::vector<double> greedy_r(batch.size()), sampled_r(batch.size());
  bool have_rewards = true;
  if (cfg.kind == RewardKind::Bleu) {
    for (std::size_t k = 0; k < batch.size(); ++k) {
      greedy_r[k] = bleu_reward(prepared[k].greedy_text, batch[k].reference);
      sampled_r[k] = bleu_reward(prepared[k].sampled_text, batch[k].reference);
    }
  } else {
    std::vector<std::string> texts;
    texts.reserve(batch.size() * 2);
    for (const auto& p : prepared) {
      texts.push_back(join_tokens(p.greedy_text, cfg.scorer->join_mode));
      texts.push_back(join_tokens(p.sampled_text, cfg.scorer->join_mode));
    }
    try {
      const auto rewards = batch_rewards(texts, cfg);
      for (std::size_t k = 0; k < batch.size(); ++k) {
        greedy_r[k] = rewards[2 * k];
        sampled_r[k] = rewards[2 * k + 1];
      }
    } catch (const ScorerError&) {
      have_rewards = false;
    }
  }

  visit_tensors(grads, [](const std::string&, Matrix& g) { g.setZero(); });
  double tag_sum = 0.0, rl_sum = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    Prepared& p = prepared[k];
    const double tag_value = p.tape.value(p.tag_loss)(0, 0);
    if (!std::isfinite(tag_value)) throw DataError("combined_step: tagging loss diverged");
    tag_sum += tag_value;

    NodeId total;
    if (have_rewards) {
      NodeId logprob = sampled_logprob_on_tape(p.tape, p.fwd, p.sample, batch[k].input);
      NodeId rl = p.tape.scale(logprob, greedy_r[k] - sampled_r[k]);
      rl_sum += p.tape.value(rl)(0, 0);
      total = p.tape.add(p.tape.scale(p.tag_loss, 1.0 - cfg.lambda),
                         p.tape.scale(rl, cfg.lambda));
    } else {
      total = p.tag_loss;
    }
    p.tape.backward(total, inv);
  }
  adam.update(params, grads, cfg.lr);

  report.loss_tagging = tag_sum * inv;
  report.loss_rl = have_rewards ? rl_sum * inv : 0.0;
  report.rl_skipped = !have_rewards;
  report.loss_combined = have_rewards
                             ? (1.0 - cfg.lambda) * report.loss_tagging +
                                   cfg.lambda * report.loss_rl
                             : report.loss_tagging;
  return report;
}

RlTrainReport rl_train(const std::vector<RlExample>& corpus, TaggerParams& params,
                       const RLConfig& cfg, int epochs, int batch) {
  if (corpus.empty()) throw DataError("rl_train: empty corpus");
  RlTrainReport report;
  TaggerParams grads = TaggerParams::zeros_like(params);
  AdamState adam(params);
  std::mt19937_64 rng(cfg.seed ^ 0xda3e39cb94b95bdbULL);

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double combined = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch));
      std::vector<RlExample> slice;
      slice.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) slice.push_back(corpus[order[k]]);
      RlStepReport step = combined_step(slice, params, grads, adam, cfg, rng);
      combined += step.loss_combined;
      if (step.rl_skipped) ++report.skipped_batches;
      ++batches;
    }
    report.epoch_combined.push_back(combined / static_cast<double>(batches));
  }
  return report;
}

} // namespace tagrw
