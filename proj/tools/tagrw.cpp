// tagrw — dialogue utterance rewriting as sequence tagging.
//
// Subcommands: annotate, apply, train, predict, eval, stats, scorer-stub.
// Every flag can be overridden by an environment variable with the TAGRW_
// prefix (e.g. TAGRW_MODE, TAGRW_SEED).
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer unreachable.

#include <iostream>

#include "CLI11.hpp"

#include "tagrw/pipeline.hpp"
#include "tagrw/scorer_stub.hpp"

namespace {

tagrw::TokenMode parse_mode(const std::string& mode) {
  if (mode == "char") return tagrw::TokenMode::Character;
  if (mode == "word") return tagrw::TokenMode::Word;
  throw CLI::ValidationError("--mode must be 'char' or 'word'");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dialogue utterance rewriting as sequence tagging"};
  app.require_subcommand(1);

  std::string mode = "char";
  std::string corpus, tags, uncovered, output, checkpoint, pred, ref, endpoint;
  std::uint64_t seed = 1;
  double lambda = 0.5;
  std::string reward = "bleu";
  int epochs = 30, rl_epochs = 0, dim = 64, layers = 2, batch = 16;
  double lr = 1e-3, rl_lr = 1e-4;
  int port = 8090;
  std::size_t vocab_size = 0;

  auto add_mode = [&](CLI::App* cmd) {
    cmd->add_option("--mode", mode, "Tokenization: char (default) or word")
        ->envname("TAGRW_MODE")
        ->check(CLI::IsMember({"char", "word"}));
  };

  auto* annotate = app.add_subcommand("annotate", "Compile gold tag programs from a corpus");
  annotate->add_option("--corpus", corpus, "Input corpus (JSONL)")->required();
  annotate->add_option("--tags", tags, "Output tag programs (JSONL)")->required();
  annotate->add_option("--uncovered", uncovered,
                       "Sidecar for uncovered instances (default: <tags>.uncovered)");
  add_mode(annotate);

  auto* apply = app.add_subcommand("apply", "Execute tag programs against a corpus");
  apply->add_option("--tags", tags, "Tag programs (JSONL)")->required();
  apply->add_option("--corpus", corpus, "Corpus the programs index into")->required();
  apply->add_option("--output", output, "Rewritten text, one line per program")->required();
  add_mode(apply);

  auto* train = app.add_subcommand("train", "Train the span tagger (stage 1 + optional RL stage 2)");
  train->add_option("--corpus", corpus, "Training corpus with references")->required();
  train->add_option("--checkpoint", checkpoint, "Checkpoint to write")->required();
  add_mode(train);
  train->add_option("--seed", seed, "RNG seed")->envname("TAGRW_SEED");
  train->add_option("--epochs", epochs, "Stage-1 epochs")->envname("TAGRW_EPOCHS");
  train->add_option("--batch", batch, "Batch size");
  train->add_option("--lr", lr, "Stage-1 learning rate");
  train->add_option("--dim", dim, "Model width")->envname("TAGRW_DIM");
  train->add_option("--layers", layers, "Encoder blocks")->envname("TAGRW_LAYERS");
  train->add_option("--rl-epochs", rl_epochs, "Stage-2 epochs (0 disables RL)");
  train->add_option("--rl-lr", rl_lr, "Stage-2 learning rate");
  train->add_option("--lambda", lambda, "RL mixing weight in [0,1]")->envname("TAGRW_LAMBDA");
  train->add_option("--reward", reward, "RL reward: bleu or lm")
      ->envname("TAGRW_REWARD")
      ->check(CLI::IsMember({"bleu", "lm"}));
  int lm_timeout_ms = 2000, lm_retries = 1;
  train->add_option("--lm-endpoint", endpoint, "LM scorer endpoint host:port")
      ->envname("TAGRW_LM_ENDPOINT");
  train->add_option("--lm-timeout-ms", lm_timeout_ms, "Scorer request timeout");
  train->add_option("--lm-retries", lm_retries, "Scorer retry count");

  auto* predict = app.add_subcommand("predict", "Greedy-decode rewrites with a checkpoint");
  predict->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  predict->add_option("--corpus", corpus, "Corpus to rewrite")->required();
  predict->add_option("--output", output, "Rewritten text output")->required();
  predict->add_option("--tags", tags, "Optional decoded tag program output");

  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  eval->add_option("--pred", pred, "Predicted text, one line per instance")->required();
  eval->add_option("--ref", ref, "Reference text, one line per instance")->required();
  add_mode(eval);

  auto* stats = app.add_subcommand(
      "stats", "Corpus statistics (token stddev is population, i.e. divides by n)");
  stats->add_option("--corpus", corpus, "Corpus (JSONL)")->required();
  add_mode(stats);

  auto* stub = app.add_subcommand("scorer-stub",
                                  "Serve the uniform-unigram LM scorer stub over HTTP");
  stub->add_option("--port", port, "Port to listen on");
  stub->add_option("--vocab-size", vocab_size, "Vocabulary size (overrides --corpus)");
  stub->add_option("--corpus", corpus, "Corpus to build the vocabulary from");
  add_mode(stub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const tagrw::TokenMode tok_mode = parse_mode(mode);
    if (annotate->parsed()) {
      if (uncovered.empty()) uncovered = tags + ".uncovered";
      auto summary = tagrw::cmd_annotate(corpus, tags, uncovered, tok_mode);
      std::cout << "covered " << summary.covered << ", uncovered " << summary.uncovered
                << " (" << summary.pct_uncovered << "% uncovered)\n";
    } else if (apply->parsed()) {
      tagrw::cmd_apply(tags, corpus, output, tok_mode);
    } else if (train->parsed()) {
      tagrw::TrainOptions options;
      options.mode = tok_mode;
      options.model.dim = dim;
      options.model.layers = layers;
      options.stage1 = {epochs, batch, lr, seed};
      options.rl_epochs = rl_epochs;
      options.rl.lambda = lambda;
      options.rl.lr = rl_lr;
      options.rl.seed = seed;
      if (reward == "lm") {
        options.rl.kind = tagrw::RewardKind::ExternalLm;
        if (endpoint.empty())
          throw tagrw::DataError("--reward lm requires --lm-endpoint");
        options.rl.scorer = tagrw::LmScorerClient::from_endpoint(endpoint);
        options.rl.scorer->timeout_ms = lm_timeout_ms;
        options.rl.scorer->retries = lm_retries;
      }
      auto summary = tagrw::cmd_train(corpus, checkpoint, options);
      std::cout << "trained on " << summary.covered << " covered instances ("
                << summary.uncovered << " uncovered skipped), final tagging loss "
                << summary.final_tagging_loss << '\n';
      if (summary.rl_skipped_batches > 0)
        std::cout << "warning: " << summary.rl_skipped_batches
                  << " RL batches fell back to tagging-only (scorer outage)\n";
    } else if (predict->parsed()) {
      tagrw::cmd_predict(checkpoint, corpus, output, tags);
    } else if (eval->parsed()) {
      tagrw::print_eval(std::cout, tagrw::cmd_eval(pred, ref, tok_mode));
    } else if (stats->parsed()) {
      tagrw::print_stats(std::cout, tagrw::cmd_stats(corpus, tok_mode));
    } else if (stub->parsed()) {
      std::size_t v = vocab_size;
      if (v == 0 && !corpus.empty()) {
        tagrw::Vocab vocab;
        for (const auto& rec : tagrw::read_corpus(corpus)) {
          auto inst = tagrw::to_instance(rec, tok_mode);
          for (const auto& turn : inst.context_turns)
            for (const auto& tok : turn) vocab.add(tok);
          for (const auto& tok : inst.utterance) vocab.add(tok);
        }
        v = static_cast<std::size_t>(vocab.size());
      }
      if (v == 0) throw tagrw::DataError("scorer-stub needs --vocab-size or --corpus");
      std::cout << "serving uniform-unigram scorer (vocab " << v << ") on port " << port
                << std::endl;
      tagrw::ScorerServer server(tagrw::StubScorer{v});
      server.run_blocking(port);
    }
  } catch (const tagrw::ScorerError& e) {
    std::cerr << "scorer error: " << e.what() << '\n';
    return 3;
  } catch (const tagrw::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
