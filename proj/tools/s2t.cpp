// Command-line driver for the string-to-tree pipeline.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include "s2t/analysis.hpp"
#include "s2t/corpus.hpp"
#include "s2t/decode.hpp"
#include "s2t/model.hpp"
#include "s2t/subword.hpp"
#include "s2t/toy.hpp"
#include "s2t/treebank.hpp"

namespace fs = std::filesystem;
using namespace s2t;

namespace {

enum ExitCode : int { kOk = 0, kDataError = 1, kUsageError = 2, kIoFailure = 3, kCheckpointFailure = 4 };

void require_files(const std::vector<std::string>& paths) {
  for (const auto& p : paths)
    if (!fs::is_regular_file(p)) throw IoError("no such file '" + p + "'");
}

// Writes to a file, or to standard output for "-".
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (path == "-") {
      out_ = &std::cout;
    } else {
      if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw IoError("cannot write '" + path + "'");
      out_ = file_.get();
    }
  }
  std::ostream& operator*() { return *out_; }
  void close() {
    out_->flush();
    if (!*out_) throw IoError("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_ = nullptr;
};

std::string format_number(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

Vocabulary load_vocab(const std::string& path) {
  require_files({path});
  std::ifstream in(path);
  return Vocabulary::load(in);
}

void save_vocab(const std::string& path, const Vocabulary& vocab) {
  Sink sink(path);
  vocab.save(*sink);
  sink.close();
}

BpeModel load_codes(const std::string& path, const std::string& marker) {
  require_files({path});
  std::ifstream in(path);
  return BpeModel::load(in, marker);
}

// Applies sub-word segmentation to the terminals of a linearized tree only.
std::string apply_bpe_tree(const BpeModel& model, const std::string& line) {
  LinearTree out;
  for (const TreeToken& token : tokenize(line)) {
    if (token.kind != TreeToken::Kind::Terminal) {
      out.push_back(token);
      continue;
    }
    for (auto& piece : segment_word(model, token.text)) out.push_back(TreeToken::terminal(std::move(piece)));
  }
  return serialize(out);
}

std::vector<std::string> strip_eos(std::vector<std::string> tokens) {
  if (!tokens.empty() && tokens.back() == kEosToken) tokens.pop_back();
  return tokens;
}

struct ModelSet {
  std::vector<ModelParams> params;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
};

// Vocabulary files default to the ones stored beside the first checkpoint.
ModelSet load_models(const std::vector<std::string>& paths, std::string src_vocab, std::string tgt_vocab) {
  require_files(paths);
  const fs::path dir = fs::path(paths.front()).parent_path();
  if (src_vocab.empty()) src_vocab = (dir / "src.vocab").string();
  if (tgt_vocab.empty()) tgt_vocab = (dir / "tgt.vocab").string();
  ModelSet set{{}, load_vocab(src_vocab), load_vocab(tgt_vocab)};
  for (const auto& p : paths) {
    ModelParams params = load_checkpoint(p).params;
    if (params.config.src_vocab_size != set.src_vocab.size() || params.config.tgt_vocab_size != set.tgt_vocab.size())
      throw CheckpointError("checkpoint '" + p + "' does not match the vocabulary sizes");
    set.params.push_back(std::move(params));
  }
  return set;
}

// Record-level alignment restricted to terminal rows, re-indexed to terminal ordinals.
Alignment terminal_argmax(const AttentionRecord& record) {
  return to_terminal_ordinals(hard_align_argmax(record, true), record);
}

void write_report(const DistortionReport& report, const std::string& table_path, const std::string& json_path) {
  if (!table_path.empty()) {
    Sink sink(table_path);
    *sink << report.to_table();
    sink.close();
  }
  if (!json_path.empty()) {
    Sink sink(json_path);
    *sink << report.to_json() << '\n';
    sink.close();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2t: string-to-tree neural translation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 1234;
  app.add_option("--seed", seed, "Random seed for every stochastic step")->capture_default_str();
  std::string marker = std::string(kDefaultContinuationMarker);
  app.add_option("--marker", marker, "Sub-word continuation marker")->capture_default_str();

  std::vector<std::string> inputs;
  std::string input, output = "-";

  // learn-bpe
  auto* learn = app.add_subcommand("learn-bpe", "Learn BPE merges on the concatenation of the input files");
  std::size_t merges = 4000;
  learn->add_option("--input", inputs, "Tokenized text or linearized tree files")->required();
  learn->add_option("--merges", merges, "Number of merge operations")->capture_default_str();
  learn->add_option("--output", output, "Merges file")->capture_default_str();

  // apply-bpe
  auto* apply = app.add_subcommand("apply-bpe", "Segment text (or tree terminals) with learned merges");
  std::string codes;
  bool tree_mode = false;
  apply->add_option("--codes", codes, "Merges file")->required();
  apply->add_option("--input", input, "Input file")->required();
  apply->add_option("--output", output, "Output file")->capture_default_str();
  apply->add_flag("--tree", tree_mode, "Input lines are linearized trees; brackets stay atomic");

  // revert-bpe
  auto* revert = app.add_subcommand("revert-bpe", "Merge sub-words back into words");
  revert->add_option("--input", input, "Input file")->required();
  revert->add_option("--output", output, "Output file")->capture_default_str();
  revert->add_flag("--tree", tree_mode, "Input lines are linearized trees; emit their surface strings");

  // lexicalize / linearize / delinearize
  auto* lexicalize_cmd = app.add_subcommand("lexicalize", "Drop part-of-speech preterminals from PTB trees");
  lexicalize_cmd->add_option("--input", input, "PTB file, one tree per line")->required();
  lexicalize_cmd->add_option("--output", output, "PTB output file")->capture_default_str();

  auto* linearize_cmd = app.add_subcommand("linearize", "Convert PTB trees to linearized token lines");
  bool also_lexicalize = false;
  linearize_cmd->add_option("--input", input, "PTB file, one tree per line")->required();
  linearize_cmd->add_option("--output", output, "Linearized tree file")->capture_default_str();
  linearize_cmd->add_flag("--lexicalize", also_lexicalize, "Drop preterminals first");

  auto* delinearize_cmd = app.add_subcommand("delinearize", "Convert linearized token lines to PTB trees");
  delinearize_cmd->add_option("--input", input, "Linearized tree file")->required();
  delinearize_cmd->add_option("--output", output, "PTB output file")->capture_default_str();

  auto* validate_cmd = app.add_subcommand("validate-trees", "Count well-formed linearized trees");
  bool strict = false;
  validate_cmd->add_option("--input", input, "Linearized tree file")->required();
  validate_cmd->add_flag("--strict", strict, "Exit with status 1 if any tree is invalid");

  // build-vocab
  auto* vocab_cmd = app.add_subcommand("build-vocab", "Frequency-ranked vocabulary over the input files");
  std::size_t max_vocab = 0;
  vocab_cmd->add_option("--input", inputs, "Token files")->required();
  vocab_cmd->add_option("--output", output, "Vocabulary file")->capture_default_str();
  vocab_cmd->add_option("--max-size", max_vocab, "Vocabulary size cap including reserved symbols (0 = none)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train an attentional encoder-decoder");
  std::string train_src, train_tgt, dev_src, dev_tgt, out_dir, src_vocab_path, tgt_vocab_path;
  ModelConfig config;
  TrainOptions topts;
  std::size_t max_src_len = 50, max_tgt_len = 0;
  train_cmd->add_option("--train-src", train_src, "Source training file")->required();
  train_cmd->add_option("--train-tgt", train_tgt, "Target training file")->required();
  train_cmd->add_option("--dev-src", dev_src, "Source development file")->required();
  train_cmd->add_option("--dev-tgt", dev_tgt, "Target development file")->required();
  train_cmd->add_option("--out-dir", out_dir, "Directory for checkpoints and vocabularies")->required();
  train_cmd->add_option("--src-vocab", src_vocab_path, "Source vocabulary (built from training data if absent)");
  train_cmd->add_option("--tgt-vocab", tgt_vocab_path, "Target vocabulary (built from training data if absent)");
  train_cmd->add_option("--embed", config.embed_dim, "Embedding size")->capture_default_str();
  train_cmd->add_option("--hidden", config.hidden_dim, "Recurrent state size")->capture_default_str();
  train_cmd->add_option("--dropout", config.dropout_rate, "Dropout rate on embeddings and hidden states")
      ->capture_default_str();
  train_cmd->add_option("--batch", topts.batch_size, "Minibatch size")->capture_default_str();
  train_cmd->add_option("--checkpoint-every", topts.checkpoint_every, "Updates between checkpoints")
      ->capture_default_str();
  train_cmd->add_option("--patience", topts.patience, "Checkpoints without dev improvement before stopping")
      ->capture_default_str();
  train_cmd->add_option("--max-updates", topts.max_updates, "Hard cap on updates")->capture_default_str();
  train_cmd->add_option("--clip-norm", topts.clip_norm, "Global gradient norm cap (0 disables)")
      ->capture_default_str();
  train_cmd->add_option("--max-src-len", max_src_len, "Drop pairs with longer sources")->capture_default_str();
  train_cmd->add_option("--max-tgt-len", max_tgt_len, "Drop pairs with longer targets (default 150 trees, 50 text)");

  // translate
  auto* translate_cmd = app.add_subcommand("translate", "Beam-search decoding with one or more checkpoints");
  std::vector<std::string> models;
  BeamOptions bopts;
  std::string attn_out, surface_out;
  translate_cmd->add_option("--model", models, "Checkpoint files; several are ensembled")->required();
  translate_cmd->add_option("--input", input, "Sub-word segmented source file")->required();
  translate_cmd->add_option("--output", output, "Token output file")->capture_default_str();
  translate_cmd->add_option("--beam", bopts.beam_size, "Beam size")->capture_default_str();
  translate_cmd->add_option("--max-len", bopts.max_len, "Output length cap (0 = 3 x source + 10 only)")
      ->capture_default_str();
  translate_cmd->add_flag("--constrain-tree", bopts.constrain_tree, "Forbid tokens that break bracket discipline");
  translate_cmd->add_option("--attn-out", attn_out, "Attention records, one JSON object per line");
  translate_cmd->add_option("--surface-out", surface_out, "Surface strings");
  translate_cmd->add_option("--src-vocab", src_vocab_path, "Source vocabulary (default: beside the model)");
  translate_cmd->add_option("--tgt-vocab", tgt_vocab_path, "Target vocabulary (default: beside the model)");

  // align
  auto* align_cmd = app.add_subcommand("align", "Hard alignments from attention records");
  std::string attn_path, method = "argmax";
  double threshold = 0.5;
  bool terminal_only = false, ordinals = false;
  align_cmd->add_option("--attn", attn_path, "Attention records")->required();
  align_cmd->add_option("--method", method, "argmax or threshold")
      ->check(CLI::IsMember({"argmax", "threshold"}))
      ->capture_default_str();
  align_cmd->add_option("--threshold", threshold, "Weight threshold (strictly exceeded)")->capture_default_str();
  align_cmd->add_flag("--terminal-only", terminal_only, "Skip bracket rows (argmax)");
  align_cmd->add_flag("--terminal-ordinals", ordinals, "Index targets by terminal ordinal instead of row");
  align_cmd->add_option("--output", output, "Alignment file")->capture_default_str();

  // distortion
  auto* distortion_cmd = app.add_subcommand("distortion", "Distortion scores of argmax alignments");
  std::string align_path, report_path, json_path;
  distortion_cmd->add_option("--align", align_path, "Alignment file, one function-like alignment per line");
  distortion_cmd->add_option("--attn", attn_path, "Attention records; terminal-only argmax alignments are used");
  distortion_cmd->add_option("--models", models, "Checkpoints to track over training (with --input)");
  distortion_cmd->add_option("--input", input, "Sub-word segmented dev sources (with --models)");
  distortion_cmd->add_option("--beam", bopts.beam_size, "Beam size (with --models)")->capture_default_str();
  distortion_cmd->add_flag("--constrain-tree", bopts.constrain_tree, "Constrained decoding (with --models)");
  distortion_cmd->add_option("--src-vocab", src_vocab_path, "Source vocabulary (with --models)");
  distortion_cmd->add_option("--tgt-vocab", tgt_vocab_path, "Target vocabulary (with --models)");
  distortion_cmd->add_option("--output", output, "Per-sentence scores")->capture_default_str();
  distortion_cmd->add_option("--report", report_path, "Histogram table");
  distortion_cmd->add_option("--json", json_path, "Histogram as a JSON object");

  // extract-ghkm
  auto* ghkm_cmd = app.add_subcommand("extract-ghkm", "Minimal GHKM rules from trees and alignments");
  std::string trees_path, src_path;
  ghkm_cmd->add_option("--attn", attn_path, "Attention records of a tree model (alignment by threshold)");
  ghkm_cmd->add_option("--threshold", threshold, "Attention threshold")->capture_default_str();
  ghkm_cmd->add_option("--trees", trees_path, "Linearized trees (with --src and --align)");
  ghkm_cmd->add_option("--src", src_path, "Source token file");
  ghkm_cmd->add_option("--align", align_path, "Alignments over target terminal ordinals");
  ghkm_cmd->add_option("--output", output, "Rules file")->capture_default_str();

  // group-rules
  auto* group_cmd = app.add_subcommand("group-rules", "Most frequent right-hand sides per left-hand side");
  std::size_t top_k = 5;
  group_cmd->add_option("--rules", input, "Rules file")->required();
  group_cmd->add_option("--top-k", top_k, "Right-hand sides shown per group")->capture_default_str();
  group_cmd->add_option("--output", output, "Table output")->capture_default_str();

  // count-pronouns
  auto* pronoun_cmd = app.add_subcommand("count-pronouns", "Relative pronoun counts");
  pronoun_cmd->add_option("--input", input, "Text file (or linearized trees with --tree)")->required();
  pronoun_cmd->add_flag("--tree", tree_mode, "Count over tree surfaces");
  pronoun_cmd->add_option("--output", output, "Count table")->capture_default_str();

  // first-bracket
  auto* bracket_cmd = app.add_subcommand("first-bracket", "Source attended by each first opening bracket");
  bracket_cmd->add_option("--attn", attn_path, "Attention records of a tree model")->required();
  bracket_cmd->add_option("--output", output, "Report")->capture_default_str();

  // gen-toy
  auto* toy_cmd = app.add_subcommand("gen-toy", "Synthetic verb-final to verb-medial reordering corpus");
  std::size_t toy_size = 2000;
  std::string prefix;
  toy_cmd->add_option("--size", toy_size, "Number of pairs")->capture_default_str();
  toy_cmd->add_option("--prefix", prefix, "Writes <prefix>.src .tree .txt .align")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help("", CLI::AppFormatMode::Normal);
    return kUsageError;
  }

  try {
    if (*learn) {
      require_files(inputs);
      std::vector<std::string> corpus;
      for (const auto& path : inputs)
        for (const auto& line : read_lines(path)) {
          std::vector<std::string> words;
          for (auto& w : split_whitespace(line))
            if (!is_bracket_symbol(w)) words.push_back(std::move(w));
          corpus.push_back(join(words));
        }
      Sink sink(output);
      learn_bpe(corpus, merges).save(*sink);
      sink.close();

    } else if (*apply) {
      require_files({input});
      const BpeModel model = load_codes(codes, marker);
      const auto lines = read_lines(input);
      Sink sink(output);
      for (const auto& line : lines)
        *sink << (tree_mode ? apply_bpe_tree(model, line) : join(apply_bpe(model, split_whitespace(line)))) << '\n';
      sink.close();

    } else if (*revert) {
      require_files({input});
      const auto lines = read_lines(input);
      Sink sink(output);
      for (const auto& line : lines)
        *sink << join(tree_mode ? surface(tokenize(line), marker) : revert_bpe(split_whitespace(line), marker))
              << '\n';
      sink.close();

    } else if (*lexicalize_cmd) {
      require_files({input});
      const auto lines = read_lines(input);
      Sink sink(output);
      for (const auto& line : lines) *sink << print_ptb(lexicalize(parse_ptb(line))) << '\n';
      sink.close();

    } else if (*linearize_cmd) {
      require_files({input});
      const auto lines = read_lines(input);
      Sink sink(output);
      for (const auto& line : lines) {
        ConstituencyTree tree = parse_ptb(line);
        if (also_lexicalize) tree = lexicalize(tree);
        *sink << serialize(linearize(tree)) << '\n';
      }
      sink.close();

    } else if (*delinearize_cmd) {
      require_files({input});
      const auto lines = read_lines(input);
      Sink sink(output);
      for (const auto& line : lines) *sink << print_ptb(parse_linear(tokenize(line))) << '\n';
      sink.close();

    } else if (*validate_cmd) {
      require_files({input});
      const auto lines = read_lines(input);
      std::size_t valid = 0;
      for (std::size_t i = 0; i < lines.size(); ++i) {
        const ValidityReport report = validate(tokenize(lines[i]));
        if (report.valid) {
          ++valid;
        } else {
          std::cerr << "line " << i + 1 << ": " << to_string(report.first_error->kind) << " at token "
                    << report.first_error->position << '\n';
        }
      }
      std::cout << valid << '/' << lines.size() << " valid\n";
      if (strict && valid != lines.size()) return kDataError;

    } else if (*vocab_cmd) {
      require_files(inputs);
      std::vector<std::vector<std::string>> lines;
      for (const auto& path : inputs)
        for (auto& l : read_token_lines(path)) lines.push_back(std::move(l));
      const auto vocab = build_vocab(lines, max_vocab ? std::optional(max_vocab) : std::nullopt);
      Sink sink(output);
      vocab.save(*sink);
      sink.close();

    } else if (*train_cmd) {
      require_files({train_src, train_tgt, dev_src, dev_tgt});
      const auto tr_src = read_token_lines(train_src), tr_tgt = read_token_lines(train_tgt);
      const auto dv_src = read_token_lines(dev_src), dv_tgt = read_token_lines(dev_tgt);
      const Vocabulary src_vocab = src_vocab_path.empty() ? build_vocab(tr_src) : load_vocab(src_vocab_path);
      const Vocabulary tgt_vocab = tgt_vocab_path.empty() ? build_vocab(tr_tgt) : load_vocab(tgt_vocab_path);
      const bool is_tree = vocabulary_has_brackets(tgt_vocab);
      if (max_tgt_len == 0) max_tgt_len = is_tree ? 150 : 50;
      const auto train_pairs = prepare_pairs(tr_src, tr_tgt, src_vocab, tgt_vocab, max_src_len, max_tgt_len, is_tree);
      const auto dev_pairs = prepare_pairs(dv_src, dv_tgt, src_vocab, tgt_vocab, max_src_len, max_tgt_len, is_tree);
      if (train_pairs.empty() || dev_pairs.empty()) throw std::runtime_error("no pairs survive the length limits");

      config.src_vocab_size = src_vocab.size();
      config.tgt_vocab_size = tgt_vocab.size();
      config.seed = seed;
      fs::create_directories(out_dir);
      save_vocab((fs::path(out_dir) / "src.vocab").string(), src_vocab);
      save_vocab((fs::path(out_dir) / "tgt.vocab").string(), tgt_vocab);

      Sink log_file((fs::path(out_dir) / "train.log").string());
      topts.log = [&](const std::string& msg) {
        std::cerr << msg << '\n';
        *log_file << msg << '\n';
      };
      topts.log("train pairs " + std::to_string(train_pairs.size()) + ", dev pairs " +
                std::to_string(dev_pairs.size()) + ", " + (is_tree ? "tree" : "string") + " target");
      const TrainResult result = train(config, train_pairs, dev_pairs, topts);

      Sink index((fs::path(out_dir) / "checkpoints.txt").string());
      for (const Checkpoint& ck : result.checkpoints) {
        std::ostringstream name;
        name << "ckpt-" << std::setw(8) << std::setfill('0') << ck.updates_seen << ".bin";
        save_checkpoint((fs::path(out_dir) / name.str()).string(), ck);
        *index << name.str() << '\t' << ck.updates_seen << '\t' << format_number(ck.dev_loss) << '\n';
      }
      index.close();
      save_checkpoint((fs::path(out_dir) / "best.bin").string(), result.checkpoints.at(result.best));
      topts.log("best checkpoint at " + std::to_string(result.checkpoints[result.best].updates_seen) +
                " updates, dev loss " + format_number(result.checkpoints[result.best].dev_loss));
      log_file.close();

    } else if (*translate_cmd) {
      require_files({input});
      const ModelSet set = load_models(models, src_vocab_path, tgt_vocab_path);
      bopts.target_vocab = &set.tgt_vocab;
      const auto translations =
          translate_corpus(set.params, read_token_lines(input), set.src_vocab, set.tgt_vocab, bopts, marker);
      Sink sink(output);
      for (const auto& t : translations) *sink << join(t.tokens) << '\n';
      sink.close();
      if (!surface_out.empty()) {
        Sink s(surface_out);
        for (const auto& t : translations) *s << join(t.surface) << '\n';
        s.close();
      }
      if (!attn_out.empty()) {
        Sink s(attn_out);
        for (const auto& t : translations) *s << t.attention.to_json_line() << '\n';
        s.close();
      }

    } else if (*align_cmd) {
      const auto records = read_attention_records(attn_path);
      Sink sink(output);
      for (const auto& r : records) {
        Alignment a = method == "argmax" ? hard_align_argmax(r, terminal_only) : hard_align_threshold(r, threshold);
        if (ordinals) a = to_terminal_ordinals(a, r);
        *sink << a.to_line() << '\n';
      }
      sink.close();

    } else if (*distortion_cmd) {
      const int sources = !align_path.empty() + !attn_path.empty() + !models.empty();
      if (sources != 1) {
        std::cerr << "error: give exactly one of --align, --attn or --models\n";
        return kUsageError;
      }
      Sink sink(output);
      if (!models.empty()) {
        if (input.empty()) {
          std::cerr << "error: --models needs --input\n";
          return kUsageError;
        }
        require_files({input});
        const ModelSet set = load_models(models, src_vocab_path, tgt_vocab_path);
        bopts.target_vocab = &set.tgt_vocab;
        const auto means =
            distortion_over_checkpoints(set.params, read_token_lines(input), set.src_vocab, set.tgt_vocab, bopts);
        for (std::size_t i = 0; i < means.size(); ++i) *sink << models[i] << '\t' << format_number(means[i]) << '\n';
      } else {
        std::vector<double> scores;
        if (!align_path.empty()) {
          require_files({align_path});
          for (const auto& line : read_lines(align_path)) scores.push_back(distortion(Alignment::from_line(line)));
        } else {
          for (const auto& r : read_attention_records(attn_path)) scores.push_back(distortion(terminal_argmax(r)));
        }
        for (double d : scores) *sink << format_number(d) << '\n';
        write_report(distortion_histogram(scores), report_path, json_path);
      }
      sink.close();

    } else if (*ghkm_cmd) {
      std::vector<GhkmRule> rules;
      std::size_t skipped_nodes = 0, skipped_records = 0;
      auto collect = [&](const ConstituencyTree& tree, const std::vector<std::string>& src, const Alignment& a) {
        GhkmExtraction ex = extract_ghkm(tree, src, a);
        skipped_nodes += ex.skipped.size();
        for (auto& r : ex.rules) rules.push_back(std::move(r));
      };
      if (!attn_path.empty()) {
        for (const auto& r : read_attention_records(attn_path)) {
          const LinearTree tokens = tokenize(join(strip_eos(r.tgt_tokens)));
          if (!validate(tokens).valid) {
            ++skipped_records;
            continue;
          }
          collect(parse_linear(tokens), strip_eos(r.src_tokens),
                  to_terminal_ordinals(hard_align_threshold(r, threshold), r));
        }
      } else {
        if (trees_path.empty() || src_path.empty() || align_path.empty()) {
          std::cerr << "error: give --attn, or all of --trees, --src and --align\n";
          return kUsageError;
        }
        require_files({trees_path, src_path, align_path});
        const auto trees = read_lines(trees_path);
        const auto srcs = read_token_lines(src_path);
        const auto aligns = read_lines(align_path);
        if (trees.size() != srcs.size() || trees.size() != aligns.size())
          throw LengthMismatch("trees, sources and alignments differ in line count");
        for (std::size_t i = 0; i < trees.size(); ++i)
          collect(parse_linear(tokenize(trees[i])), srcs[i], Alignment::from_line(aligns[i]));
      }
      if (skipped_records) std::cerr << skipped_records << " records skipped: output is not a valid tree\n";
      if (skipped_nodes) std::cerr << skipped_nodes << " frontier nodes skipped: overlapping variable spans\n";
      Sink sink(output);
      write_rules(*sink, rules);
      sink.close();

    } else if (*group_cmd) {
      require_files({input});
      std::ifstream in(input);
      const auto rules = read_rules(in);
      Sink sink(output);
      for (const RuleGroup& g : group_rules(rules, top_k)) {
        *sink << g.lhs << '\t' << g.reordering_total << '\t' << g.total << '\n';
        for (const RhsCount& r : g.top) *sink << "  " << r.rhs << '\t' << r.count << '\t' << r.reordering << '\n';
      }
      sink.close();

    } else if (*pronoun_cmd) {
      require_files({input});
      std::vector<std::vector<std::string>> lines;
      for (const auto& line : read_lines(input))
        lines.push_back(tree_mode ? surface(tokenize(line), marker) : revert_bpe(split_whitespace(line), marker));
      const auto counts = count_relative_pronouns(lines);
      Sink sink(output);
      for (std::size_t i = 0; i < counts.size(); ++i) *sink << kRelativePronouns[i] << '\t' << counts[i] << '\n';
      sink.close();

    } else if (*bracket_cmd) {
      const auto records = read_attention_records(attn_path);
      Sink sink(output);
      for (const auto& r : records) {
        const FirstBracketReport rep = first_bracket_report(r);
        *sink << rep.source_index << '\t' << r.src_tokens.at(rep.source_index) << '\t';
        if (rep.target_row)
          *sink << *rep.target_row << '\t' << r.tgt_tokens.at(*rep.target_row) << '\n';
        else
          *sink << "-\t-\n";
      }
      sink.close();

    } else if (*toy_cmd) {
      const auto pairs = gen_toy(toy_size, seed);
      Sink src(prefix + ".src"), tree(prefix + ".tree"), text(prefix + ".txt"), align(prefix + ".align");
      for (const auto& p : pairs) {
        *src << join(p.source) << '\n';
        *tree << serialize(linearize(p.tree)) << '\n';
        *text << join(p.tree.yield()) << '\n';
        *align << p.gold.to_line() << '\n';
      }
      for (Sink* s : {&src, &tree, &text, &align}) s->close();
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckpointFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}
