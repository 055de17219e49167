#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sde/align.hpp"
#include "sde/analysis.hpp"
#include "sde/config.hpp"
#include "sde/eval.hpp"
#include "sde/gradient_suite.hpp"
#include "sde/pipeline.hpp"

using namespace sde;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kRuntime = 1, kUsage = 2, kConfig = 3, kPath = 4, kNumeric = 5 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> sets;
  std::string args;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw PathError("file not found: " + path.string());
}

std::vector<Sentence> read_sentences(const fs::path& path) {
  require_file(path);
  std::vector<Sentence> out;
  for (const auto& line : read_lines(path)) out.push_back(split_tokens(line));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write " + path.string());
  out << text;
}

KeyValueConfig load_config(const Common& c) {
  KeyValueConfig kv;
  if (!c.config.empty()) kv = KeyValueConfig::load(c.config);
  KeyValueConfig overrides;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(s, "--set expects key=value");
    overrides.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) overrides.set("run.seed", std::to_string(*c.seed));
  if (c.threads) overrides.set("run.threads", std::to_string(*c.threads));
  kv.merge(overrides);
  return kv;
}

LanguageId language_or_lrl(const std::string& code, const Pipeline& p) {
  return code.empty() ? p.low_resource_language() : LanguageId(code);
}

const SdeLayer<float>& sde_layer_of(const Model& model) {
  if (!model.sde_layer()) throw ConfigError("model.embedder", "this analysis needs the sde embedder");
  return *model.sde_layer();
}

std::string pair_tag(const RunConfig& c) {
  if (c.source_langs.size() < 2)
    throw ConfigError("data.source_langs", "dictionary analysis needs a low- and a high-resource language");
  return c.source_langs[0].code() + "-" + c.source_langs[1].code();
}

BilingualDictionary saved_or_new_dictionary(const Pipeline& p) {
  const auto path = p.layout().reports() / ("dict." + pair_tag(p.config()) + ".tsv");
  if (fs::is_regular_file(path)) return BilingualDictionary::load(path);
  auto dict = p.dictionary();
  fs::create_directories(p.layout().reports());
  dict.save(path);
  return dict;
}

int run_stats(const Pipeline& p) {
  std::vector<ParallelCorpus> corpora;
  for (auto split : {Split::train, Split::dev, Split::test})
    for (auto& c : p.load_split(split)) corpora.push_back(std::move(c));
  p.write_manifest("stats");
  const auto tsv = corpus_stats(corpora).to_tsv();
  write_text(p.layout().reports() / "stats.tsv", tsv);
  std::cout << tsv;
  return kOk;
}

int run_train_bpe(const Pipeline& p) {
  if (!p.needs_bpe()) throw ConfigError("seg.mode", "no BPE segmentation is configured");
  p.write_manifest("train-bpe");
  for (const auto& [key, model] : p.train_bpe())
    std::cout << "bpe." << key << "=" << p.layout().bpe_model(key).string() << " merges=" << model.merges.size() << "\n";
  return kOk;
}

int run_apply_bpe(const Pipeline& p, const std::string& input, const std::string& output, const std::string& lang,
                  const std::string& side) {
  if (!p.needs_bpe()) throw ConfigError("seg.mode", "no BPE segmentation is configured");
  if (side != "source" && side != "target") throw CLI::ValidationError("--side", "expected source or target");
  require_file(input);
  p.write_manifest("apply-bpe");
  const auto models = p.bpe_models();
  const auto language = language_or_lrl(lang, p);
  std::string text;
  for (const auto& line : read_lines(input)) {
    const auto words = split_tokens(line);
    text += join_tokens(side == "source" ? p.source_units(words, language, models) : p.target_units(words, models)) + "\n";
  }
  write_text(output, text);
  return kOk;
}

int run_build_vocab(const Pipeline& p) {
  p.write_manifest("build-vocab");
  const auto v = p.build_vocab(p.bpe_models());
  std::cout << "target=" << v.target.size() << "\n";
  if (v.source) std::cout << "source=" << v.source->size() << "\n";
  if (v.units) std::cout << "units=" << v.units->size() << "\n";
  if (v.fallback) std::cout << "fallback=" << v.fallback->size() << "\n";
  return kOk;
}

int run_train(const Pipeline& p, const Common& c) {
  p.write_manifest("train", {{"args", c.args}});
  const auto r = p.train(&std::cout);
  std::cout << "best_bleu=" << fixed(r.best_bleu, 2) << "\nbest_step=" << r.best_step << "\nsteps=" << r.steps
            << "\nearly_stopped=" << (r.early_stopped ? "true" : "false")
            << "\ncheckpoint=" << p.layout().best_checkpoint().string() << "\n";
  return kOk;
}

int run_translate(const Pipeline& p, const std::string& input, const std::string& split_text, const std::string& lang,
                  std::string output, const std::string& ref) {
  const auto language = language_or_lrl(lang, p);
  const auto split = parse_split(split_text);
  fs::path source = input, reference = ref;
  if (source.empty()) {
    const auto& files = p.config().files(language, split);
    source = files.source;
    if (reference.empty()) reference = files.target;
  }
  require_file(source);
  if (output.empty())
    output = (p.layout().reports() / ("hyp." + language.code() + "." + (input.empty() ? split_text : source.stem().string()) + ".txt")).string();
  p.write_manifest("translate");
  const auto model = p.load_model();
  const auto lines = p.translate(model, read_lines(source), language, p.bpe_models());
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(output, text);
  std::cout << "output=" << output << "\n";
  if (!reference.empty()) {
    std::vector<Sentence> hyps;
    for (const auto& l : lines) hyps.push_back(split_tokens(l));
    std::cout << "bleu=" << fixed(bleu(hyps, read_sentences(reference)).score, 2) << "\n";
  }
  return kOk;
}

int run_score(const std::string& hyp, const std::string& ref) {
  const auto s = bleu(read_sentences(hyp), read_sentences(ref));
  std::cout << "bleu=" << fixed(s.score, 2) << "\n";
  for (int n = 0; n < 4; ++n) std::cout << "p" << n + 1 << "=" << fixed(100.0 * s.precisions[n], 2) << "\n";
  std::cout << "bp=" << fixed(s.brevity_penalty, 4) << "\nhyp_len=" << s.hyp_len << "\nref_len=" << s.ref_len << "\n";
  return kOk;
}

int run_significance(const std::string& a, const std::string& b, const std::string& ref, std::size_t samples,
                     std::uint64_t seed) {
  const auto r = paired_bootstrap(read_sentences(a), read_sentences(b), read_sentences(ref), samples, seed);
  std::cout << "bleu_a=" << fixed(r.bleu_a, 2) << "\nbleu_b=" << fixed(r.bleu_b, 2) << "\np_a_better="
            << fixed(r.p_a_better, 4) << "\np_b_better=" << fixed(r.p_b_better, 4) << "\nsamples=" << r.samples << "\n";
  return kOk;
}

int run_analyze_dict(const Pipeline& p) {
  const auto tag = pair_tag(p.config());
  p.write_manifest("analyze-dict");
  const auto dict = p.dictionary();
  dict.save(p.layout().reports() / ("dict." + tag + ".tsv"));
  const auto csv = histogram_csv(edit_distance_histogram(dict, BucketScheme({0, 1, 2, 3, 4})));
  write_text(p.layout().reports() / ("edit_distance." + tag + ".csv"), csv);
  std::cout << "pairs=" << dict.size() << "\n" << csv;
  return kOk;
}

int run_analyze_fmeasure(const Pipeline& p, const std::string& a, const std::string& b, const std::string& ref,
                         const std::string& by, const std::string& bpe_path) {
  if (by != "subwords" && by != "edit_distance") throw CLI::ValidationError("--by", "expected subwords or edit_distance");
  const auto hyps_a = read_sentences(a), hyps_b = read_sentences(b), refs = read_sentences(ref);
  p.write_manifest("analyze-fmeasure");
  const auto links = p.target_links();
  FMeasureBucketReport report;
  if (by == "subwords") {
    const auto& lrl = p.low_resource_language();
    BpeModel bpe;
    if (!bpe_path.empty()) {
      require_file(bpe_path);
      bpe = BpeModel::load(bpe_path);
    } else if (fs::is_regular_file(p.layout().bpe_model(lrl.code()))) {
      bpe = BpeModel::load(p.layout().bpe_model(lrl.code()));
    } else {
      const std::vector<ParallelCorpus> one{p.load(lrl, Split::train)};
      bpe = train_bpe(one, p.config().bpe_sep_merges, BpeMode::separate).at(lrl.code());
    }
    report = bucket_fmeasure_by_subwords(hyps_a, hyps_b, refs, links, bpe);
  } else {
    report = bucket_fmeasure_by_edit_distance(hyps_a, hyps_b, refs, links, saved_or_new_dictionary(p));
  }
  const auto csv = report.to_csv();
  write_text(p.layout().reports() / ("fmeasure." + by + ".csv"), csv);
  std::cout << csv;
  return kOk;
}

int run_analyze_attention(const Pipeline& p, std::string pairs, std::size_t limit) {
  const auto tag = pair_tag(p.config());
  if (pairs.empty()) pairs = (p.layout().reports() / ("dict." + tag + ".tsv")).string();
  require_file(pairs);
  p.write_manifest("analyze-attention");
  const auto model = p.load_model();
  const auto& layer = sde_layer_of(model);
  if (!layer.config().use_latent) throw ConfigError("sde.use_latent", "attention analysis needs the latent component");
  const auto& cfg = p.config();
  std::vector<WordInLanguage> words_a, words_b;
  for (const auto& line : read_lines(pairs)) {
    if (words_a.size() >= limit) break;
    std::stringstream in(line);
    std::string a, b;
    if (!std::getline(in, a, '\t') || !std::getline(in, b, '\t') || a.empty() || b.empty()) continue;
    words_a.push_back({a, cfg.source_langs[0]});
    words_b.push_back({b, cfg.source_langs[1]});
  }
  if (words_a.empty()) throw std::runtime_error("no word pairs in " + pairs);
  const auto kl = attention_kl(layer, words_a, words_b);
  std::ostringstream tsv;
  tsv.precision(9);
  for (const auto& w : words_b) tsv << '\t' << w.first;
  tsv << '\n';
  double paired = 0.0, unpaired = 0.0;
  for (Index i = 0; i < kl.rows(); ++i) {
    tsv << words_a[static_cast<std::size_t>(i)].first;
    for (Index j = 0; j < kl.cols(); ++j) {
      tsv << '\t' << kl(i, j);
      (i == j ? paired : unpaired) += kl(i, j);
    }
    tsv << '\n';
  }
  write_text(p.layout().reports() / ("attention_kl." + tag + ".tsv"), tsv.str());
  const auto n = static_cast<double>(kl.rows());
  std::cout << "pairs=" << kl.rows() << "\nkl_paired_mean=" << fixed(paired / n, 6) << "\n";
  if (kl.rows() > 1) std::cout << "kl_unpaired_mean=" << fixed(unpaired / (n * n - n), 6) << "\n";
  return kOk;
}

int run_export_emb(const Pipeline& p, const std::string& words_path, const std::string& lang, const std::string& stage_text,
                   std::string output) {
  require_file(words_path);
  const auto stage = parse_embedding_stage(stage_text);
  const auto language = language_or_lrl(lang, p);
  if (output.empty()) output = (p.layout().reports() / ("embeddings." + stage_text + ".tsv")).string();
  p.write_manifest("export-emb");
  const auto model = p.load_model();
  std::vector<WordInLanguage> words;
  for (const auto& line : read_lines(words_path)) {
    std::stringstream in(line);
    std::string w, l;
    if (!std::getline(in, w, '\t') || w.empty()) continue;
    words.push_back({w, std::getline(in, l, '\t') && !l.empty() ? LanguageId(l) : language});
  }
  std::ostringstream out;
  export_embeddings(out, sde_layer_of(model), words, stage);
  write_text(output, out.str());
  std::cout << "output=" << output << "\nwords=" << words.size() << "\n";
  return kOk;
}

int run_grad_check() {
  double worst = 0.0;
  for (const auto& c : full_gradient_suite()) {
    const bool ok = c.result.max_rel_error < 1e-4;
    worst = std::max(worst, c.result.max_rel_error);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", c.result.max_rel_error);
    std::cout << c.name << "\tmax_rel_error=" << buf << "\tentries=" << c.result.entries_checked << "\t"
              << (ok ? "ok" : "FAIL") << "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", worst);
  std::cout << "max_rel_error=" << buf << "\n";
  return worst < 1e-4 ? kOk : kNumeric;
}

int report(const char* kind, int code, std::string message) {
  for (auto& ch : message)
    if (ch == '\n') ch = ' ';
  std::cerr << "error kind=" << kind << " code=" << code << ": " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft decoupled encoding for multilingual neural machine translation"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  for (int i = 1; i < argc; ++i) common.args += (i > 1 ? " " : "") + std::string(argv[i]);
  app.add_option("--config", common.config, "Experiment config file (key=value lines)");
  app.add_option("--seed", common.seed, "Random seed (run.seed)");
  app.add_option("--threads", common.threads, "Decoding threads (run.threads)");
  app.add_option("--set", common.sets, "Override a config key: --set key=value");

  std::string input, output, lang, side = "source", split = "test", ref, hyp_a, hyp_b, by = "subwords", bpe, pairs,
                                    words, stage = "full_sde";
  std::optional<std::size_t> samples;
  std::size_t limit = 50;

  auto* stats = app.add_subcommand("stats", "Sentence, token and type counts per language and split");
  auto* train_bpe_cmd = app.add_subcommand("train-bpe", "Learn BPE merges for the configured segmentation");
  auto* apply_bpe_cmd = app.add_subcommand("apply-bpe", "Segment a tokenized file with the learned BPE models");
  apply_bpe_cmd->add_option("--input", input)->required();
  apply_bpe_cmd->add_option("--output", output)->required();
  apply_bpe_cmd->add_option("--lang", lang, "Language of the file (default: first source language)");
  apply_bpe_cmd->add_option("--side", side, "source or target");
  auto* build_vocab = app.add_subcommand("build-vocab", "Build source, n-gram and target vocabularies");
  auto* train = app.add_subcommand("train", "Train a translation model and keep the best dev checkpoint");
  auto* translate = app.add_subcommand("translate", "Translate a file with the best checkpoint");
  translate->add_option("--input", input, "Tokenized source file (default: configured split)");
  translate->add_option("--split", split, "Configured split to translate when --input is absent");
  translate->add_option("--lang", lang, "Source language (default: first source language)");
  translate->add_option("--output", output);
  translate->add_option("--ref", ref, "Reference file for BLEU");
  auto* score = app.add_subcommand("score", "Corpus BLEU of a hypothesis file");
  score->add_option("--hyp", input)->required();
  score->add_option("--ref", ref)->required();
  auto* significance = app.add_subcommand("significance", "Paired bootstrap test between two systems");
  significance->add_option("--hyp-a", hyp_a)->required();
  significance->add_option("--hyp-b", hyp_b)->required();
  significance->add_option("--ref", ref)->required();
  significance->add_option("--samples", samples);
  auto* analyze_dict = app.add_subcommand("analyze-dict", "LRL-HRL dictionary and edit-distance histogram");
  auto* analyze_fmeasure = app.add_subcommand("analyze-fmeasure", "Word F-measure of two systems by bucket");
  analyze_fmeasure->add_option("--hyp-a", hyp_a)->required();
  analyze_fmeasure->add_option("--hyp-b", hyp_b)->required();
  analyze_fmeasure->add_option("--ref", ref)->required();
  analyze_fmeasure->add_option("--by", by, "subwords or edit_distance");
  analyze_fmeasure->add_option("--bpe", bpe, "BPE model for subword buckets");
  auto* analyze_attention = app.add_subcommand("analyze-attention", "KL divergence between latent attention distributions");
  analyze_attention->add_option("--pairs", pairs, "TSV of LRL and HRL words (default: the saved dictionary)");
  analyze_attention->add_option("--limit", limit);
  auto* export_emb = app.add_subcommand("export-emb", "Write SDE vectors of a word list");
  export_emb->add_option("--words", words)->required();
  export_emb->add_option("--lang", lang);
  export_emb->add_option("--stage", stage, "after_lexical, after_transform or full_sde");
  export_emb->add_option("--output", output);
  auto* grad_check_cmd = app.add_subcommand("grad-check", "Finite-difference check of every gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", kUsage, e.what());
  }

  try {
    if (grad_check_cmd->parsed()) return run_grad_check();
    const auto kv = load_config(common);
    const auto cfg = RunConfig::from(kv);
    if (score->parsed()) return run_score(input, ref);
    if (significance->parsed()) return run_significance(hyp_a, hyp_b, ref, samples.value_or(cfg.bootstrap_samples), cfg.seed);

    const Pipeline p(cfg);
    if (stats->parsed()) return run_stats(p);
    if (train_bpe_cmd->parsed()) return run_train_bpe(p);
    if (apply_bpe_cmd->parsed()) return run_apply_bpe(p, input, output, lang, side);
    if (build_vocab->parsed()) return run_build_vocab(p);
    if (train->parsed()) return run_train(p, common);
    if (translate->parsed()) return run_translate(p, input, split, lang, output, ref);
    if (analyze_dict->parsed()) return run_analyze_dict(p);
    if (analyze_fmeasure->parsed()) return run_analyze_fmeasure(p, hyp_a, hyp_b, ref, by, bpe);
    if (analyze_attention->parsed()) return run_analyze_attention(p, pairs, limit);
    if (export_emb->parsed()) return run_export_emb(p, words, lang, stage, output);
    return report("usage", kUsage, "no subcommand");
  } catch (const CLI::ValidationError& e) {
    return report("usage", kUsage, e.what());
  } catch (const ConfigError& e) {
    return report("config", kConfig, e.what());
  } catch (const PathError& e) {
    return report("path", kPath, e.what());
  } catch (const NumericError& e) {
    return report("numeric", kNumeric, e.what());
  } catch (const std::exception& e) {
    return report("runtime", kRuntime, e.what());
  }
}
