#include "sde/pipeline.hpp"

#include <Eigen/Core>
#include <fstream>
#include <streambuf>
#include <thread>

#include "sde/numcore/checkpoint.hpp"

namespace sde {
namespace {

constexpr const char* kVersion = "1.0.0";

bool is_bpe(SegmentationMode mode) { return mode == SegmentationMode::sub_joint || mode == SegmentationMode::sub_sep; }

void require_file(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::is_regular_file(path)) throw PathError(what + " not found: " + path.string());
}

class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return traits_type::not_eof(c);
    a_->sputc(static_cast<char>(c));
    if (b_) b_->sputc(static_cast<char>(c));
    return c;
  }
  int sync() override {
    a_->pubsync();
    if (b_) b_->pubsync();
    return 0;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

}  // namespace

void ExperimentLayout::create() const {
  for (const auto& dir : {config(), vocab(), checkpoints(), logs(), reports()}) std::filesystem::create_directories(dir);
}

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)), layout_{config_.experiment_dir()} {
  const bool src_joint = config_.seg_mode == SegmentationMode::sub_joint;
  const bool tgt_joint = config_.target_seg_mode == SegmentationMode::sub_joint;
  if (is_bpe(config_.seg_mode) && is_bpe(config_.target_seg_mode) && src_joint != tgt_joint)
    throw ConfigError("seg.target_mode", "cannot mix sub_joint and sub_sep");
  if (config_.embedder == EmbedderKind::sde && config_.sde.bag_source == BagSource::subword_pieces &&
      config_.seg_mode != SegmentationMode::word)
    throw ConfigError("sde.bag_source", "subword_pieces bags need seg.mode=word");
}

void Pipeline::write_manifest(const std::string& command, const std::map<std::string, std::string>& extra) const {
  layout_.create();
  auto kv = config_.resolved();
  kv.set("manifest.command", command);
  kv.set("manifest.version", kVersion);
  kv.set("manifest.eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                               std::to_string(EIGEN_MINOR_VERSION));
  for (const auto& [k, v] : extra) kv.set("manifest." + k, v);
  std::ofstream out(layout_.config() / ("manifest." + command + ".txt"), std::ios::binary);
  if (!out) throw PathError("cannot write manifest under " + layout_.config().string());
  out << kv.to_text();
}

ParallelCorpus Pipeline::load(const LanguageId& lang, Split split) const {
  const auto& files = config_.files(lang, split);
  require_file(files.source, "source file");
  require_file(files.target, "target file");
  auto corpus = load_parallel(files.source, files.target, lang, split);
  corpus.target_lang = config_.target_lang;
  return corpus;
}

std::vector<ParallelCorpus> Pipeline::load_split(Split split) const {
  if (config_.source_langs.empty()) throw ConfigError("data.source_langs", "missing config key");
  std::vector<ParallelCorpus> out;
  for (const auto& lang : config_.source_langs)
    if (split == Split::train || config_.has_files(lang, split)) out.push_back(load(lang, split));
  return out;
}

const LanguageId& Pipeline::low_resource_language() const {
  if (config_.source_langs.empty()) throw ConfigError("data.source_langs", "missing config key");
  return config_.source_langs.front();
}

bool Pipeline::needs_bpe() const {
  return is_bpe(config_.seg_mode) || is_bpe(config_.target_seg_mode) ||
         (config_.embedder == EmbedderKind::sde && config_.sde.bag_source == BagSource::subword_pieces);
}

BpeMode Pipeline::bpe_mode() const {
  const bool joint = config_.seg_mode == SegmentationMode::sub_joint || config_.target_seg_mode == SegmentationMode::sub_joint;
  return joint ? BpeMode::joint : BpeMode::separate;
}

BpeModelSet Pipeline::train_bpe() const {
  const auto corpora = load_split(Split::train);
  const auto mode = bpe_mode();
  auto models = sde::train_bpe(corpora, mode == BpeMode::joint ? config_.bpe_joint_merges : config_.bpe_sep_merges, mode);
  std::filesystem::create_directories(layout_.vocab());
  for (const auto& [key, model] : models) model.save(layout_.bpe_model(key));
  return models;
}

BpeModelSet Pipeline::bpe_models() const {
  if (!needs_bpe()) return {};
  std::vector<std::string> keys;
  if (bpe_mode() == BpeMode::joint) keys.push_back("joint");
  else keys = config_.all_languages();
  BpeModelSet models;
  for (const auto& key : keys) {
    const auto path = layout_.bpe_model(key);
    if (!std::filesystem::is_regular_file(path)) return train_bpe();
    models.emplace(key, BpeModel::load(path));
  }
  return models;
}

std::vector<std::string> Pipeline::source_units(const std::vector<std::string>& words, const LanguageId& lang,
                                                const BpeModelSet& models) const {
  return segment(words, config_.seg_mode, lang, &models);
}

std::vector<std::string> Pipeline::target_units(const std::vector<std::string>& words, const BpeModelSet& models) const {
  return segment(words, config_.target_seg_mode, config_.target_lang, &models);
}

std::vector<std::string> Pipeline::target_words(const std::vector<std::string>& units) const {
  return desegment(units, config_.target_seg_mode);
}

ParallelCorpus Pipeline::segmented(const ParallelCorpus& raw, const BpeModelSet& models) const {
  ParallelCorpus out = raw;
  for (auto& p : out.pairs) {
    p.source = source_units(p.source, p.lang, models);
    p.target = target_units(p.target, models);
  }
  return out;
}

VocabularySet Pipeline::build_vocab(const BpeModelSet& models) const {
  std::vector<ParallelCorpus> train;
  for (const auto& raw : load_split(Split::train)) train.push_back(segmented(raw, models));
  const std::size_t unit_budget =
      config_.ngram_per_language * config_.source_langs.size() + static_cast<std::size_t>(Vocabulary::kNumSpecials);

  VocabularySet v;
  v.target = build_word_vocab(train, config_.target_vocab_size, CorpusSide::target);
  if (config_.embedder == EmbedderKind::lookup) {
    v.source = build_word_vocab(train, config_.word_vocab_size, CorpusSide::source);
  } else {
    if (config_.sde.bag_source == BagSource::char_ngrams) {
      v.units = build_ngram_vocab(train, unit_budget, {config_.sde.n_set, config_.ngram_mode, config_.sde.boundary_markers});
    } else {
      std::map<std::string, std::int64_t> counts;
      for (const auto& corpus : train)
        for (const auto& p : corpus.pairs) {
          auto it = models.find(p.lang.code());
          if (it == models.end()) it = models.find("joint");
          for (const auto& w : p.source)
            for (const auto& piece : apply_bpe(it->second, w)) ++counts[piece];
        }
      v.units = Vocabulary::from_counts(counts, unit_budget);
    }
    if (!config_.sde.use_lexical) v.fallback = build_word_vocab(train, config_.word_vocab_size, CorpusSide::source);
  }

  std::filesystem::create_directories(layout_.vocab());
  v.target.save(layout_.vocab() / "target.vocab");
  if (v.source) v.source->save(layout_.vocab() / "source.vocab");
  if (v.units) v.units->save(layout_.vocab() / "units.vocab");
  if (v.fallback) v.fallback->save(layout_.vocab() / "fallback.vocab");
  return v;
}

VocabularySet Pipeline::vocabularies(const BpeModelSet& models) const {
  const auto dir = layout_.vocab();
  std::vector<std::string> needed{"target.vocab"};
  if (config_.embedder == EmbedderKind::lookup) {
    needed.push_back("source.vocab");
  } else {
    needed.push_back("units.vocab");
    if (!config_.sde.use_lexical) needed.push_back("fallback.vocab");
  }
  for (const auto& name : needed)
    if (!std::filesystem::is_regular_file(dir / name)) return build_vocab(models);

  VocabularySet v;
  v.target = Vocabulary::load(dir / "target.vocab");
  if (config_.embedder == EmbedderKind::lookup) {
    v.source = Vocabulary::load(dir / "source.vocab");
  } else {
    v.units = Vocabulary::load(dir / "units.vocab");
    if (!config_.sde.use_lexical) v.fallback = Vocabulary::load(dir / "fallback.vocab");
  }
  return v;
}

Model Pipeline::make_model(const VocabularySet& vocab, const BpeModelSet& models) const {
  if (config_.embedder == EmbedderKind::lookup) return Model::lookup(config_.model, *vocab.source, vocab.target, config_.seed);
  auto bags = config_.sde.bag_source == BagSource::char_ngrams
                  ? BagBuilder(*vocab.units, config_.sde.n_set, config_.sde.boundary_markers)
                  : BagBuilder(*vocab.units, models);
  return Model::sde(config_.model, config_.sde, std::move(bags), config_.source_langs, vocab.target, config_.seed,
                    vocab.fallback, models);
}

Model Pipeline::load_model() const {
  require_file(layout_.best_checkpoint(), "checkpoint (run train first)");
  const auto models = bpe_models();
  auto model = make_model(vocabularies(models), models);
  load_checkpoint(layout_.best_checkpoint(), model.parameters());
  return model;
}

TrainResult Pipeline::train(std::ostream* progress) const {
  layout_.create();
  const auto models = bpe_models();
  const auto vocab = vocabularies(models);

  std::vector<ParallelCorpus> train;
  for (const auto& raw : load_split(Split::train)) train.push_back(segmented(raw, models));
  const auto combined = multi_source_setup(train.front(), std::span<const ParallelCorpus>(train).subspan(1));
  const auto examples = make_examples(combined, vocab.target);

  const auto dev_raw = load(low_resource_language(), Split::dev);
  const auto dev = make_examples(segmented(dev_raw, models), vocab.target);
  std::vector<Sentence> refs;
  refs.reserve(dev_raw.size());
  for (const auto& p : dev_raw.pairs) refs.push_back(p.target);

  auto model = make_model(vocab, models);
  const TargetPostprocess post = [this](const std::vector<std::string>& units) { return target_words(units); };
  const int threads = config_.threads;
  const DevEvaluator<float> evaluate = [&](const Model& m) { return dev_bleu(m, dev, refs, post, threads); };

  std::ofstream log_file(layout_.train_log(), std::ios::binary);
  if (!log_file) throw PathError("cannot write " + layout_.train_log().string());
  TeeBuf tee(log_file.rdbuf(), progress ? progress->rdbuf() : nullptr);
  std::ostream log(&tee);
  const auto result = train_model(model, config_.train, examples, evaluate, &log, layout_.best_checkpoint());
  log.flush();

  std::ofstream summary(layout_.reports() / "train_summary.txt", std::ios::binary);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", result.best_bleu);
  summary << "best_bleu=" << buf << "\nbest_step=" << result.best_step << "\nsteps=" << result.steps
          << "\nearly_stopped=" << (result.early_stopped ? "true" : "false") << "\nparameters="
          << model.parameters().total_size() << "\n";
  return result;
}

std::vector<std::string> Pipeline::translate(const Model& model, const std::vector<std::string>& lines,
                                             const LanguageId& lang, const BpeModelSet& models) const {
  std::vector<std::string> out(lines.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < lines.size(); i += stride) {
      const auto units = source_units(split_tokens(lines[i]), lang, models);
      const auto hyp = model.translate(units, lang, config_.beam_size);
      out[i] = join_tokens(target_words(model.target_vocab().decode(hyp.content(), true)));
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, config_.threads));
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
    for (auto& t : pool) t.join();
  }
  return out;
}

BilingualDictionary Pipeline::dictionary() const {
  if (config_.source_langs.size() < 2)
    throw ConfigError("data.source_langs", "dictionary analysis needs a low- and a high-resource language");
  const auto lrl = load(config_.source_langs[0], Split::train);
  const auto hrl = load(config_.source_langs[1], Split::train);
  return extract_dictionary(lrl, hrl, config_.dict_min_count, config_.align_iterations);
}

std::map<std::string, std::string> Pipeline::target_links() const {
  const auto lrl = load(low_resource_language(), Split::train);
  return target_source_links(ibm1_train(lrl, config_.align_iterations), lrl);
}

}  // namespace sde
