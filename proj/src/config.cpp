#include "sde/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace sde {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size())
    throw ConfigError(key, "cannot parse '" + text + "' as a number");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key, "cannot parse '" + text + "' as a boolean");
}

std::string bool_text(bool v) { return v ? "true" : "false"; }

// Reads `key` if present, converting parse failures of enum helpers into ConfigError.
class Reader {
 public:
  explicit Reader(const KeyValueConfig& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.has(key); }
  const std::string& text(const std::string& key) const { return kv_.get(key); }

  void str(const std::string& key, std::string& out) const {
    if (has(key)) out = text(key);
  }
  template <typename T>
  void num(const std::string& key, T& out) const {
    if (has(key)) out = parse_number<T>(key, text(key));
  }
  void flag(const std::string& key, bool& out) const {
    if (has(key)) out = parse_bool(key, text(key));
  }
  template <typename T, typename Fn>
  void parsed(const std::string& key, T& out, Fn parse) const {
    if (!has(key)) return;
    try {
      out = parse(text(key));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  }

 private:
  const KeyValueConfig& kv_;
};

bool is_data_key(const std::string& key) {
  // data.<lang>.<split>.<src|tgt>
  if (key.rfind("data.", 0) != 0) return false;
  std::vector<std::string> parts;
  std::stringstream in(key);
  std::string part;
  while (std::getline(in, part, '.')) parts.push_back(part);
  if (parts.size() != 4 || parts[1].empty()) return false;
  if (parts[2] != "train" && parts[2] != "dev" && parts[2] != "test") return false;
  return parts[3] == "src" || parts[3] == "tgt";
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "experiment.name",      "experiment.dir",        "run.seed",           "run.threads",
      "data.source_langs",    "data.target_lang",      "seg.mode",           "seg.target_mode",
      "bpe.joint_merges",     "bpe.sep_merges",        "vocab.word_size",    "vocab.target_size",
      "vocab.ngram_per_language", "vocab.ngram_mode",  "model.embedder",     "model.embed_dim",
      "model.hidden_dim",     "model.bidirectional",   "model.init_scale",   "model.forget_bias",
      "sde.latent_size",      "sde.n_set",             "sde.use_lexical",    "sde.use_lang_transform",
      "sde.use_latent",       "sde.use_residual",      "sde.bag_source",     "sde.scale_scores",
      "sde.boundary_markers", "sde.transform_init",   "train.learning_rate",   "train.lr_decay",     "train.dropout",
      "train.batch_words",    "train.eval_every",      "train.patience",     "train.max_steps",
      "decode.beam_size",     "analyze.align_iterations", "analyze.dict_min_count", "analyze.bootstrap_samples"};
  return keys;
}

void check_range(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
  KeyValueConfig out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(number), "expected key=value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number), "empty key");
    out.set(key, trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PathError("cannot read config file " + path.string());
  return parse(in, path.string());
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }

void KeyValueConfig::merge(const KeyValueConfig& overrides) {
  for (const auto& [k, v] : overrides.entries_) entries_[k] = v;
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(key, "missing config key");
  return it->second;
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::string to_string(NgramVocabMode mode) {
  return mode == NgramVocabMode::per_language ? "per_language" : "concatenated";
}

NgramVocabMode parse_ngram_mode(const std::string& text) {
  if (text == "per_language") return NgramVocabMode::per_language;
  if (text == "concatenated") return NgramVocabMode::concatenated;
  throw std::invalid_argument("unknown n-gram vocabulary mode '" + text + "'");
}

std::string to_string(SdeUnitMode mode) { return mode == SdeUnitMode::word ? "word" : "sub_sep"; }

SdeUnitMode parse_unit_mode(const std::string& text) {
  if (text == "word") return SdeUnitMode::word;
  if (text == "sub_sep") return SdeUnitMode::sub_sep;
  throw std::invalid_argument("unknown SDE unit mode '" + text + "'");
}

std::string to_string(BagSource source) {
  return source == BagSource::char_ngrams ? "char_ngrams" : "subword_pieces";
}

BagSource parse_bag_source(const std::string& text) {
  if (text == "char_ngrams") return BagSource::char_ngrams;
  if (text == "subword_pieces") return BagSource::subword_pieces;
  throw std::invalid_argument("unknown bag source '" + text + "'");
}

std::string to_string(TransformInit init) { return init == TransformInit::identity ? "identity" : "uniform"; }

TransformInit parse_transform_init(const std::string& text) {
  if (text == "identity") return TransformInit::identity;
  if (text == "uniform") return TransformInit::uniform;
  throw std::invalid_argument("unknown transform init '" + text + "'");
}

RunConfig RunConfig::from(const KeyValueConfig& kv) {
  const auto& known = known_keys();
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("manifest.", 0) == 0 || is_data_key(key)) continue;
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(key, "unknown config key");
  }

  RunConfig c;
  Reader r(kv);
  r.str("experiment.name", c.name);
  check_range(!c.name.empty(), "experiment.name", "must be nonempty");
  if (r.has("experiment.dir")) c.dir = r.text("experiment.dir");
  r.num("run.seed", c.seed);
  r.num("run.threads", c.threads);
  check_range(c.threads >= 1, "run.threads", "must be >= 1");

  if (r.has("data.source_langs")) {
    for (const auto& code : split_list(r.text("data.source_langs"))) c.source_langs.emplace_back(code);
    check_range(!c.source_langs.empty(), "data.source_langs", "must list at least one language");
  }
  if (r.has("data.target_lang")) {
    check_range(!r.text("data.target_lang").empty(), "data.target_lang", "must be nonempty");
    c.target_lang = LanguageId(r.text("data.target_lang"));
  }
  for (const auto& [key, value] : kv.entries()) {
    if (!is_data_key(key)) continue;
    const auto first = key.find('.', 5);
    const auto second = key.find('.', first + 1);
    const auto lang = key.substr(5, first - 5);
    const auto split = parse_split(key.substr(first + 1, second - first - 1));
    auto& files = c.data[lang][split];
    (key.substr(second + 1) == "src" ? files.source : files.target) = value;
  }

  r.parsed("seg.mode", c.seg_mode, parse_segmentation_mode);
  c.target_seg_mode = c.seg_mode;
  r.parsed("seg.target_mode", c.target_seg_mode, parse_segmentation_mode);
  r.num("bpe.joint_merges", c.bpe_joint_merges);
  r.num("bpe.sep_merges", c.bpe_sep_merges);
  check_range(c.bpe_joint_merges >= 1, "bpe.joint_merges", "must be >= 1");
  check_range(c.bpe_sep_merges >= 1, "bpe.sep_merges", "must be >= 1");

  r.num("vocab.word_size", c.word_vocab_size);
  r.num("vocab.target_size", c.target_vocab_size);
  r.num("vocab.ngram_per_language", c.ngram_per_language);
  r.parsed("vocab.ngram_mode", c.ngram_mode, parse_ngram_mode);
  check_range(c.word_vocab_size >= 5, "vocab.word_size", "must be >= 5");
  check_range(c.target_vocab_size >= 5, "vocab.target_size", "must be >= 5");
  check_range(c.ngram_per_language >= 1, "vocab.ngram_per_language", "must be >= 1");

  r.parsed("model.embedder", c.embedder, parse_embedder);
  r.num("model.embed_dim", c.model.embed_dim);
  r.num("model.hidden_dim", c.model.hidden_dim);
  r.flag("model.bidirectional", c.model.bidirectional);
  r.num("model.init_scale", c.model.init_scale);
  r.num("model.forget_bias", c.model.forget_bias);
  check_range(c.model.embed_dim >= 1, "model.embed_dim", "must be >= 1");
  check_range(c.model.hidden_dim >= 1, "model.hidden_dim", "must be >= 1");
  check_range(c.model.init_scale > 0, "model.init_scale", "must be > 0");

  c.sde.embed_dim = c.model.embed_dim;
  r.num("sde.latent_size", c.sde.latent_size);
  if (r.has("sde.n_set")) {
    c.sde.n_set.clear();
    for (const auto& n : split_list(r.text("sde.n_set"))) c.sde.n_set.push_back(parse_number<int>("sde.n_set", n));
    check_range(!c.sde.n_set.empty(), "sde.n_set", "must be nonempty");
    for (int n : c.sde.n_set) check_range(n >= 1, "sde.n_set", "every n must be >= 1");
  }
  r.flag("sde.use_lexical", c.sde.use_lexical);
  r.flag("sde.use_lang_transform", c.sde.use_lang_transform);
  r.flag("sde.use_latent", c.sde.use_latent);
  r.flag("sde.use_residual", c.sde.use_residual);
  r.parsed("sde.bag_source", c.sde.bag_source, parse_bag_source);
  r.flag("sde.scale_scores", c.sde.scale_scores);
  r.flag("sde.boundary_markers", c.sde.boundary_markers);
  r.parsed("sde.transform_init", c.sde.transform_init, parse_transform_init);
  check_range(c.sde.latent_size >= 1, "sde.latent_size", "must be >= 1");
  check_range(c.sde.use_lexical || c.sde.use_latent, "sde.use_latent", "the lexical or the latent component must be on");
  c.sde.unit_mode = c.seg_mode == SegmentationMode::sub_sep ? SdeUnitMode::sub_sep : SdeUnitMode::word;
  if (c.embedder == EmbedderKind::sde)
    check_range(c.seg_mode == SegmentationMode::word || c.seg_mode == SegmentationMode::sub_sep, "seg.mode",
                "the sde embedder works on word or sub_sep units");

  r.num("train.learning_rate", c.train.learning_rate);
  r.num("train.lr_decay", c.train.lr_decay);
  r.num("train.dropout", c.train.dropout);
  r.num("train.batch_words", c.train.batch_words);
  r.num("train.eval_every", c.train.eval_every);
  r.num("train.patience", c.train.patience);
  r.num("train.max_steps", c.train.max_steps);
  check_range(c.train.learning_rate > 0 && c.train.learning_rate <= 1, "train.learning_rate", "must be in (0, 1]");
  check_range(c.train.lr_decay > 0 && c.train.lr_decay <= 1, "train.lr_decay", "must be in (0, 1]");
  check_range(c.train.dropout >= 0 && c.train.dropout < 1, "train.dropout", "must be in [0, 1)");
  check_range(c.train.batch_words >= 1, "train.batch_words", "must be >= 1");
  check_range(c.train.eval_every >= 1, "train.eval_every", "must be >= 1");
  check_range(c.train.patience >= 1, "train.patience", "must be >= 1");
  c.train.seed = c.seed;
  c.train.threads = c.threads;

  r.num("decode.beam_size", c.beam_size);
  check_range(c.beam_size >= 1, "decode.beam_size", "must be >= 1");
  r.num("analyze.align_iterations", c.align_iterations);
  r.num("analyze.dict_min_count", c.dict_min_count);
  r.num("analyze.bootstrap_samples", c.bootstrap_samples);
  check_range(c.align_iterations >= 1, "analyze.align_iterations", "must be >= 1");
  check_range(c.bootstrap_samples >= 1, "analyze.bootstrap_samples", "must be >= 1");
  return c;
}

KeyValueConfig RunConfig::resolved() const {
  KeyValueConfig kv;
  kv.set("experiment.name", name);
  kv.set("experiment.dir", experiment_dir().string());
  kv.set("run.seed", std::to_string(seed));
  kv.set("run.threads", std::to_string(threads));
  std::string langs;
  for (const auto& l : source_langs) langs += (langs.empty() ? "" : ",") + l.code();
  kv.set("data.source_langs", langs);
  kv.set("data.target_lang", target_lang.code());
  for (const auto& [lang, splits] : data)
    for (const auto& [split, files] : splits) {
      const auto prefix = "data." + lang + "." + to_string(split);
      if (!files.source.empty()) kv.set(prefix + ".src", files.source.string());
      if (!files.target.empty()) kv.set(prefix + ".tgt", files.target.string());
    }
  kv.set("seg.mode", to_string(seg_mode));
  kv.set("seg.target_mode", to_string(target_seg_mode));
  kv.set("bpe.joint_merges", std::to_string(bpe_joint_merges));
  kv.set("bpe.sep_merges", std::to_string(bpe_sep_merges));
  kv.set("vocab.word_size", std::to_string(word_vocab_size));
  kv.set("vocab.target_size", std::to_string(target_vocab_size));
  kv.set("vocab.ngram_per_language", std::to_string(ngram_per_language));
  kv.set("vocab.ngram_mode", to_string(ngram_mode));
  kv.set("model.embedder", to_string(embedder));
  kv.set("model.embed_dim", std::to_string(model.embed_dim));
  kv.set("model.hidden_dim", std::to_string(model.hidden_dim));
  kv.set("model.bidirectional", bool_text(model.bidirectional));
  kv.set("model.init_scale", format_double(model.init_scale));
  kv.set("model.forget_bias", format_double(model.forget_bias));
  kv.set("sde.latent_size", std::to_string(sde.latent_size));
  std::string ns;
  for (int n : sde.n_set) ns += (ns.empty() ? "" : ",") + std::to_string(n);
  kv.set("sde.n_set", ns);
  kv.set("sde.use_lexical", bool_text(sde.use_lexical));
  kv.set("sde.use_lang_transform", bool_text(sde.use_lang_transform));
  kv.set("sde.use_latent", bool_text(sde.use_latent));
  kv.set("sde.use_residual", bool_text(sde.use_residual));
  kv.set("sde.bag_source", to_string(sde.bag_source));
  kv.set("sde.scale_scores", bool_text(sde.scale_scores));
  kv.set("sde.boundary_markers", bool_text(sde.boundary_markers));
  kv.set("sde.transform_init", to_string(sde.transform_init));
  kv.set("train.learning_rate", format_double(train.learning_rate));
  kv.set("train.lr_decay", format_double(train.lr_decay));
  kv.set("train.dropout", format_double(train.dropout));
  kv.set("train.batch_words", std::to_string(train.batch_words));
  kv.set("train.eval_every", std::to_string(train.eval_every));
  kv.set("train.patience", std::to_string(train.patience));
  kv.set("train.max_steps", std::to_string(train.max_steps));
  kv.set("decode.beam_size", std::to_string(beam_size));
  kv.set("analyze.align_iterations", std::to_string(align_iterations));
  kv.set("analyze.dict_min_count", std::to_string(dict_min_count));
  kv.set("analyze.bootstrap_samples", std::to_string(bootstrap_samples));
  return kv;
}

std::filesystem::path RunConfig::experiment_dir() const {
  return dir.empty() ? std::filesystem::path("experiments") / name : dir;
}

bool RunConfig::has_files(const LanguageId& lang, Split split) const {
  auto it = data.find(lang.code());
  if (it == data.end()) return false;
  auto jt = it->second.find(split);
  return jt != it->second.end() && !jt->second.source.empty() && !jt->second.target.empty();
}

const DataFiles& RunConfig::files(const LanguageId& lang, Split split) const {
  const auto prefix = "data." + lang.code() + "." + to_string(split);
  auto it = data.find(lang.code());
  if (it == data.end() || !it->second.count(split)) throw ConfigError(prefix + ".src", "missing config key");
  const auto& f = it->second.at(split);
  if (f.source.empty()) throw ConfigError(prefix + ".src", "missing config key");
  if (f.target.empty()) throw ConfigError(prefix + ".tgt", "missing config key");
  return f;
}

std::vector<std::string> RunConfig::all_languages() const {
  std::vector<std::string> out;
  for (const auto& l : source_langs) out.push_back(l.code());
  out.push_back(target_lang.code());
  return out;
}

}  // namespace sde
