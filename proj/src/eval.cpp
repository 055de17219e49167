#include "sde/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sde {

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

namespace {

std::map<std::vector<std::string>, std::int64_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<std::vector<std::string>, std::int64_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
  return counts;
}

void require_same_count(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": sentence count mismatch " + std::to_string(a) + " vs " +
                                std::to_string(b));
}

}  // namespace

BleuStats sentence_stats(const Sentence& hyp, const Sentence& ref) {
  BleuStats s;
  s.hyp_len = static_cast<std::int64_t>(hyp.size());
  s.ref_len = static_cast<std::int64_t>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto h = ngram_counts(hyp, n);
    const auto r = ngram_counts(ref, n);
    for (const auto& [gram, c] : h) {
      auto it = r.find(gram);
      if (it != r.end()) s.matches[n - 1] += std::min(c, it->second);
    }
    s.totals[n - 1] = std::max<std::int64_t>(0, s.hyp_len - static_cast<std::int64_t>(n) + 1);
  }
  return s;
}

BleuScore bleu_from_stats(const BleuStats& stats) {
  BleuScore out;
  out.hyp_len = stats.hyp_len;
  out.ref_len = stats.ref_len;
  double log_sum = 0.0;
  bool zero = stats.hyp_len == 0;
  for (std::size_t n = 0; n < 4; ++n) {
    out.precisions[n] =
        stats.totals[n] == 0 ? 0.0 : static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
    if (out.precisions[n] == 0.0) zero = true;
    else log_sum += std::log(out.precisions[n]);
  }
  if (stats.hyp_len > 0) {
    const double ratio = static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len);
    out.brevity_penalty = std::min(1.0, std::exp(1.0 - ratio));
  }
  out.score = zero ? 0.0 : 100.0 * out.brevity_penalty * std::exp(log_sum / 4.0);
  return out;
}

BleuScore bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  require_same_count(hyps.size(), refs.size(), "bleu");
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += sentence_stats(hyps[i], refs[i]);
  return bleu_from_stats(total);
}

BootstrapResult paired_bootstrap(const std::vector<Sentence>& hyps_a, const std::vector<Sentence>& hyps_b,
                                 const std::vector<Sentence>& refs, std::size_t num_samples, std::uint64_t seed) {
  require_same_count(hyps_a.size(), refs.size(), "paired_bootstrap");
  require_same_count(hyps_b.size(), refs.size(), "paired_bootstrap");
  if (refs.empty()) throw std::invalid_argument("paired_bootstrap: empty corpus");
  if (num_samples == 0) throw std::invalid_argument("paired_bootstrap: num_samples must be positive");
  std::vector<BleuStats> sa, sb;
  BleuStats ta, tb;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    sa.push_back(sentence_stats(hyps_a[i], refs[i]));
    sb.push_back(sentence_stats(hyps_b[i], refs[i]));
    ta += sa.back();
    tb += sb.back();
  }
  BootstrapResult result;
  result.bleu_a = bleu_from_stats(ta).score;
  result.bleu_b = bleu_from_stats(tb).score;
  result.samples = num_samples;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, refs.size() - 1);
  std::size_t wins_a = 0, wins_b = 0;
  for (std::size_t s = 0; s < num_samples; ++s) {
    BleuStats a, b;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto k = pick(rng);
      a += sa[k];
      b += sb[k];
    }
    const double x = bleu_from_stats(a).score, y = bleu_from_stats(b).score;
    wins_a += x > y;
    wins_b += y > x;
  }
  result.p_a_better = static_cast<double>(wins_a) / static_cast<double>(num_samples);
  result.p_b_better = static_cast<double>(wins_b) / static_cast<double>(num_samples);
  return result;
}

WordFMeasure word_fmeasure(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  require_same_count(hyps.size(), refs.size(), "word_fmeasure");
  WordFMeasure out;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    std::map<std::string, std::int64_t> h, r;
    for (const auto& w : hyps[i]) ++h[w];
    for (const auto& w : refs[i]) ++r[w];
    for (const auto& [w, c] : h) {
      auto& wc = out.per_type[w];
      wc.hyp += c;
      auto it = r.find(w);
      if (it != r.end()) wc.match += std::min(c, it->second);
    }
    for (const auto& [w, c] : r) out.per_type[w].ref += c;
  }
  for (const auto& [w, wc] : out.per_type) out.total += wc;
  return out;
}

const FMeasureBucket* FMeasureBucketReport::find(const std::string& key) const {
  for (const auto& b : buckets)
    if (b.key == key) return &b;
  return nullptr;
}

std::string FMeasureBucketReport::to_csv() const {
  std::ostringstream out;
  out << "bucket,types,percent,f_a,f_b,gain\n";
  out.setf(std::ios::fixed);
  for (const auto& b : buckets) {
    out.precision(2);
    out << b.key << ',' << b.types << ',' << b.percent << ',';
    out.precision(4);
    out << b.f_a << ',' << b.f_b << ',' << b.gain() << '\n';
  }
  return out.str();
}

namespace {

// `bucket_of` returns a scheme index or -1 for the uncovered bucket.
template <typename BucketOf>
FMeasureBucketReport bucketize(const std::vector<Sentence>& hyps_a, const std::vector<Sentence>& hyps_b,
                               const std::vector<Sentence>& refs, const BucketScheme& scheme,
                               const std::string& uncovered_key, BucketOf bucket_of) {
  const auto fa = word_fmeasure(hyps_a, refs);
  const auto fb = word_fmeasure(hyps_b, refs);
  std::set<std::string> types;
  for (const auto& [w, c] : fa.per_type) types.insert(w);
  for (const auto& [w, c] : fb.per_type) types.insert(w);

  const std::size_t slots = scheme.size() + 1;
  std::vector<WordCounts> ca(slots), cb(slots);
  std::vector<std::size_t> n(slots, 0);
  for (const auto& w : types) {
    const int idx = bucket_of(w);
    const std::size_t slot = idx < 0 ? scheme.size() : static_cast<std::size_t>(idx);
    ++n[slot];
    if (auto it = fa.per_type.find(w); it != fa.per_type.end()) ca[slot] += it->second;
    if (auto it = fb.per_type.find(w); it != fb.per_type.end()) cb[slot] += it->second;
  }
  std::size_t covered = 0;
  for (std::size_t i = 0; i < scheme.size(); ++i) covered += n[i];

  FMeasureBucketReport report;
  for (std::size_t i = 0; i < slots; ++i) {
    const bool uncovered = i == scheme.size();
    if (uncovered && n[i] == 0) continue;
    FMeasureBucket b;
    b.key = uncovered ? uncovered_key : scheme.label(i);
    b.types = n[i];
    b.percent = uncovered || covered == 0 ? 0.0 : 100.0 * static_cast<double>(n[i]) / static_cast<double>(covered);
    b.f_a = ca[i].f1();
    b.f_b = cb[i].f1();
    report.buckets.push_back(std::move(b));
  }
  return report;
}

}  // namespace

FMeasureBucketReport bucket_fmeasure_by_subwords(const std::vector<Sentence>& hyps_a, const std::vector<Sentence>& hyps_b,
                                                 const std::vector<Sentence>& refs,
                                                 const std::map<std::string, std::string>& target_to_source,
                                                 const BpeModel& bpe, const BucketScheme& buckets) {
  return bucketize(hyps_a, hyps_b, refs, buckets, kUnalignedBucket, [&](const std::string& w) {
    auto it = target_to_source.find(w);
    if (it == target_to_source.end()) return -1;
    const int pieces = static_cast<int>(apply_bpe(bpe, it->second).size());
    return static_cast<int>(buckets.index_of(std::max(pieces, buckets.lower_bounds.front())));
  });
}

FMeasureBucketReport bucket_fmeasure_by_edit_distance(const std::vector<Sentence>& hyps_a,
                                                      const std::vector<Sentence>& hyps_b,
                                                      const std::vector<Sentence>& refs,
                                                      const std::map<std::string, std::string>& target_to_source,
                                                      const BilingualDictionary& dict, const BucketScheme& buckets) {
  std::map<std::string, const DictionaryEntry*> partner;
  for (const auto& e : dict.pairs) {
    auto [it, inserted] = partner.emplace(e.lrl, &e);
    if (!inserted && e.count > it->second->count) it->second = &e;
  }
  return bucketize(hyps_a, hyps_b, refs, buckets, kNoPairBucket, [&](const std::string& w) {
    auto src = target_to_source.find(w);
    if (src == target_to_source.end()) return -1;
    auto it = partner.find(src->second);
    if (it == partner.end()) return -1;
    return static_cast<int>(buckets.index_of(static_cast<int>(edit_distance(it->second->lrl, it->second->hrl))));
  });
}

}  // namespace sde
