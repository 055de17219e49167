#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sde/align.hpp"
#include "sde/segmentation.hpp"

namespace sde {

using Sentence = std::vector<std::string>;

/// Clipped n-gram sufficient statistics for n = 1..4.
struct BleuStats {
  std::array<std::int64_t, 4> matches{};
  std::array<std::int64_t, 4> totals{};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& other);
};

struct BleuScore {
  double score = 0.0;  ///< 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;
};

BleuStats sentence_stats(const Sentence& hyp, const Sentence& ref);
BleuScore bleu_from_stats(const BleuStats& stats);

/// Unsmoothed corpus BLEU with BP = min(1, exp(1 - ref_len / hyp_len)).
BleuScore bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs);

struct BootstrapResult {
  double bleu_a = 0.0;
  double bleu_b = 0.0;
  double p_a_better = 0.0;  ///< fraction of samples where A strictly beats B
  double p_b_better = 0.0;
  std::size_t samples = 0;
};

/// Paired bootstrap over sentence indices; ties count for neither system.
BootstrapResult paired_bootstrap(const std::vector<Sentence>& hyps_a, const std::vector<Sentence>& hyps_b,
                                 const std::vector<Sentence>& refs, std::size_t num_samples = 1000,
                                 std::uint64_t seed = 1);

struct WordCounts {
  std::int64_t match = 0;
  std::int64_t hyp = 0;
  std::int64_t ref = 0;

  double precision() const { return hyp == 0 ? 0.0 : static_cast<double>(match) / static_cast<double>(hyp); }
  double recall() const { return ref == 0 ? 0.0 : static_cast<double>(match) / static_cast<double>(ref); }
  /// Harmonic mean of precision and recall, written as 2m / (h + r).
  double f1() const { return hyp + ref == 0 ? 0.0 : 2.0 * static_cast<double>(match) / static_cast<double>(hyp + ref); }
  WordCounts& operator+=(const WordCounts& o) {
    match += o.match;
    hyp += o.hyp;
    ref += o.ref;
    return *this;
  }
};

struct WordFMeasure {
  std::map<std::string, WordCounts> per_type;
  WordCounts total;  ///< micro aggregate over all types
};

WordFMeasure word_fmeasure(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs);

struct FMeasureBucket {
  std::string key;
  std::size_t types = 0;
  double percent = 0.0;  ///< share of covered types; 0 for the uncovered bucket
  double f_a = 0.0;
  double f_b = 0.0;
  double gain() const { return f_a - f_b; }
};

/// Buckets in scheme order, then the uncovered bucket ("unaligned" or
/// "no-pair") when any type falls into it.
struct FMeasureBucketReport {
  std::vector<FMeasureBucket> buckets;
  const FMeasureBucket* find(const std::string& key) const;
  std::string to_csv() const;
};

inline constexpr const char* kUnalignedBucket = "unaligned";
inline constexpr const char* kNoPairBucket = "no-pair";

/// Target word types bucketed by the BPE piece count of their most frequently
/// aligned source word.
FMeasureBucketReport bucket_fmeasure_by_subwords(const std::vector<Sentence>& hyps_a, const std::vector<Sentence>& hyps_b,
                                                 const std::vector<Sentence>& refs,
                                                 const std::map<std::string, std::string>& target_to_source,
                                                 const BpeModel& bpe, const BucketScheme& buckets = BucketScheme({1, 2, 3, 4, 5}));

/// Target word types bucketed by the edit distance between their aligned
/// source word and that word's dictionary partner.
FMeasureBucketReport bucket_fmeasure_by_edit_distance(const std::vector<Sentence>& hyps_a,
                                                      const std::vector<Sentence>& hyps_b,
                                                      const std::vector<Sentence>& refs,
                                                      const std::map<std::string, std::string>& target_to_source,
                                                      const BilingualDictionary& dict,
                                                      const BucketScheme& buckets = BucketScheme({0, 1, 2, 3, 4}));

}  // namespace sde
