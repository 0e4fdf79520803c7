#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixio/data.hpp"
#include "pixio/kvconfig.hpp"
#include "pixio/masking.hpp"
#include "pixio/model.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

/// Curation accepted nothing; the message carries pool diagnostics.
class CurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CurationRecord {
  std::string source_id;
  double raw_loss = 0.0;
  double norm_loss = 0.0;
  double entropy_bits = 0.0;
  bool accepted = false;
  double u_draw = 0.0;
};

struct ScoreConfig {
  MaskConfig mask;
  std::size_t draws = 4;  // independent mask draws averaged per image
  std::size_t batch = 32;
  bool norm_target = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Eval-mode masked reconstruction loss of every image (centre crop at the
/// model's input size), averaged over `draws` masks. Mask seeds come from the
/// image content, so identical images always score identically. Also fills
/// entropy_bits.
std::vector<CurationRecord> score_corpus(const Corpus& corpus, const PixioModel& model, const ScoreConfig& cfg,
                                         std::vector<std::string>* warnings = nullptr);

/// Mean over R, G, B of the Shannon entropy (bits) of the 256-bin histogram.
double color_entropy(const Image& image);

/// Draws u ~ U(0,1), stores it and accepts iff norm_loss >= u.
bool soft_sample(CurationRecord& record, Rng& rng);

/// norm_loss = average rank of raw_loss over the pool / (n - 1); a single
/// record gets 1.
void normalize_losses(std::vector<CurationRecord>& records);

struct CurationResult {
  std::vector<CurationRecord> records;  // sorted by source_id
  std::vector<std::string> accepted_ids;
  KeyValues summary;
};

/// Normalizes losses, then per record (in source_id order): entropy filter,
/// then soft sampling. A u is drawn for every record.
CurationResult curate(std::vector<CurationRecord> records, double entropy_threshold, Rng& rng);

/// `source_id<TAB>raw_loss<TAB>norm_loss<TAB>entropy_bits<TAB>accepted` per line.
void write_curation_manifest(const std::filesystem::path& path, const std::vector<CurationRecord>& records);
std::vector<CurationRecord> read_curation_manifest(const std::filesystem::path& path);

}  // namespace pixio::inline PIXIO_PRECISION_NS
