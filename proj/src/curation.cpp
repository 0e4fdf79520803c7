#include "pixio/curation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pixio/objective.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

namespace {

constexpr std::uint64_t kScoreStream = 0x5c02e;

std::uint64_t content_hash(const Image& image) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (int s = 0; s < 64; s += 8) mix((image.height >> s) & 0xff);
  for (int s = 0; s < 64; s += 8) mix((image.width >> s) & 0xff);
  for (auto b : image.rgb) mix(b);
  return h;
}

}  // namespace

void ScoreConfig::validate() const {
  mask.validate();
  if (draws == 0) throw ConfigError("curation needs at least one mask draw");
  if (batch == 0) throw ConfigError("curation batch must be positive");
}

std::vector<CurationRecord> score_corpus(const Corpus& corpus, const PixioModel& model, const ScoreConfig& cfg,
                                         std::vector<std::string>* warnings) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (cfg.mask.grid_h != mc.grid() || cfg.mask.grid_w != mc.grid()) {
    throw ConfigError("curation mask grid does not match the model patch grid");
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Image& img = corpus.images[i];
    if (img.height == 0 || img.width == 0 || img.rgb.size() != img.height * img.width * 3) {
      if (warnings) warnings->push_back("skipping unreadable image " + corpus.source_ids[i]);
      continue;
    }
    usable.push_back(i);
  }

  std::vector<CurationRecord> records(usable.size());
  for (std::size_t start = 0; start < usable.size(); start += cfg.batch) {
    const std::size_t end = std::min(usable.size(), start + cfg.batch);
    std::vector<Tensor> crops;
    std::vector<std::uint64_t> hashes;
    for (std::size_t j = start; j < end; ++j) {
      const Image& img = corpus.images[usable[j]];
      crops.push_back(center_crop_resize(img, mc.input_size));
      hashes.push_back(content_hash(img));
    }
    ImageBatch batch = stack_images(crops, {});
    PatchGrid target = patchify(batch, mc.patch);
    if (cfg.norm_target) target = normalize_target(target);

    std::vector<double> total(end - start, 0.0);
    for (std::size_t k = 0; k < cfg.draws; ++k) {
      std::vector<MaskPlan> plans;
      for (auto h : hashes) {
        Rng rng = Rng::derive(cfg.seed, {kScoreStream, h, k});
        plans.push_back(sample_block_mask(cfg.mask, rng));
      }
      Graph g(false);
      TokenStates latent = model.encode(g, batch, &plans);
      Var pred = model.decode(g, latent, plans);
      LossReport loss = masked_pixel_loss(g, pred, target, plans);
      for (std::size_t b = 0; b < total.size(); ++b) total[b] += static_cast<double>(loss.per_sample[b]);
    }
    for (std::size_t j = start; j < end; ++j) {
      CurationRecord& r = records[j];
      const std::size_t i = usable[j];
      r.source_id = corpus.source_ids[i];
      r.raw_loss = total[j - start] / static_cast<double>(cfg.draws);
      r.entropy_bits = color_entropy(corpus.images[i]);
    }
  }
  return records;
}

double color_entropy(const Image& image) {
  const std::size_t pixels = image.height * image.width;
  if (pixels == 0) return 0.0;
  double total = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t p = 0; p < pixels; ++p) ++hist[image.rgb[p * 3 + c]];
    double h = 0.0;
    for (auto count : hist) {
      if (count == 0) continue;
      const double q = static_cast<double>(count) / static_cast<double>(pixels);
      h -= q * std::log2(q);
    }
    total += h;
  }
  return total / 3.0;
}

bool soft_sample(CurationRecord& record, Rng& rng) {
  record.u_draw = rng.uniform();
  record.accepted = record.norm_loss >= record.u_draw;
  return record.accepted;
}

void normalize_losses(std::vector<CurationRecord>& records) {
  const std::size_t n = records.size();
  if (n == 0) return;
  if (n == 1) {
    records[0].norm_loss = 1.0;
    return;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].raw_loss < records[b].raw_loss; });
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && records[order[j + 1]].raw_loss == records[order[i]].raw_loss) ++j;
    const double rank = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) {
      records[order[k]].norm_loss = std::clamp(rank / static_cast<double>(n - 1), 0.0, 1.0);
    }
    i = j + 1;
  }
}

CurationResult curate(std::vector<CurationRecord> records, double entropy_threshold, Rng& rng) {
  if (!(entropy_threshold >= 0.0 && entropy_threshold <= 8.0)) {
    throw ConfigError("entropy threshold must lie in [0, 8] bits");
  }
  if (records.empty()) throw CurationError("curation pool is empty");
  std::sort(records.begin(), records.end(),
            [](const CurationRecord& a, const CurationRecord& b) { return a.source_id < b.source_id; });
  normalize_losses(records);

  CurationResult result;
  std::size_t entropy_pass = 0;
  double loss_lo = records.front().raw_loss, loss_hi = records.front().raw_loss, loss_sum = 0.0;
  for (auto& r : records) {
    const bool rich = r.entropy_bits >= entropy_threshold;
    const bool sampled = soft_sample(r, rng);
    r.accepted = rich && sampled;
    if (rich) ++entropy_pass;
    if (r.accepted) result.accepted_ids.push_back(r.source_id);
    loss_lo = std::min(loss_lo, r.raw_loss);
    loss_hi = std::max(loss_hi, r.raw_loss);
    loss_sum += r.raw_loss;
  }
  const double n = static_cast<double>(records.size());
  if (result.accepted_ids.empty()) {
    std::ostringstream msg;
    msg << "curation accepted no images: " << records.size() << " scored, " << entropy_pass
        << " passed the entropy threshold of " << entropy_threshold << " bits, raw loss range [" << loss_lo << ", "
        << loss_hi << "]";
    throw CurationError(msg.str());
  }

  KeyValues& s = result.summary;
  s.set("records", records.size());
  s.set("entropy_threshold", entropy_threshold);
  s.set("entropy_passed", entropy_pass);
  s.set("accepted", result.accepted_ids.size());
  s.set("acceptance_rate", static_cast<double>(result.accepted_ids.size()) / n);
  s.set("raw_loss.min", loss_lo);
  s.set("raw_loss.max", loss_hi);
  s.set("raw_loss.mean", loss_sum / n);
  constexpr std::size_t kBins = 10;
  std::array<std::size_t, kBins> hist{};
  const double width = loss_hi > loss_lo ? (loss_hi - loss_lo) / kBins : 1.0;
  for (const auto& r : records) {
    const auto bin = std::min<std::size_t>(kBins - 1, static_cast<std::size_t>((r.raw_loss - loss_lo) / width));
    ++hist[bin];
  }
  for (std::size_t b = 0; b < kBins; ++b) s.set("raw_loss.hist." + std::to_string(b), hist[b]);
  result.records = std::move(records);
  return result;
}

void write_curation_manifest(const std::filesystem::path& path, const std::vector<CurationRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : records) {
    out << r.source_id << '\t' << format_double(r.raw_loss) << '\t' << format_double(r.norm_loss) << '\t'
        << format_double(r.entropy_bits) << '\t' << (r.accepted ? 1 : 0) << '\n';
  }
}

std::vector<CurationRecord> read_curation_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::vector<CurationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    CurationRecord r;
    std::string raw, norm, ent, acc;
    if (!std::getline(fields, r.source_id, '\t') || !std::getline(fields, raw, '\t') ||
        !std::getline(fields, norm, '\t') || !std::getline(fields, ent, '\t') || !std::getline(fields, acc)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 5 tab-separated fields");
    }
    try {
      r.raw_loss = std::stod(raw);
      r.norm_loss = std::stod(norm);
      r.entropy_bits = std::stod(ent);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    r.accepted = acc == "1";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
