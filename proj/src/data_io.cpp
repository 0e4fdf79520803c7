#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pixio/data.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kPackedMagic{'P', 'X', 'P', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  if (!is) throw FormatError("packed corpus: truncated header");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

Corpus load_packed(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open packed corpus " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kPackedMagic) throw FormatError("bad packed corpus magic in " + path.string());
  const auto version = get_u32(in);
  if (version != kPackedVersion) throw FormatError("unsupported packed corpus version " + std::to_string(version));
  const std::size_t h = get_u32(in);
  const std::size_t w = get_u32(in);
  const std::size_t count = get_u32(in);
  Corpus corpus;
  for (std::size_t i = 0; i < count; ++i) {
    Image img(h, w);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!in) {
      corpus.warnings.push_back(path.string() + ": record " + std::to_string(i) + " truncated, skipped");
      break;
    }
    corpus.images.push_back(std::move(img));
    corpus.source_ids.push_back(path.string() + "#" + std::to_string(i));
  }
  return corpus;
}

Corpus load_directory(const fs::path& path) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Corpus corpus;
  for (const auto& f : files) {
    auto img = read_image(f);
    if (!img) {
      corpus.warnings.push_back(f.string() + ": not a decodable image, skipped");
      continue;
    }
    corpus.images.push_back(std::move(*img));
    corpus.source_ids.push_back(f.string());
  }
  return corpus;
}

}  // namespace

std::optional<Image> read_image(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) return std::nullopt;
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image img(static_cast<std::size_t>(rgb.rows), static_cast<std::size_t>(rgb.cols));
  for (int y = 0; y < rgb.rows; ++y) {
    std::memcpy(img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3, rgb.ptr<std::uint8_t>(y), img.width * 3);
  }
  return img;
}

void write_png(const fs::path& path, const Image& image) {
  cv::Mat rgb(static_cast<int>(image.height), static_cast<int>(image.width), CV_8UC3,
              const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw FormatError("failed to write " + path.string());
}

Corpus load_corpus(const fs::path& path, CorpusFormat format) {
  if (!fs::exists(path)) throw FormatError("corpus path does not exist: " + path.string());
  if (format == CorpusFormat::Auto) {
    format = fs::is_directory(path) ? CorpusFormat::ImageDirectory : CorpusFormat::PackedBinary;
  }
  Corpus corpus = format == CorpusFormat::ImageDirectory ? load_directory(path) : load_packed(path);
  for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << '\n';
  if (corpus.images.empty()) throw FormatError("empty corpus: " + path.string());
  return corpus;
}

void write_packed_corpus(const fs::path& path, const std::vector<Image>& images) {
  if (images.empty()) throw ContractError("write_packed_corpus: no images");
  const std::size_t h = images.front().height;
  const std::size_t w = images.front().width;
  for (const auto& img : images) {
    if (img.height != h || img.width != w) throw ContractError("write_packed_corpus: images differ in size");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kPackedMagic.data(), 4);
  put_u32(out, kPackedVersion);
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(images.size()));
  for (const auto& img : images) {
    out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  }
}

void write_corpus_manifest(const fs::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t i = 0; i < corpus.size(); ++i) out << corpus.source_ids[i] << '\t' << i << '\n';
}

std::vector<std::pair<std::string, std::size_t>> read_corpus_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::vector<std::pair<std::string, std::size_t>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw FormatError("manifest line without tab: " + line);
    rows.emplace_back(line.substr(0, tab), std::stoull(line.substr(tab + 1)));
  }
  return rows;
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
