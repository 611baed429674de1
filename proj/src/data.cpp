#include "bnwvad/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bnwvad {

namespace fs = std::filesystem;

std::string to_string(VideoLabel label) {
  return label == VideoLabel::Normal ? "normal" : "abnormal";
}

VideoLabel parse_label(std::string_view name) {
  if (name == "normal" || name == "0") return VideoLabel::Normal;
  if (name == "abnormal" || name == "1") return VideoLabel::Abnormal;
  throw std::invalid_argument("unknown video label: " + std::string(name));
}

void VideoRecord::validate() const {
  if (id.empty()) throw std::invalid_argument("video id must not be empty");
  if (crops == 0 || snippets == 0 || channels == 0)
    throw std::invalid_argument("video " + id + ": crops, snippets and channels must be positive");
  if (snippet_labels) {
    if (snippet_labels->size() != snippets)
      throw std::invalid_argument("video " + id + ": snippet label count does not match snippets");
    const bool any = std::find(snippet_labels->begin(), snippet_labels->end(), true) !=
                     snippet_labels->end();
    if (any != (label == VideoLabel::Abnormal))
      throw std::invalid_argument("video " + id + ": video label disagrees with snippet labels");
  }
}

std::span<const float> Video::crop(std::size_t k) const {
  const std::size_t n = record.snippets * record.channels;
  if (k >= record.crops) throw std::out_of_range("crop index out of range");
  return std::span<const float>(features).subspan(k * n, n);
}

std::vector<std::size_t> Dataset::indices(VideoLabel label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < videos.size(); ++i)
    if (videos[i].record.label == label) out.push_back(i);
  return out;
}

std::size_t Dataset::channels() const {
  if (videos.empty()) throw std::invalid_argument("empty dataset");
  const std::size_t c = videos.front().record.channels;
  for (const auto& v : videos)
    if (v.record.channels != c) throw std::invalid_argument("videos disagree on channel count");
  return c;
}

// ---------------------------------------------------------------------------
// I/O

namespace {

std::vector<float> read_f32(const fs::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open payload: " + path.string());
  std::vector<float> out(expected);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(expected * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(expected * sizeof(float)))
    throw std::runtime_error("payload too short: " + path.string());
  if (in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("payload longer than manifest shape: " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (float& f : out) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      bits = ((bits & 0xFF) << 24) | ((bits & 0xFF00) << 8) | ((bits >> 8) & 0xFF00) | (bits >> 24);
      f = std::bit_cast<float>(bits);
    }
  }
  return out;
}

void write_f32(const fs::path& path, std::span<const float> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write payload: " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  } else {
    for (float f : data) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      char bytes[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                       static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
      out.write(bytes, 4);
    }
  }
  if (!out) throw std::runtime_error("failed writing payload: " + path.string());
}

std::vector<float> read_csv(const fs::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open payload: " + path.string());
  std::vector<float> out;
  out.reserve(rows * cols);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      out.push_back(std::stof(cell));
      ++n;
    }
    if (n != cols) throw std::runtime_error("csv payload row has wrong width: " + path.string());
  }
  if (out.size() != rows * cols)
    throw std::runtime_error("csv payload has wrong row count: " + path.string());
  return out;
}

}  // namespace

Dataset load_dataset(const fs::path& path) {
  const fs::path manifest = fs::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest.string());
  const auto j = nlohmann::json::parse(in);
  const fs::path root = manifest.parent_path();

  Dataset ds;
  for (const auto& jv : j.at("videos")) {
    Video v;
    VideoRecord& r = v.record;
    r.id = jv.at("id").get<std::string>();
    r.label = parse_label(jv.at("label").get<std::string>());
    if (jv.contains("class_name") && !jv.at("class_name").is_null())
      r.class_name = jv.at("class_name").get<std::string>();
    r.crops = jv.value("crops", std::size_t{1});
    r.snippets = jv.at("snippets").get<std::size_t>();
    r.channels = jv.at("channels").get<std::size_t>();
    if (jv.contains("snippet_labels") && !jv.at("snippet_labels").is_null()) {
      std::vector<bool> labels;
      for (const auto& x : jv.at("snippet_labels"))
        labels.push_back(x.is_boolean() ? x.get<bool>() : x.get<int>() != 0);
      r.snippet_labels = std::move(labels);
    }
    r.payload = jv.at("payload").get<std::string>();
    r.validate();
    const fs::path payload = root / r.payload;
    const std::size_t count = r.crops * r.snippets * r.channels;
    v.features = payload.extension() == ".csv" ? read_csv(payload, r.crops * r.snippets, r.channels)
                                               : read_f32(payload, count);
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "features");
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : ds.videos) {
    const VideoRecord& r = v.record;
    r.validate();
    if (v.features.size() != r.crops * r.snippets * r.channels)
      throw std::invalid_argument("video " + r.id + ": payload size does not match shape");
    const std::string payload = "features/" + r.id + ".f32";
    write_f32(dir / payload, v.features);
    nlohmann::json jv = {{"id", r.id},
                         {"label", to_string(r.label)},
                         {"crops", r.crops},
                         {"snippets", r.snippets},
                         {"channels", r.channels},
                         {"payload", payload}};
    if (r.class_name) jv["class_name"] = *r.class_name;
    if (r.snippet_labels) {
      std::vector<int> labels(r.snippet_labels->begin(), r.snippet_labels->end());
      jv["snippet_labels"] = labels;
    }
    videos.push_back(std::move(jv));
  }
  nlohmann::json j = {{"format", "bnwvad-manifest"}, {"version", 1}, {"videos", videos}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << j.dump(1) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<float> interpolate(std::span<const float> x, std::size_t channels, std::size_t length) {
  if (channels == 0 || x.size() % channels != 0)
    throw std::invalid_argument("interpolate: input is not a [T, C] block");
  const std::size_t src = x.size() / channels;
  if (src == 0) throw std::invalid_argument("interpolate: empty input");
  if (length == 0) throw std::invalid_argument("interpolate: target length must be positive");
  std::vector<float> out(length * channels);
  for (std::size_t i = 0; i < length; ++i) {
    const double pos = length == 1 ? 0.0
                                   : static_cast<double>(i) * static_cast<double>(src - 1) /
                                         static_cast<double>(length - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), src - 1);
    const double frac = pos - static_cast<double>(lo);
    for (std::size_t c = 0; c < channels; ++c) {
      const float a = x[lo * channels + c];
      if (frac == 0.0 || lo + 1 >= src) {
        out[i * channels + c] = a;
      } else {
        const double b = x[(lo + 1) * channels + c];
        out[i * channels + c] = static_cast<float>(a + frac * (b - a));
      }
    }
  }
  return out;
}

Dataset resample(const Dataset& ds, std::size_t length) {
  Dataset out;
  out.videos.reserve(ds.videos.size());
  for (const auto& v : ds.videos) {
    if (v.record.snippets == length) {
      out.videos.push_back(v);
      continue;
    }
    Video r;
    r.record = v.record;
    r.record.snippets = length;
    for (std::size_t k = 0; k < v.record.crops; ++k) {
      const auto crop = interpolate(v.crop(k), v.record.channels, length);
      r.features.insert(r.features.end(), crop.begin(), crop.end());
    }
    if (v.record.snippet_labels) {
      const auto& src = *v.record.snippet_labels;
      std::vector<bool> labels(length);
      for (std::size_t i = 0; i < length; ++i) {
        const double pos = length == 1 ? 0.0
                                       : static_cast<double>(i) * static_cast<double>(src.size() - 1) /
                                             static_cast<double>(length - 1);
        labels[i] = src[static_cast<std::size_t>(std::lround(pos))];
      }
      // Keep the video-level invariant when interpolation skips a short event.
      if (r.record.label == VideoLabel::Abnormal &&
          std::find(labels.begin(), labels.end(), true) == labels.end()) {
        for (std::size_t j = 0; j < src.size(); ++j)
          if (src[j]) {
            labels[std::min(length - 1, j * length / src.size())] = true;
            break;
          }
      }
      r.record.snippet_labels = std::move(labels);
    }
    out.videos.push_back(std::move(r));
  }
  return out;
}

std::vector<double> crop_average(const Grid& scores) {
  if (scores.rows() == 0) throw std::invalid_argument("crop_average: no crops");
  std::vector<double> out(scores.cols(), 0.0);
  for (std::size_t k = 0; k < scores.rows(); ++k)
    for (std::size_t t = 0; t < scores.cols(); ++t) out[t] += scores(k, t);
  const double inv = 1.0 / static_cast<double>(scores.rows());
  for (double& v : out) v *= inv;
  return out;
}

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(const Dataset& ds, std::size_t b_nor, std::size_t b_abn,
                           std::uint64_t seed)
    : ds_(ds), b_nor_(b_nor), b_abn_(b_abn), rng_(seed) {
  normal_.order = ds.indices(VideoLabel::Normal);
  abnormal_.order = ds.indices(VideoLabel::Abnormal);
  if (b_nor == 0 || b_abn == 0) throw std::invalid_argument("batch sizes must be positive");
  if (normal_.order.size() < b_nor) throw std::invalid_argument("insufficient normal videos for batch");
  if (abnormal_.order.size() < b_abn)
    throw std::invalid_argument("insufficient abnormal videos for batch");
  channels_ = ds.channels();
  snippets_ = ds.videos.front().record.snippets;
  for (const auto& v : ds.videos)
    if (v.record.snippets != snippets_)
      throw std::invalid_argument("videos must share one snippet count; resample first");
  normal_.cursor = normal_.order.size();
  abnormal_.cursor = abnormal_.order.size();
}

std::vector<std::size_t> BatchSampler::draw(Pool& pool, std::size_t n) {
  std::vector<std::size_t> out;
  out.reserve(n);
  while (out.size() < n) {
    if (pool.cursor == pool.order.size()) {
      std::shuffle(pool.order.begin(), pool.order.end(), rng_);
      // Videos already in this batch wait until later in the new epoch.
      std::stable_partition(pool.order.begin(), pool.order.end(), [&](std::size_t i) {
        return std::find(out.begin(), out.end(), i) == out.end();
      });
      pool.cursor = 0;
    }
    out.push_back(pool.order[pool.cursor++]);
  }
  return out;
}

Tensor3 BatchSampler::gather(const std::vector<std::size_t>& ids) {
  Tensor3 x(ids.size(), snippets_, channels_);
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const Video& v = ds_.videos[ids[b]];
    std::size_t crop = 0;
    if (v.record.crops > 1)
      crop = std::uniform_int_distribution<std::size_t>(0, v.record.crops - 1)(rng_);
    const auto src = v.crop(crop);
    std::copy(src.begin(), src.end(), x.flat().begin() + static_cast<std::ptrdiff_t>(b * src.size()));
  }
  return x;
}

Batch BatchSampler::next() {
  Batch batch;
  batch.normal_videos = draw(normal_, b_nor_);
  batch.abnormal_videos = draw(abnormal_, b_abn_);
  batch.normal = gather(batch.normal_videos);
  batch.abnormal = gather(batch.abnormal_videos);
  return batch;
}

}  // namespace bnwvad
