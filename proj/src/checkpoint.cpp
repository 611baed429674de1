#include "bnwvad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bnwvad {

namespace {

constexpr char kMagic[8] = {'B', 'N', 'W', 'V', 'A', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    value = to_little(value);
    const auto* raw = reinterpret_cast<const char*>(&value);
    out_.append(raw, sizeof(T));
  }
  void put_block(std::span<const double> block) {
    put<std::uint64_t>(block.size());
    for (double v : block) put(v);
  }
  void put_bytes(const char* data, std::size_t n) { out_.append(data, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw std::runtime_error("truncated checkpoint");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(value);
  }
  std::vector<double> get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw std::runtime_error("truncated checkpoint");
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>();
    return v;
  }
  void get_block(std::span<double> block) {
    const auto v = get_vector();
    if (v.size() != block.size()) throw std::runtime_error("checkpoint block size mismatch");
    std::copy(v.begin(), v.end(), block.begin());
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_stats(Writer& w, const RunningStats& rs) {
  w.put_block(rs.mean);
  w.put_block(rs.var);
  w.put(rs.momentum);
  w.put(rs.eps);
}

RunningStats get_stats(Reader& r) {
  RunningStats rs;
  rs.mean = r.get_vector();
  rs.var = r.get_vector();
  rs.momentum = r.get<double>();
  rs.eps = r.get<double>();
  return rs;
}

void put_trainables(Writer& w, const Trainables& t) {
  for (auto block : t.blocks()) w.put_block(block);
}

void get_trainables(Reader& r, Trainables& t) {
  for (auto block : t.blocks()) r.get_block(block);
}

nlohmann::json stats_json(const RunningStats& rs) {
  return {{"mean", rs.mean}, {"var", rs.var}, {"momentum", rs.momentum}, {"eps", rs.eps}};
}

RunningStats stats_from_json(const nlohmann::json& j) {
  RunningStats rs;
  rs.mean = j.at("mean").get<std::vector<double>>();
  rs.var = j.at("var").get<std::vector<double>>();
  rs.momentum = j.at("momentum").get<double>();
  rs.eps = j.at("eps").get<double>();
  return rs;
}

nlohmann::json trainables_json(const Trainables& t) {
  nlohmann::json blocks = nlohmann::json::array();
  for (auto block : t.blocks()) blocks.push_back(std::vector<double>(block.begin(), block.end()));
  return blocks;
}

void trainables_from_json(const nlohmann::json& j, Trainables& t) {
  auto blocks = t.blocks();
  if (j.size() != blocks.size()) throw std::runtime_error("checkpoint block count mismatch");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto v = j[i].get<std::vector<double>>();
    if (v.size() != blocks[i].size()) throw std::runtime_error("checkpoint block size mismatch");
    std::copy(v.begin(), v.end(), blocks[i].begin());
  }
}

std::string encode_json(const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.model.config;
  nlohmann::json j;
  j["format"] = "bnwvad-checkpoint";
  j["version"] = kVersion;
  j["config"] = {{"input_channels", c.input_channels},
                 {"enhancer", to_string(c.enhancer)},
                 {"enhanced_channels", c.enhanced_channels},
                 {"hidden1", c.hidden1},
                 {"hidden2", c.hidden2},
                 {"normalization", to_string(c.normalization)},
                 {"classifier_input", to_string(c.classifier_input)},
                 {"momentum", c.momentum},
                 {"eps", c.eps}};
  j["weights"] = trainables_json(ckpt.model.weights);
  j["stats1"] = stats_json(ckpt.model.stats1);
  j["stats2"] = stats_json(ckpt.model.stats2);
  if (ckpt.optimizer) {
    const AdamState& s = *ckpt.optimizer;
    j["optimizer"] = {{"lr", s.hyper.lr},
                      {"beta1", s.hyper.beta1},
                      {"beta2", s.hyper.beta2},
                      {"eps", s.hyper.eps},
                      {"weight_decay", s.hyper.weight_decay},
                      {"step", s.step},
                      {"first", trainables_json(s.first)},
                      {"second", trainables_json(s.second)}};
  }
  return j.dump(1);
}

Checkpoint decode_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "bnwvad-checkpoint") throw std::runtime_error("not a checkpoint file");
  if (j.at("version").get<std::uint32_t>() != kVersion)
    throw std::runtime_error("unsupported checkpoint version");
  const auto& jc = j.at("config");
  ModelConfig c;
  c.input_channels = jc.at("input_channels").get<std::size_t>();
  c.enhancer = parse_enhancer(jc.at("enhancer").get<std::string>());
  c.enhanced_channels = jc.at("enhanced_channels").get<std::size_t>();
  c.hidden1 = jc.at("hidden1").get<std::size_t>();
  c.hidden2 = jc.at("hidden2").get<std::size_t>();
  c.normalization = parse_normalization(jc.at("normalization").get<std::string>());
  c.classifier_input = parse_classifier_input(jc.at("classifier_input").get<std::string>());
  c.momentum = jc.at("momentum").get<double>();
  c.eps = jc.at("eps").get<double>();

  Checkpoint ckpt;
  ckpt.model = init_params(c, 0);
  trainables_from_json(j.at("weights"), ckpt.model.weights);
  ckpt.model.stats1 = stats_from_json(j.at("stats1"));
  ckpt.model.stats2 = stats_from_json(j.at("stats2"));
  if (j.contains("optimizer")) {
    const auto& jo = j.at("optimizer");
    AdamHyper h{jo.at("lr").get<double>(), jo.at("beta1").get<double>(),
                jo.at("beta2").get<double>(), jo.at("eps").get<double>(),
                jo.at("weight_decay").get<double>()};
    AdamState s = AdamState::for_params(ckpt.model.weights, h);
    s.step = jo.at("step").get<std::uint64_t>();
    trainables_from_json(jo.at("first"), s.first);
    trainables_from_json(jo.at("second"), s.second);
    ckpt.optimizer = std::move(s);
  }
  return ckpt;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kVersion);
  const ModelConfig& c = ckpt.model.config;
  w.put<std::uint64_t>(c.input_channels);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.enhancer));
  w.put<std::uint64_t>(c.enhanced_channels);
  w.put<std::uint64_t>(c.hidden1);
  w.put<std::uint64_t>(c.hidden2);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.normalization));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.classifier_input));
  w.put(c.momentum);
  w.put(c.eps);
  put_trainables(w, ckpt.model.weights);
  put_stats(w, ckpt.model.stats1);
  put_stats(w, ckpt.model.stats2);
  w.put<std::uint8_t>(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const AdamState& s = *ckpt.optimizer;
    w.put(s.hyper.lr);
    w.put(s.hyper.beta1);
    w.put(s.hyper.beta2);
    w.put(s.hyper.eps);
    w.put(s.hyper.weight_decay);
    w.put<std::uint64_t>(s.step);
    put_trainables(w, s.first);
    put_trainables(w, s.second);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    return decode_json(bytes);
  const std::string body = bytes.substr(sizeof(kMagic));
  Reader r(body);
  if (r.get<std::uint32_t>() != kVersion) throw std::runtime_error("unsupported checkpoint version");
  ModelConfig c;
  c.input_channels = r.get<std::uint64_t>();
  c.enhancer = static_cast<Enhancer>(r.get<std::uint32_t>());
  c.enhanced_channels = r.get<std::uint64_t>();
  c.hidden1 = r.get<std::uint64_t>();
  c.hidden2 = r.get<std::uint64_t>();
  c.normalization = static_cast<Normalization>(r.get<std::uint32_t>());
  c.classifier_input = static_cast<ClassifierInput>(r.get<std::uint32_t>());
  c.momentum = r.get<double>();
  c.eps = r.get<double>();

  Checkpoint ckpt;
  ckpt.model = init_params(c, 0);
  get_trainables(r, ckpt.model.weights);
  ckpt.model.stats1 = get_stats(r);
  ckpt.model.stats2 = get_stats(r);
  if (r.get<std::uint8_t>()) {
    AdamHyper h;
    h.lr = r.get<double>();
    h.beta1 = r.get<double>();
    h.beta2 = r.get<double>();
    h.eps = r.get<double>();
    h.weight_decay = r.get<double>();
    AdamState s = AdamState::for_params(ckpt.model.weights, h);
    s.step = r.get<std::uint64_t>();
    get_trainables(r, s.first);
    get_trainables(r, s.second);
    ckpt.optimizer = std::move(s);
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in checkpoint");
  ckpt.model.stats1.validate();
  ckpt.model.stats2.validate();
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                     CheckpointFormat format) {
  const std::string bytes =
      format == CheckpointFormat::Binary ? encode_checkpoint(ckpt) : encode_json(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace bnwvad
