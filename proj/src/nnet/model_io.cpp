#include <cmath>
#include <cstring>

#include "vlink/error.hpp"
#include "vlink/nnet/classifier.hpp"
#include "vlink/util.hpp"

namespace vlink::nnet {

namespace {
constexpr char kMagic[8] = {'V', 'L', 'M', 'O', 'D', 'E', 'L', '1'};
constexpr std::size_t kPrefix = 12;
}  // namespace

std::string serialize(const Classifier& model) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : model.params.blocks()) blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  const nlohmann::json header = {{"version", 1},
                                 {"kind", to_string(model.kind)},
                                 {"input_dim", model.input_dim},
                                 {"n_classes", model.n_classes},
                                 {"hidden", model.hidden},
                                 {"head_hidden", model.head_hidden},
                                 {"layers", model.layers},
                                 {"dropout", model.dropout},
                                 {"bidirectional", model.bidirectional},
                                 {"blocks", blocks},
                                 {"meta", model.meta}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  util::put_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + 4 * model.params.size());
  for (double v : model.params.values()) util::put_f32_le(out, static_cast<float>(v));
  return out;
}

Classifier deserialize(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(0, "missing VLMODEL1 magic");
  }
  if (bytes.size() < kPrefix) throw FormatError(bytes.size(), "truncated header length");
  const std::size_t hlen = util::get_u32_le(p + 8);
  if (kPrefix + hlen > bytes.size()) throw FormatError(bytes.size(), "header extends past end of file");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(kPrefix, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(kPrefix + e.byte, "invalid JSON header");
  }
  Classifier m;
  try {
    if (h.at("version").get<int>() != 1) throw FormatError(kPrefix, "unsupported model version");
    m.kind = parse_model_kind(h.at("kind").get<std::string>());
    m.input_dim = h.at("input_dim").get<Index>();
    m.n_classes = h.at("n_classes").get<Index>();
    m.hidden = h.at("hidden").get<Index>();
    m.head_hidden = h.at("head_hidden").get<Index>();
    m.layers = h.at("layers").get<Index>();
    m.dropout = h.at("dropout").get<double>();
    m.bidirectional = h.at("bidirectional").get<bool>();
    m.meta = h.at("meta");
    for (const auto& b : h.at("blocks")) {
      m.params.add(b.at("name").get<std::string>(), b.at("rows").get<Index>(), b.at("cols").get<Index>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kPrefix, std::string("malformed model header: ") + e.what());
  }
  const std::size_t payload = kPrefix + hlen;
  const std::size_t expected = payload + 4 * m.params.size();
  if (bytes.size() < expected) {
    throw FormatError(bytes.size(), "truncated parameter payload, expected " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) throw FormatError(expected, "trailing bytes after parameter payload");
  auto values = m.params.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = util::get_f32_le(p + payload + 4 * i);
    if (!std::isfinite(f)) throw FormatError(payload + 4 * i, "non-finite parameter");
    values[i] = f;
  }
  return m;
}

void save(const Classifier& model, const std::string& path) { util::write_file(path, serialize(model)); }

Classifier load(const std::string& path) { return deserialize(util::read_file(path)); }

}  // namespace vlink::nnet
