#include "phenom/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace phenom {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'H', 'C', 'K', 'P', 'T', '0', '1'};

json config_to_json(const ViTConfig& c) {
  return {{"variant", c.variant},
          {"depth", c.depth},
          {"width", c.width},
          {"heads", c.heads},
          {"patch_size", c.patch_size},
          {"mlp_ratio", c.mlp_ratio},
          {"decoder_depth", c.decoder_depth},
          {"decoder_width", c.decoder_width},
          {"decoder_heads", c.decoder_heads},
          {"stochastic_depth_rate", c.stochastic_depth_rate},
          {"parallel_blocks", c.parallel_blocks},
          {"qk_norm", c.qk_norm},
          {"qk_bias", c.qk_bias},
          {"layer_scale", c.layer_scale},
          {"layer_scale_init", c.layer_scale_init},
          {"use_class_token", c.use_class_token}};
}

ViTConfig config_from_json(const json& j) {
  ViTConfig c;
  c.variant = j.at("variant").get<std::string>();
  c.depth = j.at("depth").get<int>();
  c.width = j.at("width").get<int>();
  c.heads = j.at("heads").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.decoder_depth = j.at("decoder_depth").get<int>();
  c.decoder_width = j.at("decoder_width").get<int>();
  c.decoder_heads = j.at("decoder_heads").get<int>();
  c.stochastic_depth_rate = j.at("stochastic_depth_rate").get<double>();
  c.parallel_blocks = j.at("parallel_blocks").get<bool>();
  c.qk_norm = j.at("qk_norm").get<bool>();
  c.qk_bias = j.at("qk_bias").get<bool>();
  c.layer_scale = j.at("layer_scale").get<bool>();
  c.layer_scale_init = j.at("layer_scale_init").get<double>();
  c.use_class_token = j.at("use_class_token").get<bool>();
  return c;
}

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: unexpected end of file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path,
                     const OptimizerState<float>* opt, const TrainProgressInfo* progress) {
  json tensors = json::array();
  uint64_t offset = 0;
  struct BlobRef {
    const float* data;
    size_t n;
  };
  std::vector<BlobRef> blobs;
  auto add_tensor = [&](const std::string& name, const std::vector<int>& shape,
                        const float* data, size_t n) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"dtype", "f32"}, {"offset", offset}});
    blobs.push_back({data, n});
    offset += n * sizeof(float);
  };
  for (const auto* p : model.registry.all())
    add_tensor(p->name, p->shape, p->w.data(), p->size());
  if (opt) {
    const auto& params = model.registry.all();
    for (size_t i = 0; i < params.size(); ++i) {
      add_tensor("opt.m." + params[i]->name, params[i]->shape, opt->m[i].data(),
                 opt->m[i].size());
      if (opt->type == OptimizerType::ADAMW)
        add_tensor("opt.v." + params[i]->name, params[i]->shape, opt->v[i].data(),
                   opt->v[i].size());
    }
  }

  json header = {{"schema", "phenom-checkpoint-v1"},
                 {"model",
                  {{"kind", to_string(model.kind)},
                   {"channel_agnostic", model.kind == ModelKind::CA_MAE},
                   {"n_channels", model.n_channels},
                   {"crop_size", model.crop_size},
                   {"n_classes", model.n_classes},
                   {"config", config_to_json(model.cfg)}}},
                 {"tensors", tensors}};
  if (opt)
    header["optimizer"] = {{"type", to_string(opt->type)}, {"beta1", opt->beta1},
                           {"beta2", opt->beta2},          {"weight_decay", opt->weight_decay},
                           {"eps", opt->eps},              {"t", opt->t}};
  if (progress) header["training"] = {{"epoch", progress->epoch}, {"step", progress->step}};

  std::string hs = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
  os.write(kMagic, 8);
  write_u32(os, static_cast<uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& b : blobs)
    os.write(reinterpret_cast<const char*>(b.data),
             static_cast<std::streamsize>(b.n * sizeof(float)));
  if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  uint32_t hlen = read_u32(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  json header = json::parse(hs);
  if (header.at("schema").get<std::string>() != "phenom-checkpoint-v1")
    throw std::runtime_error("unknown checkpoint schema");

  const json& jm = header.at("model");
  ModelKind kind = model_kind_from_string(jm.at("kind").get<std::string>());
  ViTConfig cfg = config_from_json(jm.at("config"));
  int n_channels = jm.at("n_channels").get<int>();
  int crop_size = jm.at("crop_size").get<int>();
  int n_classes = jm.at("n_classes").get<int>();

  LoadedCheckpoint out;
  out.model = Model<float>::create(kind, cfg, n_channels, crop_size,
                                   kind == ModelKind::WSL ? n_classes : 0, 0);

  const std::streampos blob_start = is.tellg();
  std::map<std::string, std::pair<uint64_t, std::vector<int>>> directory;
  for (const auto& t : header.at("tensors"))
    directory[t.at("name").get<std::string>()] = {t.at("offset").get<uint64_t>(),
                                                  t.at("shape").get<std::vector<int>>()};

  auto read_tensor = [&](const std::string& name, float* dst, size_t n,
                         const std::vector<int>& shape) {
    auto it = directory.find(name);
    if (it == directory.end())
      throw std::runtime_error("checkpoint missing tensor: " + name);
    if (it->second.second != shape)
      throw std::runtime_error("checkpoint shape mismatch for tensor: " + name);
    is.seekg(blob_start + static_cast<std::streamoff>(it->second.first));
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint truncated at tensor: " + name);
  };

  for (auto* p : out.model->registry.all()) read_tensor(p->name, p->w.data(), p->size(), p->shape);

  if (header.contains("optimizer")) {
    const json& jo = header.at("optimizer");
    OptimizerState<float> st;
    st.type = optimizer_from_string(jo.at("type").get<std::string>());
    st.beta1 = jo.at("beta1").get<double>();
    st.beta2 = jo.at("beta2").get<double>();
    st.weight_decay = jo.at("weight_decay").get<double>();
    st.eps = jo.at("eps").get<double>();
    st.init(out.model->registry);
    st.t = jo.at("t").get<long long>();
    const auto& params = out.model->registry.all();
    for (size_t i = 0; i < params.size(); ++i) {
      read_tensor("opt.m." + params[i]->name, st.m[i].data(), st.m[i].size(), params[i]->shape);
      if (st.type == OptimizerType::ADAMW)
        read_tensor("opt.v." + params[i]->name, st.v[i].data(), st.v[i].size(),
                    params[i]->shape);
    }
    out.opt = std::move(st);
  }
  if (header.contains("training")) {
    TrainProgressInfo p;
    p.epoch = header["training"].at("epoch").get<int>();
    p.step = header["training"].at("step").get<long long>();
    out.progress = p;
  }
  return out;
}

}  // namespace phenom
