#include "eq/checkpoint.hpp"

#include <fstream>
#include <ostream>

#include "eq/errors.hpp"
#include "eq/io_detail.hpp"

namespace eq {

namespace {

constexpr const char* kMagic = "EQCKPT";
constexpr int kVersion = 1;

nlohmann::ordered_json cnn_config_json(const CnnConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = c.layers;
  j["kernel"] = c.kernel;
  j["channels"] = c.channels;
  j["parallel_symbols"] = c.parallel_symbols;
  j["n_os"] = c.n_os;
  j["padding"] = c.padding;
  j["bias"] = c.bias;
  return j;
}

CnnConfig cnn_config_from_json(const nlohmann::ordered_json& j) {
  CnnConfig c;
  c.layers = j.at("layers");
  c.kernel = j.at("kernel");
  c.channels = j.at("channels");
  c.parallel_symbols = j.at("parallel_symbols");
  c.n_os = j.at("n_os");
  c.padding = j.at("padding");
  c.bias = j.at("bias");
  return c;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  Eigen::ArrayXd flat(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) flat[i] = m.data()[i];
  detail::write_f64_array(out, flat);
}

Eigen::MatrixXd read_matrix(std::istream& in, Eigen::Index rows,
                            Eigen::Index cols) {
  Eigen::ArrayXd flat = detail::read_f64_array(in);
  if (flat.size() != rows * cols) throw UsageError("checkpoint: blob shape mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = flat[i];
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const EqualizerModel& model,
                     const CheckpointMeta& meta) {
  nlohmann::ordered_json header;
  header["magic"] = kMagic;
  header["version"] = kVersion;
  header["tool_version"] = kToolVersion;
  header["seed"] = meta.seed;
  header["rng"] = meta.rng_algorithm;
  header["config_hash"] = meta.config_hash;
  if (!meta.extra.is_null()) header["extra"] = meta.extra;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open " + path + " for writing");

  if (std::holds_alternative<FirModel>(model)) {
    const auto& m = std::get<FirModel>(model);
    header["family"] = "fir";
    header["taps"] = m.taps();
    header["n_os"] = m.n_os;
    detail::write_json_block(out, header);
    detail::write_f64_array(out, m.weights);
  } else if (std::holds_alternative<VolterraModel>(model)) {
    const auto& m = std::get<VolterraModel>(model);
    header["family"] = "volterra";
    header["taps"] = {m.m1(), m.m2(), m.m3};
    header["n_os"] = m.n_os;
    detail::write_json_block(out, header);
    Eigen::ArrayXd w0(1);
    w0 << m.w0;
    detail::write_f64_array(out, w0);
    detail::write_f64_array(out, m.w1);
    write_matrix(out, m.w2);
    detail::write_f64_array(out, m.w3);
  } else {
    const auto& m = std::get<CnnModel>(model);
    header["family"] = "cnn";
    header["cnn"] = cnn_config_json(m.config);
    detail::write_json_block(out, header);
    for (const auto& layer : m.layers) {
      for (const auto& w : layer.weight) write_matrix(out, w);
      detail::write_f64_array(out, layer.bias);
      detail::write_f64_array(out, layer.gamma);
      detail::write_f64_array(out, layer.beta);
      detail::write_f64_array(out, layer.running_mean);
      detail::write_f64_array(out, layer.running_var);
    }
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  nlohmann::ordered_json header = detail::read_json_block(in);
  if (header.value("magic", "") != kMagic)
    throw UsageError(path + " is not a checkpoint file");

  Checkpoint ck;
  ck.meta.seed = header.value("seed", std::uint64_t(0));
  ck.meta.rng_algorithm = header.value("rng", "");
  ck.meta.config_hash = header.value("config_hash", std::uint64_t(0));
  if (header.contains("extra")) ck.meta.extra = header["extra"];

  const std::string family = header.at("family");
  if (family == "fir") {
    FirModel m;
    m.n_os = header.at("n_os");
    m.weights = detail::read_f64_array(in);
    ck.model = std::move(m);
  } else if (family == "volterra") {
    const auto taps = header.at("taps");
    VolterraModel m = make_volterra(taps[0], taps[1], taps[2], header.at("n_os"));
    m.w0 = detail::read_f64_array(in)[0];
    m.w1 = detail::read_f64_array(in);
    m.w2 = read_matrix(in, m.m2(), m.m2());
    m.w3 = detail::read_f64_array(in);
    ck.model = std::move(m);
  } else if (family == "cnn") {
    CnnModel m;
    m.config = cnn_config_from_json(header.at("cnn"));
    m.layers.resize(m.config.layers);
    for (int l = 0; l < m.config.layers; ++l) {
      auto& layer = m.layers[l];
      layer.weight.resize(m.config.out_channels(l));
      for (auto& w : layer.weight)
        w = read_matrix(in, m.config.in_channels(l), m.config.kernel);
      layer.bias = detail::read_f64_array(in);
      layer.gamma = detail::read_f64_array(in);
      layer.beta = detail::read_f64_array(in);
      layer.running_mean = detail::read_f64_array(in);
      layer.running_var = detail::read_f64_array(in);
    }
    ck.model = std::move(m);
  } else {
    throw UsageError("checkpoint: unknown family " + family);
  }
  return ck;
}

void dump_checkpoint(const std::string& path, std::ostream& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  nlohmann::ordered_json header = detail::read_json_block(in);
  out << header.dump(2) << "\n";
  int tensor = 0;
  while (in.peek() != EOF) {
    Eigen::ArrayXd a = detail::read_f64_array(in);
    out << "tensor " << tensor++ << " [" << a.size() << "]:";
    for (Eigen::Index i = 0; i < a.size(); ++i) out << ' ' << detail::fmt(a[i]);
    out << "\n";
  }
}

}  // namespace eq
