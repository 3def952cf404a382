#include "ceb/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ceb/binary_io.hpp"

namespace ceb {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'E', 'B', 'C', 'K', 'P', 'T', '\0'};

json schedule_json(const RhoScheduleConfig& s, const RhoSchedule::State& st) {
  json j = {{"kind", to_string(s.kind)},
            {"target_rho", s.target_rho},
            {"start_rho", s.start_rho},
            {"anneal_start_step", s.anneal_start_step},
            {"anneal_end_step", s.anneal_end_step},
            {"accuracy_window", s.accuracy_window}};
  j["intermediate_rho"] = s.intermediate_rho ? json(*s.intermediate_rho) : json(nullptr);
  j["accuracy_trigger"] = s.accuracy_trigger ? json(*s.accuracy_trigger) : json(nullptr);
  j["trigger_step"] = st.trigger_step ? json(*st.trigger_step) : json(nullptr);
  j["accuracy_window_values"] = st.window;
  return j;
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  io::put_bytes(os, name);
  io::put_u64(os, t.rank());
  for (auto d : t.shape()) io::put_u64(os, d);
  for (double v : t.data()) io::put_f64(os, v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto& spec = c.model.encoder.spec();
  json meta;
  meta["encoder"] = {{"input_dim", spec.input_dim},
                     {"hidden", spec.hidden},
                     {"latent_dim", spec.latent_dim}};
  if (spec.image) {
    meta["encoder"]["image"] = {spec.image->height, spec.image->width, spec.image->channels};
  }
  meta["num_classes"] = c.model.num_classes();
  meta["objective"] = to_string(c.objective);
  meta["classifier"] = to_string(c.model.classifier_kind);
  meta["rho"] = c.rho;
  meta["schedule"] = schedule_json(c.schedule, c.schedule_state);
  meta["seed"] = c.seed;
  meta["step"] = c.step;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  os.write(kMagic, 8);
  io::put_u32(os, kCheckpointFormatVersion);
  io::put_u64(os, c.config_hash);
  io::put_bytes(os, meta.dump());
  auto params = c.model.parameters();
  io::put_u64(os, params.size() + 1);
  for (const auto& p : params) put_tensor(os, p.name, p.tensor);
  put_tensor(os, "class_prior",
             Tensor::from({c.model.class_prior.size()}, c.model.class_prior));
  if (!os) throw std::runtime_error("error while writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  const std::string where = " in checkpoint '" + path.string() + "'";
  try {
    char magic[8];
    io::read_exact(is, magic, 8, "magic");
    if (!std::equal(magic, magic + 8, kMagic)) {
      throw io::FormatError("not a checkpoint file (bad magic)");
    }
    const auto version = io::get_u32(is, "version");
    if (version != kCheckpointFormatVersion) {
      throw io::FormatError("format version " + std::to_string(version) +
                            " is not supported by this build (expects " +
                            std::to_string(kCheckpointFormatVersion) +
                            "); retrain or use a matching cebctl");
    }
    Checkpoint c;
    c.config_hash = io::get_u64(is, "config hash");
    const json meta = json::parse(io::get_bytes(is, "metadata"));

    EncoderSpec spec;
    spec.input_dim = meta.at("encoder").at("input_dim").get<std::size_t>();
    spec.hidden = meta.at("encoder").at("hidden").get<std::vector<std::size_t>>();
    spec.latent_dim = meta.at("encoder").at("latent_dim").get<std::size_t>();
    if (meta.at("encoder").contains("image")) {
      auto im = meta.at("encoder").at("image").get<std::vector<std::size_t>>();
      if (im.size() != 3) throw io::FormatError("image shape must have 3 entries");
      spec.image = ImageShape{im[0], im[1], im[2]};
    }
    const auto k = meta.at("num_classes").get<std::size_t>();
    c.objective = parse_objective(meta.at("objective").get<std::string>());
    c.rho = meta.at("rho").get<double>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.step = meta.at("step").get<std::size_t>();
    const json& s = meta.at("schedule");
    c.schedule.kind = parse_schedule_kind(s.at("kind").get<std::string>());
    c.schedule.target_rho = s.at("target_rho").get<double>();
    c.schedule.start_rho = s.at("start_rho").get<double>();
    c.schedule.anneal_start_step = s.at("anneal_start_step").get<std::size_t>();
    c.schedule.anneal_end_step = s.at("anneal_end_step").get<std::size_t>();
    c.schedule.accuracy_window = s.at("accuracy_window").get<std::size_t>();
    if (!s.at("intermediate_rho").is_null()) c.schedule.intermediate_rho = s["intermediate_rho"].get<double>();
    if (!s.at("accuracy_trigger").is_null()) c.schedule.accuracy_trigger = s["accuracy_trigger"].get<double>();
    if (!s.at("trigger_step").is_null()) c.schedule_state.trigger_step = s["trigger_step"].get<std::size_t>();
    c.schedule_state.window = s.at("accuracy_window_values").get<std::vector<double>>();

    // Build a model of the recorded shape, then overwrite every parameter.
    c.model = CebModel(spec, k, parse_classifier(meta.at("classifier").get<std::string>()), 0);
    std::map<std::string, Tensor> by_name;
    for (const auto& p : c.model.parameters()) by_name[p.name] = p.tensor;

    const auto n = io::get_u64(is, "tensor count");
    if (n != by_name.size() + 1) throw io::FormatError("unexpected tensor count");
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::string name = io::get_bytes(is, "tensor name", 4096);
      const auto rank = io::get_u64(is, "tensor rank");
      if (rank > 4) throw io::FormatError("implausible rank for tensor " + name);
      Shape shape(rank);
      for (auto& d : shape) d = io::get_u64(is, "tensor dims");
      std::size_t numel = 1;
      for (auto d : shape) numel *= d;
      std::vector<double> data(numel);
      for (auto& v : data) v = io::get_f64(is, "tensor data");
      if (name == "class_prior") {
        if (shape != Shape{k}) throw io::FormatError("class_prior has the wrong shape");
        c.model.class_prior = std::move(data);
        continue;
      }
      auto it = by_name.find(name);
      if (it == by_name.end()) throw io::FormatError("unknown tensor '" + name + "'");
      if (it->second.shape() != shape) {
        throw io::FormatError("tensor '" + name + "' has shape " + shape_string(shape) +
                              ", expected " + shape_string(it->second.shape()));
      }
      auto dst = it->second.mutable_data();
      std::copy(data.begin(), data.end(), dst.begin());
    }
    if (is.peek() != std::char_traits<char>::eof()) {
      throw io::FormatError("trailing bytes after the last tensor");
    }
    return c;
  } catch (const io::FormatError& e) {
    throw io::FormatError(e.what() + where);
  } catch (const json::exception& e) {
    throw io::FormatError(std::string("malformed metadata: ") + e.what() + where);
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(std::string("invalid metadata: ") + e.what() + where);
  }
}

}  // namespace ceb
