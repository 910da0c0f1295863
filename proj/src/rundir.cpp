#include "madview/rundir.hpp"

#include <cinttypes>
#include <cstdio>
#include <map>

#include <json.hpp>

namespace madview {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

void write_mat(std::ostream& os, const ad::Mat<float>& m) {
  write_u32(os, static_cast<std::uint32_t>(m.rows()));
  write_u32(os, static_cast<std::uint32_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(float) * m.size()));
}

ad::Mat<float> read_mat(std::istream& is) {
  const std::uint32_t r = read_u32(is), c = read_u32(is);
  ad::Mat<float> m(r, c);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(float) * m.size()));
  return m;
}

constexpr std::uint32_t kWeightsMagic = 0x4d414457;  // "MADW"
constexpr std::uint32_t kStateMagic = 0x4d414453;    // "MADS"
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

RunDirectory::RunDirectory(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  fs::create_directories(checkpoints_dir());
  fs::create_directories(plots_dir());
  fs::create_directories(dir_ / "state");
}

const char* RunDirectory::train_csv_header() {
  return "env_step,critic_loss,actor_loss,temperature_loss,temperature,"
         "q_value_mean,critic_unaug,critic_aug_mean,actor_unaug,"
         "actor_aug_mean,grad_norm_critic,grad_norm_actor";
}

const char* RunDirectory::eval_csv_header() {
  return "env_step,subset,success_rate,mean_return,episodes";
}

void RunDirectory::open_train() {
  if (train_out_.is_open()) return;
  const bool fresh = !fs::exists(train_csv()) || fs::file_size(train_csv()) == 0;
  train_out_.open(train_csv(), std::ios::app);
  if (!train_out_) throw ValidationError("cannot open " + train_csv().string());
  if (fresh) train_out_ << train_csv_header() << "\n";
}

void RunDirectory::open_eval() {
  if (eval_out_.is_open()) return;
  const bool fresh = !fs::exists(eval_csv()) || fs::file_size(eval_csv()) == 0;
  eval_out_.open(eval_csv(), std::ios::app);
  if (!eval_out_) throw ValidationError("cannot open " + eval_csv().string());
  if (fresh) eval_out_ << eval_csv_header() << "\n";
}

void RunDirectory::write_manifest(const RunManifest& manifest) {
  std::ofstream out(manifest_file());
  out << serialize_manifest(manifest) << "\n";
  std::ofstream cfg(dir_ / "config.json");
  cfg << serialize_config(manifest.config) << "\n";
}

RunManifest RunDirectory::read_manifest() const {
  std::ifstream in(manifest_file());
  if (!in) throw ConfigError("missing manifest: " + manifest_file().string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

void RunDirectory::append_train_row(const LossReport& r) {
  open_train();
  double critic_aug_mean = 0, actor_aug_mean = 0;
  for (double v : r.critic_aug) critic_aug_mean += v;
  if (!r.critic_aug.empty()) critic_aug_mean /= static_cast<double>(r.critic_aug.size());
  for (double v : r.actor_aug) actor_aug_mean += v;
  if (!r.actor_aug.empty()) actor_aug_mean /= static_cast<double>(r.actor_aug.size());
  train_out_ << r.env_step << ',' << fmt(r.critic_loss) << ','
             << fmt(r.actor_loss) << ',' << fmt(r.temperature_loss) << ','
             << fmt(r.temperature) << ',' << fmt(r.q_value_mean) << ','
             << fmt(r.critic_unaug) << ',' << fmt(critic_aug_mean) << ','
             << fmt(r.actor_unaug) << ',' << fmt(actor_aug_mean) << ','
             << fmt(r.grad_norm_critic) << ',' << fmt(r.grad_norm_actor)
             << "\n";
}

void RunDirectory::append_eval_report(const EvalReport& report, long env_step) {
  open_eval();
  for (const auto& row : report.rows) {
    eval_out_ << env_step << ',' << row.subset_label << ','
              << fmt(row.success_rate) << ',' << fmt(row.mean_return) << ','
              << row.episodes << "\n";
  }
  eval_history_.emplace_back(env_step, report);
  write_eval_json();
}

void RunDirectory::write_eval_json() {
  json root = json::array();
  for (const auto& [step, report] : eval_history_) {
    json entry;
    entry["env_step"] = step;
    entry["env_id"] = report.env_id;
    entry["checkpoint_step"] = report.checkpoint_step;
    entry["seed"] = report.master_seed;
    json rows = json::array();
    for (const auto& row : report.rows) {
      json r;
      r["subset"] = row.subset_label;
      r["success_rate"] = row.success_rate;
      r["mean_return"] = row.mean_return;
      r["episodes"] = row.episodes;
      rows.push_back(r);
    }
    entry["rows"] = rows;
    root.push_back(entry);
  }
  std::ofstream out(eval_json());
  out << root.dump(2) << "\n";
}

void RunDirectory::flush() {
  if (train_out_.is_open()) train_out_.flush();
  if (eval_out_.is_open()) eval_out_.flush();
}

// ---- weights ----

void save_weights(const fs::path& bin_path,
                  std::span<nn::Tensor<float>* const> tensors) {
  std::ofstream os(bin_path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + bin_path.string());
  write_u32(os, kWeightsMagic);
  write_u32(os, kFormatVersion);
  write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const nn::Tensor<float>* t : tensors) {
    write_str(os, t->name);
    write_mat(os, t->value);
  }
}

void load_weights(const fs::path& bin_path,
                  std::span<nn::Tensor<float>* const> tensors) {
  std::ifstream is(bin_path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + bin_path.string());
  if (read_u32(is) != kWeightsMagic)
    throw ValidationError("not a weights file: " + bin_path.string());
  if (read_u32(is) != kFormatVersion)
    throw ValidationError("unsupported weights version");
  const std::uint32_t n = read_u32(is);
  std::map<std::string, ad::Mat<float>> by_name;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = read_str(is);
    by_name[name] = read_mat(is);
  }
  for (nn::Tensor<float>* t : tensors) {
    auto it = by_name.find(t->name);
    if (it == by_name.end())
      throw ValidationError("weights file missing tensor '" + t->name + "'");
    if (it->second.rows() != t->value.rows() ||
        it->second.cols() != t->value.cols())
      throw ValidationError("tensor shape mismatch for '" + t->name + "'");
    t->value = it->second;
  }
}

void save_checkpoint(const fs::path& dir, const CheckpointMeta& meta,
                     std::span<nn::Tensor<float>* const> tensors) {
  const std::string base = "ckpt_" + std::to_string(meta.step);
  save_weights(dir / (base + ".bin"), tensors);
  json j;
  j["config_hash"] = hex64(meta.config_hash);
  j["step"] = meta.step;
  j["config"] = json::parse(meta.config_json);
  j["metrics"]["avg_success"] = meta.latest_avg_success;
  std::ofstream out(dir / (base + ".json"));
  out << j.dump(2) << "\n";
}

CheckpointMeta read_checkpoint_meta(const fs::path& bin_path) {
  fs::path sidecar = bin_path;
  sidecar.replace_extension(".json");
  std::ifstream in(sidecar);
  if (!in) throw ConfigError("missing checkpoint sidecar: " + sidecar.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw ConfigError("checkpoint sidecar is not valid JSON");
  CheckpointMeta meta;
  meta.config_hash =
      std::strtoull(j.at("config_hash").get<std::string>().c_str(), nullptr, 16);
  meta.step = j.at("step").get<long>();
  meta.config_json = j.at("config").dump();
  if (j.contains("metrics") && j["metrics"].contains("avg_success"))
    meta.latest_avg_success = j["metrics"]["avg_success"].get<double>();
  return meta;
}

// ---- resume state ----

void save_resume_state(const fs::path& path, Agent<float>& agent,
                       ReplayBuffer& buffer, const ResumeHeader& header) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  write_u32(os, kStateMagic);
  write_u32(os, kFormatVersion);
  write_i64(os, header.env_step);
  write_i64(os, header.adam_steps_critic);
  write_i64(os, header.adam_steps_actor);
  write_i64(os, header.adam_steps_temp);
  write_str(os, agent.augmentation_rng().serialize());
  write_str(os, agent.environment_rng().serialize());
  write_str(os, buffer.rng_state());
  auto params = agent.all_params();
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (nn::Tensor<float>* t : params) {
    write_str(os, t->name);
    write_mat(os, t->value);
    write_mat(os, t->m);
    write_mat(os, t->v);
  }
  // replay contents
  write_u32(os, static_cast<std::uint32_t>(buffer.size()));
  for (int i = 0; i < buffer.size(); ++i) {
    Transition t = buffer.at(i);
    write_u32(os, static_cast<std::uint32_t>(t.obs.views.size()));
    auto write_obs = [&](const MultiViewObservation& o) {
      for (const Image& img : o.views) {
        write_u32(os, static_cast<std::uint32_t>(img.c));
        write_u32(os, static_cast<std::uint32_t>(img.h));
        write_u32(os, static_cast<std::uint32_t>(img.w));
        auto bytes = to_u8(img);
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
      }
      write_u32(os, static_cast<std::uint32_t>(o.proprio.size()));
      os.write(reinterpret_cast<const char*>(o.proprio.data()),
               static_cast<std::streamsize>(sizeof(float) * o.proprio.size()));
      write_i64(os, o.t);
    };
    write_obs(t.obs);
    write_obs(t.next_obs);
    write_u32(os, static_cast<std::uint32_t>(t.action.size()));
    os.write(reinterpret_cast<const char*>(t.action.data()),
             static_cast<std::streamsize>(sizeof(float) * t.action.size()));
    os.write(reinterpret_cast<const char*>(&t.reward), sizeof(float));
    const std::uint8_t done = t.done ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&done), 1);
  }
}

ResumeHeader load_resume_state(const fs::path& path, Agent<float>& agent,
                               ReplayBuffer& buffer) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path.string());
  if (read_u32(is) != kStateMagic)
    throw ValidationError("not a resume state file: " + path.string());
  if (read_u32(is) != kFormatVersion)
    throw ValidationError("unsupported resume state version");
  ResumeHeader header;
  header.env_step = read_i64(is);
  header.adam_steps_critic = read_i64(is);
  header.adam_steps_actor = read_i64(is);
  header.adam_steps_temp = read_i64(is);
  agent.augmentation_rng() = Rng::deserialize(read_str(is));
  agent.environment_rng() = Rng::deserialize(read_str(is));
  buffer.set_rng_state(read_str(is));
  auto params = agent.all_params();
  const std::uint32_t n = read_u32(is);
  if (n != params.size())
    throw ValidationError("resume state tensor count mismatch");
  for (nn::Tensor<float>* t : params) {
    const std::string name = read_str(is);
    if (name != t->name)
      throw ValidationError("resume state tensor order mismatch at '" + name +
                            "'");
    t->value = read_mat(is);
    t->m = read_mat(is);
    t->v = read_mat(is);
  }
  agent.critic_optimizer().set_steps_taken(header.adam_steps_critic);
  agent.actor_optimizer().set_steps_taken(header.adam_steps_actor);
  agent.temperature_optimizer().set_steps_taken(header.adam_steps_temp);
  const std::uint32_t entries = read_u32(is);
  for (std::uint32_t i = 0; i < entries; ++i) {
    Transition t;
    const std::uint32_t n_views = read_u32(is);
    auto read_obs = [&](MultiViewObservation& o) {
      for (std::uint32_t v = 0; v < n_views; ++v) {
        const int c = static_cast<int>(read_u32(is));
        const int h = static_cast<int>(read_u32(is));
        const int w = static_cast<int>(read_u32(is));
        std::vector<std::uint8_t> bytes(static_cast<std::size_t>(c) * h * w);
        is.read(reinterpret_cast<char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        o.views.push_back(from_u8(bytes, c, h, w));
      }
      const std::uint32_t pd = read_u32(is);
      o.proprio.resize(pd);
      is.read(reinterpret_cast<char*>(o.proprio.data()),
              static_cast<std::streamsize>(sizeof(float) * pd));
      o.t = static_cast<int>(read_i64(is));
    };
    read_obs(t.obs);
    read_obs(t.next_obs);
    const std::uint32_t ad = read_u32(is);
    t.action.resize(ad);
    is.read(reinterpret_cast<char*>(t.action.data()),
            static_cast<std::streamsize>(sizeof(float) * ad));
    is.read(reinterpret_cast<char*>(&t.reward), sizeof(float));
    std::uint8_t done = 0;
    is.read(reinterpret_cast<char*>(&done), 1);
    t.done = done != 0;
    buffer.push(t);
  }
  if (!is) throw ValidationError("resume state truncated");
  return header;
}

}  // namespace madview
