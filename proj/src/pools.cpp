#include "gridball/pools.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gridball::pools {

namespace {

constexpr int kManifestVersion = 1;

json MetaToJson(const CheckpointMeta& m) {
  return json{{"checkpoint_id", m.checkpoint_id},
              {"agent", m.agent},
              {"agent_class", AgentClassName(m.agent_class)},
              {"algorithm", m.algorithm},
              {"training_step", m.training_step},
              {"created_index", m.created_index},
              {"history_depth", m.history_depth}};
}

CheckpointMeta MetaFromJson(const json& j) {
  CheckpointMeta m;
  m.checkpoint_id = j.at("checkpoint_id").get<int64_t>();
  m.agent = j.at("agent").get<std::string>();
  m.agent_class = AgentClassFromName(j.at("agent_class").get<std::string>());
  m.algorithm = j.at("algorithm").get<std::string>();
  m.training_step = j.at("training_step").get<int64_t>();
  m.created_index = j.at("created_index").get<int64_t>();
  m.history_depth = j.at("history_depth").get<int>();
  return m;
}

bool Contains(const std::vector<int64_t>& v, int64_t id) {
  return std::find(v.begin(), v.end(), id) != v.end();
}

}  // namespace

const char* AgentClassName(AgentClass c) {
  switch (c) {
    case AgentClass::kMain: return "main";
    case AgentClass::kPolicyExplorer: return "policy_explorer";
    case AgentClass::kMethodExplorer: return "method_explorer";
  }
  return "?";
}

AgentClass AgentClassFromName(const std::string& name) {
  if (name == "main") return AgentClass::kMain;
  if (name == "policy_explorer") return AgentClass::kPolicyExplorer;
  if (name == "method_explorer") return AgentClass::kMethodExplorer;
  throw std::invalid_argument("unknown agent class: " + name);
}

const char* PoolKindName(PoolKind k) {
  switch (k) {
    case PoolKind::kShortTerm: return "short_term";
    case PoolKind::kLongTerm: return "long_term";
    case PoolKind::kSuperior: return "superior";
    case PoolKind::kCrossPolicy: return "cross_policy";
    case PoolKind::kCrossMethod: return "cross_method";
  }
  return "?";
}

int64_t CheckpointStore::Add(const std::string& agent, AgentClass agent_class,
                             const std::string& algorithm, int64_t training_step,
                             int history_depth,
                             std::shared_ptr<const net::PolicyValueNet> params) {
  if (!params) throw std::invalid_argument("checkpoint payload must not be null");
  CheckpointRecord rec;
  rec.meta.checkpoint_id = next_id_++;
  rec.meta.agent = agent;
  rec.meta.agent_class = agent_class;
  rec.meta.algorithm = algorithm;
  rec.meta.training_step = training_step;
  rec.meta.created_index = rec.meta.checkpoint_id;
  rec.meta.history_depth = history_depth;
  rec.params = std::move(params);
  records_.push_back(std::move(rec));
  return records_.back().meta.checkpoint_id;
}

const CheckpointRecord* CheckpointStore::Find(int64_t id) const {
  for (const auto& r : records_) {
    if (r.meta.checkpoint_id == id) return &r;
  }
  return nullptr;
}

const CheckpointRecord& CheckpointStore::Get(int64_t id) const {
  const auto* r = Find(id);
  if (r == nullptr) {
    throw std::invalid_argument("unknown checkpoint id " + std::to_string(id));
  }
  return *r;
}

std::vector<int64_t> CheckpointStore::Ids() const {
  std::vector<int64_t> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.meta.checkpoint_id);
  return out;
}

PoolRegistry::PoolRegistry(int short_term_capacity)
    : short_term_capacity_(short_term_capacity) {
  if (short_term_capacity <= 0) {
    throw std::invalid_argument("short-term capacity must be positive");
  }
}

void PoolRegistry::RegisterAgent(const std::string& name, AgentClass agent_class) {
  std::lock_guard<std::mutex> lock(mutex_);
  for (const auto& [n, _] : agents_) {
    if (n == name) throw std::invalid_argument("agent already registered: " + name);
  }
  agents_.emplace_back(name, AgentPools{agent_class, {}, {}, {}, 0});
}

bool PoolRegistry::HasAgent(const std::string& name) const {
  std::lock_guard<std::mutex> lock(mutex_);
  for (const auto& [n, _] : agents_) {
    if (n == name) return true;
  }
  return false;
}

AgentClass PoolRegistry::ClassOf(const std::string& name) const {
  std::lock_guard<std::mutex> lock(mutex_);
  return Require(name).agent_class;
}

std::vector<std::string> PoolRegistry::Agents() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [n, _] : agents_) out.push_back(n);
  return out;
}

PoolRegistry::AgentPools& PoolRegistry::Require(const std::string& agent) {
  for (auto& [n, pools] : agents_) {
    if (n == agent) return pools;
  }
  throw std::invalid_argument("unknown agent: " + agent);
}

const PoolRegistry::AgentPools& PoolRegistry::Require(const std::string& agent) const {
  for (const auto& [n, pools] : agents_) {
    if (n == agent) return pools;
  }
  throw std::invalid_argument("unknown agent: " + agent);
}

std::optional<int64_t> PoolRegistry::PushShortTerm(const std::string& agent,
                                                   int64_t checkpoint_id) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto& pools = Require(agent);
  if (Contains(pools.short_term, checkpoint_id)) return std::nullopt;
  pools.short_term.push_back(checkpoint_id);
  if (static_cast<int>(pools.short_term.size()) > short_term_capacity_) {
    const int64_t evicted = pools.short_term.front();
    pools.short_term.erase(pools.short_term.begin());
    pools.evictions += 1;
    return evicted;
  }
  return std::nullopt;
}

bool PoolRegistry::SnapshotLongTerm(const std::string& agent, int64_t checkpoint_id,
                                    bool interval_elapsed) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto& pools = Require(agent);
  if (!interval_elapsed) return false;
  if (Contains(pools.long_term, checkpoint_id)) return false;
  pools.long_term.push_back(checkpoint_id);
  return true;
}

bool PoolRegistry::AdmitSuperior(const std::string& agent, int64_t checkpoint_id,
                                 const ScreeningCertificate& certificate) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto& pools = Require(agent);
  if (!certificate.Covers(checkpoint_id)) {
    audit_log_.push_back({agent, checkpoint_id, "admission without screening certificate"});
    return false;
  }
  if (!Contains(pools.superior, checkpoint_id)) pools.superior.push_back(checkpoint_id);
  if (!Contains(cross_method_, checkpoint_id)) cross_method_.push_back(checkpoint_id);
  if (pools.agent_class != AgentClass::kMethodExplorer &&
      !Contains(cross_policy_, checkpoint_id)) {
    cross_policy_.push_back(checkpoint_id);
  }
  return true;
}

std::vector<PoolView> PoolRegistry::VisiblePools(const std::string& agent) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto& pools = Require(agent);
  std::vector<PoolView> out;
  out.push_back({PoolKind::kShortTerm, agent, pools.short_term});
  out.push_back({PoolKind::kLongTerm, agent, pools.long_term});
  out.push_back({PoolKind::kSuperior, agent, pools.superior});
  if (pools.agent_class != AgentClass::kMethodExplorer) {
    out.push_back({PoolKind::kCrossPolicy, "shared", cross_policy_});
  }
  out.push_back({PoolKind::kCrossMethod, "shared", cross_method_});
  return out;
}

PoolView PoolRegistry::Snapshot(const std::string& agent, PoolKind kind) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto& pools = Require(agent);
  switch (kind) {
    case PoolKind::kShortTerm: return {kind, agent, pools.short_term};
    case PoolKind::kLongTerm: return {kind, agent, pools.long_term};
    case PoolKind::kSuperior: return {kind, agent, pools.superior};
    default: throw std::invalid_argument("shared pools have no owning agent");
  }
}

PoolView PoolRegistry::SnapshotShared(PoolKind kind) const {
  std::lock_guard<std::mutex> lock(mutex_);
  switch (kind) {
    case PoolKind::kCrossPolicy: return {kind, "shared", cross_policy_};
    case PoolKind::kCrossMethod: return {kind, "shared", cross_method_};
    default: throw std::invalid_argument("per-agent pools need an owning agent");
  }
}

int64_t PoolRegistry::eviction_count(const std::string& agent) const {
  std::lock_guard<std::mutex> lock(mutex_);
  return Require(agent).evictions;
}

bool PoolRegistry::operator==(const PoolRegistry& other) const {
  std::scoped_lock lock(mutex_, other.mutex_);
  if (short_term_capacity_ != other.short_term_capacity_) return false;
  if (agents_.size() != other.agents_.size()) return false;
  for (size_t i = 0; i < agents_.size(); ++i) {
    const auto& [name_a, a] = agents_[i];
    const auto& [name_b, b] = other.agents_[i];
    if (name_a != name_b || a.agent_class != b.agent_class ||
        a.short_term != b.short_term || a.long_term != b.long_term ||
        a.superior != b.superior || a.evictions != b.evictions) {
      return false;
    }
  }
  return cross_policy_ == other.cross_policy_ && cross_method_ == other.cross_method_;
}

std::string PayloadFileName(int64_t checkpoint_id) {
  return "ckpt_" + std::to_string(checkpoint_id) + ".bin";
}

void PoolRegistry::Persist(const std::string& directory,
                           const CheckpointStore& store) const {
  fs::create_directories(directory);
  json manifest;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    manifest["version"] = kManifestVersion;
    manifest["short_term_capacity"] = short_term_capacity_;
    manifest["next_checkpoint_id"] = store.next_id();
    auto agents = json::array();
    for (const auto& [name, pools] : agents_) {
      agents.push_back({{"name", name},
                        {"class", AgentClassName(pools.agent_class)},
                        {"short_term", pools.short_term},
                        {"long_term", pools.long_term},
                        {"superior", pools.superior},
                        {"evictions", pools.evictions}});
    }
    manifest["agents"] = std::move(agents);
    manifest["cross_policy"] = cross_policy_;
    manifest["cross_method"] = cross_method_;
  }
  auto checkpoints = json::array();
  for (const auto& rec : store.records_) {
    auto j = MetaToJson(rec.meta);
    j["payload"] = PayloadFileName(rec.meta.checkpoint_id);
    checkpoints.push_back(std::move(j));
    const fs::path payload_path = fs::path(directory) / PayloadFileName(rec.meta.checkpoint_id);
    if (!fs::exists(payload_path)) {
      net::SavePayload(payload_path.string(), *rec.params, MetaToJson(rec.meta).dump());
    }
  }
  manifest["checkpoints"] = std::move(checkpoints);
  const fs::path manifest_path = fs::path(directory) / "manifest.json";
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest: " + manifest_path.string());
  os << manifest.dump(2) << "\n";
}

PoolRegistry::LoadReport PoolRegistry::Load(const std::string& directory,
                                            PoolRegistry& registry,
                                            CheckpointStore& store) {
  const fs::path manifest_path = fs::path(directory) / "manifest.json";
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  json manifest;
  try {
    is >> manifest;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  const int version = manifest.at("version").get<int>();
  if (version != kManifestVersion) {
    throw std::runtime_error("unsupported manifest version " + std::to_string(version));
  }
  LoadReport report;
  std::set<int64_t> loaded;
  store.records_.clear();
  store.next_id_ = manifest.at("next_checkpoint_id").get<int64_t>();
  for (const auto& j : manifest.at("checkpoints")) {
    const auto meta = MetaFromJson(j);
    const fs::path payload_path = fs::path(directory) / j.at("payload").get<std::string>();
    try {
      auto payload = net::LoadPayload(payload_path.string());
      CheckpointRecord rec;
      rec.meta = meta;
      rec.params = std::make_shared<net::PolicyValueNet>(std::move(payload.net));
      store.records_.push_back(std::move(rec));
      loaded.insert(meta.checkpoint_id);
    } catch (const std::exception&) {
      report.quarantined.push_back(meta.checkpoint_id);
    }
  }
  auto keep_loaded = [&](std::vector<int64_t> ids) {
    std::vector<int64_t> out;
    for (int64_t id : ids) {
      if (loaded.count(id) > 0) out.push_back(id);
    }
    return out;
  };
  std::lock_guard<std::mutex> lock(registry.mutex_);
  registry.short_term_capacity_ = manifest.at("short_term_capacity").get<int>();
  registry.agents_.clear();
  for (const auto& j : manifest.at("agents")) {
    AgentPools pools;
    pools.agent_class = AgentClassFromName(j.at("class").get<std::string>());
    pools.short_term = keep_loaded(j.at("short_term").get<std::vector<int64_t>>());
    pools.long_term = keep_loaded(j.at("long_term").get<std::vector<int64_t>>());
    pools.superior = keep_loaded(j.at("superior").get<std::vector<int64_t>>());
    pools.evictions = j.at("evictions").get<int64_t>();
    registry.agents_.emplace_back(j.at("name").get<std::string>(), std::move(pools));
  }
  registry.cross_policy_ = keep_loaded(manifest.at("cross_policy").get<std::vector<int64_t>>());
  registry.cross_method_ = keep_loaded(manifest.at("cross_method").get<std::vector<int64_t>>());
  return report;
}

std::vector<std::string> CollectGarbage(const std::string& directory) {
  const fs::path manifest_path = fs::path(directory) / "manifest.json";
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  json manifest;
  try {
    is >> manifest;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  std::set<std::string> referenced;
  auto add_ids = [&](const std::vector<int64_t>& ids) {
    for (int64_t id : ids) referenced.insert(PayloadFileName(id));
  };
  for (const auto& j : manifest.at("agents")) {
    add_ids(j.at("short_term").get<std::vector<int64_t>>());
    add_ids(j.at("long_term").get<std::vector<int64_t>>());
    add_ids(j.at("superior").get<std::vector<int64_t>>());
  }
  add_ids(manifest.at("cross_policy").get<std::vector<int64_t>>());
  add_ids(manifest.at("cross_method").get<std::vector<int64_t>>());
  // Checkpoints pinned by the run manifest (working/latest models) stay too.
  if (manifest.contains("pinned")) {
    add_ids(manifest.at("pinned").get<std::vector<int64_t>>());
  }
  std::vector<std::string> removed;
  for (const auto& entry : fs::directory_iterator(directory)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("ckpt_", 0) != 0) continue;
    if (referenced.count(name) == 0) {
      fs::remove(entry.path());
      removed.push_back(name);
    }
  }
  // Drop the collected checkpoints from the manifest so later loads do not
  // quarantine them.
  auto kept = json::array();
  for (const auto& j : manifest.at("checkpoints")) {
    if (referenced.count(j.at("payload").get<std::string>()) > 0) kept.push_back(j);
  }
  manifest["checkpoints"] = std::move(kept);
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot rewrite manifest: " + manifest_path.string());
  os << manifest.dump(2) << "\n";
  return removed;
}

}  // namespace gridball::pools
