#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridball/netcore.hpp"

// Five interconnected history-model pools per league: a capacity-bounded
// short-term FIFO, an append-only long-term archive, and a screened superior
// pool per agent, plus one cross-policy pool (main agent + policy explorers)
// and one cross-method pool (all agents). Single writer per pool, snapshot
// reads, durable manifest + per-checkpoint payload files.

namespace gridball::pools {

enum class AgentClass : uint8_t { kMain = 0, kPolicyExplorer = 1, kMethodExplorer = 2 };

const char* AgentClassName(AgentClass c);
AgentClass AgentClassFromName(const std::string& name);

enum class PoolKind : uint8_t {
  kShortTerm = 0,
  kLongTerm = 1,
  kSuperior = 2,
  kCrossPolicy = 3,  // shared by the main agent and policy explorers
  kCrossMethod = 4,  // shared by every agent
};

const char* PoolKindName(PoolKind k);

struct CheckpointMeta {
  int64_t checkpoint_id = -1;
  std::string agent;
  AgentClass agent_class = AgentClass::kMain;
  std::string algorithm;
  int64_t training_step = 0;
  int64_t created_index = 0;  // store-wide creation counter
  int history_depth = 0;      // observation stack depth the policy expects
};

struct CheckpointRecord {
  CheckpointMeta meta;
  std::shared_ptr<const net::PolicyValueNet> params;
};

// Owns checkpoint payloads; ids are monotonic across the store (hence
// monotonic per agent as well).
class CheckpointStore {
 public:
  int64_t Add(const std::string& agent, AgentClass agent_class,
              const std::string& algorithm, int64_t training_step, int history_depth,
              std::shared_ptr<const net::PolicyValueNet> params);
  const CheckpointRecord* Find(int64_t id) const;
  const CheckpointRecord& Get(int64_t id) const;  // throws on unknown id
  std::vector<int64_t> Ids() const;
  size_t size() const { return records_.size(); }
  int64_t next_id() const { return next_id_; }

 private:
  friend class PoolRegistry;
  std::vector<CheckpointRecord> records_;  // ordered by id
  int64_t next_id_ = 0;
};

struct PoolView {
  PoolKind kind;
  std::string owner;  // agent name, or "shared"
  std::vector<int64_t> entries;
  size_t size() const { return entries.size(); }
};

// Issued by the evaluation screening pass; superior admissions require one.
struct ScreeningCertificate {
  std::set<int64_t> certified;
  bool Covers(int64_t id) const { return certified.count(id) > 0; }
};

struct AuditRecord {
  std::string agent;
  int64_t checkpoint_id;
  std::string reason;
};

class PoolRegistry {
 public:
  explicit PoolRegistry(int short_term_capacity = 100);

  void RegisterAgent(const std::string& name, AgentClass agent_class);
  bool HasAgent(const std::string& name) const;
  AgentClass ClassOf(const std::string& name) const;
  std::vector<std::string> Agents() const;

  // FIFO push; returns the evicted checkpoint id when capacity overflowed.
  // Duplicate ids are rejected (no change, returns nullopt).
  std::optional<int64_t> PushShortTerm(const std::string& agent, int64_t checkpoint_id);

  // Append-only archive; admits only when the caller-tracked interval elapsed.
  bool SnapshotLongTerm(const std::string& agent, int64_t checkpoint_id,
                        bool interval_elapsed);

  // Routes a screened checkpoint into the agent's superior pool, the
  // cross-method pool, and (main agent / policy explorers only) the
  // cross-policy pool. Uncertified ids are rejected and audited. Idempotent.
  bool AdmitSuperior(const std::string& agent, int64_t checkpoint_id,
                     const ScreeningCertificate& certificate);

  // The agent's visible pool set: own short/long/superior pools, the
  // cross-method pool, and the cross-policy pool for main/policy agents.
  std::vector<PoolView> VisiblePools(const std::string& agent) const;

  PoolView Snapshot(const std::string& agent, PoolKind kind) const;
  PoolView SnapshotShared(PoolKind kind) const;

  int64_t eviction_count(const std::string& agent) const;
  const std::vector<AuditRecord>& audit_log() const { return audit_log_; }
  int short_term_capacity() const { return short_term_capacity_; }

  bool operator==(const PoolRegistry& other) const;

  // Durable storage: manifest.json plus one payload file per checkpoint.
  void Persist(const std::string& directory, const CheckpointStore& store) const;
  struct LoadReport {
    std::vector<int64_t> quarantined;  // entries whose payload file was missing/bad
  };
  static LoadReport Load(const std::string& directory, PoolRegistry& registry,
                         CheckpointStore& store);

 private:
  struct AgentPools {
    AgentClass agent_class;
    std::vector<int64_t> short_term;
    std::vector<int64_t> long_term;
    std::vector<int64_t> superior;
    int64_t evictions = 0;
  };
  AgentPools& Require(const std::string& agent);
  const AgentPools& Require(const std::string& agent) const;

  int short_term_capacity_;
  std::vector<std::pair<std::string, AgentPools>> agents_;  // registration order
  std::vector<int64_t> cross_policy_;
  std::vector<int64_t> cross_method_;
  std::vector<AuditRecord> audit_log_;
  mutable std::mutex mutex_;
};

// Payload filename for a checkpoint id within a registry directory.
std::string PayloadFileName(int64_t checkpoint_id);

// Deletes payload files in the directory that no pool in the manifest
// references; returns the removed filenames.
std::vector<std::string> CollectGarbage(const std::string& directory);

}  // namespace gridball::pools
