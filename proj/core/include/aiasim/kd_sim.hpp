#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aiasim/memory_model.hpp"
#include "aiasim/translation.hpp"

namespace aiasim {

struct KdPolicy {
  bool validate_on_map = true;
  Propagation unmap_propagation = Propagation::Eager;
  bool scrub_on_release = true;
  bool exclusive_access = false;
  bool tagged_entries = true;
};

enum class KdErrorCode { Busy, PermissionDenied, OutOfRange, NotZeroCopy, SessionClosed };

std::string_view kd_error_name(KdErrorCode code);

class KdError : public std::runtime_error {
 public:
  KdError(KdErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  KdErrorCode code() const { return code_; }

 private:
  KdErrorCode code_;
};

struct Session {
  Pid pid = 0;
  std::set<PageIndex> owned_pages;
  std::map<DeviceRef, PageIndex> issued;
  bool open = false;
};

/// One inference job. The accelerator reads from `input` and writes
/// `model_output` (or, when `echo_words` is non-zero, that many words copied
/// from the input) starting at `output`.
struct InferenceRequest {
  DeviceRef input;
  DeviceRef output;
  std::vector<std::uint64_t> model_output;
  std::size_t echo_words = 0;
};

struct InferenceOk {
  PhysAddr written_at;
  std::vector<std::uint64_t> words;
};

using InferenceResult = std::variant<InferenceOk, Fault>;

/// A per-accelerator bundle of translation semantics and driver policy.
struct Preset {
  std::string name;
  ModelKind model = ModelKind::IdentitySmid;
  TranslationParams params;
  KdPolicy policy;
};

/// Known presets: google, nxp, hailo, ti, nvidia, aws, rknpu.
std::optional<Preset> find_preset(std::string_view name);
std::vector<std::string> preset_names();

/// Kernel driver plus the accelerator and memory it manages. Copyable, so a
/// probe can fork the whole system state.
class KernelDriver {
 public:
  KernelDriver(const MemoryMap& map, ModelKind model, const TranslationParams& params, const KdPolicy& policy);
  KernelDriver(const MemoryMap& map, const Preset& preset)
      : KernelDriver(map, preset.model, preset.params, preset.policy) {}

  Session& open_session(Pid pid);
  Session& session(Pid pid);
  bool is_open(Pid pid) const;
  std::size_t open_sessions() const;

  /// Hands an extra page to a process (a freed page reused, or a DMA
  /// buffer allocated by the driver).
  void grant_page(Pid pid, PageIndex page);

  DeviceRef map_request(Session& s, std::span<const PageIndex> pages, std::optional<Smid> requested_slot = {});
  void unmap(Session& s, std::span<const PageIndex> pages);
  void teardown(Session& s);

  InferenceResult submit_inference(Session& s, const InferenceRequest& req);

  const MemoryMap& map() const { return *map_; }
  const KdPolicy& policy() const { return policy_; }
  KdPolicy& policy() { return policy_; }
  TranslationModel& model() { return model_; }
  const TranslationModel& model() const { return model_; }
  PhysMemory& memory() { return mem_; }
  const PhysMemory& memory() const { return mem_; }

 private:
  std::shared_ptr<const MemoryMap> map_;
  KdPolicy policy_;
  PhysMemory mem_;
  TranslationModel model_;
  std::map<Pid, Session> sessions_;
  std::map<Pid, std::set<PageIndex>> grants_;
};

}  // namespace aiasim
