#include "aiasim/kd_sim.hpp"

#include <algorithm>

namespace aiasim {

std::string_view kd_error_name(KdErrorCode code) {
  switch (code) {
    case KdErrorCode::Busy: return "Busy";
    case KdErrorCode::PermissionDenied: return "PermissionDenied";
    case KdErrorCode::OutOfRange: return "OutOfRange";
    case KdErrorCode::NotZeroCopy: return "NotZeroCopy";
    case KdErrorCode::SessionClosed: return "SessionClosed";
  }
  return "?";
}

namespace {

std::vector<Preset> make_presets() {
  std::vector<Preset> out;

  // Device-address tables written only by the driver; unmap reaches the
  // accelerator at teardown; one user at a time.
  out.push_back({"google", ModelKind::TwoLevelSimpleExtended, {},
                 {.validate_on_map = true, .unmap_propagation = Propagation::TeardownOnly,
                  .scrub_on_release = true, .exclusive_access = true, .tagged_entries = false}});

  // Boot-time flat map of DMem/AIRMem; tables live in DMem; untagged.
  out.push_back({"nxp", ModelKind::FlatMapMtlbStlb, {},
                 {.validate_on_map = true, .unmap_propagation = Propagation::Eager,
                  .scrub_on_release = true, .exclusive_access = false, .tagged_entries = false}});

  // SMID is the L1 base; entries are never scrubbed.
  out.push_back({"hailo", ModelKind::PagetableBaseAsSmid, {},
                 {.validate_on_map = true, .unmap_propagation = Propagation::Eager,
                  .scrub_on_release = false, .exclusive_access = false, .tagged_entries = false}});

  out.push_back({"ti", ModelKind::IdentitySmid, {},
                 {.validate_on_map = false, .unmap_propagation = Propagation::Eager,
                  .scrub_on_release = true, .exclusive_access = false, .tagged_entries = false}});

  out.push_back({"nvidia", ModelKind::PerUsePagetables, {},
                 {.validate_on_map = true, .unmap_propagation = Propagation::TeardownOnly,
                  .scrub_on_release = true, .exclusive_access = false, .tagged_entries = true}});

  Preset aws{"aws", ModelKind::IdentitySmid, {},
             {.validate_on_map = false, .unmap_propagation = Propagation::Eager,
              .scrub_on_release = true, .exclusive_access = false, .tagged_entries = false}};
  aws.params.identity_window = {RegionTag::AIMem};
  out.push_back(std::move(aws));

  out.push_back({"rknpu", ModelKind::MessagePassing, {},
                 {.validate_on_map = true, .unmap_propagation = Propagation::Eager,
                  .scrub_on_release = true, .exclusive_access = false, .tagged_entries = true}});
  return out;
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = make_presets();
  return all;
}

KdErrorCode to_kd(FaultReason r) {
  return r == FaultReason::NotZeroCopy ? KdErrorCode::NotZeroCopy : KdErrorCode::OutOfRange;
}

}  // namespace

std::optional<Preset> find_preset(std::string_view name) {
  for (const Preset& p : presets())
    if (p.name == name) return p;
  return std::nullopt;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const Preset& p : presets()) out.push_back(p.name);
  return out;
}

KernelDriver::KernelDriver(const MemoryMap& map, ModelKind model, const TranslationParams& params,
                           const KdPolicy& policy)
    : map_(std::make_shared<const MemoryMap>(map)),
      policy_(policy),
      mem_(),
      model_(TranslationModel::init(model, *map_, mem_, params)) {}

Session& KernelDriver::open_session(Pid pid) {
  if (policy_.exclusive_access) {
    for (const auto& [other, s] : sessions_)
      if (s.open && other != pid) throw KdError(KdErrorCode::Busy, "accelerator is held by pid " + std::to_string(other));
  }
  Session& s = sessions_[pid];
  if (s.open) {
    if (policy_.exclusive_access) throw KdError(KdErrorCode::Busy, "session already open");
    return s;
  }
  s = Session{pid, {}, {}, true};
  for (PageIndex p : map_->pages_of(RegionKind::umem(pid))) s.owned_pages.insert(p);
  for (PageIndex p : grants_[pid]) s.owned_pages.insert(p);
  return s;
}

Session& KernelDriver::session(Pid pid) {
  auto it = sessions_.find(pid);
  if (it == sessions_.end()) throw KdError(KdErrorCode::SessionClosed, "no session for pid " + std::to_string(pid));
  return it->second;
}

bool KernelDriver::is_open(Pid pid) const {
  auto it = sessions_.find(pid);
  return it != sessions_.end() && it->second.open;
}

std::size_t KernelDriver::open_sessions() const {
  return std::count_if(sessions_.begin(), sessions_.end(), [](const auto& kv) { return kv.second.open; });
}

void KernelDriver::grant_page(Pid pid, PageIndex page) {
  grants_[pid].insert(page);
  if (auto it = sessions_.find(pid); it != sessions_.end() && it->second.open) it->second.owned_pages.insert(page);
}

DeviceRef KernelDriver::map_request(Session& s, std::span<const PageIndex> pages, std::optional<Smid> requested_slot) {
  if (!s.open) throw KdError(KdErrorCode::SessionClosed, "map on closed session");
  if (pages.empty()) throw KdError(KdErrorCode::OutOfRange, "empty map request");
  if (policy_.validate_on_map) {
    for (PageIndex p : pages)
      if (!s.owned_pages.contains(p))
        throw KdError(KdErrorCode::PermissionDenied, "page " + to_hex(p) + " not owned by pid " + std::to_string(s.pid));
  }
  try {
    const unsigned stride = model_.granule_shift() > 12 && model_.kind() == ModelKind::PagetableBaseAsSmid
                                ? model_.granule_shift()
                                : 12;
    Smid slot = requested_slot ? *requested_slot : model_.next_slot(s.pid);
    std::optional<DeviceRef> first;
    for (std::size_t i = 0; i < pages.size(); ++i) {
      const Smid si{slot.value + (std::uint64_t{i} << stride)};
      model_.install_mapping(mem_, s.pid, si, pages[i]);
      const DeviceRef ref = model_.smid_for(si, pages[i]);
      s.issued[ref] = pages[i];
      if (!first) first = ref;
    }
    return *first;
  } catch (const TranslationError& e) {
    throw KdError(to_kd(e.reason()), e.what());
  }
}

void KernelDriver::unmap(Session& s, std::span<const PageIndex> pages) {
  if (!s.open) throw KdError(KdErrorCode::SessionClosed, "unmap on closed session");
  for (PageIndex p : pages) {
    s.owned_pages.erase(p);
    grants_[s.pid].erase(p);
    for (auto it = s.issued.begin(); it != s.issued.end();) {
      if (it->second != p) {
        ++it;
        continue;
      }
      const DeviceRef ref = it->first;
      const Smid slot = model_.kind() == ModelKind::PagetableBaseAsSmid ? Smid{ref.offset} : ref.smid;
      model_.remove_mapping(mem_, s.pid, slot, policy_.unmap_propagation);
      it = s.issued.erase(it);
    }
  }
}

void KernelDriver::teardown(Session& s) {
  if (!s.open) return;
  model_.teardown(mem_, s.pid, policy_.scrub_on_release);
  s.issued.clear();
  s.open = false;
}

InferenceResult KernelDriver::submit_inference(Session& s, const InferenceRequest& req) {
  if (!s.open) throw KdError(KdErrorCode::SessionClosed, "inference on closed session");
  model_.set_active_pid(s.pid);
  const TranslateResult in = model_.translate(mem_, req.input);
  if (auto* f = std::get_if<Fault>(&in)) return *f;
  const TranslateResult out = model_.translate(mem_, req.output);
  if (auto* f = std::get_if<Fault>(&out)) return *f;

  const PhysAddr dst = std::get<PhysAddr>(out);
  std::vector<std::uint64_t> words =
      req.echo_words ? mem_.read_words(std::get<PhysAddr>(in), req.echo_words) : req.model_output;
  if ((dst.value & 7) || (dst.value & 0xfff) + 8 * words.size() > 4096) return Fault{FaultReason::OutOfRange};
  for (std::size_t i = 0; i < words.size(); ++i) mem_.write_word({dst.value + 8 * i}, words[i]);
  return InferenceOk{dst, std::move(words)};
}

}  // namespace aiasim
