#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hedge/cache.hpp"
#include "hedge/datamodel.hpp"
#include "hedge/http.hpp"
#include "hedge/perturbation.hpp"

namespace hedge {

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline constexpr std::string_view kAnswerSystemPrompt =
    "You are a sports video reasoning assistant. Given a short video clip and a user question, provide an answer "
    "that is concise and directly addresses exactly what is asked. Ground the answer strictly in the video content. "
    "When referring to teams or players, always use jersey colors. Do not give explanations or extra text.";

inline constexpr std::string_view kEventClassificationUserPrompt = "<video> Identify the key event shown in the clip.";

/// Throws EmptyQuestion for a blank VideoQA question.
std::vector<ChatMessage> build_prompt(TaskType task, std::string_view question, bool include_system);

/// Arithmetic mean of per-token natural-log probabilities. Throws EmptyTokenList.
double mean_log_likelihood(std::span<const double> token_logprobs);

enum class VideoTransport { Clip, Frames };

struct GenerationRequest {
  /// Clip path or URL; empty for text-only requests.
  std::string video_ref;
  /// Pre-extracted frames (frames transport); used instead of video_ref when non-empty.
  std::vector<std::string> frame_refs;
  /// Stable description of the visual input. Replaces video_ref in the cache
  /// key so that where a variant is written does not affect caching.
  std::string video_identity;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  bool want_logprobs = true;
  /// Distinguishes repeated draws that are otherwise identical requests.
  std::string sample_slot;
  std::optional<std::uint64_t> seed;
  /// Extra endpoint options sent as mm_processor_kwargs.
  nlohmann::json processor_options = nlohmann::json::object();
  std::string cache_key;
};

struct GenerationResponse {
  std::string text;
  std::vector<double> token_logprobs;
  std::string model_id;

  friend bool operator==(const GenerationResponse&, const GenerationResponse&) = default;
};

struct GenerationOptions {
  std::optional<int> max_tokens;
  std::vector<std::string> stop;
};

std::string request_cache_key(const GenerationRequest& request, std::string_view model_id,
                              const GenerationOptions& options = {});

/// "file://" + absolute path for local files; URLs pass through.
std::string media_url(const std::string& ref);

nlohmann::json chat_request_body(const GenerationRequest& request, std::string_view model,
                                 const GenerationOptions& options = {});

/// Throws LogprobsUnavailable when want_logprobs is set and the payload carries
/// no token log-probabilities, EndpointError on any other malformed payload.
GenerationResponse parse_chat_response(const nlohmann::json& body, bool want_logprobs,
                                       std::string_view fallback_model = {});

/// Chat-completions client whose responses are cached by request content.
class ChatClient {
 public:
  ChatClient(JsonTransport& transport, ContentCache& cache, std::string model, GenerationOptions options = {});

  const std::string& model() const noexcept { return model_; }
  std::string key_for(const GenerationRequest& request) const;
  std::optional<GenerationResponse> cached(const GenerationRequest& request) const;
  GenerationResponse generate(const GenerationRequest& request);

  /// Requests that reached the transport.
  long long endpoint_calls() const noexcept { return calls_.load(); }

 private:
  JsonTransport& transport_;
  ContentCache& cache_;
  std::string model_;
  GenerationOptions options_;
  std::atomic<long long> calls_{0};
};

// -- video processing --------------------------------------------------------

class VideoProcessor {
 public:
  virtual ~VideoProcessor() = default;
  /// Runs the argument vector; throws PerturbationFailure on nonzero exit.
  virtual void run(const std::vector<std::string>& argv) = 0;
};

class SubprocessVideoProcessor final : public VideoProcessor {
 public:
  void run(const std::vector<std::string>& argv) override;
};

/// Extracts the given frame indices as <out_dir>/frame_NNN.png, applying the
/// recipe when present and scaling to the policy resolution.
std::vector<std::string> frame_extraction_command(const std::optional<PerturbationRecipe>& recipe,
                                                  const FramePolicy& policy, std::span<const int> indices,
                                                  const std::string& in_path, const std::string& out_pattern,
                                                  const CommandOptions& options = {});

// -- bundle sampling ---------------------------------------------------------

struct SampleItem {
  std::string video_ref;
  std::string video_id;
  TaskType task_type = TaskType::VideoQA;
  std::string question;
  std::string gold_answer;
  std::optional<std::string> description;
  std::optional<int> total_frames;
  int source_width = 1920;
  int source_height = 1080;
};

/// Reads {video, video_id?, task_type, question, gold_answer, description?,
/// total_frames?, width?, height?}.
SampleItem sample_item_from_json(const nlohmann::json& j);

struct SamplerOptions {
  bool include_system = true;
  VideoTransport transport = VideoTransport::Clip;
  std::filesystem::path variant_dir;
  CommandOptions ffmpeg;
  int noise_strength = kDefaultNoiseStrength;
  int max_inflight = 4;
  bool send_seed = true;
};

class Sampler {
 public:
  Sampler(ChatClient& client, VideoProcessor& processor, SamplerOptions options = {});

  /// 1 baseline + n clean + n noisy generations; cached slots are not re-sent
  /// and their variants are not re-rendered.
  SampleBundle sample_bundle(const SampleItem& item, const SamplingConfig& config);

  /// Recipe for each noisy ordinal 0..n-1.
  std::vector<PerturbationRecipe> noisy_recipes(const SamplingConfig& config) const;

 private:
  struct Slot;
  GenerationResponse run_slot(const Slot& slot, const SampleItem& item, const SamplingConfig& config,
                              const FramePolicy& policy);

  ChatClient& client_;
  VideoProcessor& processor_;
  SamplerOptions options_;
};

}  // namespace hedge
