#include "hedge/sampling.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "hedge/error.hpp"
#include "hedge/hash.hpp"

extern char** environ;

namespace hedge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool has_scheme(const std::string& ref) {
  const auto pos = ref.find("://");
  return (pos != std::string::npos && pos > 0) || ref.rfind("data:", 0) == 0;
}

}  // namespace

std::vector<ChatMessage> build_prompt(TaskType task, std::string_view question, bool include_system) {
  std::vector<ChatMessage> messages;
  if (include_system) messages.push_back({"system", std::string(kAnswerSystemPrompt)});
  if (task == TaskType::EventClassification) {
    messages.push_back({"user", std::string(kEventClassificationUserPrompt)});
  } else {
    if (blank(question)) throw Error(ErrorCode::EmptyQuestion, "VideoQA item has a blank question");
    messages.push_back({"user", "<video> " + std::string(question)});
  }
  return messages;
}

double mean_log_likelihood(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw Error(ErrorCode::EmptyTokenList, "no token log-probabilities");
  return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0) /
         static_cast<double>(token_logprobs.size());
}

std::string request_cache_key(const GenerationRequest& request, std::string_view model_id,
                              const GenerationOptions& options) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json video;
  if (!request.video_identity.empty()) {
    video = request.video_identity;
  } else if (!request.frame_refs.empty()) {
    video = request.frame_refs;
  } else {
    video = request.video_ref;
  }
  json doc = {{"model", model_id},
              {"messages", messages},
              {"temperature", request.temperature},
              {"logprobs", request.want_logprobs},
              {"video", video},
              {"slot", request.sample_slot},
              {"processor_options", request.processor_options}};
  if (request.seed) doc["seed"] = *request.seed;
  if (options.max_tokens) doc["max_tokens"] = *options.max_tokens;
  if (!options.stop.empty()) doc["stop"] = options.stop;
  return content_hash(doc);
}

std::string media_url(const std::string& ref) {
  if (has_scheme(ref)) return ref;
  return "file://" + fs::absolute(ref).lexically_normal().string();
}

json chat_request_body(const GenerationRequest& request, std::string_view model, const GenerationOptions& options) {
  if (request.messages.empty()) throw Error(ErrorCode::InvalidValue, "request has no messages");
  const bool has_video = !request.video_ref.empty() || !request.frame_refs.empty();
  json messages = json::array();
  bool attached = false;
  for (const auto& m : request.messages) {
    if (m.role == "user" && has_video && !attached) {
      json parts = json::array();
      if (!request.frame_refs.empty()) {
        for (const auto& f : request.frame_refs) {
          parts.push_back({{"type", "image_url"}, {"image_url", {{"url", media_url(f)}}}});
        }
      } else {
        parts.push_back({{"type", "video_url"}, {"video_url", {{"url", media_url(request.video_ref)}}}});
      }
      parts.push_back({{"type", "text"}, {"text", m.content}});
      messages.push_back({{"role", m.role}, {"content", parts}});
      attached = true;
    } else {
      messages.push_back({{"role", m.role}, {"content", m.content}});
    }
  }
  json body = {{"model", model}, {"messages", messages}, {"temperature", request.temperature}};
  if (request.want_logprobs) body["logprobs"] = true;
  if (request.seed) body["seed"] = *request.seed;
  if (options.max_tokens) body["max_tokens"] = *options.max_tokens;
  if (!options.stop.empty()) body["stop"] = options.stop;
  if (has_video && !request.processor_options.empty()) body["mm_processor_kwargs"] = request.processor_options;
  return body;
}

GenerationResponse parse_chat_response(const json& body, bool want_logprobs, std::string_view fallback_model) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw Error(ErrorCode::EndpointError, "response has no choices");
  }
  const json& choice = body["choices"][0];
  if (!choice.contains("message") || !choice["message"].is_object()) {
    throw Error(ErrorCode::EndpointError, "response choice has no message");
  }
  GenerationResponse out;
  const json& content = choice["message"].value("content", json());
  out.text = content.is_string() ? trim(content.get<std::string>()) : std::string();
  out.model_id = body.contains("model") && body["model"].is_string() ? body["model"].get<std::string>()
                                                                     : std::string(fallback_model);
  if (want_logprobs) {
    const json* lp = choice.contains("logprobs") ? &choice["logprobs"] : nullptr;
    if (lp == nullptr || !lp->is_object() || !lp->contains("content") || !(*lp)["content"].is_array() ||
        (*lp)["content"].empty()) {
      throw Error(ErrorCode::LogprobsUnavailable, "endpoint returned no token log-probabilities");
    }
    for (const auto& token : (*lp)["content"]) {
      if (!token.is_object() || !token.contains("logprob") || !token["logprob"].is_number()) {
        throw Error(ErrorCode::LogprobsUnavailable, "token entry without a numeric logprob");
      }
      double v = token["logprob"].get<double>();
      if (!std::isfinite(v)) v = -1e4;
      if (v > 1e-6) throw Error(ErrorCode::EndpointError, "positive token log-probability " + std::to_string(v));
      out.token_logprobs.push_back(std::min(v, 0.0));
    }
  }
  return out;
}

// -- ChatClient -------------------------------------------------------------------

ChatClient::ChatClient(JsonTransport& transport, ContentCache& cache, std::string model, GenerationOptions options)
    : transport_(transport), cache_(cache), model_(std::move(model)), options_(std::move(options)) {}

std::string ChatClient::key_for(const GenerationRequest& request) const {
  return request.cache_key.empty() ? request_cache_key(request, model_, options_) : request.cache_key;
}

std::optional<GenerationResponse> ChatClient::cached(const GenerationRequest& request) const {
  const auto hit = cache_.get("chat", key_for(request));
  if (!hit) return std::nullopt;
  GenerationResponse r;
  r.text = hit->at("text").get<std::string>();
  r.token_logprobs = hit->at("token_logprobs").get<std::vector<double>>();
  r.model_id = hit->at("model_id").get<std::string>();
  return r;
}

GenerationResponse ChatClient::generate(const GenerationRequest& request) {
  if (auto hit = cached(request)) return *hit;
  ++calls_;
  const json body = transport_.post("/chat/completions", chat_request_body(request, model_, options_));
  GenerationResponse r = parse_chat_response(body, request.want_logprobs, model_);
  cache_.put("chat", key_for(request),
             {{"text", r.text}, {"token_logprobs", r.token_logprobs}, {"model_id", r.model_id}});
  return r;
}

// -- video processing ---------------------------------------------------------------

void SubprocessVideoProcessor::run(const std::vector<std::string>& argv) {
  if (argv.empty()) throw Error(ErrorCode::PerturbationFailure, "empty processor command");
  std::vector<char*> args;
  args.reserve(argv.size() + 1);
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, args[0], nullptr, nullptr, args.data(), environ);
  if (rc != 0) {
    throw Error(ErrorCode::PerturbationFailure, "cannot start " + argv[0] + ": " + std::strerror(rc));
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw Error(ErrorCode::PerturbationFailure, "waitpid failed for " + argv[0]);
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    throw Error(ErrorCode::PerturbationFailure, argv[0] + " exited with status " + std::to_string(code));
  }
}

std::vector<std::string> frame_extraction_command(const std::optional<PerturbationRecipe>& recipe,
                                                  const FramePolicy& policy, std::span<const int> indices,
                                                  const std::string& in_path, const std::string& out_pattern,
                                                  const CommandOptions& options) {
  check_media_path(in_path, "input path");
  check_media_path(out_pattern, "output pattern");
  if (indices.empty()) throw Error(ErrorCode::NotEnoughFrames, "no frame indices to extract");
  std::string select = "select='";
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (k) select += '+';
    select += "eq(n\\," + std::to_string(indices[k]) + ")";
  }
  select += "'";
  std::string graph = select + ",";
  if (recipe) {
    graph += command_filtergraph(*recipe, policy, options);
  } else {
    graph += "scale=" + std::to_string(policy.target_width) + ":" + std::to_string(policy.target_height);
  }
  return {options.ffmpeg_path, "-y", "-hide_banner", "-loglevel", "error", "-i", in_path, "-vf", graph,
          "-vsync", "vfr", "-frames:v", std::to_string(indices.size()), out_pattern};
}

// -- Sampler --------------------------------------------------------------------------

SampleItem sample_item_from_json(const json& j) {
  SampleItem item;
  const auto need = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw Error(ErrorCode::MissingField, std::string("item field '") + key + "' is missing");
    return j.at(key);
  };
  item.video_ref = need("video").get<std::string>();
  item.video_id = j.contains("video_id") ? j.at("video_id").get<std::string>() : fs::path(item.video_ref).stem().string();
  item.task_type = parse_task_type(need("task_type").get<std::string>());
  item.question = j.value("question", std::string());
  item.gold_answer = need("gold_answer").get<std::string>();
  if (j.contains("description") && j.at("description").is_string()) item.description = j.at("description").get<std::string>();
  if (j.contains("total_frames")) item.total_frames = j.at("total_frames").get<int>();
  item.source_width = j.value("width", 1920);
  item.source_height = j.value("height", 1080);
  return item;
}

struct Sampler::Slot {
  Condition condition;
  int ordinal;
  double temperature;
  std::optional<PerturbationRecipe> recipe;
};

Sampler::Sampler(ChatClient& client, VideoProcessor& processor, SamplerOptions options)
    : client_(client), processor_(processor), options_(std::move(options)) {
  if (options_.variant_dir.empty()) options_.variant_dir = fs::temp_directory_path() / "hedge-variants";
}

std::vector<PerturbationRecipe> Sampler::noisy_recipes(const SamplingConfig& config) const {
  std::vector<PerturbationRecipe> out;
  out.reserve(config.n);
  for (int k = 0; k < config.n; ++k) {
    out.push_back(sample_recipe(derive_variant_seed(config.seed, k), options_.noise_strength));
  }
  return out;
}

GenerationResponse Sampler::run_slot(const Slot& slot, const SampleItem& item, const SamplingConfig& config,
                                     const FramePolicy& policy) {
  GenerationRequest request;
  request.messages = build_prompt(item.task_type, item.question, options_.include_system);
  request.temperature = slot.temperature;
  request.want_logprobs = true;
  request.sample_slot = std::string(to_string(slot.condition)) + ":" + std::to_string(slot.ordinal);
  if (options_.send_seed) request.seed = mix64(config.seed ^ hash64(request.sample_slot)) >> 1;
  const bool frames = options_.transport == VideoTransport::Frames;
  if (frames) {
    request.processor_options = {{"max_pixels", config.max_pixels}};
  } else {
    request.processor_options = {{"nframes", config.frame_count}, {"max_pixels", config.max_pixels}};
  }

  json identity = {{"source", item.video_ref},
                   {"transport", frames ? "frames" : "clip"},
                   {"width", policy.target_width},
                   {"height", policy.target_height},
                   {"frame_count", policy.frame_count}};
  if (slot.recipe) {
    identity["recipe"] = {{"brightness", slot.recipe->brightness},
                          {"contrast", slot.recipe->contrast},
                          {"saturation", slot.recipe->saturation},
                          {"hue", slot.recipe->hue_shift_degrees},
                          {"noise", slot.recipe->noise_strength},
                          {"seed", slot.recipe->seed},
                          {"seed_noise", options_.ffmpeg.seed_noise}};
  }
  request.video_identity = identity.dump();
  if (auto hit = client_.cached(request)) return *hit;

  const std::string tag = content_hash(identity).substr(0, 24);
  if (frames) {
    if (!item.total_frames) {
      throw Error(ErrorCode::InvalidValue, "frames transport needs total_frames for " + item.video_ref);
    }
    const auto indices = uniform_frame_indices(*item.total_frames, policy.frame_count);
    const fs::path dir = options_.variant_dir / tag;
    fs::create_directories(dir);
    processor_.run(frame_extraction_command(slot.recipe, policy, indices, item.video_ref,
                                            (dir / "frame_%03d.png").string(), options_.ffmpeg));
    for (std::size_t k = 1; k <= indices.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%03zu.png", k);
      request.frame_refs.push_back((dir / name).string());
    }
  } else if (slot.recipe) {
    fs::create_directories(options_.variant_dir);
    const fs::path out = options_.variant_dir / (tag + ".mp4");
    processor_.run(recipe_to_command(*slot.recipe, policy, item.video_ref, out.string(), options_.ffmpeg));
    request.video_ref = out.string();
  } else {
    request.video_ref = item.video_ref;
  }
  return client_.generate(request);
}

SampleBundle Sampler::sample_bundle(const SampleItem& item, const SamplingConfig& config) {
  if (config.n < 1) throw Error(ErrorCode::InvalidValue, "n must be positive");
  const FramePolicy policy =
      make_frame_policy(config.frame_count, config.max_pixels, item.source_width, item.source_height);
  const auto recipes = noisy_recipes(config);

  std::vector<Slot> slots;
  slots.push_back({Condition::Baseline, 0, config.baseline_temperature, std::nullopt});
  for (int k = 0; k < config.n; ++k) slots.push_back({Condition::Clean, k, config.sample_temperature, {}});
  for (int k = 0; k < config.n; ++k) slots.push_back({Condition::Noisy, k, config.sample_temperature, recipes[k]});

  std::vector<GenerationResponse> responses(slots.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < slots.size(); i = next++) {
      try {
        responses[i] = run_slot(slots[i], item, config, policy);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = slots.size();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(options_.max_inflight, static_cast<int>(slots.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  SampleBundle bundle;
  bundle.video_id = item.video_id;
  bundle.task_type = item.task_type;
  bundle.question = item.question;
  bundle.gold_answer = item.gold_answer;
  bundle.description = item.description;
  bundle.sampling_config = config;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    AnswerRecord a{responses[i].text, mean_log_likelihood(responses[i].token_logprobs), slots[i].condition,
                   slots[i].ordinal};
    if (slots[i].condition == Condition::Baseline) {
      bundle.baseline = std::move(a);
    } else if (slots[i].condition == Condition::Clean) {
      bundle.clean.push_back(std::move(a));
    } else {
      bundle.noisy.push_back(std::move(a));
    }
  }
  bundle.bundle_id = compute_bundle_id(bundle.video_id, bundle.task_type, bundle.question, config);
  check_bundle(bundle);
  return bundle;
}

}  // namespace hedge
