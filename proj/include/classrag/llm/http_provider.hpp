#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "classrag/llm/provider.hpp"

namespace classrag::llm {

struct HttpProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::map<ModelTier, std::string> models = {{ModelTier::generator, "gpt-4.1-mini"},
                                             {ModelTier::judge, "gpt-4.1-nano"},
                                             {ModelTier::router, "gpt-4.1-nano"}};
  std::string embedding_model = "text-embedding-3-small";
  int timeout_seconds = 120;

  // CLASSRAG_BASE_URL, CLASSRAG_API_KEY, CLASSRAG_MODEL_GENERATOR,
  // CLASSRAG_MODEL_JUDGE, CLASSRAG_MODEL_ROUTER, CLASSRAG_MODEL_EMBEDDING.
  static HttpProviderConfig from_env();
};

// Chat-completions style HTTP backend (POST {base}/chat/completions and
// {base}/embeddings, bearer-token auth).
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);
  ~HttpProvider() override;

  ProviderCompletion complete(const PromptRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string name() const override { return "http"; }

 private:
  std::string post(const std::string& path, const std::string& body);

  HttpProviderConfig config_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // e.g. /v1
};

}  // namespace classrag::llm
