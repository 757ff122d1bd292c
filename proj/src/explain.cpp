#include <algorithm>

#include "mhnet/models.hpp"

namespace mhnet {

std::vector<Phrase> top_phrases(const DepressionModel& model, const Vocabulary& vocab,
                                const std::vector<PhraseInput>& users, std::size_t m) {
  const auto& cfg = model.config();
  const auto& params = model.params();
  const std::size_t diagnosed = static_cast<std::size_t>(UserLabel::diagnosed);
  const ConvSpec spec{cfg.conv_window, cfg.filters, 1, PoolKind::avg_all, 1};

  std::vector<Phrase> best_per_user;
  for (const auto& u : users) {
    if (u.posts.empty()) continue;
    if (u.post_ids.size() != u.posts.size()) throw Error("top_phrases: post ids and posts differ in length");
    const auto saliency = model.post_vector_saliency(u.posts, diagnosed);
    std::optional<Phrase> best;
    for (std::size_t i = 0; i < u.posts.size(); ++i) {
      const auto& tokens = u.posts[i];
      if (tokens.size() < cfg.conv_window) continue;
      Tensor2 x(tokens.size(), cfg.embed_dim);
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        auto src = params.at("embed").row(static_cast<std::size_t>(tokens[t]));
        std::copy(src.begin(), src.end(), x.row(t).begin());
      }
      Tensor2 z = conv1d_forward(x, spec, params.at("conv.W"), params.at("conv.b").data);
      relu_inplace(z.data);
      for (std::size_t r = 0; r < z.rows; ++r) {
        double score = 0.0;
        for (std::size_t f = 0; f < z.cols; ++f) score = std::max(score, z(r, f) * saliency[i][f]);
        if (!best || score > best->score) {
          Phrase p{u.user_id, u.post_ids[i], r, {}, score};
          for (std::size_t t = r; t < r + cfg.conv_window; ++t) p.words.push_back(vocab.token(tokens[t]));
          best = std::move(p);
        }
      }
    }
    if (best) best_per_user.push_back(std::move(*best));
  }
  std::stable_sort(best_per_user.begin(), best_per_user.end(), [](const Phrase& a, const Phrase& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    return a.post_id < b.post_id;
  });
  if (best_per_user.size() > m) best_per_user.resize(m);
  return best_per_user;
}

}  // namespace mhnet
