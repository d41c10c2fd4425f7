#include "mlasr/model/beam_search.h"

#include <algorithm>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::model {

std::vector<int> Hypothesis::Body() const {
  std::vector<int> body(tokens.begin() + (tokens.empty() ? 0 : 1), tokens.end());
  if (finished && !body.empty()) body.pop_back();
  return body;
}

Hypothesis BeamSearch(StepScorer& scorer, const BeamOptions& options) {
  if (options.beam_size < 1 || options.max_len < 1) {
    throw UsageError(fmt::format("beam search needs beam_size >= 1 and max_len >= 1, got {} and {}",
                                 options.beam_size, options.max_len));
  }
  std::vector<Hypothesis> beam{Hypothesis{{options.begin_id}, 0.0, false}};
  std::vector<Hypothesis> finished;
  const auto better = [](const Hypothesis& a, const Hypothesis& b) {
    return a.log_prob > b.log_prob;
  };
  for (int step = 0; step < options.max_len && !beam.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& hyp : beam) {
      const std::vector<double> log_probs = scorer.NextLogProbs(hyp.tokens);
      for (std::size_t v = 0; v < log_probs.size(); ++v) {
        Hypothesis next = hyp;
        next.tokens.push_back(static_cast<int>(v));
        next.log_prob += log_probs[v];
        next.finished = static_cast<int>(v) == options.end_id;
        candidates.push_back(std::move(next));
      }
    }
    // Stable so that ties keep earlier beams and lower token ids first.
    std::stable_sort(candidates.begin(), candidates.end(), better);
    candidates.resize(std::min<std::size_t>(candidates.size(), options.beam_size));
    beam.clear();
    for (Hypothesis& c : candidates) {
      (c.finished ? finished : beam).push_back(std::move(c));
    }
    // Open hypotheses only lose probability, so a finished one that already
    // beats all of them is final.
    if (!finished.empty() && !beam.empty()) {
      const auto best_done = std::min_element(finished.begin(), finished.end(), better);
      if (best_done->log_prob >= beam.front().log_prob) break;
    }
  }
  finished.insert(finished.end(), beam.begin(), beam.end());
  return *std::min_element(finished.begin(), finished.end(), better);
}

}  // namespace mlasr::model
