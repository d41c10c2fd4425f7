#pragma once

#include <span>
#include <vector>

namespace mlasr::model {

// Next-token log-probabilities for a prefix that starts with the begin id.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::vector<double> NextLogProbs(std::span<const int> prefix) = 0;
};

struct Hypothesis {
  std::vector<int> tokens;  // begin id first; end id last when finished
  double log_prob = 0.0;
  bool finished = false;

  // Generated tokens without begin/end.
  std::vector<int> Body() const;
};

struct BeamOptions {
  int beam_size = 4;
  int max_len = 16;  // generated tokens, end id included
  int begin_id = 0;
  int end_id = 1;
};

// Keeps the beam_size best partial hypotheses per step; hypotheses ending in
// end_id leave the beam. Returns the highest-scoring hypothesis among finished
// ones and those still open at max_len (no length normalization).
Hypothesis BeamSearch(StepScorer& scorer, const BeamOptions& options);

}  // namespace mlasr::model
