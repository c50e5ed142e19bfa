#pragma once

// Read-only probes over hidden states: kNN word/nonword classifier, the
// input-embedding logit lens and its cosine variant, retrieval curves.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lexiscope/tensor.hpp"
#include "lexiscope/tokenizer.hpp"

namespace lexiscope {

enum class Label { Word, Nonword };

struct ProbePoint {
  Vector x;
  Label label = Label::Word;
  int layer = 0;
};

struct ProbeDataset {
  std::vector<ProbePoint> train;
  std::vector<ProbePoint> eval;
};

/// Shuffles each label group with `seed` and puts the first 80% of each into
/// train, so both halves keep the input's label balance.
ProbeDataset split_dataset(std::vector<ProbePoint> points, std::uint64_t seed,
                           double train_fraction = 0.8);

/// Majority label of the k Euclidean-nearest training points. Equal distances
/// go to the lower index; a split vote goes to Word.
Label knn_classify(std::span<const ProbePoint> train, const Vector& query, int k = 4);

/// Fraction of eval points classified correctly.
double knn_accuracy(std::span<const ProbePoint> train, std::span<const ProbePoint> eval, int k = 4);

/// Token ids ranked by E.hidden, descending; equal scores keep id order.
TokenIds logit_lens_input(const Vector& hidden, const Matrix& E);

/// Same ranking by cosine similarity. Throws ZeroVector for hidden == 0.
TokenIds cosine_retrieval(const Vector& hidden, const Matrix& E);

/// Top-1 hit: `target` strictly outscores every other row. Ties are misses.
bool lens_hit(const Vector& hidden, const Matrix& E, TokenId target);
bool cosine_hit(const Vector& hidden, const Matrix& E, TokenId target);

struct RetrievalCurve {
  std::vector<double> per_layer;
  std::vector<double> cumulative;
  std::size_t n_items = 0;
};

/// hits[item][layer]. cumulative[l] is the share of items hit at any layer <= l.
RetrievalCurve retrieval_curve(const std::vector<std::vector<bool>>& hits);

/// Writes `layer,<value_name>` rows (plus a constant group column when
/// `group` is non-empty).
void write_series_csv(std::ostream& out, std::span<const double> values,
                      const std::string& value_name = "value", const std::string& group = {});

}  // namespace lexiscope
