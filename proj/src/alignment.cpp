#include "tagrw/alignment.hpp"

#include <algorithm>

namespace tagrw {

Alignment lcs_align(const Tokens& a, const Tokens& b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  Alignment out;
  if (n == 0 || m == 0) return out;

  // dp[i][j] = LCS length of a[0..i) and b[0..j), flattened row-major.
  std::vector<int> dp(static_cast<std::size_t>(n + 1) * (m + 1), 0);
  const auto at = [m](int i, int j) -> std::size_t {
    return static_cast<std::size_t>(i) * (m + 1) + j;
  };
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j)
      dp[at(i, j)] = a[i - 1] == b[j - 1]
                         ? dp[at(i - 1, j - 1)] + 1
                         : std::max(dp[at(i - 1, j)], dp[at(i, j - 1)]);

  int i = n, j = m;
  while (i > 0 && j > 0) {
    if (a[i - 1] == b[j - 1] && dp[at(i, j)] == dp[at(i - 1, j - 1)] + 1) {
      out.pairs.emplace_back(i - 1, j - 1);
      --i;
      --j;
    } else if (dp[at(i - 1, j)] >= dp[at(i, j - 1)]) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  return out;
}

Span find_span(const Tokens& phrase, const FlatContext& ctx) {
  if (phrase.empty() || phrase.size() > ctx.tokens.size()) return Span::none();
  const int plen = static_cast<int>(phrase.size());
  const int last_start = static_cast<int>(ctx.tokens.size()) - plen;
  for (int start = last_start; start >= 0; --start) {
    if (ctx.turn_ids[start] != ctx.turn_ids[start + plen - 1]) continue;
    bool match = true;
    for (int k = 0; k < plen && match; ++k)
      match = ctx.tokens[start + k] == phrase[static_cast<std::size_t>(k)];
    if (match) return Span{start, start + plen - 1};
  }
  return Span::none();
}

} // namespace tagrw
