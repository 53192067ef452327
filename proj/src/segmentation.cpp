#include "treeseg/segmentation.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <tuple>

namespace treeseg {

std::int32_t Segmentation::max_label() const
{
  std::int32_t m = 0;
  for (auto l : labels)
    m = std::max(m, l);
  return m;
}

std::size_t Segmentation::instance_count() const
{
  return counts().size();
}

std::map<std::int32_t, std::size_t> Segmentation::counts() const
{
  std::map<std::int32_t, std::size_t> c;
  for (auto l : labels)
    if (l > 0)
      ++c[l];
  return c;
}

void Segmentation::compact()
{
  const auto c = counts();
  std::map<std::int32_t, std::int32_t> remap;
  std::int32_t next = 1;
  for (const auto& [id, n] : c)
    remap[id] = next++;
  std::vector<double> conf;
  if (has_confidence()) {
    conf.reserve(c.size());
    for (const auto& [id, n] : c) {
      if (static_cast<std::size_t>(id) > confidence.size())
        throw std::invalid_argument("Segmentation: confidence missing for instance " + std::to_string(id));
      conf.push_back(confidence[static_cast<std::size_t>(id) - 1]);
    }
  }
  for (auto& l : labels)
    l = l > 0 ? remap[l] : 0;
  confidence = std::move(conf);
}

Segmentation ground_truth(const PointCloud& cloud)
{
  return Segmentation(cloud.instance_id);
}

double label_agreement(const Labels& truth, const Labels& predicted)
{
  if (truth.size() != predicted.size())
    throw std::invalid_argument("label_agreement: size mismatch");
  if (truth.empty())
    return 1.0;
  std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> overlap;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] > 0 && predicted[i] > 0)
      ++overlap[{ truth[i], predicted[i] }];

  std::vector<std::tuple<std::size_t, std::int32_t, std::int32_t>> pairs;
  for (const auto& [key, n] : overlap)
    pairs.emplace_back(n, key.first, key.second);
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b))
      return std::get<0>(a) > std::get<0>(b);
    return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
  });
  std::map<std::int32_t, std::int32_t> pred_to_truth;
  std::set<std::int32_t> used;
  for (const auto& [n, t, p] : pairs) {
    if (pred_to_truth.count(p) || used.count(t))
      continue;
    pred_to_truth[p] = t;
    used.insert(t);
  }

  std::size_t agree = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    std::int32_t mapped = 0;
    if (predicted[i] > 0) {
      auto it = pred_to_truth.find(predicted[i]);
      mapped = it == pred_to_truth.end() ? -1 : it->second;
    }
    agree += mapped == truth[i] ? 1 : 0;
  }
  return static_cast<double>(agree) / static_cast<double>(truth.size());
}

} // namespace treeseg
