#include "vlink/identify.hpp"

#include <algorithm>
#include <set>

#include "vlink/error.hpp"
#include "vlink/features.hpp"
#include "vlink/util.hpp"

namespace vlink::identify {

double cosine(const Vec& u, const Vec& v) {
  if (u.size() != v.size()) throw DimensionError("cosine of vectors with different dimensions");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return u.dot(v) / (nu * nv);
}

VendorStyleSet::VendorStyleSet(std::string vendor, Mat vectors) : vendor_(std::move(vendor)), vectors_(std::move(vectors)) {
  if (vectors_.rows() == 0) throw DimensionError("vendor '" + vendor_ + "' has no style vectors");
  if (!vectors_.allFinite()) throw DimensionError("vendor '" + vendor_ + "' has non-finite style vectors");
  unit_mean_ = Vec::Zero(vectors_.cols());
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
    const double n = vectors_.row(i).norm();
    if (n > 0.0) unit_mean_ += vectors_.row(i).transpose() / n;
  }
  unit_mean_ /= static_cast<double>(vectors_.rows());
  centroid_ = vectors_.colwise().mean().transpose();
}

// The mean of pairwise cosines equals the dot product of the mean unit vectors, so each vendor
// pair costs O(dim) and the ordered-pair mean is exactly symmetric.
double pair_similarity(const VendorStyleSet& a, const VendorStyleSet& b, Aggregation agg) {
  if (a.dim() != b.dim()) throw DimensionError("style sets have different dimensions");
  if (agg == Aggregation::centroid) return cosine(a.centroid(), b.centroid());
  return a.unit_mean().dot(b.unit_mean());
}

double self_similarity(const VendorStyleSet& a, Aggregation agg) { return pair_similarity(a, a, agg); }

namespace {
std::optional<double> norm_ratio(double sim, double self_a, double self_b) {
  const double denom = self_a + self_b;
  if (!(denom > 0.0)) return std::nullopt;
  return 2.0 * sim / denom;
}
}  // namespace

std::optional<double> normalized_similarity(const VendorStyleSet& a, const VendorStyleSet& b, Aggregation agg) {
  return norm_ratio(pair_similarity(a, b, agg), self_similarity(a, agg), self_similarity(b, agg));
}

std::vector<VendorStyleSet> build_style_sets(const corpus::Corpus& corpus, const repspace::EmbeddingTensor& tensor,
                                             const repspace::LayerWeights& weights) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> rows;
  for (const auto& ad : corpus.ads()) {
    const auto row = tensor.find(ad.id);
    if (row < 0) throw NotFoundError("embedding tensor has no entry for ad '" + ad.id + "'");
    auto [it, fresh] = rows.try_emplace(ad.vendor_norm);
    if (fresh) order.push_back(ad.vendor_norm);
    it->second.push_back(static_cast<std::size_t>(row));
  }
  std::vector<VendorStyleSet> sets;
  sets.reserve(order.size());
  for (const auto& vendor : order) {
    const auto& idx = rows[vendor];
    Mat m(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(tensor.dim()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      m.row(static_cast<Eigen::Index>(i)) = repspace::style_vector(tensor, weights, idx[i]).transpose();
    }
    sets.emplace_back(vendor, std::move(m));
  }
  return sets;
}

SimilarityIndex::SimilarityIndex(std::vector<VendorStyleSet> sets, Aggregation agg, unsigned workers)
    : sets_(std::move(sets)) {
  const std::size_t n = sets_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!index_.emplace(sets_[i].vendor(), i).second) throw ConfigError("duplicate vendor style set: " + sets_[i].vendor());
  }
  sim_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  util::parallel_for(n, workers, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      const double s = pair_similarity(sets_[i], sets_[j], agg);
      sim_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
      sim_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = s;
    }
  });
  self_ = sim_.diagonal();
}

std::ptrdiff_t SimilarityIndex::find(std::string_view vendor) const {
  auto it = index_.find(vendor);
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::optional<double> SimilarityIndex::sim_norm(std::size_t i, std::size_t j) const {
  return norm_ratio(sim(i, j), self(i), self(j));
}

SimilarityRecord SimilarityIndex::record(std::size_t parent, std::size_t candidate) const {
  SimilarityRecord r;
  r.parent = sets_[parent].vendor();
  r.candidate = sets_[candidate].vendor();
  r.n_ads_parent = sets_[parent].n_ads();
  r.n_ads_candidate = sets_[candidate].n_ads();
  r.sim = sim(parent, candidate);
  r.sim_self_parent = self(parent);
  r.sim_self_candidate = self(candidate);
  r.sim_norm = sim_norm(parent, candidate).value_or(0.0);
  r.name_sim = name_similarity(r.parent, r.candidate);
  return r;
}

std::vector<SimilarityRecord> SimilarityIndex::rank_aliases(std::string_view parent, std::size_t top_k) const {
  const auto p = find(parent);
  if (p < 0) throw NotFoundError("unknown parent vendor: " + std::string(parent));
  const auto pi = static_cast<std::size_t>(p);
  std::vector<SimilarityRecord> out;
  for (std::size_t j = 0; j < sets_.size(); ++j) {
    if (j == pi || !sim_norm(pi, j)) continue;
    out.push_back(record(pi, j));
  }
  std::sort(out.begin(), out.end(), [](const SimilarityRecord& a, const SimilarityRecord& b) {
    if (a.sim_norm != b.sim_norm) return a.sim_norm > b.sim_norm;
    return a.candidate < b.candidate;
  });
  if (top_k > 0 && out.size() > top_k) out.resize(top_k);
  for (std::size_t k = 0; k < out.size(); ++k) out[k].rank = k + 1;
  return out;
}

std::vector<Migrant> detect_migrants(const corpus::Corpus& corpus) {
  std::map<std::string, std::set<std::string>> presence;
  for (const auto& ad : corpus.ads()) presence[ad.vendor_norm].insert(ad.market);
  std::vector<Migrant> out;
  for (const auto& [vendor, markets] : presence) {
    if (markets.size() >= 2) out.push_back({vendor, {markets.begin(), markets.end()}});
  }
  return out;
}

double name_similarity(std::string_view a, std::string_view b) {
  return features::cosine(features::char_ngram_vector(a, 3), features::char_ngram_vector(b, 3));
}

std::vector<NamePair> name_similarity_pairs(const std::vector<std::string>& vendors, double threshold,
                                            const SimilarityIndex* index) {
  std::vector<std::string> names(vendors);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::vector<features::GramVector> grams;
  grams.reserve(names.size());
  for (const auto& n : names) grams.push_back(features::char_ngram_vector(n, 3));
  std::vector<NamePair> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      const double s = features::cosine(grams[i], grams[j]);
      if (s < threshold) continue;
      NamePair pair{names[i], names[j], s, std::nullopt};
      if (index) {
        const auto a = index->find(names[i]);
        const auto b = index->find(names[j]);
        if (a >= 0 && b >= 0) pair.sim_norm = index->sim_norm(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
      }
      out.push_back(std::move(pair));
    }
  }
  return out;
}

AliasReport alias_report(const corpus::Corpus& corpus, const SimilarityIndex& index, double sim_norm_threshold,
                         std::size_t top_k) {
  AliasReport rep;
  rep.migrants = detect_migrants(corpus);
  const auto& sets = index.sets();
  std::vector<std::size_t> order(sets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sets[a].vendor() < sets[b].vendor(); });
  std::map<std::pair<std::string, std::string>, std::size_t> rank_of;
  for (auto p : order) {
    const auto all = index.rank_aliases(sets[p].vendor(), 0);
    for (const auto& r : all) rank_of[{r.parent, r.candidate}] = r.rank;
    const std::size_t keep = top_k == 0 ? all.size() : std::min(top_k, all.size());
    rep.ranked.insert(rep.ranked.end(), all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      std::size_t i = order[a], j = order[b];
      const auto s = index.sim_norm(i, j);
      if (!s || *s < sim_norm_threshold) continue;
      if (sets[j].n_ads() > sets[i].n_ads()) std::swap(i, j);
      auto r = index.record(i, j);
      r.rank = rank_of[{r.parent, r.candidate}];
      rep.aliases.push_back(std::move(r));
    }
  }
  std::stable_sort(rep.aliases.begin(), rep.aliases.end(), [](const SimilarityRecord& x, const SimilarityRecord& y) {
    if (x.sim_norm != y.sim_norm) return x.sim_norm > y.sim_norm;
    if (x.parent != y.parent) return x.parent < y.parent;
    return x.candidate < y.candidate;
  });
  return rep;
}

namespace {

std::map<std::string, std::string> market_lists(const corpus::Corpus& corpus) {
  std::map<std::string, std::set<std::string>> presence;
  for (const auto& ad : corpus.ads()) presence[ad.vendor_norm].insert(ad.market);
  std::map<std::string, std::string> out;
  for (const auto& [vendor, markets] : presence) out[vendor] = util::join({markets.begin(), markets.end()}, ";");
  return out;
}

std::string fmt(double v) { return util::format_double(v); }

}  // namespace

std::string records_csv(const std::vector<SimilarityRecord>& records, const corpus::Corpus& corpus) {
  const auto markets = market_lists(corpus);
  auto markets_of = [&](const std::string& v) {
    auto it = markets.find(v);
    return it == markets.end() ? std::string() : it->second;
  };
  std::string out(kDisclaimer);
  out += "\nparent,candidate,n_ads_parent,n_ads_candidate,sim,sim_self_parent,sim_self_candidate,sim_norm,name_sim,"
         "rank,markets_parent,markets_candidate\n";
  for (const auto& r : records) {
    out += util::csv_field(r.parent) + "," + util::csv_field(r.candidate) + "," + std::to_string(r.n_ads_parent) + "," +
           std::to_string(r.n_ads_candidate) + "," + fmt(r.sim) + "," + fmt(r.sim_self_parent) + "," +
           fmt(r.sim_self_candidate) + "," + fmt(r.sim_norm) + "," + fmt(r.name_sim) + "," + std::to_string(r.rank) +
           "," + util::csv_field(markets_of(r.parent)) + "," + util::csv_field(markets_of(r.candidate)) + "\n";
  }
  return out;
}

std::string scatter_csv(const std::vector<SimilarityRecord>& records) {
  std::string out = "parent,candidate,sim_norm\n";
  for (const auto& r : records) {
    out += util::csv_field(r.parent) + "," + util::csv_field(r.candidate) + "," + fmt(r.sim_norm) + "\n";
  }
  return out;
}

std::string migrants_csv(const std::vector<Migrant>& migrants) {
  std::string out = "vendor,n_markets,markets\n";
  for (const auto& m : migrants) {
    out += util::csv_field(m.vendor) + "," + std::to_string(m.markets.size()) + "," +
           util::csv_field(util::join(m.markets, ";")) + "\n";
  }
  return out;
}

std::string name_pairs_csv(const std::vector<NamePair>& pairs) {
  std::string out = "a,b,name_sim,sim_norm\n";
  for (const auto& p : pairs) {
    out += util::csv_field(p.a) + "," + util::csv_field(p.b) + "," + fmt(p.name_sim) + "," +
           (p.sim_norm ? fmt(*p.sim_norm) : std::string()) + "\n";
  }
  return out;
}

nlohmann::json to_json(const SimilarityRecord& r) {
  return {{"parent", r.parent},
          {"candidate", r.candidate},
          {"n_ads_parent", r.n_ads_parent},
          {"n_ads_candidate", r.n_ads_candidate},
          {"sim", r.sim},
          {"sim_self_parent", r.sim_self_parent},
          {"sim_self_candidate", r.sim_self_candidate},
          {"sim_norm", r.sim_norm},
          {"name_sim", r.name_sim},
          {"rank", r.rank}};
}

SimilarityRecord record_from_json(const nlohmann::json& j) {
  SimilarityRecord r;
  r.parent = j.at("parent").get<std::string>();
  r.candidate = j.at("candidate").get<std::string>();
  r.n_ads_parent = j.at("n_ads_parent").get<std::size_t>();
  r.n_ads_candidate = j.at("n_ads_candidate").get<std::size_t>();
  r.sim = j.at("sim").get<double>();
  r.sim_self_parent = j.at("sim_self_parent").get<double>();
  r.sim_self_candidate = j.at("sim_self_candidate").get<double>();
  r.sim_norm = j.at("sim_norm").get<double>();
  r.name_sim = j.at("name_sim").get<double>();
  r.rank = j.at("rank").get<std::size_t>();
  return r;
}

}  // namespace vlink::identify
