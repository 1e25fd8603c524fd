#include "textmill/dedup.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "textmill/error.hpp"
#include "textmill/unicode.hpp"

namespace textmill {

std::string normalize_for_dedup(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for_each_codepoint(text, [&](char32_t cp, std::size_t offset, std::size_t len) {
    const CharClass cls = classify(cp);
    if (cls == CharClass::kWhitespace || cls == CharClass::kPunctuation) return;
    out.append(text.substr(offset, len));
  });
  return out;
}

std::optional<ExactKey> exact_key(const Document& doc) {
  const std::string norm = normalize_for_dedup(doc.text);
  if (norm.empty()) return std::nullopt;
  return ExactKey{md5(norm), doc.order};
}

std::vector<std::size_t> exact_dedup(std::span<const Document> docs,
                                     std::span<const std::optional<ExactKey>> keys,
                                     std::vector<std::string_view>* reasons) {
  if (keys.size() != docs.size()) throw ValidationError("exact_dedup: key count mismatch");
  // digest -> index of the current minimal-order holder
  std::map<Md5Digest, std::size_t> first;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!keys[i]) continue;
    auto [it, inserted] = first.try_emplace(keys[i]->digest, i);
    if (!inserted && docs[i].order < docs[it->second].order) it->second = i;
  }
  std::vector<bool> keep(docs.size(), false);
  for (const auto& [_, i] : first) keep[i] = true;

  std::vector<std::size_t> kept;
  if (reasons) reasons->assign(docs.size(), std::string_view{});
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (keep[i]) {
      kept.push_back(i);
    } else if (reasons) {
      (*reasons)[i] = keys[i] ? reject::kExactDuplicate : reject::kEmptyAfterNormalize;
    }
  }
  return kept;
}

std::unordered_map<std::string, std::uint32_t> simhash_features(std::string_view normalized) {
  std::unordered_map<std::string, std::uint32_t> feats;
  std::vector<std::size_t> starts;
  for_each_codepoint(normalized, [&](char32_t, std::size_t offset, std::size_t) {
    starts.push_back(offset);
  });
  if (starts.empty()) return feats;
  if (starts.size() < kSimHashShingle) {
    feats.emplace(std::string(normalized), 1);
    return feats;
  }
  starts.push_back(normalized.size());
  for (std::size_t i = 0; i + kSimHashShingle < starts.size(); ++i) {
    const std::size_t b = starts[i];
    const std::size_t e = starts[i + kSimHashShingle];
    ++feats[std::string(normalized.substr(b, e - b))];
  }
  return feats;
}

std::optional<std::uint64_t> simhash(std::string_view text) {
  const std::string norm = normalize_for_dedup(text);
  if (norm.empty()) return std::nullopt;
  std::vector<std::size_t> starts;
  starts.reserve(norm.size());
  for_each_codepoint(norm, [&](char32_t, std::size_t offset, std::size_t) {
    starts.push_back(offset);
  });
  const std::size_t grams = starts.size() < kSimHashShingle ? 1 : starts.size() - kSimHashShingle + 1;
  starts.push_back(norm.size());

  // The weighted sum is linear in occurrences, so summing per occurrence
  // equals summing count-weighted distinct features.
  std::array<std::int64_t, 64> acc{};
  const std::string_view view(norm);
  for (std::size_t i = 0; i < grams; ++i) {
    const std::size_t b = starts[i];
    const std::size_t e = starts[std::min(i + kSimHashShingle, starts.size() - 1)];
    const std::uint64_t h = hash64(view.substr(b, e - b), kSimHashSeed);
    for (int bit = 0; bit < 64; ++bit) acc[bit] += ((h >> bit) & 1U) ? 1 : -1;
  }
  std::uint64_t fp = 0;
  for (int bit = 0; bit < 64; ++bit) {
    if (acc[bit] > 0) fp |= std::uint64_t{1} << bit;
  }
  return fp;
}

BandedIndex::BandedIndex(int bands, int radius) : bands_(bands), radius_(radius) {
  if (radius < 0 || bands < 1 || bands > 64 || bands < radius + 1) {
    throw ValidationError("banded index needs 0 <= radius < bands <= 64 (got radius " +
                          std::to_string(radius) + ", bands " + std::to_string(bands) + ")");
  }
  offsets_.push_back(0);
  const int base = 64 / bands;
  const int extra = 64 % bands;
  for (int b = 0; b < bands; ++b) offsets_.push_back(offsets_.back() + base + (b < extra ? 1 : 0));
  tables_.resize(bands);
}

std::uint64_t BandedIndex::band_key(int band, std::uint64_t fingerprint) const {
  const int lo = offsets_[band];
  const int width = offsets_[band + 1] - lo;
  const std::uint64_t mask = width == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
  return (fingerprint >> lo) & mask;
}

void BandedIndex::insert(std::uint32_t item, std::uint64_t fingerprint) {
  for (int b = 0; b < bands_; ++b) tables_[b][band_key(b, fingerprint)].push_back(item);
}

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (a > b) std::swap(a, b);
    parent[b] = a;
    return true;
  }
};

}  // namespace

NearDedupResult near_dedup(std::span<const SimHashSignature> signatures, int radius, int bands) {
  BandedIndex index(bands, radius);
  for (std::size_t i = 0; i < signatures.size(); ++i) {
    index.insert(static_cast<std::uint32_t>(i), signatures[i].fingerprint);
  }

  NearDedupResult result;
  DisjointSets sets(signatures.size());
  index.for_each_candidate([&](std::uint32_t a, std::uint32_t b) {
    ++result.candidate_pairs;
    if (hamming_distance(signatures[a].fingerprint, signatures[b].fingerprint) <= radius) {
      ++result.verified_pairs;
      sets.unite(a, b);
    }
  });

  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t i = 0; i < signatures.size(); ++i) components[sets.find(i)].push_back(i);

  for (auto& [_, members] : components) {
    if (members.size() < 2) continue;
    NearCluster cluster;
    cluster.members = std::move(members);
    cluster.kept = *std::min_element(
        cluster.members.begin(), cluster.members.end(), [&](std::size_t a, std::size_t b) {
          return signatures[a].order < signatures[b].order;
        });
    for (std::size_t m : cluster.members) {
      if (m != cluster.kept) result.removed.push_back(m);
    }
    result.clusters.push_back(std::move(cluster));
  }
  std::sort(result.removed.begin(), result.removed.end());
  std::sort(result.clusters.begin(), result.clusters.end(),
            [&](const NearCluster& a, const NearCluster& b) {
              return signatures[a.kept].order < signatures[b.kept].order;
            });
  return result;
}

namespace {

constexpr char kSigMagic[4] = {'T', 'M', 'S', 'G'};
constexpr std::uint32_t kSigVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw FormatError("signature file is truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

void write_signatures(const std::filesystem::path& path,
                      std::span<const SimHashSignature> signatures) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kSigMagic, 4);
  put_le<std::uint32_t>(out, kSigVersion);
  put_le<std::uint64_t>(out, signatures.size());
  for (const auto& s : signatures) {
    put_le<std::uint32_t>(out, s.order.shard);
    put_le<std::uint64_t>(out, s.order.record);
    put_le<std::uint64_t>(out, s.fingerprint);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.id.size()));
    out.write(s.id.data(), static_cast<std::streamsize>(s.id.size()));
  }
  if (!out) throw IoError("write error on " + path.string());
}

std::vector<SimHashSignature> read_signatures(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kSigMagic, 4)) {
    throw FormatError("not a signature file (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kSigVersion) throw FormatError("unsupported signature file version");
  const auto count = get_le<std::uint64_t>(in);
  std::vector<SimHashSignature> sigs;
  for (std::uint64_t i = 0; i < count; ++i) {
    SimHashSignature s;
    s.order.shard = get_le<std::uint32_t>(in);
    s.order.record = get_le<std::uint64_t>(in);
    s.fingerprint = get_le<std::uint64_t>(in);
    const auto len = get_le<std::uint32_t>(in);
    s.id.resize(len);
    if (len > 0 && !in.read(s.id.data(), len)) throw FormatError("signature file is truncated");
    sigs.push_back(std::move(s));
  }
  if (in.peek() != EOF) throw FormatError("trailing bytes after signature records");
  return sigs;
}

}  // namespace textmill
