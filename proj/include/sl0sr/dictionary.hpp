#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <zlib.h>

#include "sl0sr/errors.hpp"
#include "sl0sr/image.hpp"
#include "sl0sr/imaging.hpp"
#include "sl0sr/parallel.hpp"
#include "sl0sr/patches.hpp"
#include "sl0sr/sl0.hpp"

namespace sl0sr {

// Coupled low/high-resolution atom pair sharing one coefficient space. The
// stored blocks are the unit-norm concatenated dictionary: each column
// [d_low_j; d_high_j] has unit l2 norm.
struct CoupledDictionary {
  Eigen::MatrixXd d_low;   // lr_patch_size^2 x atoms
  Eigen::MatrixXd d_high;  // hr_patch_size^2 x atoms
  int lr_patch_size = 5;
  int hr_patch_size = 10;
  int scale = 2;

  Eigen::Index atom_count() const { return d_low.cols(); }
};

/// Empty iff every CoupledDictionary invariant holds; each entry names the
/// broken invariant and the offending index.
inline std::vector<std::string> validate_dictionary(const CoupledDictionary& dict) {
  std::vector<std::string> violations;
  const Eigen::Index n = dict.d_low.cols();
  if (dict.d_high.cols() != n)
    violations.push_back("shape: d_low has " + std::to_string(n) + " columns but d_high has " +
                         std::to_string(dict.d_high.cols()));
  if (dict.lr_patch_size < 1 || dict.hr_patch_size < 1 || dict.scale < 1)
    violations.push_back("shape: patch sizes and scale must be >= 1");
  if (static_cast<Eigen::Index>(dict.lr_patch_size) * dict.lr_patch_size != dict.d_low.rows())
    violations.push_back("shape: lr_patch_size^2 = " +
                         std::to_string(dict.lr_patch_size * dict.lr_patch_size) +
                         " does not match d_low rows " + std::to_string(dict.d_low.rows()));
  if (static_cast<Eigen::Index>(dict.hr_patch_size) * dict.hr_patch_size != dict.d_high.rows())
    violations.push_back("shape: hr_patch_size^2 = " +
                         std::to_string(dict.hr_patch_size * dict.hr_patch_size) +
                         " does not match d_high rows " + std::to_string(dict.d_high.rows()));
  if (dict.hr_patch_size != dict.scale * dict.lr_patch_size)
    violations.push_back("shape: hr_patch_size " + std::to_string(dict.hr_patch_size) +
                         " != scale * lr_patch_size = " +
                         std::to_string(dict.scale * dict.lr_patch_size));
  if (n <= dict.d_low.rows())
    violations.push_back("shape: atom count " + std::to_string(n) +
                         " must exceed d_low rows " + std::to_string(dict.d_low.rows()));
  if (dict.d_high.cols() == n) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double norm_sq = dict.d_low.col(j).squaredNorm() + dict.d_high.col(j).squaredNorm();
      const double norm = std::sqrt(norm_sq);
      if (!(std::abs(norm - 1.0) <= 1e-6))
        violations.push_back("norm: concatenated column " + std::to_string(j) +
                             " has l2 norm " + std::to_string(norm));
      if (dict.d_low.col(j).isZero(0.0))
        violations.push_back("zero-column: d_low column " + std::to_string(j) + " is all zero");
      if (dict.d_high.col(j).isZero(0.0))
        violations.push_back("zero-column: d_high column " + std::to_string(j) + " is all zero");
    }
  }
  return violations;
}

// ---------------------------------------------------------------------------
// Binary container: magic "SL0SRDIC", u32 version=1, u32 scale,
// lr_patch_size, hr_patch_size, atom_count, then d_low and d_high as
// little-endian float64 column-major, then CRC32 of all preceding bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f64(std::string& buf, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void put_matrix(std::string& buf, const Eigen::MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) put_f64(buf, m(r, c));
}

constexpr char kDictionaryMagic[8] = {'S', 'L', '0', 'S', 'R', 'D', 'I', 'C'};
constexpr std::uint32_t kDictionaryVersion = 1;

}  // namespace detail

inline void save_dictionary(const CoupledDictionary& dict, const std::filesystem::path& path) {
  const auto violations = validate_dictionary(dict);
  if (!violations.empty())
    throw invariant_violation_error("save_dictionary: " + violations.front());

  std::string buf;
  buf.reserve(32 + 8 * static_cast<std::size_t>(dict.d_low.size() + dict.d_high.size()) + 4);
  buf.append(detail::kDictionaryMagic, 8);
  detail::put_u32(buf, detail::kDictionaryVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(dict.scale));
  detail::put_u32(buf, static_cast<std::uint32_t>(dict.lr_patch_size));
  detail::put_u32(buf, static_cast<std::uint32_t>(dict.hr_patch_size));
  detail::put_u32(buf, static_cast<std::uint32_t>(dict.atom_count()));
  detail::put_matrix(buf, dict.d_low);
  detail::put_matrix(buf, dict.d_high);
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  detail::put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("save_dictionary: cannot open file for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw format_error("save_dictionary: write failed: " + path.string());
}

inline CoupledDictionary load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("load_dictionary: cannot open file: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());

  constexpr std::size_t kHeaderSize = 8 + 5 * 4;
  if (data.size() < kHeaderSize + 4)
    throw format_error("load_dictionary: truncated header: " + path.string());
  if (!std::equal(detail::kDictionaryMagic, detail::kDictionaryMagic + 8, data.data()))
    throw format_error("load_dictionary: bad magic (not a SL0SRDIC file): " + path.string());
  const std::uint32_t version = detail::get_u32(bytes + 8);
  if (version != detail::kDictionaryVersion)
    throw format_error("load_dictionary: unsupported version " + std::to_string(version));
  const std::uint32_t scale = detail::get_u32(bytes + 12);
  const std::uint32_t lr_patch = detail::get_u32(bytes + 16);
  const std::uint32_t hr_patch = detail::get_u32(bytes + 20);
  const std::uint32_t atoms = detail::get_u32(bytes + 24);
  if (scale == 0 || lr_patch == 0 || hr_patch == 0 || atoms == 0 || lr_patch > 4096 ||
      hr_patch > 4096 || atoms > (1u << 24))
    throw format_error("load_dictionary: header field out of range");

  const std::uint64_t m_l = std::uint64_t{lr_patch} * lr_patch;
  const std::uint64_t m_h = std::uint64_t{hr_patch} * hr_patch;
  const std::uint64_t expected = kHeaderSize + 8 * (m_l + m_h) * atoms + 4;
  if (data.size() != expected)
    throw format_error("load_dictionary: file size " + std::to_string(data.size()) +
                       " does not match header (expected " + std::to_string(expected) +
                       "; truncated or corrupt): " + path.string());

  const std::uint32_t stored_crc = detail::get_u32(bytes + data.size() - 4);
  const auto computed_crc = static_cast<std::uint32_t>(
      ::crc32(0L, bytes, static_cast<uInt>(data.size() - 4)));
  if (stored_crc != computed_crc)
    throw format_error("load_dictionary: CRC32 mismatch (file corrupt): " + path.string());

  CoupledDictionary dict;
  dict.scale = static_cast<int>(scale);
  dict.lr_patch_size = static_cast<int>(lr_patch);
  dict.hr_patch_size = static_cast<int>(hr_patch);
  dict.d_low.resize(static_cast<Eigen::Index>(m_l), static_cast<Eigen::Index>(atoms));
  dict.d_high.resize(static_cast<Eigen::Index>(m_h), static_cast<Eigen::Index>(atoms));
  const unsigned char* p = bytes + kHeaderSize;
  for (Eigen::Index c = 0; c < dict.d_low.cols(); ++c)
    for (Eigen::Index r = 0; r < dict.d_low.rows(); ++r, p += 8) dict.d_low(r, c) = detail::get_f64(p);
  for (Eigen::Index c = 0; c < dict.d_high.cols(); ++c)
    for (Eigen::Index r = 0; r < dict.d_high.rows(); ++r, p += 8) dict.d_high(r, c) = detail::get_f64(p);

  const auto violations = validate_dictionary(dict);
  if (!violations.empty())
    throw invariant_violation_error("load_dictionary: " + violations.front() + ": " + path.string());
  return dict;
}

// ---------------------------------------------------------------------------
// Coupled training: alternate SL0 coding of the per-block-normalized
// concatenated vectors z_j = [y_j / sqrt(m_l); x_j / sqrt(m_h)] with MOD
// dictionary updates.
// ---------------------------------------------------------------------------

struct TrainingPair {
  Eigen::VectorXd lr;
  Eigen::VectorXd hr;
};

struct TrainingConfig {
  int atom_count = 1024;
  int epochs = 20;
  Sl0Config coding;
  double mod_ridge = 1e-6;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    if (atom_count < 1) throw std::invalid_argument("TrainingConfig: atom_count must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainingConfig: epochs must be >= 1");
    if (mod_ridge < 0.0) throw std::invalid_argument("TrainingConfig: mod_ridge must be >= 0");
    coding.validate();
  }
};

struct TrainingTrace {
  std::vector<double> epoch_error;  // sum_j ||z_j - D a_j||^2 after each epoch
  double input_rms = 0.0;           // sqrt(mean squared entry of Z)
  double final_rmse = 0.0;          // sqrt(mean squared entry of Z - D A)
  int dead_atoms_replaced = 0;
};

/// Least-squares dictionary update for fixed codes:
/// D = Z A^T (A A^T + ridge I)^{-1}.
inline Eigen::MatrixXd mod_update(const Eigen::MatrixXd& z, const Eigen::MatrixXd& a, double ridge) {
  Eigen::MatrixXd gram = a * a.transpose();
  gram.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw singular_system_error("mod_update: code gram matrix is not factorizable");
  return ldlt.solve(a * z.transpose()).transpose();
}

// One dictionary update for fixed thresholded codes: MOD least squares, then
// column renormalization with inverse code-row rescaling (D*A unchanged), then
// replacement of unused or zero-norm atoms by the worst-reconstructed usable
// samples. Replaced atoms have their code rows zeroed, so the replacement
// leaves the epoch residual untouched. Returns the number of atoms replaced.
inline int dictionary_epoch_update(Eigen::MatrixXd& dict, const Eigen::MatrixXd& z,
                                   Eigen::MatrixXd& codes,
                                   const std::vector<Eigen::Index>& replacement_candidates,
                                   double ridge) {
  const Eigen::Index n_atoms = codes.rows();
  Eigen::VectorXi usage = Eigen::VectorXi::Zero(n_atoms);
  for (Eigen::Index j = 0; j < codes.cols(); ++j)
    for (Eigen::Index i = 0; i < n_atoms; ++i)
      if (codes(i, j) != 0.0) ++usage[i];

  dict = mod_update(z, codes, ridge);

  std::vector<Eigen::Index> dead;
  for (Eigen::Index i = 0; i < n_atoms; ++i) {
    const double norm = dict.col(i).norm();
    if (usage[i] == 0 || norm <= 1e-12) {
      dead.push_back(i);
      codes.row(i).setZero();
    } else {
      dict.col(i) /= norm;
      codes.row(i) *= norm;
    }
  }

  int replaced = 0;
  if (!dead.empty()) {
    const Eigen::VectorXd residual_sq =
        (z - dict * codes).colwise().squaredNorm().transpose();
    std::vector<Eigen::Index> ranked = replacement_candidates;
    std::sort(ranked.begin(), ranked.end(), [&](Eigen::Index a, Eigen::Index b) {
      return residual_sq[a] != residual_sq[b] ? residual_sq[a] > residual_sq[b] : a < b;
    });
    std::size_t next = 0;
    for (Eigen::Index i : dead) {
      if (next >= ranked.size()) break;
      dict.col(i) = z.col(ranked[next++]).normalized();
      ++replaced;
    }
  }
  return replaced;
}

inline CoupledDictionary train_coupled(const std::vector<TrainingPair>& pairs,
                                       const TrainingConfig& config,
                                       TrainingTrace* trace = nullptr) {
  config.validate();
  if (pairs.empty()) throw std::invalid_argument("train_coupled: no training pairs");
  const Eigen::Index m_l = pairs.front().lr.size();
  const Eigen::Index m_h = pairs.front().hr.size();
  const int lr_patch = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m_l))));
  const int hr_patch = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m_h))));
  if (static_cast<Eigen::Index>(lr_patch) * lr_patch != m_l ||
      static_cast<Eigen::Index>(hr_patch) * hr_patch != m_h)
    throw std::invalid_argument("train_coupled: patch vectors must have square length");
  if (lr_patch < 1 || hr_patch % lr_patch != 0)
    throw std::invalid_argument("train_coupled: hr patch size must be a multiple of lr patch size");
  for (const auto& pair : pairs)
    if (pair.lr.size() != m_l || pair.hr.size() != m_h)
      throw std::invalid_argument("train_coupled: inconsistent patch vector lengths");
  const Eigen::Index n_atoms = config.atom_count;
  const Eigen::Index n_pairs = static_cast<Eigen::Index>(pairs.size());
  if (n_pairs < n_atoms)
    throw std::invalid_argument("train_coupled: need at least atom_count training pairs (" +
                                std::to_string(n_pairs) + " < " + std::to_string(n_atoms) + ")");
  const Eigen::Index dim = m_l + m_h;
  if (n_atoms < dim)
    throw std::invalid_argument("train_coupled: atom_count must be >= m_l + m_h for joint coding");

  // Concatenate with per-block 1/sqrt(m) scaling so neither block dominates.
  const double lr_scale = 1.0 / std::sqrt(static_cast<double>(m_l));
  const double hr_scale = 1.0 / std::sqrt(static_cast<double>(m_h));
  Eigen::MatrixXd z(dim, n_pairs);
  for (Eigen::Index j = 0; j < n_pairs; ++j) {
    z.col(j).head(m_l) = lr_scale * pairs[j].lr;
    z.col(j).tail(m_h) = hr_scale * pairs[j].hr;
  }

  double max_spread = 0.0;
  for (Eigen::Index j = 1; j < n_pairs; ++j)
    max_spread = std::max(max_spread, (z.col(j) - z.col(0)).norm());
  if (max_spread <= 1e-12 * (1.0 + z.col(0).norm()))
    throw degenerate_data_error("train_coupled: all training patches are identical");

  // Atom candidates must be usable in both blocks, or coding against the
  // low block alone could see a zero column.
  std::vector<Eigen::Index> candidates;
  for (Eigen::Index j = 0; j < n_pairs; ++j) {
    if (z.col(j).head(m_l).norm() > 1e-10 && z.col(j).tail(m_h).norm() > 1e-10)
      candidates.push_back(j);
  }
  if (static_cast<Eigen::Index>(candidates.size()) < n_atoms)
    throw degenerate_data_error("train_coupled: only " + std::to_string(candidates.size()) +
                                " usable training vectors for " + std::to_string(n_atoms) +
                                " atoms");

  // Seeded init: distinct training vectors, renormalized.
  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> pool = candidates;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n_atoms); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  Eigen::MatrixXd dict(dim, n_atoms);
  for (Eigen::Index i = 0; i < n_atoms; ++i) dict.col(i) = z.col(pool[i]).normalized();

  Eigen::MatrixXd codes(n_atoms, n_pairs);
  TrainingTrace local_trace;
  TrainingTrace& tr = trace ? *trace : local_trace;
  tr = TrainingTrace{};
  tr.input_rms = std::sqrt(z.squaredNorm() / static_cast<double>(z.size()));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto factored = std::make_shared<const FactoredDictionary>(dict);
    parallel_for(static_cast<std::size_t>(n_pairs), config.threads, [&](std::size_t j) {
      const Eigen::VectorXd alpha =
          sl0_solve(SparseProblem(factored, z.col(static_cast<Eigen::Index>(j))), config.coding);
      codes.col(static_cast<Eigen::Index>(j)) = threshold_small_entries(alpha);
    });

    tr.dead_atoms_replaced +=
        dictionary_epoch_update(dict, z, codes, candidates, config.mod_ridge);
    tr.epoch_error.push_back((z - dict * codes).squaredNorm());
  }

  tr.final_rmse = std::sqrt(tr.epoch_error.back() / static_cast<double>(z.size()));

  CoupledDictionary result;
  result.d_low = dict.topRows(m_l);
  result.d_high = dict.bottomRows(m_h);
  result.lr_patch_size = lr_patch;
  result.hr_patch_size = hr_patch;
  result.scale = hr_patch / lr_patch;
  return result;
}

/// Harvests mean-removed LR/HR patch pairs from HR images degraded with the
/// given operator. LR patches are raw pixels (no upsampling); the HR patch of
/// an LR anchor (r, c) sits at (scale*r, scale*c) with size scale*patch.
inline std::vector<TrainingPair> harvest_training_pairs(const std::vector<Image>& hr_images,
                                                        int lr_patch_size, int overlap,
                                                        const DegradationConfig& degradation) {
  degradation.validate();
  std::vector<TrainingPair> pairs;
  const int scale = degradation.scale;
  const int hr_patch_size = scale * lr_patch_size;
  for (const Image& raw : hr_images) {
    const Image hr = center_crop_to_multiple(raw, scale);
    const Image lr = degrade(hr, degradation);
    if (lr.width < lr_patch_size || lr.height < lr_patch_size) continue;
    const PatchGrid grid = plan_grid(lr.width, lr.height, lr_patch_size, overlap);
    for (const auto& [r, c] : grid.positions) {
      TrainingPair pair;
      pair.lr.resize(static_cast<Eigen::Index>(lr_patch_size) * lr_patch_size);
      for (int pr = 0; pr < lr_patch_size; ++pr)
        for (int pc = 0; pc < lr_patch_size; ++pc)
          pair.lr[pr * lr_patch_size + pc] = lr.at(r + pr, c + pc);
      pair.hr.resize(static_cast<Eigen::Index>(hr_patch_size) * hr_patch_size);
      for (int pr = 0; pr < hr_patch_size; ++pr)
        for (int pc = 0; pc < hr_patch_size; ++pc)
          pair.hr[pr * hr_patch_size + pc] = hr.at(scale * r + pr, scale * c + pc);
      pair.lr.array() -= pair.lr.mean();
      pair.hr.array() -= pair.hr.mean();
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

}  // namespace sl0sr
