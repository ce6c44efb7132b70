#include "saetrack/sae_io.hpp"

#include "binary_io.hpp"

#include <fstream>

namespace saetrack {

namespace {

constexpr char kParamMagic[8] = {'S', 'A', 'E', 'P', 'R', 'M', '0', '1'};
constexpr std::uint32_t kParamVersion = 1;

template <typename Derived>
void write_block(std::ostream& os, const Eigen::MatrixBase<Derived>& block) {
  const RowMatrix<float> rows = block.template cast<float>();
  detail::write_le_array(os, rows.data(), static_cast<std::size_t>(rows.size()));
}

MatrixXd read_block(detail::Reader& in, Eigen::Index rows, Eigen::Index cols) {
  RowMatrix<float> m(rows, cols);
  in.get_array(m.data(), static_cast<std::size_t>(m.size()));
  return m.cast<double>();
}

}  // namespace

const char* to_string(NormMode mode) {
  return mode == NormMode::kUnitNorm ? "unit_norm" : "free";
}

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "unit_norm") return NormMode::kUnitNorm;
  if (s == "free") return NormMode::kFree;
  throw ArgumentError("unknown norm mode '" + s + "'");
}

void persist_params(const SaeParamsd& p, const std::filesystem::path& path) {
  check_shapes(p);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kParamMagic, sizeof(kParamMagic));
  detail::write_le<std::uint32_t>(os, kParamVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dim()));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.features()));
  write_block(os, p.w_enc);
  write_block(os, p.b_enc);
  write_block(os, p.w_dec);
  write_block(os, p.b_dec);
  detail::write_le<std::uint8_t>(os, p.subtract_decoder_bias ? 1 : 0);
  detail::write_le<std::uint8_t>(os, p.norm_mode == NormMode::kUnitNorm ? 0 : 1);
  detail::write_le<double>(os, p.lambda);
  if (!os) throw IoError("write failed for " + path.string());
}

SaeParamsd read_params(const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_bytes = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  detail::Reader in(is, path.string());
  if (in.get_bytes(sizeof(kParamMagic)) != std::string(kParamMagic, sizeof(kParamMagic))) {
    throw FormatError(path.string() + ": bad magic");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kParamVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto d = static_cast<Eigen::Index>(in.get<std::uint32_t>());
  const auto f = static_cast<Eigen::Index>(in.get<std::uint32_t>());
  if (d == 0 || f == 0) throw CorruptionError(path.string() + ": zero dim or features");
  const std::uint64_t expected =
      8 + 12 + static_cast<std::uint64_t>(2 * d * f + d + f) * 4 + 2 + 8;
  if (file_bytes < expected) throw CorruptionError(path.string() + ": truncated file");
  if (file_bytes > expected) throw CorruptionError(path.string() + ": size does not match header");

  SaeParamsd p;
  p.w_enc = read_block(in, f, d);
  p.b_enc = read_block(in, f, 1);
  p.w_dec = read_block(in, d, f);
  p.b_dec = read_block(in, d, 1);
  p.subtract_decoder_bias = in.get<std::uint8_t>() != 0;
  const auto mode = in.get<std::uint8_t>();
  if (mode > 1) throw CorruptionError(path.string() + ": bad norm mode flag");
  p.norm_mode = mode == 0 ? NormMode::kUnitNorm : NormMode::kFree;
  p.lambda = in.get<double>();
  if (!p.all_finite()) throw CorruptionError(path.string() + ": non-finite parameters");
  return p;
}

}  // namespace saetrack
