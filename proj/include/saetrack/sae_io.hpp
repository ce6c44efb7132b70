#pragma once

#include "saetrack/sae.hpp"

#include <filesystem>

namespace saetrack {

/// SAE parameter file: "SAEPRM01", version u32, dim u32, features u32, then f32 LE blocks
/// W_enc (row-major F x D), b_enc, W_dec (row-major D x F), b_dec, then flags
/// (subtract_decoder_bias u8, norm_mode u8, lambda f64).
void persist_params(const SaeParamsd& params, const std::filesystem::path& path);
SaeParamsd read_params(const std::filesystem::path& path);

}  // namespace saetrack
