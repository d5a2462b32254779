#pragma once

#include <string>

#include "wmevade/nn.hpp"

namespace wmevade {

// Self-describing binary model file: magic "WMNN", format version u16 (LE),
// length-prefixed UTF-8 descriptor text (metadata line + architecture
// lines), then each weight tensor as a u8 rank, u32 dims (LE) and float32
// values (LE). Round-trips bit-exactly.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace wmevade
