#include <atomic>
#include <cstdlib>
#include <string>

#include "svtas/kernels.hpp"

namespace svtas::kernels {
namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("SVTAS_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_table() != nullptr) return avx2_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current().store(&scalar_table());
    return true;
  }
  if (name == "avx2" && avx2_table() != nullptr) {
    current().store(avx2_table());
    return true;
  }
  return false;
}

}  // namespace svtas::kernels
