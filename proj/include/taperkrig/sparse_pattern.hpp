#pragma once

#include <cstdint>
#include <vector>

namespace taperkrig {

// Compressed-column pattern of the lower triangle (diagonal included).
// Row indices are strictly increasing within each column and every column
// starts with its diagonal entry. 32-bit indices cap the problem size at
// desk scale; column pointers are 64-bit so nnz may exceed 2^31.
struct SparsePattern {
  std::int32_t n = 0;
  std::vector<std::int64_t> col_ptr;  // length n + 1
  std::vector<std::int32_t> row_ind;  // length nnz

  std::int64_t nnz() const { return static_cast<std::int64_t>(row_ind.size()); }

  // Throws std::invalid_argument if the structural invariants are violated.
  void validate() const;
};

}  // namespace taperkrig
