#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "hcd/binary_io.hpp"
#include "hcd/raster.hpp"

namespace hcd {

enum class Method : std::uint32_t { gp = 0, svr = 1, rf = 2, hpt = 3 };

std::string_view to_string(Method method);
/// Accepts "gp", "svr", "rf", "hpt" (case-sensitive).
Method parse_method(std::string_view name);

/// A fitted regression function R^P -> R^Q. Implementations are immutable
/// after construction, so predict() may be called from many threads.
class Model {
 public:
  Model(std::size_t input_dim, std::size_t output_dim)
      : input_dim_(input_dim), output_dim_(output_dim) {}
  virtual ~Model() = default;

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  [[nodiscard]] virtual Method method() const noexcept = 0;
  [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
  [[nodiscard]] std::size_t output_dim() const noexcept { return output_dim_; }

  /// Maps an N x P batch to N x Q. Row i of the result depends only on row i
  /// of the batch, except for batch-normalized HPT (see hpt.hpp).
  [[nodiscard]] RowMatrix predict(const RowMatrix& batch) const;

  /// Back-end payload for the HCDM container; the header is written by
  /// serialize_model().
  virtual void write_payload(ByteWriter& writer) const = 0;

 protected:
  [[nodiscard]] virtual RowMatrix predict_checked(const RowMatrix& batch) const = 0;

 private:
  std::size_t input_dim_;
  std::size_t output_dim_;
};

}  // namespace hcd
