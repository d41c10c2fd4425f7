#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlasr/common/optimizer_kind.h"
#include "mlasr/model/config.h"
#include "mlasr/nn/tensor.h"

namespace mlasr::capacity {

using Count = std::int64_t;

// Closed-form counts for each building block. Linear layers carry a bias
// unless noted; norms carry a scale and an offset.
namespace formula {
Count Linear(Count in, Count out, bool bias = true);
Count Norm(Count dim);
Count FeedForward(Count dim, Count hidden);
// Query/value/output projections with bias, key without. Relative position
// adds a bias-free position projection and two per-dim biases.
Count DotAttention(Count query_dim, Count memory_dim, Count dim, bool relative);
Count ConvModule(Count dim, Count kernel);
Count ConformerLayer(Count dim, Count ffn_hidden, Count kernel, bool relative);
Count Adapter(Count dim, Count bottleneck);
Count ProjectedLstm(Count input, Count cell, Count output);
Count AdditiveAttention(Count memory_dim, Count dim);
Count TransformerDecoderLayer(Count dim, Count encoder_dim, Count hidden);
// Per-instance decoder body: everything except embedding and output layer.
Count DecoderBody(const model::DecoderConfig& config, Count encoder_dim);
}  // namespace formula

struct Components {
  Count input_projection = 0;
  Count encoder_blocks = 0;
  Count adapters = 0;
  Count decoders = 0;
  Count embeddings = 0;
  Count output_projection = 0;

  Count total() const {
    return input_projection + encoder_blocks + adapters + decoders + embeddings +
           output_projection;
  }
  bool operator==(const Components&) const = default;
};

struct CapacityReport {
  Components components;
  // Encoder blocks split: first block, second block with its projection, rest.
  Count block1 = 0;
  Count block2 = 0;
  Count block3 = 0;
  int decoder_instances = 1;
  // Adafactor second-moment scalars: rows + cols per matrix, size per vector.
  Count factored_accumulators = 0;

  Count total() const { return components.total(); }
  double Bytes(double bytes_per_param) const { return bytes_per_param * double(total()); }
  double PartitionBytes(double bytes_per_param, int partitions) const {
    return Bytes(bytes_per_param) / partitions;
  }
};

CapacityReport CountParams(const model::ModelConfig& config);

// Which component a parameter belongs to, from its name.
enum class Component { kInputProjection, kEncoderBlocks, kAdapters, kDecoders, kEmbeddings,
                       kOutputProjection };
Component Classify(std::string_view parameter_name);

struct NamedShape {
  std::string name;
  nn::Shape shape;
};

// Every parameter the model builder declares, in declaration order, derived
// from the config without allocating tensors.
std::vector<NamedShape> Inventory(const model::ModelConfig& config);

// Per-component totals of any (name, shape) list: an inventory or a built
// model's parameter set.
Components Tally(const std::vector<NamedShape>& parameters);

// Optimizer state relative to the parameter count. Adam keeps two full
// moments (3x); Adafactor keeps a full first moment plus factored second
// moments (2x + factored_accumulators / total).
double ReplicationFactor(const CapacityReport& report, OptimizerKind optimizer);

struct MemoryVerdict {
  double replication = 0;
  double total_bytes = 0;
  double per_partition_bytes = 0;
  double limit_bytes = 0;
  // limit / per_partition; feasible when >= 1.
  double margin = 0;
  bool feasible = false;
};

MemoryVerdict CheckMemory(const CapacityReport& report, OptimizerKind optimizer,
                          double bytes_per_param, int partitions, double per_partition_limit);

struct CatalogueEntry {
  std::string name;
  std::string description;
  model::ModelConfig config;
  std::optional<double> stated_size;
  // Relative tolerance against stated_size.
  double tolerance = 0.15;
  OptimizerKind optimizer = OptimizerKind::kAdafactor;
  int partitions = 512;
  // Reported results, kept verbatim as metadata.
  std::string reported;
};

const std::vector<CatalogueEntry>& Catalogue();
// Case-insensitive lookup; throws UsageError listing the names.
const CatalogueEntry& FindEntry(std::string_view name);

std::string RenderReport(const std::string& title, const CapacityReport& report);
// One JSON object per line: a component record each, then a summary.
std::string ReportJsonLines(const std::string& title, const CapacityReport& report,
                            const std::optional<MemoryVerdict>& memory);

}  // namespace mlasr::capacity
