#include <set>

#include "doctest.h"
#include "mlasr/capacity/capacity.h"
#include "mlasr/common/error.h"
#include "mlasr/model/model.h"

using namespace mlasr;
using namespace mlasr::capacity;
using model::Conditioning;
using model::DecoderKind;
using model::ModelConfig;

namespace {

ModelConfig Small(int layers, int dim, Conditioning cond, DecoderKind kind, int languages = 3) {
  ModelConfig c;
  c.encoder.num_layers = layers;
  c.encoder.model_dim = dim;
  c.encoder.attention_heads = 4;
  c.encoder.conv_kernel = 5;
  c.encoder.conditioning = cond;
  c.encoder.num_languages = languages;
  c.encoder.group_norm_groups = 2;
  c.decoder.kind = kind;
  c.decoder.num_layers = 2;
  c.decoder.model_dim = dim;
  c.decoder.hidden_dim = 2 * dim;
  c.decoder.attention_heads = 2;
  c.vocab_size = 40;
  return c;
}

std::vector<ModelConfig> InstantiableConfigs() {
  std::vector<ModelConfig> out = {
      Small(6, 32, Conditioning::kNone, DecoderKind::kTransformer, 1),
      Small(6, 32, Conditioning::kBiasConcat, DecoderKind::kLas),
      Small(7, 24, Conditioning::kPerLanguageAdapter, DecoderKind::kTransformer),
      Small(5, 16, Conditioning::kSharedAdapter, DecoderKind::kLas),
  };
  ModelConfig families = Small(6, 32, Conditioning::kBiasConcat, DecoderKind::kLas, 5);
  families.decoder.routing = model::Routing::kPerFamily;
  families.decoder.families = {0, 0, 1, 2, 2};
  families.encoder.relative_position_attention = false;
  families.encoder.adapter_bottleneck = 5;
  out.push_back(families);
  return out;
}

std::vector<NamedShape> Built(const ModelConfig& config) {
  nn::ParameterSet<float> ps;
  Rng rng(1);
  model::AsrModel<float> m(config, ps, rng);
  std::vector<NamedShape> out;
  for (nn::ParamId id = 0; id < ps.size(); ++id) out.push_back({ps.name(id), ps.value(id).shape()});
  return out;
}

}  // namespace

TEST_CASE("formula, inventory and built model agree exactly") {
  for (const auto& config : InstantiableConfigs()) {
    const auto built = Built(config);
    const auto inventory = Inventory(config);
    REQUIRE(built.size() == inventory.size());
    for (std::size_t i = 0; i < built.size(); ++i) {
      CHECK(built[i].name == inventory[i].name);
      CHECK(built[i].shape == inventory[i].shape);
    }
    const auto report = CountParams(config);
    CHECK(report.components == Tally(built));
    CHECK(report.block1 + report.block2 + report.block3 == report.components.encoder_blocks);
    std::size_t scalars = 0;
    for (const auto& p : built) scalars += nn::NumElements(p.shape);
    CHECK(report.total() == static_cast<Count>(scalars));
    CHECK(report.total() < 50'000'000);
  }
}

TEST_CASE("every catalogue entry decomposes consistently") {
  std::set<std::string> names;
  for (const auto& e : Catalogue()) {
    CAPTURE(e.name);
    CHECK(names.insert(e.name).second);
    const auto report = CountParams(e.config);
    CHECK(report.components == Tally(Inventory(e.config)));
    if (e.stated_size) {
      const double rel = double(report.total()) / *e.stated_size - 1.0;
      CHECK(std::abs(rel) <= e.tolerance);
    }
  }
}

TEST_CASE("named catalogue configurations") {
  const auto& b0 = FindEntry("B0").config;
  const auto& e1 = FindEntry("e1").config;
  CHECK(e1.encoder.num_layers == 61);
  CHECK(e1.encoder.model_dim == 768);
  CHECK(e1.decoder == b0.decoder);
  const auto& e8 = FindEntry("e8").config;
  CHECK(e8.encoder.num_layers == 22);
  CHECK(e8.encoder.model_dim == 1024);
  CHECK(e8.decoder.num_layers == 18);
  CHECK(e8.decoder.model_dim == 1152);
  const auto& ten = FindEntry("10b").config;
  CHECK(ten.encoder.num_layers == 86);
  CHECK(ten.encoder.model_dim == 2048);
  CHECK(ten.decoder == b0.decoder);
  CHECK(FindEntry("354m-multi").config.decoder.num_instances() == 5);
  CHECK_THROWS_AS(FindEntry("nope"), UsageError);

  const auto e3 = CountParams(FindEntry("e3").config).total();
  CHECK(e3 >= 900'000'000);
  CHECK(e3 <= 1'150'000'000);
  const auto b0_total = CountParams(b0).total();
  CHECK(b0_total >= 330'000'000);
  CHECK(b0_total <= 410'000'000);
}

TEST_CASE("decoder depth is linear and growth is monotone") {
  ModelConfig c = FindEntry("b0").config;
  const Count base = CountParams(c).total();
  const Count per_layer = formula::TransformerDecoderLayer(768, 768, 3072);
  c.decoder.num_layers = 24;
  CHECK(CountParams(c).total() - base == 12 * per_layer);

  ModelConfig las = FindEntry("monolingual").config;
  const Count las_base = CountParams(las).total();
  las.decoder.num_layers += 3;
  CHECK(CountParams(las).total() - las_base == 3 * formula::ProjectedLstm(640, 2048, 640));

  for (const auto& e : Catalogue()) {
    const Count t = CountParams(e.config).total();
    ModelConfig deeper = e.config, wider = e.config, bigger = e.config;
    deeper.encoder.num_layers += 1;
    wider.encoder.model_dim += wider.encoder.attention_heads;
    bigger.vocab_size += 1;
    CHECK(CountParams(deeper).total() > t);
    CHECK(CountParams(wider).total() > t);
    CHECK(CountParams(bigger).total() > t);
  }
}

TEST_CASE("per-layer closed forms") {
  for (Count d : {8, 64, 768}) {
    for (Count e : {16, 1024}) {
      CHECK(formula::TransformerDecoderLayer(d, e, 4 * d) ==
            6 * d * d + 2 * e * d + 2 * d * (4 * d) + 4 * d + 13 * d);
      CHECK(formula::AdditiveAttention(e, d) == 2 * e * d + d * d + 3 * d);
    }
    CHECK(formula::DotAttention(d, d, d, true) == 5 * d * d + 5 * d);
    CHECK(formula::ConvModule(d, 15) == 3 * d * d + 15 * d + 8 * d);
  }
}

TEST_CASE("memory feasibility") {
  CapacityReport ten_billion;
  ten_billion.components.encoder_blocks = 10'000'000'000;
  ten_billion.factored_accumulators = 0;
  const double gib16 = 16.0 * (1ull << 30);
  const auto at1024 = CheckMemory(ten_billion, OptimizerKind::kAdafactor, 4, 1024, gib16);
  CHECK(at1024.feasible);
  CHECK(at1024.replication == 2.0);
  const auto at512 = CheckMemory(ten_billion, OptimizerKind::kAdafactor, 4, 512, gib16);
  CHECK(at512.margin == doctest::Approx(at1024.margin / 2));

  const auto real = CountParams(FindEntry("10b").config);
  const auto verdict = CheckMemory(real, OptimizerKind::kAdafactor, 4, 1024, gib16);
  CHECK(verdict.feasible);
  CHECK(verdict.replication > 2.0);
  CHECK(verdict.replication < 2.01);
  CHECK(CheckMemory(real, OptimizerKind::kAdam, 4, 1, gib16).replication == 3.0);
  CHECK_FALSE(CheckMemory(real, OptimizerKind::kAdam, 4, 1, gib16).feasible);

  CapacityReport one;
  one.components.decoders = 1;
  CHECK(CheckMemory(one, OptimizerKind::kAdam, 4, 1, gib16).feasible);
  CHECK_THROWS_AS(CheckMemory(one, OptimizerKind::kAdam, 4, 0, gib16), UsageError);
}

TEST_CASE("reports render") {
  const auto report = CountParams(FindEntry("e3").config);
  CHECK(RenderReport("e3", report).find("total") != std::string::npos);
  const auto lines = ReportJsonLines("e3", report, std::nullopt);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 7);
}
