// SPDX-License-Identifier: Apache-2.0
#include "decoquant/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "decoquant/analysis.hpp"
#include "decoquant/decoquant.hpp"
#include "decoquant/io.hpp"
#include "decoquant/kvcache.hpp"

namespace decoquant::cli {
namespace {

using nlohmann::json;

// Thrown for problems with flag values that CLI11 cannot see.
struct InvalidParams : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownName : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_bits(int bits) {
  if (!is_supported_bits(bits)) throw InvalidParams("--bits must be 2, 4 or 8");
}

void require_length(std::size_t n) {
  if (n < 2) throw InvalidParams("--n must be >= 2");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path);
}

DenseTensor read_matrix(const std::string& path) {
  DenseTensor t = decode_dense_tensor(read_file(path));
  if (t.rank() != 2) throw Error(ErrorCode::kMalformedFile, path + " is not a 2-D tensor");
  return t;
}

Shape parse_shape(const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw InvalidParams("--shape must be a comma-separated list of sizes");
    shape.push_back(static_cast<std::size_t>(v));
  }
  if (shape.empty()) throw InvalidParams("--shape is empty");
  return shape;
}

json ledger_json(const MemoryLedger& m) {
  return {{"bytes_fp16_equivalent", m.bytes_fp16_equivalent},
          {"bytes_actual", m.bytes_actual},
          {"bytes_moved_read", m.bytes_moved_read},
          {"ratio", m.ratio()}};
}

json stats_json(std::string_view label, const OutlierStats& s) {
  return {{"tensor_label", label}, {"q1", s.q1},       {"q3", s.q3},
          {"iqr", s.iqr},          {"outlier_count", s.outlier_count}, {"total", s.total_count}};
}

struct QuantizeArgs {
  std::string input, output;
  int bits = 4;
  std::size_t n = 2;
};

struct DequantizeArgs {
  std::string input, output;
};

struct OutlierArgs {
  std::string input, csv;
  std::size_t n = 2;
};

struct BenchArgs {
  std::string experiment, csv;
  std::vector<int> bits;
  std::vector<std::size_t> lengths{2, 3, 4};
  SuiteConfig suite;
  unsigned threads = 0;
  bool verbose = false;
};

struct KvArgs {
  CacheConfig config{4, 256, 4, 1024, 2};
  std::size_t prompt_len = 1024;
  std::size_t gen_len = 7168;
  std::uint64_t seed = 0;
  bool audit = false;
  std::string csv;
};

struct ImportArgs {
  std::string input, output, shape;
};

struct ExportArgs {
  std::string input, output;
};

struct SynthArgs {
  std::size_t rows = 512, cols = 512, outlier_cols = 8;
  float outlier_scale = 20.0f;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_quantize(const QuantizeArgs& a, std::ostream& out) {
  require_bits(a.bits);
  require_length(a.n);
  const DenseTensor m = read_matrix(a.input);
  const QuantizedMpo q = deco_quantize(m, a.bits, a.n);
  write_file(a.output, encode_quantized_mpo(q));
  const CompressionReport r = compression_report(q);
  out << json{{"command", "quantize"},       {"rows", m.dim(0)},
              {"cols", m.dim(1)},            {"bits", a.bits},
              {"n", a.n},                    {"mu", r.ratio},
              {"bytes_original", r.bytes_original}, {"bytes_compressed", r.bytes_compressed}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_dequantize(const DequantizeArgs& a, std::ostream& out) {
  const QuantizedMpo q = decode_quantized_mpo(read_file(a.input));
  const DenseTensor m = deco_dequantize(q);
  write_file(a.output, encode_tensor(m));
  out << json{{"command", "dequantize"}, {"rows", m.dim(0)}, {"cols", m.dim(1)}, {"bits", q.bits}}.dump() << '\n';
  return kExitOk;
}

int cmd_analyze_outliers(const OutlierArgs& a, std::ostream& out) {
  if (a.n != 2) throw InvalidParams("analyze-outliers supports --n 2 only");
  const DenseTensor m = read_matrix(a.input);
  const MigrationReport r = migration_report(m);
  std::ostringstream csv;
  write_outliers_csv(csv, r);
  write_text(a.csv, csv.str());
  out << json{{"command", "analyze-outliers"},
              {"tensors", {stats_json("matrix", r.matrix), stats_json("T_L", r.large), stats_json("T_S", r.small)}}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_bench(BenchArgs a, std::ostream& out, std::ostream& err) {
  const bool strategies = a.experiment == "strategies";
  const bool lengths = a.experiment == "lengths";
  const bool decompositions = a.experiment == "decompositions";
  if (!strategies && !lengths && !decompositions) throw UnknownName("unknown experiment '" + a.experiment + "'");
  if (a.bits.empty()) a.bits = strategies ? std::vector<int>{2, 4, 8} : std::vector<int>{4};
  for (int b : a.bits) require_bits(b);
  for (std::size_t n : a.lengths) require_length(n);
  if (a.suite.seeds == 0 || a.suite.rows == 0 || a.suite.cols == 0) {
    throw InvalidParams("--seeds, --rows and --cols must be >= 1");
  }
  if (a.suite.outlier_cols > a.suite.cols || !(a.suite.outlier_scale >= 1.0f)) {
    throw InvalidParams("need --outlier-cols <= --cols and --outlier-scale >= 1");
  }

  const auto suite = make_suite(a.suite);
  const SweepOptions options{a.threads};
  std::vector<ErrorRecord> records;
  if (strategies) {
    records = strategy_sweep(suite, a.bits, options);
  } else {
    for (int b : a.bits) {
      auto part = lengths ? length_sweep(suite, a.lengths, b, options) : decomposition_comparison(suite, b, options);
      records.insert(records.end(), part.begin(), part.end());
    }
    std::stable_sort(records.begin(), records.end(), [](const ErrorRecord& x, const ErrorRecord& y) {
      return std::tuple(x.seed, x.method, x.bits, x.n) < std::tuple(y.seed, y.method, y.bits, y.n);
    });
  }

  std::ostringstream csv;
  write_errors_csv(csv, records);
  if (!a.csv.empty()) write_text(a.csv, csv.str());

  const auto rows = summarize(records);
  for (const auto& r : rows) {
    out << json{{"experiment", a.experiment},
                {"method", method_label(r.method)},
                {"bits", r.bits},
                {"n", r.n},
                {"count", r.count},
                {"median_frobenius_error", r.frobenius_error},
                {"median_relative_error", r.relative_error},
                {"median_param_overhead", r.param_overhead}}
               .dump()
        << '\n';
  }
  if (lengths) {
    for (int b : a.bits) {
      for (std::size_t k = 0; k + 1 < a.lengths.size(); ++k) {
        const std::size_t from = a.lengths[k], to = a.lengths[k + 1];
        const double delta = median_error(records, Method::kDecoTlOnly, b, from) -
                             median_error(records, Method::kDecoTlOnly, b, to);
        out << json{{"experiment", a.experiment}, {"bits", b}, {"from_n", from}, {"to_n", to},
                    {"median_improvement", delta}}
                   .dump()
            << '\n';
      }
    }
  }
  if (a.verbose) write_summary(err, rows);
  return kExitOk;
}

int cmd_kv_sim(const KvArgs& a, std::ostream& out) {
  try {
    a.config.validate();
  } catch (const Error& e) {
    throw InvalidParams(e.what());
  }
  const SimulationResult r = simulate_generation(a.config, a.prompt_len, a.gen_len, a.seed, a.audit);
  if (!a.csv.empty()) {
    std::ostringstream csv;
    write_trace_csv(csv, r.trace);
    write_text(a.csv, csv.str());
  }
  json line{{"command", "kv-sim"}, {"layers", a.config.layers}, {"dim", a.config.dim}, {"bits", a.config.bits},
            {"chunk", a.config.chunk_len}, {"tokens", a.prompt_len + a.gen_len}};
  line["ledger"] = ledger_json(r.ledger);
  if (r.median_score_deviation) line["median_score_deviation"] = *r.median_score_deviation;
  out << line.dump() << '\n';
  return kExitOk;
}

int cmd_import(const ImportArgs& a, std::ostream& out) {
  const Shape shape = parse_shape(a.shape);
  const DenseTensor t = import_raw_f32(read_file(a.input), shape);
  write_file(a.output, encode_tensor(t));
  out << json{{"command", "import"}, {"shape", t.shape()}}.dump() << '\n';
  return kExitOk;
}

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const DenseTensor t = decode_dense_tensor(read_file(a.input));
  write_file(a.output, export_raw_f32(t));
  out << json{{"command", "export"}, {"shape", t.shape()}}.dump() << '\n';
  return kExitOk;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.outlier_cols > a.cols || !(a.outlier_scale >= 1.0f)) {
    throw InvalidParams("need --outlier-cols <= --cols and --outlier-scale >= 1");
  }
  const DenseTensor t = synth_activations(a.rows, a.cols, a.outlier_cols, a.outlier_scale, a.seed);
  write_file(a.output, encode_tensor(t));
  out << json{{"command", "synth"}, {"shape", t.shape()}, {"seed", a.seed}}.dump() << '\n';
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedFile:
    case ErrorCode::kCorruptPayload:
    case ErrorCode::kBondMismatch:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kSizeMismatch:
    case ErrorCode::kNonFiniteInput:
    case ErrorCode::kRangeOverflow:
      return kExitMalformed;
    case ErrorCode::kUnsupportedBits:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDimMismatch:
    case ErrorCode::kEmptyInput:
      return kExitInvalidParams;
    default:
      return kExitFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DecoQuant: decomposition-based low-bit quantization tools", "decoquant"};
  app.require_subcommand(1);

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "Decompose and quantize a 2-D DQT1 tensor into a DQZ1 file");
  quantize->add_option("--input", qa.input, "DQT1 float matrix")->required();
  quantize->add_option("--bits", qa.bits, "Bit width B (2, 4, 8)")->capture_default_str();
  quantize->add_option("--n", qa.n, "Decomposition length")->capture_default_str();
  quantize->add_option("--out", qa.output, "DQZ1 output")->required();

  DequantizeArgs da;
  auto* dequant = app.add_subcommand("dequantize", "Reconstruct a DQT1 float matrix from a DQZ1 file");
  dequant->add_option("--input", da.input, "DQZ1 input")->required();
  dequant->add_option("--out", da.output, "DQT1 output")->required();

  OutlierArgs oa;
  auto* outliers = app.add_subcommand("analyze-outliers", "IQR statistics of a matrix and its two local tensors");
  outliers->add_option("--input", oa.input, "DQT1 float matrix")->required();
  outliers->add_option("--n", oa.n, "Decomposition length (2 only)")->capture_default_str();
  outliers->add_option("--csv", oa.csv, "outliers.csv output")->required();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Error sweeps on the synthetic outlier suite");
  bench->add_option("--experiment", ba.experiment, "strategies | lengths | decompositions")->required();
  bench->add_option("--bits", ba.bits, "Bit widths, comma separated")->delimiter(',');
  bench->add_option("--lengths", ba.lengths, "Decomposition lengths for 'lengths'")->delimiter(',')->capture_default_str();
  bench->add_option("--seeds", ba.suite.seeds, "Suite size")->capture_default_str();
  bench->add_option("--first-seed", ba.suite.first_seed, "Seed of the first suite matrix")->capture_default_str();
  bench->add_option("--rows", ba.suite.rows, "Matrix rows")->capture_default_str();
  bench->add_option("--cols", ba.suite.cols, "Matrix columns")->capture_default_str();
  bench->add_option("--outlier-cols", ba.suite.outlier_cols, "Outlier columns per matrix")->capture_default_str();
  bench->add_option("--outlier-scale", ba.suite.outlier_scale, "Outlier column scale")->capture_default_str();
  bench->add_option("--threads", ba.threads, "Workers (0 = hardware concurrency)")->capture_default_str();
  bench->add_option("--csv", ba.csv, "errors.csv output");
  bench->add_flag("--verbose", ba.verbose, "Median table on standard error");

  KvArgs ka;
  auto* kv = app.add_subcommand("kv-sim", "KV-cache generation simulation with byte accounting");
  kv->add_option("--layers", ka.config.layers, "Layers")->capture_default_str();
  kv->add_option("--dim", ka.config.dim, "Model dimension")->capture_default_str();
  kv->add_option("--prompt-len", ka.prompt_len, "Prefill tokens")->capture_default_str();
  kv->add_option("--gen-len", ka.gen_len, "Decode steps")->capture_default_str();
  kv->add_option("--bits", ka.config.bits, "Bit width (2, 4, 8; 16 = uncompressed)")->capture_default_str();
  kv->add_option("--chunk", ka.config.chunk_len, "Tokens per compression trigger")->capture_default_str();
  kv->add_option("--n", ka.config.n, "Decomposition length")->capture_default_str();
  kv->add_option("--seed", ka.seed, "Toy stack seed")->capture_default_str();
  kv->add_flag("--audit", ka.audit, "Compare scores against an uncompressed shadow cache");
  kv->add_option("--csv", ka.csv, "Trace CSV output");

  ImportArgs ia;
  auto* import = app.add_subcommand("import", "Convert a raw row-major f32 dump into a DQT1 file");
  import->add_option("--input", ia.input, "Raw little-endian f32 file")->required();
  import->add_option("--shape", ia.shape, "Comma-separated shape, e.g. 4096,4096")->required();
  import->add_option("--out", ia.output, "DQT1 output")->required();

  ExportArgs ea;
  auto* exporter = app.add_subcommand("export", "Write the raw f32 payload of a DQT1 float tensor");
  exporter->add_option("--input", ea.input, "DQT1 float tensor")->required();
  exporter->add_option("--out", ea.output, "Raw output")->required();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic outlier matrix as DQT1");
  synth->add_option("--rows", sa.rows, "Rows")->capture_default_str();
  synth->add_option("--cols", sa.cols, "Columns")->capture_default_str();
  synth->add_option("--outlier-cols", sa.outlier_cols, "Outlier columns")->capture_default_str();
  synth->add_option("--outlier-scale", sa.outlier_scale, "Outlier column scale")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Seed")->capture_default_str();
  synth->add_option("--out", sa.output, "DQT1 output")->required();

  if (!args.empty() && !args.front().starts_with('-')) {
    const auto subs = app.get_subcommands([](const CLI::App*) { return true; });
    const bool known = std::any_of(subs.begin(), subs.end(), [&](const CLI::App* s) { return s->get_name() == args.front(); });
    if (!known) {
      err << "decoquant: unknown subcommand '" << args.front() << "'\n";
      return kExitUnknownCommand;
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "decoquant: " << e.what() << '\n';
    return kExitInvalidParams;
  }

  try {
    if (*quantize) return cmd_quantize(qa, out);
    if (*dequant) return cmd_dequantize(da, out);
    if (*outliers) return cmd_analyze_outliers(oa, out);
    if (*bench) return cmd_bench(ba, out, err);
    if (*kv) return cmd_kv_sim(ka, out);
    if (*import) return cmd_import(ia, out);
    if (*exporter) return cmd_export(ea, out);
    if (*synth) return cmd_synth(sa, out);
  } catch (const UnknownName& e) {
    err << "decoquant: " << e.what() << '\n';
    return kExitUnknownCommand;
  } catch (const InvalidParams& e) {
    err << "decoquant: " << e.what() << '\n';
    return kExitInvalidParams;
  } catch (const Error& e) {
    err << "decoquant: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "decoquant: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUnknownCommand;
}

}  // namespace decoquant::cli
