#include "protomil/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "protomil/error.hpp"
#include "protomil/text.hpp"

namespace protomil {

namespace {

void write_values(std::ostream& out, std::string_view tag, std::span<const double> values) {
  out << tag;
  for (double v : values) out << ' ' << format_double(v);
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::istringstream line(std::string_view expected_tag) {
    std::string text;
    do {
      if (!std::getline(in_, text)) {
        throw DataError("checkpoint truncated before '" + std::string(expected_tag) + "'");
      }
      ++line_no_;
      if (!text.empty() && text.back() == '\r') text.pop_back();
    } while (text.empty());
    std::istringstream fields(text);
    if (expected_tag.empty()) return fields;  // untagged data line
    std::string tag;
    fields >> tag;
    if (tag != expected_tag) {
      throw DataError("checkpoint line " + std::to_string(line_no_) + ": expected '" +
                      std::string(expected_tag) + "', found '" + tag + "'");
    }
    return fields;
  }

  std::size_t count(std::string_view tag) {
    auto fields = line(tag);
    long long n = -1;
    if (!(fields >> n) || n < 0) throw DataError("checkpoint: bad value for " + std::string(tag));
    return static_cast<std::size_t>(n);
  }

  std::vector<double> values(std::istringstream& fields, std::size_t n, std::string_view what) {
    std::vector<double> out;
    out.reserve(n);
    std::string token;
    while (fields >> token) out.push_back(parse_double(token, what));
    if (out.size() != n) {
      throw DataError("checkpoint: expected " + std::to_string(n) + " values for " +
                      std::string(what) + ", found " + std::to_string(out.size()));
    }
    return out;
  }

  std::vector<double> tagged_values(std::string_view tag, std::size_t n) {
    auto fields = line(tag);
    return values(fields, n, tag);
  }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

AdamState read_adam(Reader& r, std::string_view block, std::size_t n) {
  auto header = r.line("adam");
  std::string name;
  long long t = -1;
  header >> name >> t;
  if (name != block || t < 0) throw DataError("checkpoint: bad adam section for " + std::string(block));
  AdamState s;
  s.t = static_cast<std::uint64_t>(t);
  s.m = r.tagged_values("m", n);
  s.v = r.tagged_values("v", n);
  return s;
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  const Matrix& P = ckpt.params.prototypes;
  out << "protomil-checkpoint " << kCheckpointVersion << '\n';
  out << "D " << P.rows() << '\n';
  out << "L " << P.cols() << '\n';
  out << "A " << ckpt.aggregators.size() << '\n';
  out << "aggregators " << ckpt.aggregators.to_string() << '\n';
  out << "norm_eps " << format_double(ckpt.norm_eps) << '\n';
  out << "prototypes\n";
  for (std::size_t d = 0; d < P.rows(); ++d) {
    auto row = P.row(d);
    for (std::size_t l = 0; l < row.size(); ++l) out << (l ? " " : "") << format_double(row[l]);
    out << '\n';
  }
  write_values(out, "beta", ckpt.params.beta);
  out << "beta0 " << format_double(ckpt.params.beta0) << '\n';
  out << "optimizer " << (ckpt.optimizer ? 1 : 0) << '\n';
  if (ckpt.optimizer) {
    auto section = [&](std::string_view name, const AdamState& s) {
      out << "adam " << name << ' ' << s.t << '\n';
      write_values(out, "m", s.m);
      write_values(out, "v", s.v);
    };
    section("prototypes", ckpt.optimizer->prototypes);
    section("beta", ckpt.optimizer->beta);
    section("beta0", ckpt.optimizer->beta0);
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  {
    auto fields = r.line("protomil-checkpoint");
    int version = 0;
    if (!(fields >> version) || version != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version");
    }
  }
  Checkpoint ckpt;
  const std::size_t D = r.count("D");
  const std::size_t L = r.count("L");
  const std::size_t A = r.count("A");
  {
    auto fields = r.line("aggregators");
    std::string list;
    fields >> list;
    ckpt.aggregators = AggregatorSet::parse(list);
    if (ckpt.aggregators.size() != A) throw DataError("checkpoint: A does not match aggregator list");
  }
  {
    auto fields = r.line("norm_eps");
    ckpt.norm_eps = r.values(fields, 1, "norm_eps")[0];
  }
  r.line("prototypes");
  ckpt.params.prototypes = Matrix(D, L);
  for (std::size_t d = 0; d < D; ++d) {
    auto fields = r.line("");
    auto row = r.values(fields, L, "prototype row");
    std::ranges::copy(row, ckpt.params.prototypes.row(d).begin());
  }
  ckpt.params.beta = r.tagged_values("beta", D * A);
  ckpt.params.beta0 = r.tagged_values("beta0", 1)[0];
  const std::size_t has_optimizer = r.count("optimizer");
  if (has_optimizer > 1) throw DataError("checkpoint: optimizer flag must be 0 or 1");
  if (has_optimizer == 1) {
    OptimizerState s;
    s.prototypes = read_adam(r, "prototypes", D * L);
    s.beta = read_adam(r, "beta", D * A);
    s.beta0 = read_adam(r, "beta0", 1);
    ckpt.optimizer = std::move(s);
  }
  r.line("end");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint file not found: " + path.string());
  return read_checkpoint(in);
}

}  // namespace protomil
