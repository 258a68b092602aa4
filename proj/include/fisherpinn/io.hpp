#pragma once

#include "fisherpinn/fisher.hpp"
#include "fisherpinn/nn.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fisherpinn::io {

using json = nlohmann::json;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line = 0) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("invalid number '" + std::string(s) + "'", line);
  return v;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ParseError("expected " + std::to_string(t.header.size()) + " columns, found " + std::to_string(cells.size()), n);
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(n);
  }
  if (t.header.empty()) throw ParseError("missing CSV header", n ? n : 1);
  return t;
}

inline std::string join(const std::vector<std::string>& cells, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += sep;
    out += cells[i];
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

inline json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("expected a numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError("expected a numeric array");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vector(m.row(r).transpose())));
  return rows;
}

inline Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw ParseError("matrix row count mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector row = vector_from_json(j[static_cast<std::size_t>(r)]);
    if (row.size() != cols) throw ParseError("matrix column count mismatch");
    m.row(r) = row.transpose();
  }
  return m;
}

// ---------------------------------------------------------------------------
// Fisher fields

inline std::vector<std::string> field_coordinate_names(const FisherField& f) {
  if (f.samples.empty()) return f.domain.coordinate_names;
  const auto ns = static_cast<std::size_t>(f.samples.front().state.size());
  const auto ni = static_cast<std::size_t>(f.samples.front().input.size());
  if (f.domain.coordinate_names.size() == ns + ni) return f.domain.coordinate_names;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < ns; ++i) names.push_back("x" + std::to_string(i));
  for (std::size_t i = 0; i < ni; ++i) names.push_back("u" + std::to_string(i));
  return names;
}

inline std::string field_to_csv(const FisherField& f) {
  std::vector<std::string> header = field_coordinate_names(f);
  for (const char* c : {"g", "sigma_max_sq", "skip_flag"}) header.emplace_back(c);
  std::string out = join(header) + "\n";
  for (const auto& s : f.samples) {
    std::vector<std::string> cells;
    for (Eigen::Index i = 0; i < s.state.size(); ++i) cells.push_back(format_double(s.state[i]));
    for (Eigen::Index i = 0; i < s.input.size(); ++i) cells.push_back(format_double(s.input[i]));
    cells.push_back(format_double(s.g));
    cells.push_back(format_double(s.sigma_max_sq));
    cells.push_back(s.skipped ? "1" : "0");
    out += join(cells) + "\n";
  }
  return out;
}

inline json domain_to_json(const DomainDescriptor& d) {
  return {{"coordinates", d.coordinate_names}, {"lower", d.lower}, {"upper", d.upper},
          {"scheme", d.scheme},                {"volume", d.volume}};
}

inline json field_to_json(const FisherField& f) {
  json samples = json::array();
  for (const auto& s : f.samples) {
    json js = {{"state", to_json(s.state)}, {"input", to_json(s.input)}, {"g", s.g},
               {"sigma_max_sq", s.sigma_max_sq}, {"skipped", s.skipped}};
    if (s.skipped) js["skip_reason"] = s.skip_reason;
    samples.push_back(std::move(js));
  }
  return {{"format", "fisherpinn.fisher_field"},
          {"version", 1},
          {"policy", to_string(f.policy)},
          {"domain", domain_to_json(f.domain)},
          {"sample_count", f.size()},
          {"valid_count", f.valid_count()},
          {"samples", std::move(samples)}};
}

// ---------------------------------------------------------------------------
// Network checkpoints

inline constexpr int kCheckpointVersion = 1;

inline json network_to_json(const nn::NetworkParams& p) {
  json layers = json::array();
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    layers.push_back({{"width", p.layers[l].width},
                      {"activation", nn::to_string(p.layers[l].activation)},
                      {"weights", to_json(p.weights[l])},
                      {"bias", to_json(p.biases[l])}});
  return {{"format", "fisherpinn.network"},
          {"version", kCheckpointVersion},
          {"input_dim", p.input_dim},
          {"output_dim", p.output_dim},
          {"architecture", nn::describe(p.layers)},
          {"input_offset", to_json(p.input_offset)},
          {"input_scale", to_json(p.input_scale)},
          {"layers", std::move(layers)}};
}

inline nn::NetworkParams network_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "fisherpinn.network")
      throw ParseError("not a fisherpinn network checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw ParseError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
    nn::NetworkParams p;
    p.input_dim = j.at("input_dim").get<int>();
    p.output_dim = j.at("output_dim").get<int>();
    p.input_offset = vector_from_json(j.at("input_offset"));
    p.input_scale = vector_from_json(j.at("input_scale"));
    int prev = p.input_dim;
    for (const auto& jl : j.at("layers")) {
      nn::LayerSpec spec{jl.at("width").get<int>(), nn::activation_from_string(jl.at("activation").get<std::string>())};
      if (spec.width < 1) throw ParseError("layer width must be positive");
      p.layers.push_back(spec);
      p.weights.push_back(matrix_from_json(jl.at("weights"), spec.width, prev));
      p.biases.push_back(vector_from_json(jl.at("bias")));
      prev = spec.width;
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  } catch (const NumericError& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const nn::NetworkParams& p) {
  write_json(path, network_to_json(p));
}

inline nn::NetworkParams load_checkpoint(const std::filesystem::path& path) {
  try {
    return network_from_json(read_json(path));
  } catch (const ParseError& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace fisherpinn::io
