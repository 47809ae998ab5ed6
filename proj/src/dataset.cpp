#include "equiroute/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "equiroute/rng.hpp"
#include "json.hpp"

namespace equiroute {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string coord(std::size_t n, std::size_t j) {
  return "(" + std::to_string(n) + "," + std::to_string(j) + ")";
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("missing file: " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_for_write(const fs::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  return out;
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw NumericsError("cannot format value");
  out.append(buf, end);
}

}  // namespace

std::string format_real(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

namespace {

double parse_double(std::string_view text, const std::string& where) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("cannot parse number '" + std::string(text) + "' at " + where);
  }
  return v;
}

Matrix read_csv_matrix(const fs::path& file, std::size_t expect_rows, std::size_t expect_cols) {
  const std::string text = read_file(file);
  const std::string name = file.filename().string();
  std::vector<double> values;
  values.reserve(expect_rows * expect_cols);
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const auto cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
      values.push_back(parse_double(cell, name + " " + coord(row, col)));
      ++col;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (col != expect_cols) {
      throw ValidationError("dimension mismatch: " + name + " row " + std::to_string(row) + " has " +
                            std::to_string(col) + " columns, expected " +
                            std::to_string(expect_cols));
    }
    ++row;
  }
  if (row != expect_rows) {
    throw ValidationError("dimension mismatch: " + name + " has " + std::to_string(row) +
                          " rows, expected " + std::to_string(expect_rows));
  }
  return Matrix(expect_rows, expect_cols, std::move(values));
}

void write_csv_matrix(const fs::path& file, const Matrix& m) {
  std::string out;
  out.reserve(m.size() * 24);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out.push_back(',');
      append_double(out, m(r, c));
    }
    out.push_back('\n');
  }
  auto f = open_for_write(file);
  f << out;
}

}  // namespace

void RoutingTable::validate() const {
  const std::size_t k = models.size();
  const std::size_t n = query_ids.size();
  if (k < 2) throw ValidationError("routing table needs at least 2 models, got " + std::to_string(k));
  std::set<std::string> names;
  for (std::size_t j = 0; j < k; ++j) {
    if (models[j].id != j) {
      throw ValidationError("model ids must be contiguous 0..K-1; model at position " +
                            std::to_string(j) + " has id " + std::to_string(models[j].id));
    }
    if (!names.insert(models[j].name).second) {
      throw ValidationError("duplicate model name '" + models[j].name + "'");
    }
    if (!(models[j].unit_price >= 0.0) || !std::isfinite(models[j].unit_price)) {
      throw ValidationError("model " + std::to_string(j) + " has invalid unit_price");
    }
  }
  if (n < 1) throw ValidationError("routing table needs at least one query");
  if (embeddings.rows() != n) {
    throw ValidationError("dimension mismatch: " + std::to_string(embeddings.rows()) +
                          " embeddings for " + std::to_string(n) + " queries");
  }
  if (embeddings.cols() < 1) throw ValidationError("embedding dimension must be >= 1");
  if (perf.rows() != n || perf.cols() != k) {
    throw ValidationError("dimension mismatch: perf is " + shape_string(perf) + ", expected " +
                          std::to_string(n) + "x" + std::to_string(k));
  }
  if (cost.rows() != n || cost.cols() != k) {
    throw ValidationError("dimension mismatch: cost is " + shape_string(cost) + ", expected " +
                          std::to_string(n) + "x" + std::to_string(k));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < embeddings.cols(); ++d) {
      if (!std::isfinite(embeddings(i, d))) {
        throw ValidationError("non-finite embedding value at " + coord(i, d));
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(perf(i, j))) throw ValidationError("non-finite perf at " + coord(i, j));
      if (!std::isfinite(cost(i, j))) throw ValidationError("non-finite cost at " + coord(i, j));
      if (!(cost(i, j) > 0.0)) throw ValidationError("nonpositive cost at " + coord(i, j));
    }
  }
}

RoutingTable load_table(const fs::path& dir) {
  RoutingTable t;

  json models;
  try {
    models = json::parse(read_file(dir / "models.json"));
  } catch (const json::exception& e) {
    throw ValidationError("models.json: " + std::string(e.what()));
  }
  if (!models.is_array()) throw ValidationError("models.json must be an array");
  try {
    for (const auto& m : models) {
      t.models.push_back({m.at("id").get<std::size_t>(), m.at("name").get<std::string>(),
                          m.at("unit_price").get<double>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError("models.json: " + std::string(e.what()));
  }

  const std::string queries = read_file(dir / "queries.jsonl");
  std::vector<double> emb;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::istringstream lines(queries);
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      const auto& e = rec.at("embedding");
      if (line_no == 0) dim = e.size();
      if (e.size() != dim) {
        throw ValidationError("dimension mismatch: query " + std::to_string(line_no) + " has embedding dim " +
                              std::to_string(e.size()) + ", expected " + std::to_string(dim));
      }
      t.query_ids.push_back(rec.at("query_id").get<std::string>());
      for (std::size_t d = 0; d < e.size(); ++d) {
        if (!e[d].is_number()) throw ValidationError("non-finite embedding value at " + coord(line_no, d));
        emb.push_back(e[d].get<double>());
      }
    } catch (const json::exception& ex) {
      throw ValidationError("queries.jsonl line " + std::to_string(line_no + 1) + ": " + ex.what());
    }
    ++line_no;
  }
  const std::size_t n = t.query_ids.size();
  t.embeddings = Matrix(n, dim, std::move(emb));
  t.perf = read_csv_matrix(dir / "perf.csv", n, t.models.size());
  t.cost = read_csv_matrix(dir / "cost.csv", n, t.models.size());
  t.validate();
  return t;
}

void save_table(const RoutingTable& table, const fs::path& dir) {
  table.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  json models = json::array();
  for (const auto& m : table.models) {
    models.push_back({{"id", m.id}, {"name", m.name}, {"unit_price", m.unit_price}});
  }
  {
    auto f = open_for_write(dir / "models.json");
    f << models.dump(2) << '\n';
  }
  {
    std::string out;
    for (std::size_t i = 0; i < table.num_queries(); ++i) {
      out += "{\"query_id\":";
      out += json(table.query_ids[i]).dump();
      out += ",\"embedding\":[";
      const auto row = table.embeddings.row(i);
      for (std::size_t d = 0; d < row.size(); ++d) {
        if (d) out.push_back(',');
        append_double(out, row[d]);
      }
      out += "]}\n";
    }
    auto f = open_for_write(dir / "queries.jsonl");
    f << out;
  }
  write_csv_matrix(dir / "perf.csv", table.perf);
  write_csv_matrix(dir / "cost.csv", table.cost);
}

SplitRatio parse_split_ratio(const std::string& text) {
  SplitRatio r;
  double parts[3];
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t colon = text.find(':', start);
    if ((i < 2) == (colon == std::string::npos)) {
      throw ValidationError("split ratio must look like 3:1:6, got '" + text + "'");
    }
    parts[i] = parse_double(std::string_view(text).substr(start, colon == std::string::npos ? std::string::npos : colon - start),
                            "split ratio");
    start = colon + 1;
  }
  r.train = parts[0];
  r.valid = parts[1];
  r.test = parts[2];
  return r;
}

SplitIndices make_split(std::size_t n, const SplitRatio& ratio, std::uint64_t seed) {
  const double parts[3] = {ratio.train, ratio.valid, ratio.test};
  for (double p : parts) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ValidationError("split ratio components must be positive");
  }
  if (n < 3) throw ValidationError("cannot split " + std::to_string(n) + " queries into 3 parts");

  const double total = parts[0] + parts[1] + parts[2];
  std::size_t sizes[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * parts[i] / total));
    assigned += sizes[i];
  }
  for (int i = 0; assigned < n; i = (i + 1) % 3, ++assigned) ++sizes[i];

  std::vector<std::size_t> order = all_indices(n);
  Rng rng(seed);
  rng.shuffle(order);

  SplitIndices s;
  s.seed = seed;
  auto first = order.begin();
  s.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes[0]));
  first += static_cast<std::ptrdiff_t>(sizes[0]);
  s.valid.assign(first, first + static_cast<std::ptrdiff_t>(sizes[1]));
  first += static_cast<std::ptrdiff_t>(sizes[1]);
  s.test.assign(first, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.valid.begin(), s.valid.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

SplitIndices full_split(std::size_t n) {
  auto all = all_indices(n);
  return {all, all, all, 0};
}

void save_split(const SplitIndices& split, const fs::path& file) {
  const json j = {{"seed", split.seed}, {"train", split.train}, {"valid", split.valid}, {"test", split.test}};
  auto f = open_for_write(file);
  f << j.dump() << '\n';
}

SplitIndices load_split(const fs::path& file, std::size_t n_queries) {
  SplitIndices s;
  try {
    const json j = json::parse(read_file(file));
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.valid = j.at("valid").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ValidationError(file.filename().string() + ": " + e.what());
  }
  std::vector<int> seen(n_queries, 0);
  for (const auto* part : {&s.train, &s.valid, &s.test}) {
    for (std::size_t i : *part) {
      if (i >= n_queries) throw ValidationError("split index " + std::to_string(i) + " out of range");
      if (seen[i]++) throw ValidationError("split index " + std::to_string(i) + " appears twice");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw ValidationError("split does not cover every query");
  }
  return s;
}

}  // namespace equiroute
