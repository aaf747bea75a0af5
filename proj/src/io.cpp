#include "bgw/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bgw/errors.hpp"

namespace bgw {

namespace fs = std::filesystem;

namespace {

Probability probability_from_json(const Json& j) {
  if (j.is_string()) return Probability::parse(j.get<std::string>());
  if (j.is_number_integer() || j.is_number_unsigned()) return Probability::from_rational(Rational(j.get<long long>()));
  if (j.is_number_float()) return Probability::from_double(j.get<double>());
  throw ValidationError("probability must be a number or a string, got " + j.dump());
}

std::vector<double> doubles(const Json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

MatingFunction mating_from_json(const Json& m, std::size_t p, std::size_t q) {
  if (!m.is_object() || !m.contains("kind")) throw ValidationError("mating needs a 'kind'");
  const MatingKind kind = mating_kind_from_string(m.at("kind").get<std::string>());
  const Json params = m.value("params", Json::object());
  std::optional<Certificate> cert;
  if (m.contains("certificate")) {
    const Json& c = m.at("certificate");
    cert = Certificate{doubles(c.at("alpha"), "certificate.alpha"), {}};
    cert->beta = c.contains("beta") ? doubles(c.at("beta"), "certificate.beta")
                                    : std::vector<double>(cert->alpha.size(), 0.0);
  }
  MatingFunction f = MatingFunction::identity(1);
  switch (kind) {
    case MatingKind::identity:
      if (p != q) throw ValidationError("identity mating needs p == q");
      f = MatingFunction::identity(p);
      break;
    case MatingKind::perfect_fidelity:
      if (p != 1 || q != 2) throw ValidationError("perfect_fidelity needs p = 1, q = 2");
      f = MatingFunction::perfect_fidelity();
      break;
    case MatingKind::promiscuous:
      if (p != 1 || q != 2) throw ValidationError("promiscuous needs p = 1, q = 2");
      f = MatingFunction::promiscuous();
      break;
    case MatingKind::custom_table: {
      if (!params.contains("box") || !params.contains("table")) {
        throw ValidationError("custom_table params need 'box' and 'table'");
      }
      const Count box = params.at("box").get<Count>();
      std::vector<Count> cells;
      for (const auto& cell : params.at("table")) {
        if (cell.is_array()) {
          if (cell.size() != p) throw ValidationError("custom_table cell " + cell.dump() + " must have p entries");
          for (const auto& v : cell) cells.push_back(v.get<Count>());
        } else {
          if (p != 1) throw ValidationError("custom_table cells must be lists when p > 1");
          cells.push_back(cell.get<Count>());
        }
      }
      return MatingFunction::custom_table(p, q, box, std::move(cells), cert);
    }
  }
  return cert ? f.with_certificate(*cert) : f;
}

void put_number(std::string& out, double x) {
  if (!std::isfinite(x)) {
    out += "null";
    return;
  }
  out += format_double(x);
}

void dump_into(std::string& out, const OrderedJson& j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case OrderedJson::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        out += OrderedJson(it.key()).dump();
        out += ": ";
        dump_into(out, it.value(), indent + 2);
      }
      out += "\n" + close + "}";
      return;
    }
    case OrderedJson::value_t::array: {
      // Arrays of scalars stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const OrderedJson& v) { return v.is_primitive(); });
      if (j.empty()) {
        out += "[]";
        return;
      }
      if (flat) {
        out += "[";
        bool first = true;
        for (const auto& v : j) {
          if (!first) out += ", ";
          first = false;
          dump_into(out, v, indent);
        }
        out += "]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        dump_into(out, v, indent + 2);
      }
      out += "\n" + close + "]";
      return;
    }
    case OrderedJson::value_t::number_float:
      put_number(out, j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

ModelSpec parse_model(const Json& j, const std::string& name) {
  try {
    const auto p = j.at("p").get<std::size_t>();
    const auto q = j.at("q").get<std::size_t>();
    MatingFunction mating = mating_from_json(j.at("mating"), p, q);
    const Json& offspring = j.at("offspring");
    if (!offspring.is_array() || offspring.size() != p) {
      throw ValidationError("offspring must list one law per parent type (" + std::to_string(p) + ")");
    }
    std::vector<std::vector<Outcome>> laws;
    for (const auto& law : offspring) {
      std::vector<Outcome> outcomes;
      for (const auto& entry : law.at("support")) {
        if (!entry.is_array() || entry.size() != 2) {
          throw ValidationError("support entries are [children, probability], got " + entry.dump());
        }
        outcomes.push_back({entry[0].get<StateVector>(), probability_from_json(entry[1])});
      }
      laws.push_back(std::move(outcomes));
    }
    return ModelSpec(p, q, std::move(mating), std::move(laws), j.value("name", name));
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
}

ModelSpec load_model(const fs::path& path) {
  return parse_model(read_json(path), path.stem().string());
}

std::string dump_artifact(const OrderedJson& j) {
  std::string out;
  dump_into(out, j, 0);
  out += '\n';
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

void write_kernel(const TruncatedKernel& k, const fs::path& triplets, const fs::path& states) {
  std::string t;
  for (int i = 0; i < k.matrix.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(k.matrix, i); it; ++it) {
      t += std::to_string(it.row()) + ' ' + std::to_string(it.col()) + ' ' + format_double(it.value()) + '\n';
    }
  }
  write_text(triplets, t);

  std::ostringstream s;
  s << "# p=" << k.states.p() << " radius=" << k.radius()
    << " mode=" << (k.mode == BuildMode::exact ? "exact" : "mc") << " samples=" << k.samples << " seed=" << k.seed
    << '\n';
  s << "# index state absorbed escaped\n";
  for (std::size_t i = 0; i < k.size(); ++i) {
    std::string z;
    for (std::size_t c = 0; c < k.states.p(); ++c) z += (c ? "," : "") + std::to_string(k.states[i][c]);
    s << i << ' ' << z << ' ' << format_double(k.absorbed[static_cast<Eigen::Index>(i)]) << ' '
      << format_double(k.escaped[static_cast<Eigen::Index>(i)]) << '\n';
  }
  write_text(states, s.str());
}

TruncatedKernel read_kernel(const fs::path& triplets, const fs::path& states) {
  std::ifstream sin(states);
  if (!sin) throw DependencyError("kernel state map " + states.string() + " not found; run the kernel stage");
  std::string header;
  std::getline(sin, header);
  std::size_t p = 0;
  long long radius = 0;
  char mode[16] = {};
  unsigned long long samples = 0, seed = 0;
  if (std::sscanf(header.c_str(), "# p=%zu radius=%lld mode=%15s samples=%llu seed=%llu", &p, &radius, mode, &samples,
                  &seed) != 5) {
    throw ValidationError("malformed kernel header in " + states.string());
  }
  TruncatedKernel k;
  k.states = StateIndex(p, radius);
  k.mode = std::string(mode) == "exact" ? BuildMode::exact : BuildMode::monte_carlo;
  k.samples = samples;
  k.seed = seed;
  const auto n = static_cast<Eigen::Index>(k.states.size());
  k.absorbed = Eigen::VectorXd::Zero(n);
  k.escaped = Eigen::VectorXd::Zero(n);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(sin, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t idx = 0;
    std::string z;
    double absorbed = 0.0, escaped = 0.0;
    if (!(ls >> idx >> z >> absorbed >> escaped) || idx >= k.states.size()) {
      throw ValidationError("malformed kernel state line '" + line + "'");
    }
    if (parse_state(z) != k.states[idx]) {
      throw ValidationError("kernel state map disagrees with the index at " + std::to_string(idx));
    }
    k.absorbed[static_cast<Eigen::Index>(idx)] = absorbed;
    k.escaped[static_cast<Eigen::Index>(idx)] = escaped;
    ++rows;
  }
  if (rows != k.states.size()) throw ValidationError("kernel state map is incomplete");

  std::ifstream tin(triplets);
  if (!tin) throw DependencyError("kernel file " + triplets.string() + " not found; run the kernel stage");
  std::vector<Eigen::Triplet<double>> entries;
  long long i = 0, j = 0;
  double v = 0.0;
  while (tin >> i >> j >> v) {
    if (i < 0 || j < 0 || i >= n || j >= n) throw ValidationError("kernel triplet index out of range");
    entries.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
  }
  if (!tin.eof()) throw ValidationError("malformed kernel triplet file " + triplets.string());
  k.matrix = SparseRowMatrix(n, n);
  k.matrix.setFromTriplets(entries.begin(), entries.end());
  k.matrix.makeCompressed();
  return k;
}

std::string spec_digest(const ModelSpec& spec) {
  // FNV-1a over a canonical rendering of the model.
  std::ostringstream os;
  os << spec.p() << ' ' << spec.q() << ' ' << to_string(spec.mating().kind()) << ' ' << spec.mating().bound();
  for (Count c : spec.mating().cells()) os << ' ' << c;
  for (const auto& law : spec.laws()) {
    os << '|';
    for (const auto& o : law.outcomes) os << format_state(o.children) << ':' << o.prob.exact << ';';
  }
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

OrderedJson state_json(std::span<const Count> z) {
  OrderedJson a = OrderedJson::array();
  for (Count v : z) a.push_back(v);
  return a;
}

StateVector state_from_json(const Json& j) {
  if (j.is_number_integer()) return {j.get<Count>()};
  return j.get<StateVector>();
}

StateVector parse_state(const std::string& text) {
  StateVector z;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      z.push_back(std::stoll(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValidationError("cannot parse state '" + text + "'");
    }
  }
  if (z.empty()) throw ValidationError("empty state");
  return z;
}

}  // namespace bgw
