#include "av/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace av::nn {

namespace {
constexpr const char* kMagic = "av-checkpoint";
constexpr int kVersion = 1;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void Checkpoint::add(const std::string& name, const Mat& m) {
  tensors.emplace_back(name, m);
}

void Checkpoint::add(const Tensor& t) {
  if (t.name().empty()) throw std::invalid_argument("checkpoint: unnamed tensor");
  tensors.emplace_back(t.name(), t.to_mat());
}

const Mat& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw std::out_of_range("checkpoint: missing tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return true;
  return false;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << kMagic << " v" << kVersion << "\n";
  out << "seed " << seed << "\n";
  out << "step " << step << "\n";
  for (const auto& [k, v] : meta) out << "meta " << k << " " << v << "\n";
  for (const auto& [name, m] : tensors) {
    out << "tensor " << name << " " << m.rows << " " << m.cols << "\n";
    for (int64_t i = 0; i < m.size(); ++i) {
      if (i) out << ' ';
      out << fmt_double(m.v[static_cast<size_t>(i)]);
    }
    out << "\n";
  }
  out << "end\n";
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  Checkpoint ck;
  std::string line;
  if (!std::getline(in, line) || line.rfind(kMagic, 0) != 0)
    throw std::runtime_error("checkpoint: bad header in " + path);
  while (std::getline(in, line)) {
    if (line == "end") return ck;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "seed") {
      ls >> ck.seed;
    } else if (tag == "step") {
      ls >> ck.step;
    } else if (tag == "meta") {
      std::string k, v;
      ls >> k;
      std::getline(ls, v);
      if (!v.empty() && v.front() == ' ') v.erase(0, 1);
      ck.meta[k] = v;
    } else if (tag == "tensor") {
      std::string name;
      int64_t r, c;
      ls >> name >> r >> c;
      if (!ls || r < 0 || c < 0) throw std::runtime_error("checkpoint: bad tensor line");
      Mat m(r, c);
      if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing values");
      std::istringstream vs(line);
      for (int64_t i = 0; i < r * c; ++i)
        if (!(vs >> m.v[static_cast<size_t>(i)]))
          throw std::runtime_error("checkpoint: truncated values for " + name);
      ck.tensors.emplace_back(name, std::move(m));
    } else if (!tag.empty()) {
      throw std::runtime_error("checkpoint: unknown tag '" + tag + "'");
    }
  }
  throw std::runtime_error("checkpoint: missing end marker in " + path);
}

void Checkpoint::restore_into(std::vector<Tensor>& params) const {
  for (auto& p : params) {
    const Mat& m = get(p.name());
    if (m.rows != p.rows() || m.cols != p.cols())
      throw std::runtime_error("checkpoint: shape mismatch for '" + p.name() + "'");
    p.set_values(m.v);
  }
}

}  // namespace av::nn
