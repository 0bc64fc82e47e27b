/*
 * Copyright 2026 The DynST Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dynst/autodiff/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "dynst/error.hpp"

namespace dynst::ad {

namespace {

constexpr const char* kMagic = "dynst-checkpoint";
constexpr int kVersion = 1;

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view token) {
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw FormatError("checkpoint: bad number '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

const StoredArray& Checkpoint::find(const std::string& name) const {
  const auto it = std::find_if(arrays.begin(), arrays.end(),
                               [&](const StoredArray& a) { return a.name == name; });
  if (it == arrays.end()) {
    throw FormatError("checkpoint: missing tensor '" + name + "'");
  }
  return *it;
}

void write_checkpoint(std::ostream& out, const nlohmann::json& header,
                      const std::vector<NamedTensor>& tensors) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "header " << header.dump() << '\n';
  std::string line;
  for (const auto& [name, t] : tensors) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw FormatError("checkpoint: invalid tensor name '" + name + "'");
    }
    out << "param " << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
    line.clear();
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i) line.push_back(' ');
      append_double(line, t.data()[i]);
    }
    out << line << '\n';
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ckpt;
  std::string line;
  if (!std::getline(in, line) ||
      line != std::string(kMagic) + " " + std::to_string(kVersion)) {
    throw FormatError("checkpoint: bad magic line");
  }
  if (!std::getline(in, line) || line.rfind("header ", 0) != 0) {
    throw FormatError("checkpoint: missing header line");
  }
  try {
    ckpt.header = nlohmann::json::parse(line.substr(7));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header JSON: ") + e.what());
  }
  while (std::getline(in, line)) {
    if (line == "end") return ckpt;
    std::istringstream decl(line);
    std::string kw;
    StoredArray arr;
    std::size_t rank = 0;
    if (!(decl >> kw >> arr.name >> rank) || kw != "param") {
      throw FormatError("checkpoint: bad param line '" + line + "'");
    }
    arr.shape.resize(rank);
    for (auto& d : arr.shape) {
      if (!(decl >> d)) throw FormatError("checkpoint: bad shape for " + arr.name);
    }
    if (!std::getline(in, line)) {
      throw FormatError("checkpoint: missing values for " + arr.name);
    }
    const std::size_t n = num_elements(arr.shape);
    arr.values.reserve(n);
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto sp = rest.find(' ');
      arr.values.push_back(parse_double(rest.substr(0, sp)));
      if (sp == std::string_view::npos) break;
      rest.remove_prefix(sp + 1);
    }
    if (arr.values.size() != n) {
      throw FormatError("checkpoint: " + arr.name + " expects " +
                        std::to_string(n) + " values, found " +
                        std::to_string(arr.values.size()));
    }
    ckpt.arrays.push_back(std::move(arr));
  }
  throw FormatError("checkpoint: missing end marker");
}

void save_checkpoint(const std::filesystem::path& path,
                     const nlohmann::json& header,
                     const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path);
  if (!out) throw FormatError("checkpoint: cannot open " + path.string());
  write_checkpoint(out, header, tensors);
  if (!out) throw FormatError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

void restore_parameters(const Checkpoint& checkpoint,
                        const std::vector<NamedTensor>& tensors) {
  for (const auto& [name, t] : tensors) {
    const StoredArray& arr = checkpoint.find(name);
    if (arr.shape != t.shape()) {
      throw ShapeError("checkpoint: " + name + " stored as " +
                       shape_to_string(arr.shape) + ", model expects " +
                       shape_to_string(t.shape()));
    }
    Tensor target = t;
    auto dst = target.mutable_data();
    std::copy(arr.values.begin(), arr.values.end(), dst.begin());
  }
}

}  // namespace dynst::ad
