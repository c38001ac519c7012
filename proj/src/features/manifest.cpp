#include "vld/features/manifest.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include <json.hpp>

#include "vld/tensor/errors.hpp"

namespace vld::features {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

class BlobWriter {
 public:
  ojson add(const std::vector<float>& v) {
    ojson ref;
    ref["offset"] = count_;
    ref["len"] = v.size();
    for (float f : v) {
      const auto u = std::bit_cast<std::uint32_t>(f);
      for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
    count_ += v.size();
    return ref;
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
  std::uint64_t count_ = 0;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class LineContext {
 public:
  LineContext(const fs::path& file, std::size_t line) : prefix_(file.string() + " line " + std::to_string(line)) {}
  const std::string& prefix() const { return prefix_; }
  [[noreturn]] void schema(const std::string& msg) const { throw SchemaError(prefix_ + ": " + msg); }

 private:
  std::string prefix_;
};

class BlobReader {
 public:
  explicit BlobReader(std::string bytes) : bytes_(std::move(bytes)) {
    if (bytes_.size() % 4 != 0) {
      throw CorruptionError(std::string(kFeaturesFile) + " has " + std::to_string(bytes_.size()) +
                            " bytes, not a whole number of floats");
    }
  }
  std::uint64_t floats() const { return bytes_.size() / 4; }

  std::vector<float> read(const ojson& ref, const LineContext& ctx, const std::string& what) const {
    if (!ref.is_object() || !ref.contains("offset") || !ref.contains("len")) {
      ctx.schema(what + " must be an object with offset and len");
    }
    const auto& off = ref["offset"];
    const auto& len = ref["len"];
    if (!off.is_number_unsigned() && !(off.is_number_integer() && off.get<std::int64_t>() >= 0)) {
      ctx.schema(what + ".offset must be a non-negative integer");
    }
    if (!len.is_number_unsigned() && !(len.is_number_integer() && len.get<std::int64_t>() >= 0)) {
      ctx.schema(what + ".len must be a non-negative integer");
    }
    const auto o = off.get<std::uint64_t>();
    const auto n = len.get<std::uint64_t>();
    if (o > floats() || n > floats() - o) {
      throw CorruptionError(ctx.prefix() + ": " + what + " reads floats [" + std::to_string(o) + ", " +
                            std::to_string(o + n) + ") but " + kFeaturesFile + " holds " + std::to_string(floats()));
    }
    std::vector<float> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[(o + i) * 4 + b])) << (8 * b);
      }
      out[i] = std::bit_cast<float>(u);
    }
    return out;
  }

 private:
  std::string bytes_;
};

std::vector<std::string> read_tokens(const ojson& v, const LineContext& ctx, const std::string& field) {
  if (!v.is_array()) ctx.schema(field + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& t : v) {
    if (!t.is_string()) ctx.schema(field + " must be an array of strings");
    out.push_back(t.get<std::string>());
  }
  return out;
}

float read_unit_number(const ojson& v, const LineContext& ctx, const std::string& what) {
  if (!v.is_number()) ctx.schema(what + " must be a number");
  return static_cast<float>(v.get<double>());
}

void check_keys(const ojson& obj, const std::set<std::string>& allowed, const LineContext& ctx,
                const std::string& what) {
  for (const auto& [k, _] : obj.items()) {
    if (!allowed.count(k)) ctx.schema("unknown field '" + k + "' in " + what);
  }
}

ImageRecord parse_record(const ojson& j, const BlobReader& blob, const LineContext& ctx) {
  if (!j.is_object()) ctx.schema("expected a JSON object");
  check_keys(j, {"id", "global", "regions", "labels", "caption", "question", "answers"}, ctx, "record");
  if (!j.contains("id") || !j["id"].is_string()) ctx.schema("missing string field 'id'");
  ImageRecord rec;
  rec.id = j["id"].get<std::string>();

  if (j.contains("global")) rec.global = blob.read(j["global"], ctx, "global");
  if (j.contains("regions")) {
    const auto& arr = j["regions"];
    if (!arr.is_array()) ctx.schema("regions must be an array");
    std::vector<Region> regions;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& r = arr[i];
      const std::string what = "regions[" + std::to_string(i) + "]";
      if (!r.is_object()) ctx.schema(what + " must be an object");
      check_keys(r, {"box", "score", "offset", "len"}, ctx, what);
      if (!r.contains("box") || !r["box"].is_array() || r["box"].size() != 4) ctx.schema(what + ".box must be [x1,y1,x2,y2]");
      if (!r.contains("score")) ctx.schema(what + " has no score");
      Region reg;
      reg.box.x1 = read_unit_number(r["box"][0], ctx, what + ".box");
      reg.box.y1 = read_unit_number(r["box"][1], ctx, what + ".box");
      reg.box.x2 = read_unit_number(r["box"][2], ctx, what + ".box");
      reg.box.y2 = read_unit_number(r["box"][3], ctx, what + ".box");
      reg.box.score = read_unit_number(r["score"], ctx, what + ".score");
      reg.feature = blob.read(r, ctx, what);
      regions.push_back(std::move(reg));
    }
    rec.regions = std::move(regions);
  }
  if (j.contains("labels")) {
    const auto& arr = j["labels"];
    if (!arr.is_array()) ctx.schema("labels must be an array");
    std::vector<Label> labels;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& l = arr[i];
      const std::string what = "labels[" + std::to_string(i) + "]";
      if (!l.is_object()) ctx.schema(what + " must be an object");
      check_keys(l, {"text", "score", "offset", "len"}, ctx, what);
      if (!l.contains("text") || !l["text"].is_string()) ctx.schema(what + " has no text");
      Label lab;
      lab.text = l["text"].get<std::string>();
      if (l.contains("score")) lab.score = read_unit_number(l["score"], ctx, what + ".score");
      lab.embedding = blob.read(l, ctx, what);
      labels.push_back(std::move(lab));
    }
    rec.labels = std::move(labels);
  }
  if (j.contains("caption")) rec.caption = read_tokens(j["caption"], ctx, "caption");
  if (j.contains("question")) rec.question = read_tokens(j["question"], ctx, "question");
  if (j.contains("answers")) rec.answers = read_tokens(j["answers"], ctx, "answers");

  try {
    rec.validate();
  } catch (const SchemaError& e) {
    throw SchemaError(ctx.prefix() + ": " + e.what());
  }
  return rec;
}

}  // namespace

void write_manifest(const std::vector<ImageRecord>& records, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());

  BlobWriter blob;
  std::string lines;
  std::set<std::string> ids;
  for (const auto& rec : records) {
    rec.validate();
    if (!ids.insert(rec.id).second) throw SchemaError("duplicate record id '" + rec.id + "'");
    ojson j;
    j["id"] = rec.id;
    if (rec.global) j["global"] = blob.add(*rec.global);
    if (rec.regions) {
      j["regions"] = ojson::array();
      for (const auto& r : *rec.regions) {
        ojson e;
        e["box"] = {r.box.x1, r.box.y1, r.box.x2, r.box.y2};
        e["score"] = r.box.score;
        const auto ref = blob.add(r.feature);
        e["offset"] = ref["offset"];
        e["len"] = ref["len"];
        j["regions"].push_back(std::move(e));
      }
    }
    if (rec.labels) {
      j["labels"] = ojson::array();
      for (const auto& l : *rec.labels) {
        ojson e;
        e["text"] = l.text;
        e["score"] = l.score;
        const auto ref = blob.add(l.embedding);
        e["offset"] = ref["offset"];
        e["len"] = ref["len"];
        j["labels"].push_back(std::move(e));
      }
    }
    if (rec.caption) j["caption"] = *rec.caption;
    if (rec.question) j["question"] = *rec.question;
    if (rec.answers) j["answers"] = *rec.answers;
    lines += j.dump();
    lines += '\n';
  }
  write_file(dir / kManifestFile, lines);
  write_file(dir / kFeaturesFile, blob.bytes());
}

std::vector<ImageRecord> load_manifest(const fs::path& dir) {
  const fs::path manifest = dir / kManifestFile;
  const std::string text = read_file(manifest);
  const fs::path features = dir / kFeaturesFile;
  const BlobReader blob(fs::exists(features) ? read_file(features) : std::string());

  std::vector<ImageRecord> records;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    const LineContext ctx(manifest, line_no);
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestionError(ctx.prefix() + ": malformed JSON (" + e.what() + ")");
    }
    auto rec = parse_record(j, blob, ctx);
    if (!ids.insert(rec.id).second) ctx.schema("duplicate record id '" + rec.id + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace vld::features
