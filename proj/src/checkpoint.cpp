#include "mash/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mash {

namespace {

constexpr char kMagic[] = "MASHV1\n";
constexpr std::size_t kMagicSize = sizeof kMagic - 1;
constexpr double kConfigVersion = 1.0;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) {
    if (p > bytes_.size()) throw ValidationError("checkpoint: offset past end of file");
    pos_ = p;
  }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ValidationError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::vector<double> config_fields(const ModelConfig& c) {
  const AttentionConfig& a = c.attention;
  return {kConfigVersion,
          static_cast<double>(c.blocks),
          static_cast<double>(c.d_model),
          static_cast<double>(a.heads),
          static_cast<double>(a.head_dim),
          static_cast<double>(c.vocab),
          static_cast<double>(c.mlp_hidden),
          static_cast<double>(c.encoder_dim),
          static_cast<double>(c.frames),
          static_cast<double>(c.grid_h),
          static_cast<double>(c.grid_w),
          static_cast<double>(c.seed >> 32),
          static_cast<double>(c.seed & 0xffffffffULL),
          a.rope_base,
          static_cast<double>(a.rope_scheme),
          static_cast<double>(a.mask_mode),
          static_cast<double>(a.temporal_attn),
          static_cast<double>(a.spatial_attn),
          a.disentangle ? 1.0 : 0.0};
}

int as_int(double v) {
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ValidationError("checkpoint: bad config field");
  return static_cast<int>(v);
}

ModelConfig config_from(const std::vector<double>& f) {
  if (f.size() != 19 || f[0] != kConfigVersion) {
    throw ValidationError("checkpoint: unsupported config record");
  }
  ModelConfig c;
  c.blocks = as_int(f[1]);
  c.d_model = as_int(f[2]);
  c.attention.heads = as_int(f[3]);
  c.attention.head_dim = as_int(f[4]);
  c.vocab = as_int(f[5]);
  c.mlp_hidden = as_int(f[6]);
  c.encoder_dim = as_int(f[7]);
  c.frames = as_int(f[8]);
  c.grid_h = as_int(f[9]);
  c.grid_w = as_int(f[10]);
  c.seed = (static_cast<std::uint64_t>(f[11]) << 32) | static_cast<std::uint64_t>(f[12]);
  c.attention.rope_base = f[13];
  const int scheme = as_int(f[14]), mode = as_int(f[15]), ta = as_int(f[16]), sa = as_int(f[17]);
  if (scheme < 0 || scheme > 2 || mode < 0 || mode > 1 || ta < 0 || ta > 1 || sa < 0 || sa > 1) {
    throw ValidationError("checkpoint: bad enum in config record");
  }
  c.attention.rope_scheme = static_cast<RopeScheme>(scheme);
  c.attention.mask_mode = static_cast<MaskMode>(mode);
  c.attention.temporal_attn = static_cast<Direction>(ta);
  c.attention.spatial_attn = static_cast<Direction>(sa);
  c.attention.disentangle = f[18] != 0.0;
  c.validate();
  return c;
}

struct Entry {
  std::string name;
  std::vector<std::uint64_t> dims;
  const double* data = nullptr;
  std::size_t count = 0;
};

}  // namespace

std::string encode_checkpoint(const ModelConfig& cfg, const ModelParams& params) {
  const std::vector<double> fields = config_fields(cfg);
  std::vector<Entry> entries{{"__config__", {fields.size()}, fields.data(), fields.size()}};
  params.visit([&](const std::string& name, const Mat& m) {
    entries.push_back({name,
                       {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                       m.data(),
                       static_cast<std::size_t>(m.size())});
  });

  std::size_t header = kMagicSize + 8;
  for (const Entry& e : entries) header += 8 + e.name.size() + 8 + 8 * e.dims.size() + 8;

  std::string out(kMagic, kMagicSize);
  put_u64(out, entries.size());
  std::size_t offset = header;
  for (const Entry& e : entries) {
    put_u64(out, e.name.size());
    out += e.name;
    put_u64(out, e.dims.size());
    for (std::uint64_t d : e.dims) put_u64(out, d);
    put_u64(out, offset);
    offset += 8 * e.count;
  }
  std::uint64_t checksum = 0;
  for (const Entry& e : entries) {
    for (std::size_t i = 0; i < e.count; ++i) {
      const std::size_t at = out.size();
      put_u64(out, std::bit_cast<std::uint64_t>(e.data[i]));
      for (std::size_t b = at; b < out.size(); ++b) checksum += static_cast<unsigned char>(out[b]);
    }
  }
  put_u64(out, checksum);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(kMagicSize) != std::string(kMagic, kMagicSize)) {
    throw ValidationError("checkpoint: bad magic");
  }
  const std::uint64_t count = r.u64();
  if (count > 1'000'000) throw ValidationError("checkpoint: implausible entry count");
  struct Raw {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::uint64_t offset = 0, elements = 1;
  };
  std::vector<Raw> raw(count);
  for (Raw& e : raw) {
    const std::uint64_t len = r.u64();
    if (len > 4096) throw ValidationError("checkpoint: implausible name length");
    e.name = r.take(len);
    const std::uint64_t rank = r.u64();
    if (rank > 8) throw ValidationError("checkpoint: implausible rank for " + e.name);
    for (std::uint64_t k = 0; k < rank; ++k) {
      e.dims.push_back(r.u64());
      if (e.dims.back() > (std::uint64_t{1} << 32)) throw ValidationError("checkpoint: implausible dim");
      e.elements *= e.dims.back();
    }
    e.offset = r.u64();
  }

  std::uint64_t expected = r.pos(), checksum = 0;
  std::vector<std::vector<double>> payloads;
  for (const Raw& e : raw) {
    if (e.offset != expected) throw ValidationError("checkpoint: payload offset mismatch for " + e.name);
    r.seek(e.offset);
    std::vector<double> values(e.elements);
    for (double& v : values) {
      const std::uint64_t bits = r.u64();
      for (int b = 0; b < 8; ++b) checksum += (bits >> (8 * b)) & 0xff;
      v = std::bit_cast<double>(bits);
    }
    payloads.push_back(std::move(values));
    expected += 8 * e.elements;
  }
  if (r.u64() != checksum) throw ValidationError("checkpoint: checksum mismatch");
  if (r.pos() != bytes.size()) throw ValidationError("checkpoint: trailing bytes");

  if (raw.empty() || raw[0].name != "__config__" || raw[0].dims.size() != 1) {
    throw ValidationError("checkpoint: missing configuration record");
  }
  Checkpoint ck;
  ck.config = config_from(payloads[0]);
  ck.params = init_params(ck.config);
  std::size_t i = 1;
  ck.params.visit([&](const std::string& name, Mat& m) {
    if (i >= raw.size() || raw[i].name != name) {
      throw ValidationError("checkpoint: expected tensor " + name);
    }
    const Raw& e = raw[i];
    if (e.dims.size() != 2 || e.dims[0] != static_cast<std::uint64_t>(m.rows()) ||
        e.dims[1] != static_cast<std::uint64_t>(m.cols())) {
      throw ValidationError("checkpoint: tensor " + name + " has the wrong shape for its config");
    }
    std::copy(payloads[i].begin(), payloads[i].end(), m.data());
    ++i;
  });
  if (i != raw.size()) throw ValidationError("checkpoint: unexpected extra tensors");
  return ck;
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
  const std::string bytes = encode_checkpoint(cfg, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("checkpoint: cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace mash
