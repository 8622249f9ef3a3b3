#include "vtp/episode_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace vtp::synth {

namespace {

// x86-64 little-endian raw writes; the format is defined little-endian.
template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError(std::string("episode file truncated while reading ") + what);
  return v;
}

void put_array(std::ostream& os, const ad::Array& a) {
  os.write(reinterpret_cast<const char*>(a.data()),
           static_cast<std::streamsize>(a.size() * sizeof(double)));
}

ad::Array take_array(std::istream& is, ad::Index n, const char* what) {
  ad::Array a(n);
  is.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw IoError(std::string("episode file truncated while reading ") + what);
  return a;
}

}  // namespace

void write_episode(const std::filesystem::path& path, const Episode& ep) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");

  os.write(kEpisodeMagic, sizeof(kEpisodeMagic));
  put<uint32_t>(os, kEpisodeVersion);
  put<uint32_t>(os, static_cast<uint32_t>(ep.task_id.size()));
  os.write(ep.task_id.data(), static_cast<std::streamsize>(ep.task_id.size()));
  put<uint64_t>(os, ep.seed);
  put<double>(os, ep.start.x());
  put<double>(os, ep.start.y());
  put<double>(os, ep.target.x());
  put<double>(os, ep.target.y());

  const WorldConfig& w = ep.world;
  for (double v : {w.quantization, w.tolerance, w.bump_sigma, w.bump_kappa, w.max_step,
                   w.fine_step, w.align_radius, w.contact_threshold, w.min_start_separation,
                   w.placement_margin, w.noise_std, w.dt}) {
    put<double>(os, v);
  }
  put<uint64_t>(os, static_cast<uint64_t>(w.horizon));
  put<uint64_t>(os, static_cast<uint64_t>(w.tactile_channels));

  put<uint32_t>(os, static_cast<uint32_t>(ep.views.size()));
  for (const ViewGeometry& v : ep.views) {
    put<uint32_t>(os, static_cast<uint32_t>(v.height));
    put<uint32_t>(os, static_cast<uint32_t>(v.width));
    put<uint32_t>(os, static_cast<uint32_t>(v.channels));
    put<uint32_t>(os, static_cast<uint32_t>(v.kind));
  }
  put<uint32_t>(os, static_cast<uint32_t>(ep.proprio_groups.size()));
  for (Index g : ep.proprio_groups) put<uint64_t>(os, static_cast<uint64_t>(g));
  put<uint8_t>(os, ep.success ? 1 : 0);
  put<uint32_t>(os, static_cast<uint32_t>(ep.frames.size()));

  for (const FrameRecord& f : ep.frames) {
    for (const ad::Array& v : f.views) put_array(os, v);
    put_array(os, f.tactile);
    put_array(os, f.proprio);
    put_array(os, f.action);
  }
  if (!os) throw IoError("write failed for " + path.string());
}

Episode read_episode(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());

  char magic[sizeof(kEpisodeMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kEpisodeMagic, sizeof(magic)) != 0) {
    throw IoError("episode file magic mismatch in " + path.string());
  }
  uint32_t version = take<uint32_t>(is, "version");
  if (version != kEpisodeVersion) {
    throw IoError("episode file version " + std::to_string(version) + " unsupported (want " +
                  std::to_string(kEpisodeVersion) + ")");
  }

  Episode ep;
  uint32_t task_len = take<uint32_t>(is, "task id length");
  if (task_len > 4096) throw IoError("episode file task id length corrupt");
  ep.task_id.resize(task_len);
  is.read(ep.task_id.data(), task_len);
  if (!is) throw IoError("episode file truncated while reading task id");
  ep.seed = take<uint64_t>(is, "seed");
  ep.start.x() = take<double>(is, "start");
  ep.start.y() = take<double>(is, "start");
  ep.target.x() = take<double>(is, "target");
  ep.target.y() = take<double>(is, "target");

  WorldConfig& w = ep.world;
  for (double* v : {&w.quantization, &w.tolerance, &w.bump_sigma, &w.bump_kappa, &w.max_step,
                    &w.fine_step, &w.align_radius, &w.contact_threshold,
                    &w.min_start_separation, &w.placement_margin, &w.noise_std, &w.dt}) {
    *v = take<double>(is, "world constants");
  }
  w.horizon = static_cast<Index>(take<uint64_t>(is, "horizon"));
  w.tactile_channels = static_cast<Index>(take<uint64_t>(is, "tactile channels"));

  uint32_t n_views = take<uint32_t>(is, "view count");
  if (n_views > 64) throw IoError("episode file view count corrupt");
  for (uint32_t i = 0; i < n_views; ++i) {
    ViewGeometry v;
    v.height = static_cast<Index>(take<uint32_t>(is, "view height"));
    v.width = static_cast<Index>(take<uint32_t>(is, "view width"));
    v.channels = static_cast<Index>(take<uint32_t>(is, "view channels"));
    v.kind = static_cast<Index>(take<uint32_t>(is, "view kind"));
    ep.views.push_back(v);
  }
  uint32_t n_groups = take<uint32_t>(is, "group count");
  if (n_groups > 64) throw IoError("episode file group count corrupt");
  for (uint32_t i = 0; i < n_groups; ++i) {
    ep.proprio_groups.push_back(static_cast<Index>(take<uint64_t>(is, "proprio group")));
  }
  ep.success = take<uint8_t>(is, "success flag") != 0;
  uint32_t frame_count = take<uint32_t>(is, "frame count");

  Index p = 0;
  for (Index g : ep.proprio_groups) p += g;
  Index view_doubles = 0;
  for (const ViewGeometry& v : ep.views) view_doubles += v.pixel_count();
  Index stride = view_doubles + w.tactile_channels + 2 * p;

  // Validate the declared frame count against the actual payload size.
  std::streampos payload_start = is.tellg();
  is.seekg(0, std::ios::end);
  std::streamoff available = is.tellg() - payload_start;
  std::streamoff expected =
      static_cast<std::streamoff>(frame_count) * static_cast<std::streamoff>(stride) *
      static_cast<std::streamoff>(sizeof(double));
  if (available != expected) {
    throw IoError("episode payload size mismatch in " + path.string() + ": header declares " +
                  std::to_string(expected) + " bytes (" + std::to_string(frame_count) +
                  " frames), file holds " + std::to_string(available));
  }
  is.seekg(payload_start);

  for (uint32_t t = 0; t < frame_count; ++t) {
    FrameRecord f;
    for (const ViewGeometry& v : ep.views) f.views.push_back(take_array(is, v.pixel_count(), "view"));
    f.tactile = take_array(is, w.tactile_channels, "tactile");
    f.proprio = take_array(is, p, "proprio");
    f.action = take_array(is, p, "action");
    ep.frames.push_back(std::move(f));
  }
  return ep;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows,
                    uint64_t config_digest) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  char digest_hex[32];
  std::snprintf(digest_hex, sizeof(digest_hex), "%016llx",
                static_cast<unsigned long long>(config_digest));
  os << "# config_digest=" << digest_hex << "\n";
  os << "# filename\tseed\tlength\tsuccess\n";
  for (const ManifestRow& r : rows) {
    os << r.filename << '\t' << r.seed << '\t' << r.length << '\t' << (r.success ? 1 : 0) << '\n';
  }
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestRow r;
    int success = 0;
    if (!(ls >> r.filename >> r.seed >> r.length >> success)) {
      throw IoError("malformed manifest line: " + line);
    }
    r.success = success != 0;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ManifestRow> write_dataset(const std::filesystem::path& dir,
                                       const std::vector<Episode>& episodes,
                                       uint64_t config_digest) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestRow> rows;
  for (size_t i = 0; i < episodes.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "episode_%04zu.vtep", i);
    write_episode(dir / name, episodes[i]);
    rows.push_back({name, episodes[i].seed, episodes[i].length(), episodes[i].success});
  }
  write_manifest(dir / "manifest.txt", rows, config_digest);
  return rows;
}

std::vector<Episode> read_dataset(const std::filesystem::path& dir) {
  std::vector<ManifestRow> rows = read_manifest(dir / "manifest.txt");
  std::vector<Episode> out;
  out.reserve(rows.size());
  for (const ManifestRow& r : rows) out.push_back(read_episode(dir / r.filename));
  return out;
}

}  // namespace vtp::synth
