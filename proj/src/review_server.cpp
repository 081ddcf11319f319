#include "handseg/review_server.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace handseg {

using json = nlohmann::ordered_json;

ColorFrame render_overlay(const ColorFrame& color, const LabelMask& labels, double alpha) {
  if (!color.same_shape(labels)) {
    throw Error(ErrorCode::kDimensionMismatch, "overlay label size differs from frame");
  }
  static constexpr Rgb kTint[3] = {{0, 0, 0}, {230, 40, 40}, {40, 90, 230}};
  ColorFrame out = color;
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto l = static_cast<int>(labels[p]);
    if (l == 0) continue;
    const Rgb t = kTint[l];
    Rgb& px = out[p];
    const auto mix = [alpha](std::uint8_t a, std::uint8_t b) {
      return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * a + alpha * b));
    };
    px = {mix(px.r, t.r), mix(px.g, t.g), mix(px.b, t.b)};
  }
  return out;
}

namespace {

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json decision_json(const ReviewDecision& d) { return json::parse(decision_to_json_line(d)); }

constexpr const char* kIndexPage =
    "<!doctype html><title>handseg review</title>"
    "<p>No UI assets configured (start with --ui-dir). API: /api/sequences, /api/decisions</p>";

}  // namespace

ReviewServer::ReviewServer(ReviewServerOptions options) : options_(std::move(options)) {
  for (const auto& path : options_.manifests) {
    SequenceManifest m = load_manifest(path, FileCheck::kLenient);
    const std::string id = m.sequence_id;
    if (!sequences_.emplace(id, std::move(m)).second) {
      throw Error(ErrorCode::kMalformedManifest, "duplicate sequence id " + id);
    }
  }
  log_ = std::make_unique<DecisionLog>(options_.decisions);
  server_ = std::make_unique<httplib::Server>();
  // httplib's default sets SO_REUSEPORT, which lets a second server share a
  // busy port silently. Plain SO_REUSEADDR keeps restarts quick but makes
  // bind() fail while another listener holds the port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind() {
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
    if (port_ < 0) throw Error(ErrorCode::kIo, "could not bind " + options_.host);
  } else {
    if (!server_->bind_to_port(options_.host, options_.port)) {
      throw Error(ErrorCode::kIo, "could not bind " + options_.host + ":" +
                                      std::to_string(options_.port) + " (port busy?)");
    }
    port_ = options_.port;
  }
  return port_;
}

void ReviewServer::run() {
  if (port_ < 0) throw Error(ErrorCode::kIo, "run() before bind()");
  server_->listen_after_bind();
}

void ReviewServer::stop() {
  if (server_) server_->stop();
}

void ReviewServer::install_routes() {
  auto& svr = *server_;

  svr.Get("/api/sequences", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& [id, m] : sequences_) {
      const auto labeled = std::count_if(m.frames.begin(), m.frames.end(),
                                         [](const FrameEntry& f) { return f.label.has_value(); });
      json entry{{"id", id},
                 {"frame_count", m.frames.size()},
                 {"labeled", labeled > 0},
                 {"labeled_count", labeled},
                 {"subject_id", m.subject_id},
                 {"camera", m.camera}};
      json indices = json::array();
      for (const auto& f : m.frames) indices.push_back(f.index);
      entry["indices"] = std::move(indices);
      list.push_back(std::move(entry));
    }
    res.set_content(list.dump(), "application/json");
  });

  svr.Get(R"(/api/sequences/([^/]+)/frames/(\d+)/(overlay|raw|depth)\.png)",
          [this](const httplib::Request& req, httplib::Response& res) {
            const auto it = sequences_.find(req.matches[1].str());
            if (it == sequences_.end()) return send_error(res, 404, "not_found", "unknown sequence");
            const SequenceManifest& m = it->second;
            const FrameEntry* f = m.find(std::stoi(req.matches[2].str()));
            if (f == nullptr) return send_error(res, 404, "not_found", "unknown frame");
            const std::string kind = req.matches[3].str();
            try {
              if (kind == "raw") {
                res.set_content(slurp(m.resolve(f->color)), "image/png");
              } else if (kind == "depth") {
                res.set_content(slurp(m.resolve(f->depth)), "image/png");
              } else {
                ColorFrame color = read_color_png(m.resolve(f->color));
                if (f->label) color = render_overlay(color, load_label(m.resolve(*f->label)));
                const auto bytes = encode_color_png(color);
                res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
              }
            } catch (const Error& e) {
              const int status = e.code() == ErrorCode::kMissingFile ? 404 : 500;
              send_error(res, status, to_string(e.code()), e.what());
            }
          });

  svr.Get("/api/decisions", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string seq = req.get_param_value("sequence");
    json list = json::array();
    try {
      for (const auto& d : log_->read_all()) {
        if (seq.empty() || d.sequence_id == seq) list.push_back(decision_json(d));
      }
    } catch (const Error& e) {
      return send_error(res, 500, to_string(e.code()), e.what());
    }
    res.set_content(list.dump(), "application/json");
  });

  svr.Post("/api/decisions", [this](const httplib::Request& req, httplib::Response& res) {
    ReviewDecision d;
    try {
      d = decision_from_json_text(req.body);
    } catch (const Error& e) {
      return send_error(res, 400, to_string(e.code()), e.what());
    }
    const auto it = sequences_.find(d.sequence_id);
    if (it == sequences_.end()) return send_error(res, 404, "not_found", "unknown sequence");
    const auto& frames = it->second.frames;
    if (frames.empty() || d.start < frames.front().index || d.end > frames.back().index) {
      return send_error(res, 400, "out_of_range", "decision range outside the sequence");
    }
    if (d.timestamp.empty()) d.timestamp = utc_timestamp_now();
    try {
      log_->append(d);
    } catch (const Error& e) {
      return send_error(res, 500, to_string(e.code()), e.what());
    }
    res.status = 201;
    res.set_content(decision_json(d).dump(), "application/json");
  });

  if (!options_.ui_dir.empty()) {
    if (!svr.set_mount_point("/", options_.ui_dir.string())) {
      throw Error(ErrorCode::kMissingFile, "ui directory not found: " + options_.ui_dir.string());
    }
  } else {
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kIndexPage, "text/html");
    });
  }
}

}  // namespace handseg
