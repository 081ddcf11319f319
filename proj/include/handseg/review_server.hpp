#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "handseg/io.hpp"
#include "handseg/review.hpp"

namespace httplib {
class Server;
}

namespace handseg {

// Color frame with the label mask alpha-blended on top: left hand tinted red,
// right hand tinted blue. `alpha` is the tint weight.
ColorFrame render_overlay(const ColorFrame& color, const LabelMask& labels, double alpha = 0.5);

struct ReviewServerOptions {
  std::vector<std::filesystem::path> manifests;
  std::filesystem::path decisions;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path ui_dir;  // optional static assets served at /
};

// Read-only view over labeled sequences plus the append-only decisions log.
class ReviewServer {
 public:
  // Loads manifests and opens the decisions file; throws kIo if the
  // decisions path is not writable.
  explicit ReviewServer(ReviewServerOptions options);
  ~ReviewServer();

  // Binds the listening socket and returns the port. Throws kIo if the port
  // is taken.
  int bind();
  // Serves until stop(); bind() must have succeeded.
  void run();
  void stop();
  int port() const noexcept { return port_; }

 private:
  void install_routes();

  ReviewServerOptions options_;
  std::map<std::string, SequenceManifest> sequences_;
  std::unique_ptr<DecisionLog> log_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = -1;
};

}  // namespace handseg
