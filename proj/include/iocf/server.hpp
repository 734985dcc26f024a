// SPDX-License-Identifier: Apache-2.0
//
// JSON service behind the point-annotation UI. The handlers are plain
// functions of (id, body) so they can be exercised without sockets;
// HttpServer binds them to routes.

#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "iocf/dataset.hpp"

namespace iocf {

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class AnnotationService {
 public:
  explicit AnnotationService(std::filesystem::path dataset_root);

  ApiResponse list_images() const;
  ApiResponse image_file(const std::string& id) const;
  ApiResponse get_annotations(const std::string& id) const;
  /// Validates and atomically replaces the document. Writes to the same id
  /// are serialized.
  ApiResponse put_annotations(const std::string& id, const std::string& body);
  ApiResponse stats() const;

  const DatasetLayout& layout() const noexcept { return layout_; }

 private:
  std::optional<std::filesystem::path> image_path(const std::string& id) const;
  std::mutex& lock_for(const std::string& id);

  DatasetLayout layout_;
  std::mutex locks_guard_;
  std::unordered_map<std::string, std::unique_ptr<std::mutex>> locks_;
};

class HttpServer {
 public:
  /// `static_dir`, when given, is served at "/".
  explicit HttpServer(AnnotationService& service, std::optional<std::filesystem::path> static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds without serving yet. Port 0 picks a free port. Throws IoError when
  /// the address is unavailable. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires a prior bind().
  void listen();
  /// Blocks until a concurrent listen() accepts connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iocf
