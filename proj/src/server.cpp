// SPDX-License-Identifier: Apache-2.0
#include "iocf/server.hpp"

#include <httplib.h>

#include <algorithm>

#include "iocf/error.hpp"

namespace iocf {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ApiResponse json_response(int status, const ordered_json& body) { return {status, "application/json", body.dump(2) + "\n"}; }

ApiResponse error_response(int status, const std::string& message, const std::string& field = "") {
  ordered_json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  return json_response(status, body);
}

bool valid_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'; });
}

std::pair<std::size_t, std::size_t> ppm_size(const fs::path& path) {
  const Image img = read_ppm(path);
  return {img.width, img.height};
}

std::vector<fs::path> image_files(const DatasetLayout& layout) {
  std::vector<fs::path> files;
  if (fs::is_directory(layout.images_dir())) {
    for (const auto& e : fs::directory_iterator(layout.images_dir())) {
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

// The stored document, or an empty one sized like the image.
AnnotationDoc document_for(const DatasetLayout& layout, const fs::path& image) {
  const fs::path ann = layout.annotation(image.filename().string());
  if (fs::exists(ann)) return read_annotations(ann);
  const auto [w, h] = ppm_size(image);
  return AnnotationDoc{image.filename().string(), w, h, {}};
}

}  // namespace

AnnotationService::AnnotationService(fs::path dataset_root) : layout_{std::move(dataset_root)} {
  if (!fs::is_directory(layout_.root)) throw IoError("dataset directory " + layout_.root.string() + " does not exist");
}

std::optional<fs::path> AnnotationService::image_path(const std::string& id) const {
  if (!valid_id(id)) return std::nullopt;
  fs::path p = layout_.images_dir() / (id + ".ppm");
  if (!fs::is_regular_file(p)) return std::nullopt;
  return p;
}

std::mutex& AnnotationService::lock_for(const std::string& id) {
  std::lock_guard guard(locks_guard_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

ApiResponse AnnotationService::list_images() const {
  ordered_json out = ordered_json::array();
  for (const auto& f : image_files(layout_)) {
    const AnnotationDoc doc = document_for(layout_, f);
    out.push_back({{"id", f.stem().string()},
                   {"filename", f.filename().string()},
                   {"width", doc.width},
                   {"height", doc.height},
                   {"annotated_count", doc.points.size()}});
  }
  return json_response(200, out);
}

ApiResponse AnnotationService::image_file(const std::string& id) const {
  const auto path = image_path(id);
  if (!path) return error_response(404, "no image with id '" + id + "'");
  return {200, "image/png", encode_png(read_ppm(*path))};
}

ApiResponse AnnotationService::get_annotations(const std::string& id) const {
  const auto path = image_path(id);
  if (!path) return error_response(404, "no image with id '" + id + "'");
  return {200, "application/json", canonical_json(document_for(layout_, *path))};
}

ApiResponse AnnotationService::put_annotations(const std::string& id, const std::string& body) {
  const auto path = image_path(id);
  if (!path) return error_response(404, "no image with id '" + id + "'");
  AnnotationDoc doc;
  try {
    doc = annotation_from_json(json::parse(body));
  } catch (const json::parse_error& e) {
    return error_response(400, std::string("malformed JSON: ") + e.what());
  } catch (const ParseError& e) {
    return error_response(400, e.what());
  } catch (const ValidationError& e) {
    return error_response(422, e.what(), e.field());
  }
  const std::string filename = path->filename().string();
  if (doc.image != filename) return error_response(422, "image must be '" + filename + "'", "image");
  const auto [w, h] = ppm_size(*path);
  if (doc.width != w) return error_response(422, "width must be " + std::to_string(w), "width");
  if (doc.height != h) return error_response(422, "height must be " + std::to_string(h), "height");
  {
    std::lock_guard guard(lock_for(id));
    write_annotations(doc, layout_.annotation(filename));
  }
  return {200, "application/json", canonical_json(doc)};
}

ApiResponse AnnotationService::stats() const {
  std::vector<AnnotationDoc> docs;
  for (const auto& f : image_files(layout_)) docs.push_back(document_for(layout_, f));
  if (docs.empty()) return json_response(200, to_json(DatasetStats{}));
  return json_response(200, to_json(dataset_stats(docs)));
}

struct HttpServer::Impl {
  httplib::Server server;
  bool bound = false;
};

HttpServer::HttpServer(AnnotationService& service, std::optional<fs::path> static_dir) : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  auto guarded = [reply](auto&& fn) {
    return [reply, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        reply(res, fn(req));
      } catch (const std::exception& e) {
        reply(res, error_response(500, e.what()));
      }
    };
  };
  srv.Get("/api/images", guarded([&service](const httplib::Request&) { return service.list_images(); }));
  srv.Get(R"(/api/images/([^/]+)/file)",
          guarded([&service](const httplib::Request& req) { return service.image_file(req.matches[1]); }));
  srv.Get(R"(/api/annotations/([^/]+))",
          guarded([&service](const httplib::Request& req) { return service.get_annotations(req.matches[1]); }));
  srv.Put(R"(/api/annotations/([^/]+))", guarded([&service](const httplib::Request& req) {
            return service.put_annotations(req.matches[1], req.body);
          }));
  srv.Get("/api/stats", guarded([&service](const httplib::Request&) { return service.stats(); }));
  if (static_dir) {
    if (!srv.set_mount_point("/", static_dir->string())) {
      throw IoError("static asset directory " + static_dir->string() + " does not exist");
    }
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    port = srv.bind_to_any_port(host);
    if (port < 0) throw IoError("cannot bind to " + host);
  } else if (!srv.bind_to_port(host, port)) {
    throw IoError("cannot listen on " + host + ":" + std::to_string(port) + " (port in use or unavailable)");
  }
  impl_->bound = true;
  return port;
}

void HttpServer::listen() {
  if (!impl_->bound) throw UsageError("HttpServer::listen called before bind");
  impl_->server.listen_after_bind();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace iocf
