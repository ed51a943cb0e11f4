#include <opencv2/core.hpp>
#include <opencv2/videoio.hpp>

#include <stdlib.h>
#include <unistd.h>

#include <filesystem>

#include "nftk/error.hpp"
#include "nftk/media.hpp"

namespace nftk::video {

namespace {

/// Bytes written to a private temporary file, removed on destruction.
class TempFile {
 public:
  explicit TempFile(std::span<const std::uint8_t> bytes) {
    std::string tmpl = (std::filesystem::temp_directory_path() / "nftk-XXXXXX.mp4").string();
    const int fd = ::mkstemps(tmpl.data(), 4);
    if (fd < 0) throw Error(Errc::IoFailure, "cannot create temporary file for video decode");
    path_ = tmpl;
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
      if (n <= 0) {
        ::close(fd);
        throw Error(Errc::IoFailure, "cannot write temporary video file");
      }
      off += static_cast<std::size_t>(n);
    }
    ::close(fd);
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

cv::VideoCapture open(const TempFile& f) {
  cv::VideoCapture cap(f.path(), cv::CAP_FFMPEG);
  if (!cap.isOpened()) throw Error(Errc::UndecodableMedia, "MP4: container could not be opened");
  return cap;
}

Image to_image(const cv::Mat& bgr) {
  if (bgr.empty() || bgr.cols <= 0 || bgr.rows <= 0) throw Error(Errc::ZeroDimension, "MP4: empty frame");
  if (bgr.type() != CV_8UC3) throw Error(Errc::UndecodableMedia, "MP4: unexpected frame layout");
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const std::uint8_t* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      std::uint8_t* p = img.px(x, y);
      p[0] = row[x * 3 + 2];
      p[1] = row[x * 3 + 1];
      p[2] = row[x * 3 + 0];
      p[3] = 255;
    }
  }
  return img;
}

}  // namespace

// Frames are read sequentially: container frame counts and seeking are not
// reliable across encoders, decoding every frame is.
std::size_t frame_count(std::span<const std::uint8_t> bytes) {
  TempFile tmp(bytes);
  auto cap = open(tmp);
  std::size_t n = 0;
  while (cap.grab()) ++n;
  if (n == 0) throw Error(Errc::NoFrames, "MP4: no decodable frames");
  return n;
}

Image decode_frame(std::span<const std::uint8_t> bytes, std::size_t index) {
  TempFile tmp(bytes);
  auto cap = open(tmp);
  for (std::size_t i = 0; i < index; ++i)
    if (!cap.grab()) throw Error(Errc::NoFrames, "MP4: frame index " + std::to_string(index) + " out of range");
  cv::Mat frame;
  if (!cap.read(frame) || frame.empty())
    throw Error(Errc::NoFrames, "MP4: frame index " + std::to_string(index) + " out of range");
  return to_image(frame);
}

}  // namespace nftk::video
