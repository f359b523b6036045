#include "s3t/error.hpp"
#include "s3t/preprocess.hpp"

#include <cmath>

namespace s3t::prep {

std::size_t window_samples(const Window& window, double fs) {
  const double len = std::round((window.end - window.start) * fs);
  return len > 0.0 ? static_cast<std::size_t>(len) : 0;
}

std::vector<Trial> segment(const Recording& raw, std::span<const Event> events, const Window& window) {
  if (!(window.end > window.start)) {
    throw SegmentationError("empty trial window [" + std::to_string(window.start) + ", " +
                            std::to_string(window.end) + "] s");
  }
  if (window.start < 0.0) throw SegmentationError("trial window must not start before the event onset");
  const std::size_t length = window_samples(window, raw.fs);
  if (length == 0) throw SegmentationError("trial window is shorter than one sample");
  const auto offset = static_cast<std::size_t>(std::llround(window.start * raw.fs));
  const auto total = static_cast<std::size_t>(raw.data.cols());

  std::vector<Trial> trials;
  trials.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& ev = events[i];
    const std::size_t begin = ev.onset_sample + offset;
    if (begin + length > total) {
      throw SegmentationError("event " + std::to_string(i) + " (onset " + std::to_string(ev.onset_sample) +
                              ", label " + std::to_string(ev.label) + ") needs samples [" + std::to_string(begin) +
                              ", " + std::to_string(begin + length) + ") but the recording has " +
                              std::to_string(total));
    }
    Trial t;
    t.data = raw.data.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(length));
    t.label = ev.label;
    t.subject_id = raw.subject_id;
    t.fs = raw.fs;
    trials.push_back(std::move(t));
  }
  return trials;
}

}  // namespace s3t::prep
