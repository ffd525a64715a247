#pragma once

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <vector>

#include "protoem/common.hpp"

namespace protoem {

enum class Task : int { Coreference = 0, Temporal = 1, Causal = 2, Subevent = 3 };

constexpr std::array<Task, 4> kAllTasks = {Task::Coreference, Task::Temporal,
                                           Task::Causal, Task::Subevent};

inline const char* task_name(Task t) {
  switch (t) {
    case Task::Coreference: return "coreference";
    case Task::Temporal: return "temporal";
    case Task::Causal: return "causal";
    case Task::Subevent: return "subevent";
  }
  return "?";
}

inline std::optional<Task> task_from_name(const std::string& s) {
  for (Task t : kAllTasks)
    if (s == task_name(t)) return t;
  return std::nullopt;
}

// The fixed 14-node label taxonomy over the four tasks. Node order follows
// the co-occurrence weight-matrix convention: per-task blocks are contiguous,
// each starting with that task's None label.
class Taxonomy {
 public:
  static constexpr int kNumNodes = 14;

  Taxonomy() {
    add(Task::Coreference, "None");
    add(Task::Coreference, "Coref");
    add(Task::Temporal, "None");
    add(Task::Temporal, "Before");
    add(Task::Temporal, "Overlap");
    add(Task::Temporal, "Contains");
    add(Task::Temporal, "Simultaneous");
    add(Task::Temporal, "Ends-on");
    add(Task::Temporal, "Begins-on");
    add(Task::Causal, "None");
    add(Task::Causal, "Precondition");
    add(Task::Causal, "Cause");
    add(Task::Subevent, "None");
    add(Task::Subevent, "Subevent");
  }

  int num_nodes() const { return static_cast<int>(labels_.size()); }

  Task node_task(int node) const { return tasks_[node]; }
  const std::string& node_label(int node) const { return labels_[node]; }

  // Display name matching the rendered weight matrix, e.g. "None(causal)".
  std::string node_name(int node) const {
    if (labels_[node] == "None")
      return "None(" + std::string(task_name(tasks_[node])) + ")";
    return labels_[node];
  }

  // Contiguous row block [begin, end) of a task within the 14-node order.
  std::pair<int, int> task_block(Task t) const {
    int begin = -1, end = -1;
    for (int i = 0; i < num_nodes(); ++i) {
      if (tasks_[i] == t) {
        if (begin < 0) begin = i;
        end = i + 1;
      }
    }
    return {begin, end};
  }

  int task_size(Task t) const {
    auto [b, e] = task_block(t);
    return e - b;
  }

  // Index of a label within its task block (None is always 0).
  int label_index(Task t, const std::string& label) const {
    auto [b, e] = task_block(t);
    for (int i = b; i < e; ++i)
      if (labels_[i] == label) return i - b;
    throw DataError("unknown label '" + label + "' for task " + task_name(t));
  }

  int none_node(Task t) const { return task_block(t).first; }

  // Global node id for (task, label).
  int node_of(Task t, const std::string& label) const {
    auto [b, e] = task_block(t);
    for (int i = b; i < e; ++i)
      if (labels_[i] == label) return i;
    throw DataError("unknown label '" + label + "' for task " + task_name(t));
  }

  std::vector<std::string> task_labels(Task t) const {
    auto [b, e] = task_block(t);
    return std::vector<std::string>(labels_.begin() + b, labels_.begin() + e);
  }

  // Maps annotation spellings ("BEFORE", "ends-on", "CAUSE") onto taxonomy
  // labels; comparison ignores case and treats '_' as '-'.
  std::optional<std::string> canonical_label(Task t, const std::string& raw) const {
    auto norm = [](const std::string& s) {
      std::string out;
      for (char c : s) {
        if (c == '_') c = '-';
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      }
      return out;
    };
    const std::string key = norm(raw);
    auto [b, e] = task_block(t);
    for (int i = b; i < e; ++i)
      if (norm(labels_[i]) == key) return labels_[i];
    if (t == Task::Coreference && (key == "coreference" || key == "coref")) return std::string("Coref");
    return std::nullopt;
  }

 private:
  void add(Task t, std::string label) {
    tasks_.push_back(t);
    labels_.push_back(std::move(label));
  }
  std::vector<Task> tasks_;
  std::vector<std::string> labels_;
};

}  // namespace protoem
