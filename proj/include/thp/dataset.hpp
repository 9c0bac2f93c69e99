#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "thp/errors.hpp"
#include "thp/rng.hpp"

namespace thp {

struct Event {
    double t = 0.0;
    int type = 0;
    int vertex = -1;  // -1 = stream has no vertex dimension
};

// Ordered stream of timestamped, typed events. Times strictly increase;
// either every event carries a vertex id or none does.
struct EventSequence {
    std::vector<Event> events;

    std::size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }
    bool has_vertices() const { return !events.empty() && events.front().vertex >= 0; }
    double first_time() const { return events.front().t; }
    double last_time() const { return events.back().t; }
};

// Undirected simple graph over vertex ids [0, n).
class RelationalGraph {
public:
    RelationalGraph() = default;
    RelationalGraph(int num_vertices, std::vector<std::pair<int, int>> edges);

    int num_vertices() const { return num_vertices_; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    bool has_edge(int a, int b) const;

private:
    int num_vertices_ = 0;
    std::vector<std::pair<int, int>> edges_;  // normalized first < second
    std::vector<char> adj_;
};

// Throws DataError naming the sequence index when invariants fail. Pass
// num_types/num_vertices <= 0 to skip the respective range check.
void validate_sequence(const EventSequence& seq, std::size_t index, int num_types = 0,
                       int num_vertices = 0);

// Shifts a sequence's times forward so the first stamp is at least
// min_first_time; later intensity math divides by event times, so zero or
// negative stamps are not representable. No-op when already satisfied.
void shift_to_positive(EventSequence& seq, double min_first_time = 1e-3);

// JSON-lines, one sequence per line: {"events":[{"t":..,"k":..,"v":..?}]}.
// Loading validates invariants and applies shift_to_positive.
std::vector<EventSequence> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<EventSequence>& seqs);

struct DatasetSplit {
    std::vector<EventSequence> train;
    std::vector<EventSequence> dev;
    std::vector<EventSequence> test;
};

// Seeded shuffle, then partition by sequence. Every part with a nonzero
// ratio must end up non-empty.
DatasetSplit split_dataset(const std::vector<EventSequence>& seqs, double train_ratio,
                           double dev_ratio, double test_ratio, std::uint64_t seed);

// Convenience: remainder after the train fraction is halved between dev and
// test.
DatasetSplit split_dataset(const std::vector<EventSequence>& seqs, double train_ratio,
                           std::uint64_t seed);

}  // namespace thp
