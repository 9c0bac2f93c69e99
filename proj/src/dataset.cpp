#include "thp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace thp {

RelationalGraph::RelationalGraph(int num_vertices, std::vector<std::pair<int, int>> edges)
    : num_vertices_(num_vertices) {
    if (num_vertices < 0) {
        throw DataError("graph: vertex count must be non-negative");
    }
    adj_.assign(static_cast<std::size_t>(num_vertices) * num_vertices, 0);
    for (auto [a, b] : edges) {
        if (a < 0 || a >= num_vertices || b < 0 || b >= num_vertices) {
            throw DataError("graph: edge (" + std::to_string(a) + "," + std::to_string(b) +
                            ") references a vertex outside [0," + std::to_string(num_vertices) +
                            ")");
        }
        if (a == b) {
            throw DataError("graph: self-loop at vertex " + std::to_string(a));
        }
        if (a > b) std::swap(a, b);
        if (!adj_[static_cast<std::size_t>(a) * num_vertices + b]) {
            adj_[static_cast<std::size_t>(a) * num_vertices + b] = 1;
            adj_[static_cast<std::size_t>(b) * num_vertices + a] = 1;
            edges_.emplace_back(a, b);
        }
    }
    std::sort(edges_.begin(), edges_.end());
}

bool RelationalGraph::has_edge(int a, int b) const {
    if (a < 0 || a >= num_vertices_ || b < 0 || b >= num_vertices_) return false;
    return adj_[static_cast<std::size_t>(a) * num_vertices_ + b] != 0;
}

void validate_sequence(const EventSequence& seq, std::size_t index, int num_types,
                       int num_vertices) {
    const std::string where = "sequence " + std::to_string(index) + ": ";
    if (seq.events.empty()) {
        throw DataError(where + "must contain at least one event");
    }
    const bool with_vertex = seq.events.front().vertex >= 0;
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < seq.events.size(); ++j) {
        const Event& e = seq.events[j];
        if (!std::isfinite(e.t)) {
            throw DataError(where + "event " + std::to_string(j) + " has non-finite time");
        }
        if (e.t <= prev) {
            throw DataError(where + "times not strictly increasing at event " +
                            std::to_string(j));
        }
        prev = e.t;
        if (e.type < 0 || (num_types > 0 && e.type >= num_types)) {
            throw DataError(where + "event " + std::to_string(j) + " has type " +
                            std::to_string(e.type) + " outside the valid range");
        }
        if ((e.vertex >= 0) != with_vertex) {
            throw DataError(where + "mixed vertex presence at event " + std::to_string(j));
        }
        if (with_vertex && num_vertices > 0 && e.vertex >= num_vertices) {
            throw DataError(where + "event " + std::to_string(j) + " has vertex " +
                            std::to_string(e.vertex) + " outside the valid range");
        }
    }
}

void shift_to_positive(EventSequence& seq, double min_first_time) {
    if (seq.events.empty()) return;
    const double first = seq.events.front().t;
    if (first >= min_first_time) return;
    const double shift = min_first_time - first;
    for (Event& e : seq.events) e.t += shift;
}

std::vector<EventSequence> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open dataset file: " + path);
    }
    std::vector<EventSequence> seqs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        EventSequence seq;
        try {
            const auto& events = doc.at("events");
            if (!events.is_array()) {
                throw DataError("\"events\" must be an array");
            }
            for (const auto& ev : events) {
                Event e;
                e.t = ev.at("t").get<double>();
                e.type = ev.at("k").get<int>();
                if (ev.contains("v")) e.vertex = ev.at("v").get<int>();
                seq.events.push_back(e);
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        validate_sequence(seq, seqs.size());
        shift_to_positive(seq);
        seqs.push_back(std::move(seq));
    }
    return seqs;
}

void save_dataset(const std::string& path, const std::vector<EventSequence>& seqs) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot open dataset file for writing: " + path);
    }
    for (const auto& seq : seqs) {
        nlohmann::json events = nlohmann::json::array();
        for (const Event& e : seq.events) {
            nlohmann::json ev = {{"t", e.t}, {"k", e.type}};
            if (e.vertex >= 0) ev["v"] = e.vertex;
            events.push_back(std::move(ev));
        }
        out << nlohmann::json{{"events", std::move(events)}}.dump() << "\n";
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

DatasetSplit split_dataset(const std::vector<EventSequence>& seqs, double train_ratio,
                           double dev_ratio, double test_ratio, std::uint64_t seed) {
    if (train_ratio < 0 || dev_ratio < 0 || test_ratio < 0 ||
        std::abs(train_ratio + dev_ratio + test_ratio - 1.0) > 1e-9) {
        throw DataError("split ratios must be non-negative and sum to 1");
    }
    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    UniformRng rng(seed);
    rng.shuffle(order);

    const std::size_t n = seqs.size();
    std::size_t n_train = static_cast<std::size_t>(std::floor(train_ratio * n + 1e-9));
    std::size_t n_dev = static_cast<std::size_t>(std::floor(dev_ratio * n + 1e-9));
    if (n_train > n) n_train = n;
    if (n_train + n_dev > n) n_dev = n - n_train;
    const std::size_t n_test = n - n_train - n_dev;

    if ((train_ratio > 0 && n_train == 0) || (dev_ratio > 0 && n_dev == 0) ||
        (test_ratio > 0 && n_test == 0)) {
        throw DataError("too few sequences (" + std::to_string(n) +
                        ") for the requested split");
    }

    DatasetSplit split;
    for (std::size_t i = 0; i < n_train; ++i) split.train.push_back(seqs[order[i]]);
    for (std::size_t i = n_train; i < n_train + n_dev; ++i) split.dev.push_back(seqs[order[i]]);
    for (std::size_t i = n_train + n_dev; i < n; ++i) split.test.push_back(seqs[order[i]]);
    return split;
}

DatasetSplit split_dataset(const std::vector<EventSequence>& seqs, double train_ratio,
                           std::uint64_t seed) {
    const double rest = (1.0 - train_ratio) / 2.0;
    return split_dataset(seqs, train_ratio, rest, rest, seed);
}

}  // namespace thp
