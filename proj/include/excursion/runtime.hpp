#pragma once

// Task-graph execution engine. Tasks declare the tiles they read and write;
// dependencies (read-after-write, write-after-write, write-after-read) are
// derived in submission order, so any valid schedule produces the same
// results as the sequential program.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace excursion {

enum class Backend { Dense, Tlr };

enum class Kernel {
    Potrf,     // factor diagonal tile k
    Trsm,      // panel solve (i, k)
    Syrk,      // diagonal update (i, i) with panel k
    Gemm,      // off-diagonal update (i, j) with panel k
    Qmc,       // PMVN chain kernel on row tile i, chain tile k
    PmvnGemm,  // PMVN correction of row tile i from row tile j, chain tile k
    Generic,
};

const char* kernel_name(Kernel k) noexcept;

// Identifies one tile of one logical matrix for dependency tracking.
struct TileKey {
    std::uint32_t matrix = 0;
    std::uint32_t i = 0;
    std::uint32_t j = 0;

    std::uint64_t packed() const noexcept {
        return (static_cast<std::uint64_t>(matrix) << 48) ^
               (static_cast<std::uint64_t>(i) << 24) ^ j;
    }
    bool operator==(const TileKey&) const = default;
};

struct Task {
    Kernel kernel = Kernel::Generic;
    std::size_t i = 0, j = 0, k = 0;
    std::vector<TileKey> reads;
    std::vector<TileKey> writes;
};

class TaskGraph {
public:
    // Appends a task and wires its data dependencies against all earlier
    // tasks. Returns the task index.
    std::size_t add_task(Task task);

    // Explicit extra edge (from must finish before to starts).
    void add_edge(std::size_t from, std::size_t to);

    std::size_t size() const noexcept { return tasks_.size(); }
    std::size_t edge_count() const noexcept;
    const Task& task(std::size_t t) const { return tasks_[t]; }
    const std::vector<std::size_t>& successors(std::size_t t) const { return succ_[t]; }
    const std::vector<std::size_t>& predecessors(std::size_t t) const { return pred_[t]; }

    // Kahn's algorithm; throws GraphError on a cycle.
    std::vector<std::size_t> topological_order() const;

    // Number of weakly connected components.
    std::size_t component_count() const;

private:
    struct Access {
        std::size_t last_writer = npos;
        std::vector<std::size_t> readers;
    };
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    void link(std::size_t from, std::size_t to);

    std::vector<Task> tasks_;
    std::vector<std::vector<std::size_t>> succ_;
    std::vector<std::vector<std::size_t>> pred_;
    std::unordered_map<std::uint64_t, Access> access_;
};

struct ExecutionPolicy {
    // EXCURSION_WORKERS, when set, wins; otherwise 0 means hardware concurrency.
    std::size_t workers = 0;
    bool trace = false;

    std::size_t resolved_workers() const;
};

struct TraceEntry {
    std::size_t task = 0;
    Kernel kernel = Kernel::Generic;
    std::size_t i = 0, j = 0, k = 0;
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
    std::size_t worker = 0;
};

struct TaskTrace {
    std::vector<TraceEntry> entries; // indexed by task
    std::int64_t makespan_ns = 0;
    std::size_t workers = 1;
};

void write_trace_csv(std::ostream& out, const TaskTrace& trace);

using KernelFn = std::function<void(const Task&)>;

// Runs every task once, respecting dependencies, on a pool of workers with
// per-worker deques and stealing. The first exception thrown by a task
// stops further scheduling and is rethrown after all workers join.
TaskTrace execute(const TaskGraph& graph, const KernelFn& kernel,
                  const ExecutionPolicy& policy = {});

// Independent tasks 0..count-1.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  const ExecutionPolicy& policy = {});

// Right-looking Cholesky DAG over an nt x nt tile grid: potrf(k), trsm(i,k)
// for i > k, syrk(i,k) on (i,i) and gemm(i,j,k) on (i,j) for i > j > k.
// The shape is the same for both backends.
TaskGraph build_cholesky_dag(std::size_t nt, Backend backend = Backend::Dense);

// PMVN sweep DAG: per chain tile k, qmc(0,k) -> pmvn_gemm(j,0,k) for j >= 1
// -> qmc(1,k) -> ... Chain tiles are independent components.
TaskGraph build_pmvn_dag(std::size_t row_tiles, std::size_t chain_tiles);

// Closed-form task count of build_cholesky_dag.
std::size_t cholesky_task_count(std::size_t nt) noexcept;

} // namespace excursion
