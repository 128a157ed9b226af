#include "excursion/runtime.hpp"

#include "excursion/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace excursion {

const char* kernel_name(Kernel k) noexcept {
    switch (k) {
    case Kernel::Potrf: return "potrf";
    case Kernel::Trsm: return "trsm";
    case Kernel::Syrk: return "syrk";
    case Kernel::Gemm: return "gemm";
    case Kernel::Qmc: return "qmc";
    case Kernel::PmvnGemm: return "pmvn_gemm";
    case Kernel::Generic: return "generic";
    }
    return "unknown";
}

void TaskGraph::link(std::size_t from, std::size_t to) {
    if (from == to)
        return;
    auto& p = pred_[to];
    if (std::find(p.begin(), p.end(), from) != p.end())
        return;
    p.push_back(from);
    succ_[from].push_back(to);
}

std::size_t TaskGraph::add_task(Task task) {
    const std::size_t id = tasks_.size();
    succ_.emplace_back();
    pred_.emplace_back();

    for (const auto& key : task.reads) {
        auto& acc = access_[key.packed()];
        if (acc.last_writer != npos)
            link(acc.last_writer, id);
    }
    for (const auto& key : task.writes) {
        auto& acc = access_[key.packed()];
        if (acc.last_writer != npos)
            link(acc.last_writer, id);
        for (std::size_t r : acc.readers)
            link(r, id);
    }
    for (const auto& key : task.reads) {
        const bool also_written =
            std::find(task.writes.begin(), task.writes.end(), key) != task.writes.end();
        if (!also_written)
            access_[key.packed()].readers.push_back(id);
    }
    for (const auto& key : task.writes) {
        auto& acc = access_[key.packed()];
        acc.last_writer = id;
        acc.readers.clear();
    }
    tasks_.push_back(std::move(task));
    return id;
}

void TaskGraph::add_edge(std::size_t from, std::size_t to) {
    if (from >= tasks_.size() || to >= tasks_.size())
        throw GraphError("add_edge: task index out of range");
    if (from == to)
        throw GraphError("add_edge: self edge");
    link(from, to);
}

std::size_t TaskGraph::edge_count() const noexcept {
    std::size_t e = 0;
    for (const auto& s : succ_)
        e += s.size();
    return e;
}

std::vector<std::size_t> TaskGraph::topological_order() const {
    std::vector<std::size_t> indeg(tasks_.size());
    for (std::size_t t = 0; t < tasks_.size(); ++t)
        indeg[t] = pred_[t].size();
    std::deque<std::size_t> ready;
    for (std::size_t t = 0; t < tasks_.size(); ++t)
        if (indeg[t] == 0)
            ready.push_back(t);
    std::vector<std::size_t> order;
    order.reserve(tasks_.size());
    while (!ready.empty()) {
        const std::size_t t = ready.front();
        ready.pop_front();
        order.push_back(t);
        for (std::size_t s : succ_[t])
            if (--indeg[s] == 0)
                ready.push_back(s);
    }
    if (order.size() != tasks_.size())
        throw GraphError("task graph contains a cycle");
    return order;
}

std::size_t TaskGraph::component_count() const {
    std::vector<std::size_t> parent(tasks_.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t t = 0; t < tasks_.size(); ++t)
        for (std::size_t s : succ_[t])
            parent[find(t)] = find(s);
    std::size_t count = 0;
    for (std::size_t t = 0; t < tasks_.size(); ++t)
        count += find(t) == t;
    return count;
}

std::size_t ExecutionPolicy::resolved_workers() const {
    if (const char* env = std::getenv("EXCURSION_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1)
            return static_cast<std::size_t>(v);
    }
    if (workers >= 1)
        return workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void write_trace_csv(std::ostream& out, const TaskTrace& trace) {
    out << "task,kernel,i,j,k,start_ns,end_ns,worker\n";
    for (const auto& e : trace.entries)
        out << e.task << ',' << kernel_name(e.kernel) << ',' << e.i << ',' << e.j << ','
            << e.k << ',' << e.start_ns << ',' << e.end_ns << ',' << e.worker << '\n';
}

namespace {

using Clock = std::chrono::steady_clock;

class Executor {
public:
    Executor(const TaskGraph& graph, const KernelFn& kernel, std::size_t workers)
        : graph_(graph), kernel_(kernel), queues_(workers), indeg_(graph.size()) {
        for (std::size_t t = 0; t < graph.size(); ++t)
            indeg_[t].store(graph.predecessors(t).size(), std::memory_order_relaxed);
        trace_.entries.resize(graph.size());
        trace_.workers = workers;
    }

    TaskTrace run() {
        graph_.topological_order(); // cycle check
        start_ = Clock::now();
        // Seed roots in reverse so the owner pops them in submission order.
        for (std::size_t t = graph_.size(); t-- > 0;)
            if (graph_.predecessors(t).empty())
                push(0, t);

        const std::size_t w = queues_.size();
        std::vector<std::thread> threads;
        threads.reserve(w - 1);
        for (std::size_t id = 1; id < w; ++id)
            threads.emplace_back([this, id] { work(id); });
        work(0);
        for (auto& th : threads)
            th.join();

        if (error_)
            std::rethrow_exception(error_);
        trace_.makespan_ns = elapsed_ns();
        return std::move(trace_);
    }

private:
    struct Queue {
        std::mutex m;
        std::deque<std::size_t> q;
    };

    std::int64_t elapsed_ns() const {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_)
            .count();
    }

    void push(std::size_t worker, std::size_t task) {
        {
            std::lock_guard lock(queues_[worker].m);
            queues_[worker].q.push_back(task);
        }
        {
            std::lock_guard lock(wake_m_);
            ++queued_;
        }
        wake_.notify_one();
    }

    bool pop(std::size_t worker, std::size_t& task) {
        // Own queue from the back (LIFO), victims from the front.
        {
            auto& own = queues_[worker];
            std::lock_guard lock(own.m);
            if (!own.q.empty()) {
                task = own.q.back();
                own.q.pop_back();
                return claimed();
            }
        }
        const std::size_t w = queues_.size();
        for (std::size_t d = 1; d < w; ++d) {
            auto& victim = queues_[(worker + d) % w];
            std::lock_guard lock(victim.m);
            if (!victim.q.empty()) {
                task = victim.q.front();
                victim.q.pop_front();
                return claimed();
            }
        }
        return false;
    }

    bool claimed() {
        std::lock_guard lock(wake_m_);
        --queued_;
        return true;
    }

    bool finished() const {
        return done_.load(std::memory_order_acquire) == graph_.size() ||
               failed_.load(std::memory_order_acquire);
    }

    void work(std::size_t worker) {
        while (true) {
            if (finished())
                break;
            std::size_t t;
            if (!pop(worker, t)) {
                std::unique_lock lock(wake_m_);
                wake_.wait(lock, [this] { return queued_ > 0 || finished(); });
                continue;
            }
            const Task& task = graph_.task(t);
            auto& entry = trace_.entries[t];
            entry.task = t;
            entry.kernel = task.kernel;
            entry.i = task.i;
            entry.j = task.j;
            entry.k = task.k;
            entry.worker = worker;
            entry.start_ns = elapsed_ns();
            try {
                kernel_(task);
            } catch (...) {
                std::lock_guard lock(wake_m_);
                if (!error_)
                    error_ = std::current_exception();
                failed_.store(true, std::memory_order_release);
                wake_.notify_all();
                break;
            }
            entry.end_ns = elapsed_ns();
            for (std::size_t s : graph_.successors(t))
                if (indeg_[s].fetch_sub(1, std::memory_order_acq_rel) == 1)
                    push(worker, s);
            if (done_.fetch_add(1, std::memory_order_acq_rel) + 1 == graph_.size()) {
                std::lock_guard lock(wake_m_);
                wake_.notify_all();
            }
        }
    }

    const TaskGraph& graph_;
    const KernelFn& kernel_;
    std::vector<Queue> queues_;
    std::vector<std::atomic<std::size_t>> indeg_;
    std::atomic<std::size_t> done_{0};
    std::atomic<bool> failed_{false};
    std::mutex wake_m_;
    std::condition_variable wake_;
    std::size_t queued_ = 0;
    std::exception_ptr error_;
    TaskTrace trace_;
    Clock::time_point start_;
};

} // namespace

TaskTrace execute(const TaskGraph& graph, const KernelFn& kernel,
                  const ExecutionPolicy& policy) {
    std::size_t workers = policy.resolved_workers();
    if (graph.size() == 0) {
        TaskTrace empty;
        empty.workers = workers;
        return empty;
    }
    workers = std::min(workers, graph.size());
    Executor ex(graph, kernel, workers);
    return ex.run();
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  const ExecutionPolicy& policy) {
    TaskGraph g;
    for (std::size_t t = 0; t < count; ++t) {
        Task task;
        task.i = t;
        g.add_task(std::move(task));
    }
    execute(g, [&](const Task& task) { body(task.i); }, policy);
}

TaskGraph build_cholesky_dag(std::size_t nt, Backend) {
    auto key = [](std::size_t i, std::size_t j) {
        return TileKey{0, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)};
    };
    TaskGraph g;
    for (std::size_t k = 0; k < nt; ++k) {
        g.add_task(Task{Kernel::Potrf, k, k, k, {key(k, k)}, {key(k, k)}});
        for (std::size_t i = k + 1; i < nt; ++i)
            g.add_task(Task{Kernel::Trsm, i, k, k, {key(k, k), key(i, k)}, {key(i, k)}});
        for (std::size_t j = k + 1; j < nt; ++j) {
            g.add_task(Task{Kernel::Syrk, j, j, k, {key(j, k), key(j, j)}, {key(j, j)}});
            for (std::size_t i = j + 1; i < nt; ++i)
                g.add_task(Task{Kernel::Gemm, i, j, k, {key(i, k), key(j, k), key(i, j)},
                                {key(i, j)}});
        }
    }
    return g;
}

TaskGraph build_pmvn_dag(std::size_t row_tiles, std::size_t chain_tiles) {
    constexpr std::uint32_t y_matrix = 1, corr_matrix = 2, prob_vector = 3;
    auto key = [](std::uint32_t mat, std::size_t i, std::size_t k) {
        return TileKey{mat, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k)};
    };
    auto qmc = [&](std::size_t r, std::size_t k) {
        return Task{Kernel::Qmc, r, r, k, {key(corr_matrix, r, k)},
                    {key(y_matrix, r, k), key(prob_vector, 0, k)}};
    };
    TaskGraph g;
    for (std::size_t k = 0; k < chain_tiles; ++k)
        g.add_task(qmc(0, k));
    for (std::size_t r = 1; r < row_tiles; ++r) {
        for (std::size_t j = r; j < row_tiles; ++j)
            for (std::size_t k = 0; k < chain_tiles; ++k)
                g.add_task(Task{Kernel::PmvnGemm, j, r - 1, k, {key(y_matrix, r - 1, k)},
                                {key(corr_matrix, j, k)}});
        for (std::size_t k = 0; k < chain_tiles; ++k)
            g.add_task(qmc(r, k));
    }
    return g;
}

std::size_t cholesky_task_count(std::size_t nt) noexcept {
    return nt + nt * (nt - 1) / 2 + (nt - 1) * nt * (nt + 1) / 6;
}

} // namespace excursion
