#include "excursion/error.hpp"
#include "excursion/field.hpp"
#include "excursion/pmvn.hpp"
#include "excursion/runtime.hpp"
#include "excursion/tiles.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

using namespace excursion;

TEST(CholeskyDag, SmallShapes) {
    const auto g1 = build_cholesky_dag(1);
    EXPECT_EQ(g1.size(), 1u);
    EXPECT_EQ(g1.task(0).kernel, Kernel::Potrf);

    const auto g2 = build_cholesky_dag(2);
    EXPECT_EQ(g2.size(), 4u);
    EXPECT_EQ(g2.edge_count(), 3u);
    const auto order = g2.topological_order();
    EXPECT_EQ(g2.task(order[0]).kernel, Kernel::Potrf);
    EXPECT_EQ(g2.task(order[1]).kernel, Kernel::Trsm);
    EXPECT_EQ(g2.task(order[2]).kernel, Kernel::Syrk);
    EXPECT_EQ(g2.task(order[3]).kernel, Kernel::Potrf);
}

TEST(CholeskyDag, TaskCountFormula) {
    for (std::size_t nt = 1; nt <= 9; ++nt) {
        const auto g = build_cholesky_dag(nt);
        std::map<Kernel, std::size_t> count;
        for (std::size_t t = 0; t < g.size(); ++t)
            ++count[g.task(t).kernel];
        // enumerate the right-looking loop nest directly
        std::size_t potrf = 0, trsm = 0, syrk = 0, gemm = 0;
        for (std::size_t k = 0; k < nt; ++k) {
            ++potrf;
            for (std::size_t i = k + 1; i < nt; ++i) {
                ++trsm;
                ++syrk;
                for (std::size_t j = k + 1; j < i; ++j)
                    ++gemm;
            }
        }
        EXPECT_EQ(count[Kernel::Potrf], potrf);
        EXPECT_EQ(count[Kernel::Trsm], trsm);
        EXPECT_EQ(count[Kernel::Syrk], syrk);
        EXPECT_EQ(count[Kernel::Gemm], gemm);
        EXPECT_EQ(g.size(), nt + nt * (nt - 1) / 2 + nt * (nt - 1) * (nt + 1) / 6);
        EXPECT_EQ(cholesky_task_count(nt), g.size());
        EXPECT_EQ(build_cholesky_dag(nt, Backend::Tlr).size(), g.size());
        EXPECT_EQ(build_cholesky_dag(nt, Backend::Tlr).edge_count(), g.edge_count());
    }
    EXPECT_EQ(cholesky_task_count(5), 35u);
}

TEST(PmvnDag, Shapes) {
    const auto one = build_pmvn_dag(1, 4);
    EXPECT_EQ(one.size(), 4u);
    EXPECT_EQ(one.edge_count(), 0u);

    const auto two = build_pmvn_dag(2, 1);
    ASSERT_EQ(two.size(), 3u);
    const auto order = two.topological_order();
    EXPECT_EQ(two.task(order[0]).kernel, Kernel::Qmc);
    EXPECT_EQ(two.task(order[1]).kernel, Kernel::PmvnGemm);
    EXPECT_EQ(two.task(order[2]).kernel, Kernel::Qmc);
    EXPECT_EQ(two.task(order[2]).i, 1u);

    for (std::size_t k : {1u, 3u, 7u})
        EXPECT_EQ(build_pmvn_dag(4, k).component_count(), k);
}

TEST(TaskGraph, CycleIsGraphError) {
    TaskGraph g;
    Task a;
    a.writes = {{0, 0, 0}};
    Task b;
    b.reads = {{0, 0, 0}};
    b.writes = {{0, 1, 0}};
    const auto ta = g.add_task(a);
    const auto tb = g.add_task(b);
    g.add_edge(tb, ta);
    EXPECT_THROW(g.topological_order(), GraphError);
    EXPECT_THROW(execute(g, [](const Task&) {}, ExecutionPolicy{2, false}), GraphError);
}

TEST(TaskGraph, HazardEdges) {
    TaskGraph g;
    Task w;
    w.writes = {{1, 0, 0}};
    Task r1;
    r1.reads = {{1, 0, 0}};
    Task r2;
    r2.reads = {{1, 0, 0}};
    Task w2;
    w2.writes = {{1, 0, 0}};
    g.add_task(w);
    g.add_task(r1);
    g.add_task(r2);
    g.add_task(w2);
    // RAW w->r1, w->r2; WAR r1->w2, r2->w2; WAW w->w2 (may be implied)
    const auto& pred = g.predecessors(3);
    EXPECT_NE(std::find(pred.begin(), pred.end(), 1u), pred.end());
    EXPECT_NE(std::find(pred.begin(), pred.end(), 2u), pred.end());
    EXPECT_TRUE(g.successors(1).size() == 1u && g.successors(1)[0] == 3u);
    EXPECT_TRUE(g.predecessors(1).size() == 1u && g.predecessors(1)[0] == 0u);
}

TEST(Execute, RespectsDependenciesAndTraceIsDisjoint) {
    const auto g = build_cholesky_dag(6);
    std::vector<std::atomic<int>> done(g.size());
    std::atomic<bool> violated{false};
    auto kernel = [&](const Task& t) {
        // find own index by matching coordinates (tasks are unique by kernel+coords)
        for (std::size_t id = 0; id < g.size(); ++id) {
            const Task& c = g.task(id);
            if (c.kernel == t.kernel && c.i == t.i && c.j == t.j && c.k == t.k) {
                for (std::size_t p : g.predecessors(id))
                    if (!done[p].load())
                        violated = true;
                std::this_thread::sleep_for(std::chrono::microseconds(200));
                done[id] = 1;
                return;
            }
        }
    };
    const TaskTrace tr = execute(g, kernel, ExecutionPolicy{4, true});
    EXPECT_FALSE(violated.load());
    ASSERT_EQ(tr.entries.size(), g.size());
    for (std::size_t a = 0; a < g.size(); ++a)
        for (std::size_t b = a + 1; b < g.size(); ++b) {
            bool share = false;
            for (const auto& wa : g.task(a).writes)
                for (const auto& wb : g.task(b).writes)
                    share |= wa == wb;
            if (!share)
                continue;
            const auto& ea = tr.entries[a];
            const auto& eb = tr.entries[b];
            EXPECT_TRUE(ea.end_ns <= eb.start_ns || eb.end_ns <= ea.start_ns) << a << " " << b;
        }
    EXPECT_GT(tr.makespan_ns, 0);
    EXPECT_EQ(tr.workers, 4u);
}

TEST(Execute, FirstExceptionPropagates) {
    const auto g = build_cholesky_dag(4);
    std::atomic<int> ran{0};
    auto kernel = [&](const Task& t) {
        ++ran;
        if (t.kernel == Kernel::Syrk)
            throw ParameterError("boom");
    };
    EXPECT_THROW(execute(g, kernel, ExecutionPolicy{3, false}), ParameterError);
    EXPECT_LT(ran.load(), static_cast<int>(g.size()));
}

TEST(Execute, SingleWorkerIsTopologicalSerial) {
    const auto g = build_cholesky_dag(5);
    std::vector<std::size_t> seen;
    auto kernel = [&](const Task& t) {
        for (std::size_t id = 0; id < g.size(); ++id) {
            const Task& c = g.task(id);
            if (c.kernel == t.kernel && c.i == t.i && c.j == t.j && c.k == t.k)
                seen.push_back(id);
        }
    };
    const auto tr = execute(g, kernel, ExecutionPolicy{1, true});
    ASSERT_EQ(seen.size(), g.size());
    std::vector<std::size_t> pos(g.size());
    for (std::size_t p = 0; p < seen.size(); ++p)
        pos[seen[p]] = p;
    for (std::size_t t = 0; t < g.size(); ++t)
        for (std::size_t s : g.successors(t))
            EXPECT_LT(pos[t], pos[s]);
    for (const auto& e : tr.entries)
        EXPECT_EQ(e.worker, 0u);
}

TEST(Execute, ParallelForCoversAll) {
    std::vector<int> hit(1000, 0);
    parallel_for(1000, [&](std::size_t i) { hit[i] += 1; }, ExecutionPolicy{4, false});
    for (int h : hit)
        EXPECT_EQ(h, 1);
}

TEST(Determinism, CholeskyAcrossWorkers) {
    const Geometry g = gen_geometry(GeometryKind::UniformRandom, 256, 21);
    const Eigen::MatrixXd s = assemble_cov(g, {1.0, 0.1, 0.5});
    const auto ref =
        tiled_cholesky(DenseTileMatrix::from_dense(s, 32, Storage::SymmetricLower), {1, false});
    for (std::size_t w : {2u, 4u}) {
        const auto f =
            tiled_cholesky(DenseTileMatrix::from_dense(s, 32, Storage::SymmetricLower), {w, false});
        EXPECT_EQ(f.fingerprint, ref.fingerprint);
        EXPECT_TRUE((f.lower.to_dense().array() == ref.lower.to_dense().array()).all());
    }
}

TEST(Determinism, PmvnAcrossWorkers) {
    const Geometry g = gen_geometry(GeometryKind::UniformRandom, 512, 22);
    const Eigen::MatrixXd s = assemble_cov(g, {1.0, 0.1, 0.5});
    const auto f = tiled_cholesky(DenseTileMatrix::from_dense(s, 64, Storage::SymmetricLower));
    IntegrationLimits lim;
    lim.a = Eigen::VectorXd::Constant(512, -1.5);
    lim.b = Eigen::VectorXd::Constant(512, 3.0);
    QmcPlan plan;
    plan.samples = 1000;
    plan.chain_block = 128;
    plan.seed = 5;
    const auto ref = pmvn(lim, f, plan, {1, false});
    for (std::size_t w : {2u, 8u}) {
        const auto e = pmvn(lim, f, plan, {w, false});
        EXPECT_EQ(e.value, ref.value);
        EXPECT_EQ(e.std_error, ref.std_error);
        EXPECT_EQ(e.log_value, ref.log_value);
    }
}

TEST(Execute, WorkersEnvOverride) {
    ::setenv("EXCURSION_WORKERS", "3", 1);
    EXPECT_EQ(ExecutionPolicy{}.resolved_workers(), 3u);
    EXPECT_EQ((ExecutionPolicy{5, false}.resolved_workers()), 3u);
    ::unsetenv("EXCURSION_WORKERS");
    EXPECT_GE(ExecutionPolicy{}.resolved_workers(), 1u);
    EXPECT_EQ((ExecutionPolicy{5, false}.resolved_workers()), 5u);
}

TEST(Trace, CsvHeader) {
    TaskTrace tr;
    tr.entries.push_back({0, Kernel::Potrf, 0, 0, 0, 10, 20, 0});
    std::ostringstream os;
    write_trace_csv(os, tr);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "task,kernel,i,j,k,start_ns,end_ns,worker");
}

TEST(Throughput, PmvnColumnPhaseScales) {
    const std::size_t w = 4;
    if (std::thread::hardware_concurrency() < w)
        GTEST_SKIP() << "needs " << w << " hardware threads, have "
                     << std::thread::hardware_concurrency();
    const Geometry g = gen_geometry(GeometryKind::UniformRandom, 4096, 23);
    const Eigen::MatrixXd s = assemble_cov(g, {1.0, 0.1, 0.5});
    const auto f = tiled_cholesky(DenseTileMatrix::from_dense(s, 256, Storage::SymmetricLower));
    IntegrationLimits lim;
    lim.a = Eigen::VectorXd::Constant(4096, -2.0);
    lim.b = Eigen::VectorXd::Constant(4096, 4.0);
    QmcPlan plan;
    auto time = [&](std::size_t workers) {
        const auto t0 = std::chrono::steady_clock::now();
        pmvn(lim, f, plan, {workers, false});
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    const double serial = time(1);
    const double par = time(w);
    EXPECT_LE(par, serial / (w * 0.5));
}
