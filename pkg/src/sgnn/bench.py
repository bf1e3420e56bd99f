"""Time-per-update benchmark on growing SBM graphs, and the eta sensitivity sweep."""
from __future__ import annotations

import csv
import io
import resource
import time
from dataclasses import dataclass, replace

import numpy as np

from .data import SbmSpec, generate_sbm
from .metrics import clustering_accuracy, kmeans, nmi
from .trainer import StackConfig, StackTrainer, embed


@dataclass
class BenchReport:
    n: int
    nnz: int
    total_wall_s: float
    update_count: int
    time_per_update_ms: float
    median_update_ms: float
    preprocessing_ms: float
    peak_rss_bytes: int


def scaled_sbm(base: SbmSpec, n: int) -> SbmSpec:
    """``base`` resized to about ``n`` nodes with the expected degree held fixed."""
    per_block = max(1, n // base.blocks)
    ratio = (base.blocks * base.nodes_per_block) / (base.blocks * per_block)
    return replace(base, nodes_per_block=per_block, p_in=min(1.0, base.p_in * ratio),
                   p_out=min(1.0, base.p_out * ratio))


def _peak_rss() -> int:
    # ru_maxrss is reported in KiB on Linux
    return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss) * 1024


def bench_one(stack: StackConfig, spec: SbmSpec) -> BenchReport:
    """Train once, timing from the start of data loading (here: generation)."""
    t0 = time.perf_counter()
    data = generate_sbm(spec)
    cfg = replace(stack, dims=[data.features.shape[1]] + list(stack.dims[1:]), track_final_loss=False)
    trainer = StackTrainer(cfg, data)
    _, trace = trainer.run()
    total = time.perf_counter() - t0
    updates = trace.updates
    return BenchReport(
        n=data.n,
        nnz=data.graph.nnz,
        total_wall_s=total,
        update_count=updates,
        time_per_update_ms=1e3 * total / updates,
        median_update_ms=float(np.median(trace.wall_ms())),
        preprocessing_ms=trace.preprocess_ms,
        peak_rss_bytes=_peak_rss(),
    )


def run_bench(stack: StackConfig, base: SbmSpec, sizes) -> list[BenchReport]:
    return [bench_one(stack, scaled_sbm(base, int(n))) for n in sizes]


def bench_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "preproc_ms", "updates", "ms_per_update", "median_update_ms"])
    for r in reports:
        w.writerow([r.n, f"{r.preprocessing_ms:.3f}", r.update_count,
                    f"{r.time_per_update_ms:.6f}", f"{r.median_update_ms:.6f}"])
    return buf.getvalue()


def eta_sweep(stack: StackConfig, data, etas, kmeans_seed: int = 0, restarts: int = 10) -> str:
    """CSV ``eta,final_loss,acc,nmi``: one training run per eta, clustered with k-means."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eta", "final_loss", "acc", "nmi"])
    for eta in etas:
        modules, trace = StackTrainer(replace(stack, eta=float(eta)), data).run()
        h = embed(modules, data)
        res = kmeans(h, data.num_classes, seed=kmeans_seed, restarts=restarts)
        w.writerow([repr(float(eta)), repr(trace.final_loss[-1][1]),
                    repr(clustering_accuracy(res.assignments, data.labels)),
                    repr(nmi(res.assignments, data.labels))])
    return buf.getvalue()
