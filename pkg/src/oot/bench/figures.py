"""Optional rendering of scenario results to PNG files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .scenarios import ScenarioResult  # noqa: E402


def _save(fig, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_session_scaling(result: ScenarioResult, out_dir: str) -> list[str]:
    paths = []
    sizes = result.series("session_bytes")
    if sizes:
        fig, ax = plt.subplots(figsize=(6, 4))
        xs, ys = zip(*sizes)
        ax.plot(xs, ys, "o-")
        ax.set_xlabel("recursion argument")
        ax.set_ylabel("session size (bytes)")
        ax.set_title("Debug session size vs. call depth")
        for arg, _ in result.series("capacity_exceeded"):
            ax.axvline(arg, color="red", linestyle="--", alpha=0.6)
        paths.append(_save(fig, out_dir, "session_scaling_size.png"))
    times = result.series("reconstruct_ms")
    if times:
        fig, ax = plt.subplots(figsize=(6, 4))
        xs, ys = zip(*times)
        ax.plot(xs, ys, "s-")
        ax.set_xlabel("session size (bytes)")
        ax.set_ylabel("reconstruction time (ms)")
        ax.set_title("Reconstruction time vs. session size")
        paths.append(_save(fig, out_dir, "session_scaling_time.png"))
    return paths


def plot_network_overhead(result: ScenarioResult, out_dir: str) -> list[str]:
    oot = result.series("oot_cumulative_bytes")
    base = result.series("baseline_cumulative_bytes")
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.38
    ax.bar([x - width / 2 for x, _ in oot], [y for _, y in oot],
           width=width, label="pull once, step locally")
    ax.bar([x + width / 2 for x, _ in base], [y for _, y in base],
           width=width, label="step remotely, re-pull dump")
    ax.set_xlabel("debug action (0 = initial retrieval)")
    ax.set_ylabel("cumulative device-link bytes")
    ax.set_title("Cumulative network cost of a 5-step debug scenario")
    ax.legend()
    return [_save(fig, out_dir, "network_overhead.png")]


def plot_proxy_overhead(result: ScenarioResult, out_dir: str) -> list[str]:
    fig, ax = plt.subplots(figsize=(6, 4))
    data = []
    labels = []
    for label in ("no_interrupts", "proxy_interrupts"):
        gaps = [y for _, y in result.series(f"{label}_gap_s")]
        if gaps:
            data.append(gaps)
            labels.append(label.replace("_", " "))
    if data:
        ax.boxplot(data, tick_labels=labels)
        ax.set_ylabel("inter-arrival time (s)")
        ax.set_title("Broadcast cadence at the master node")
    return [_save(fig, out_dir, "proxy_overhead.png")]
