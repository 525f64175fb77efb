"""Static PNG rendering with matplotlib's Agg backend."""

import io
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import networkx as nx  # noqa: E402
import numpy as np  # noqa: E402

from app.services.netsim import SyncMetrics, TrajectoryLog  # noqa: E402
from app.services.passivity import MarginCurve  # noqa: E402
from app.services.signed_graph import SignedDigraph  # noqa: E402

logger = logging.getLogger(__name__)

_EDGE_COLORS = {"+": "#2E86C1", "-": "#C0392B"}


def _to_png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", bbox_inches="tight", dpi=100)
    plt.close(fig)
    return buf.getvalue()


def render_graph(g: SignedDigraph, width: int = 600, height: int = 500) -> bytes:
    """Signed digraph: blue edges positive, red edges negative, weights as labels."""
    G = g.to_networkx()
    fig, ax = plt.subplots(figsize=(width / 100, height / 100), dpi=100)

    pos = nx.circular_layout(G) if G.number_of_nodes() <= 12 else nx.spring_layout(G, seed=42)
    nx.draw_networkx_nodes(G, pos, node_color="#F4D03F", node_size=500, alpha=0.9, ax=ax)
    nx.draw_networkx_labels(G, pos, {n: str(n + 1) for n in G.nodes}, font_size=10, ax=ax)

    edge_colors = [_EDGE_COLORS[G.edges[e]["sign"]] for e in G.edges]
    nx.draw_networkx_edges(G, pos, edge_color=edge_colors, arrows=True, arrowsize=14,
                           connectionstyle="arc3,rad=0.12", ax=ax)
    edge_labels = {(u, v): f"{G.edges[u, v]['weight']:g}" for u, v in G.edges}
    nx.draw_networkx_edge_labels(G, pos, edge_labels, font_size=8, font_color="#555555", ax=ax)

    ax.axis("off")
    fig.tight_layout()
    return _to_png(fig)


def render_margin(curve: MarginCurve, width: int = 900, height: int = 400) -> bytes:
    """Hermitian-part margin vs frequency; SISO systems also get the Nyquist plot."""
    siso = curve.response.shape[1:] == (1, 1)
    fig, axes = plt.subplots(1, 2 if siso else 1, figsize=(width / 100, height / 100), dpi=100)
    axes = np.atleast_1d(axes)

    ax = axes[0]
    positive = curve.omegas > 0
    ax.semilogx(curve.omegas[positive], curve.margins[positive], color="#2E86C1")
    ax.axhline(0.0, color="#888888", linewidth=0.8)
    ax.set_xlabel("omega [rad/s]")
    ax.set_ylabel("min eig of Hermitian part")

    if siso:
        h = curve.response[:, 0, 0]
        axes[1].plot(h.real, h.imag, color="#C0392B")
        axes[1].plot(h.real, -h.imag, color="#C0392B", linestyle="--", linewidth=0.8)
        axes[1].axvline(0.0, color="#888888", linewidth=0.8)
        axes[1].set_xlabel("Re H(jw)")
        axes[1].set_ylabel("Im H(jw)")

    fig.tight_layout()
    return _to_png(fig)


def render_trajectories(log: TrajectoryLog, metrics: SyncMetrics,
                        width: int = 900, height: int = 600) -> bytes:
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(width / 100, height / 100), dpi=100)
    for i in range(log.n_agents):
        top.plot(log.times, log.outputs[:, i, 0], linewidth=1.0, label=f"y{i + 1}")
    top.set_ylabel("agent outputs")
    if log.n_agents <= 8:
        top.legend(fontsize=7, loc="upper right")

    err = np.maximum(metrics.sync_error, np.finfo(float).tiny)
    bottom.semilogy(log.times, err, color="#C0392B")
    bottom.axhline(metrics.threshold, color="#888888", linestyle="--", linewidth=0.8)
    bottom.set_xlabel("t [s]")
    bottom.set_ylabel("sync error")

    fig.tight_layout()
    return _to_png(fig)


def save_png(path: str | Path, png: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png)
    logger.info("Wrote %s", path)
    return path
