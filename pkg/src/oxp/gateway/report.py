"""Render a scenario report to files: CSV + JSON + matplotlib figures."""

import csv
import json
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from ..controller import Controller
from ..topology import DOWN, UP
from .scenario import OK, ScenarioReport

STEP_COLORS = {OK: "#2a9d4e", "FAILED": "#c23b3b"}


def write_report(report: ScenarioReport, controller: Controller, outdir) -> list:
    """Write report.json, steps.csv and the figures; returns written paths."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    written.append(path)

    path = os.path.join(outdir, "steps.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "action", "outcome", "detail"])
        for step in report.steps:
            writer.writerow([step.index, step.action, step.outcome, step.detail])
    written.append(path)

    written.append(render_topology(controller, os.path.join(outdir, "topology.png")))
    written.append(render_steps(report, os.path.join(outdir, "steps.png")))
    return written


def _ring_layout(names):
    """Deterministic circular layout, devices in name order."""
    positions = {}
    count = max(len(names), 1)
    for i, name in enumerate(sorted(names)):
        angle = math.pi / 2 - 2 * math.pi * i / count
        positions[name] = (math.cos(angle), math.sin(angle))
    return positions


def render_topology(controller: Controller, path) -> str:
    """Device map: UP links solid, DOWN links dashed red, DOWN devices red."""
    topo = controller.topology
    pos = _ring_layout(list(topo.devices))

    fig, ax = plt.subplots(figsize=(6, 6))
    for link in topo.links.values():
        xa, ya = pos[link.a.device]
        xb, yb = pos[link.b.device]
        usable = topo.link_usable(link)
        ax.plot(
            [xa, xb],
            [ya, yb],
            linestyle="-" if usable else "--",
            color="#4a4a4a" if usable else "#c23b3b",
            linewidth=2 if usable else 1.5,
            zorder=1,
        )
        if link.state == DOWN:
            ax.annotate(
                "down",
                ((xa + xb) / 2, (ya + yb) / 2),
                color="#c23b3b",
                fontsize=7,
                ha="center",
            )
    for name, (x, y) in pos.items():
        device = topo.devices[name]
        color = "#2a9d4e" if device.state == UP else "#c23b3b"
        ax.scatter([x], [y], s=900, c=color, zorder=2, edgecolors="black")
        ax.annotate(name, (x, y), ha="center", va="center", color="white", fontsize=8, zorder=3)
    ax.set_title(f"topology: {len(topo.devices)} devices, {len(topo.links)} links")
    ax.set_aspect("equal")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_steps(report: ScenarioReport, path) -> str:
    """One horizontal bar per step, colored by outcome."""
    steps = report.steps
    height = max(2.0, 0.28 * len(steps) + 1.2)
    fig, ax = plt.subplots(figsize=(7, height))
    for step in steps:
        ax.barh(
            step.index,
            1.0,
            color=STEP_COLORS.get(step.outcome, "#888888"),
            edgecolor="white",
        )
        ax.annotate(
            f"{step.index}: {step.action} [{step.outcome}]",
            (0.02, step.index),
            va="center",
            fontsize=7,
            color="white",
        )
    ax.set_ylim(len(steps) - 0.5 if steps else 0.5, -0.5)
    ax.set_xlim(0, 1)
    ax.set_xticks([])
    ax.set_yticks([])
    summary = report.summary()
    ax.set_title(
        f"{report.name}: {summary['ok']}/{summary['steps']} steps OK", fontsize=10
    )
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
