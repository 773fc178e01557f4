"""Static SVG trajectory plots, hand-rolled for determinism.

World coordinates map to SVG as (x, -y) so north is up; the viewBox spans
the scenario bounding box with a 10% margin per axis.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .sim import TrajectoryLog

SVG_NS = "http://www.w3.org/2000/svg"
PED_COLORS = ("#7f7f7f", "#8c564b", "#bcbd22", "#17becf", "#e377c2",
              "#9467bd", "#2ca02c", "#ff7f0e", "#d62728", "#1f77b4")


def plot_bounds(log: TrajectoryLog, margin: float = 0.1) -> tuple[float, float, float, float]:
    """(min_x, min_y, width, height) of all trajectory points and the goal,
    padded by ``margin`` of each axis extent."""
    points = [log.robot_goal]
    for r in log.records:
        points.append(r.robot_position)
        if r.ped_positions.size:
            points.append(r.ped_positions)
    stacked = np.vstack([np.atleast_2d(p) for p in points])
    low = stacked.min(axis=0)
    high = stacked.max(axis=0)
    extent = high - low
    pad = np.where(extent > 0, margin * extent, 1.0)
    low = low - pad
    high = high + pad
    return float(low[0]), float(low[1]), float(high[0] - low[0]), float(high[1] - low[1])


def _polyline(parent, points, color, width):
    ET.SubElement(
        parent, "polyline",
        points=" ".join(f"{x:.4f},{-y:.4f}" for x, y in points),
        fill="none", stroke=color, attrib={"stroke-width": f"{width:.4f}"},
    )


def _star(parent, center, radius, color):
    angles = np.pi / 2 + np.arange(10) * np.pi / 5
    radii = np.where(np.arange(10) % 2 == 0, radius, 0.4 * radius)
    pts = [
        (center[0] + r * np.cos(a), center[1] + r * np.sin(a))
        for r, a in zip(radii, angles)
    ]
    ET.SubElement(
        parent, "polygon",
        points=" ".join(f"{x:.4f},{-y:.4f}" for x, y in pts),
        fill=color,
    )


def emit_plot(log: TrajectoryLog, path, label_every_s: float = 2.0) -> None:
    """Write an SVG with the robot path, pedestrian paths, and goal star."""
    if not log.records:
        raise ValueError("cannot plot an empty trajectory log")
    min_x, min_y, width, height = plot_bounds(log)
    scale = max(width, height)
    stroke = 0.008 * scale

    svg = ET.Element(
        "svg", xmlns=SVG_NS, width="640", height=f"{640.0 * height / width:.0f}",
        viewBox=f"{min_x:.4f} {-(min_y + height):.4f} {width:.4f} {height:.4f}",
    )
    ET.SubElement(svg, "rect", x=f"{min_x:.4f}", y=f"{-(min_y + height):.4f}",
                  width=f"{width:.4f}", height=f"{height:.4f}", fill="#ffffff")

    n_peds = log.records[0].ped_positions.shape[0]
    for i in range(n_peds):
        track = [r.ped_positions[i] for r in log.records]
        _polyline(svg, track, PED_COLORS[i % len(PED_COLORS)], stroke)
        ET.SubElement(svg, "circle", cx=f"{track[-1][0]:.4f}", cy=f"{-track[-1][1]:.4f}",
                      r=f"{1.2 * stroke:.4f}", fill=PED_COLORS[i % len(PED_COLORS)])

    robot_track = [r.robot_position for r in log.records]
    _polyline(svg, robot_track, "#1f5fbf", 1.5 * stroke)

    # time-stamped waypoints along the robot path
    next_label = 0.0
    for r in log.records:
        if r.time + 1e-9 >= next_label:
            ET.SubElement(svg, "circle", cx=f"{r.robot_position[0]:.4f}",
                          cy=f"{-r.robot_position[1]:.4f}", r=f"{1.4 * stroke:.4f}",
                          fill="#1f5fbf")
            text = ET.SubElement(
                svg, "text", x=f"{r.robot_position[0] + 2 * stroke:.4f}",
                y=f"{-r.robot_position[1] - 2 * stroke:.4f}",
                attrib={"font-size": f"{0.025 * scale:.4f}", "fill": "#333333"},
            )
            text.text = f"t={r.time:.1f}s"
            next_label += label_every_s

    _star(svg, log.robot_goal, 0.03 * scale, "#d62728")
    Path(path).write_bytes(ET.tostring(svg, xml_declaration=True, encoding="utf-8"))
