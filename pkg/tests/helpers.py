"""Shared test utilities: ground-truth matching and small fixtures."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from dihm.forward import Particle, make_field
from dihm.optics import OpticalConfig


def match_detections(detections, particles, pitch, radius_px):
    """Optimal one-to-one matching of detections to true particles.

    A pair is admissible when the lateral distance is at most ``radius_px``.
    Returns ``(pairs, lateral_px, axial_m)`` with pairs of indices
    ``(detection, particle)``.
    """
    if not detections or not particles:
        return [], np.array([]), np.array([])
    d = np.array([(q.centroid_x, q.centroid_y) for q in detections])
    t = np.array([(p.x, p.y) for p in particles])
    dist = np.hypot(d[:, None, 0] - t[None, :, 0], d[:, None, 1] - t[None, :, 1]) / pitch
    cost = np.where(dist <= radius_px, dist, 1e6)
    rows, cols = linear_sum_assignment(cost)
    keep = dist[rows, cols] <= radius_px
    rows, cols = rows[keep], cols[keep]
    lateral = dist[rows, cols]
    axial = np.array([abs(detections[i].z_estimate - particles[j].z) for i, j in zip(rows, cols)])
    return list(zip(rows.tolist(), cols.tolist())), lateral, axial


def small_config(n=128, planes=8, gap=10e-3, **kw):
    return OpticalConfig(sensor_width=n, sensor_height=n, n_planes=planes, gap_depth=gap, **kw)


def single_particle_field(config, x_px, y_px, z, diameter=20e-6, opacity=1.0):
    p = config.pixel_pitch
    return make_field([Particle(x_px * p, y_px * p, z, diameter, opacity)], config)
