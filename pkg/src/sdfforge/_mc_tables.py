"""Marching-cubes case table, generated rather than transcribed.

For each of the 256 corner sign patterns the zero contour is traced on the
six cube faces (marching-squares segments with a fixed rule that keeps
diagonal inside-corners separated), the directed segments are chained into
closed loops on the cube surface, and each loop is fan-triangulated. The
same face rule on both sides of a shared face makes neighboring cells agree,
so meshes stitch without holes on sign-transverse input. Triangles are wound
so their normals point toward the positive (outside) region.
"""

from __future__ import annotations

import numpy as np

# Corner k sits at CORNERS[k]; bit k of a case index means "corner k inside".
CORNERS = np.array(
    [
        (0, 0, 0),
        (1, 0, 0),
        (1, 1, 0),
        (0, 1, 0),
        (0, 0, 1),
        (1, 0, 1),
        (1, 1, 1),
        (0, 1, 1),
    ],
    dtype=np.int64,
)

EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)

_EDGE_INDEX = {frozenset(e): i for i, e in enumerate(EDGES)}

# Per edge: the axis along which it runs and the lattice offset of its lower
# endpoint relative to the cell origin.
EDGE_AXIS = np.empty(12, dtype=np.int64)
EDGE_OFFSET = np.empty((12, 3), dtype=np.int64)
for _i, (_a, _b) in enumerate(EDGES):
    _diff = CORNERS[_b] - CORNERS[_a]
    EDGE_AXIS[_i] = int(np.flatnonzero(_diff != 0)[0])
    EDGE_OFFSET[_i] = np.minimum(CORNERS[_a], CORNERS[_b])

def _face_loops() -> list[list[tuple[int, int]]]:
    """For each face: its boundary as directed corner pairs, counterclockwise
    when seen from outside the cube."""
    faces = []
    for axis in range(3):
        for side in (0, 1):
            ids = [k for k in range(8) if CORNERS[k][axis] == side]
            u, w = (axis + 1) % 3, (axis + 2) % 3
            # (e_u, e_w, e_axis) is right-handed; flip for the -axis face
            first, second = (u, w) if side == 1 else (w, u)
            center = CORNERS[ids].mean(axis=0)
            ang = [
                np.arctan2(CORNERS[k][second] - center[second],
                           CORNERS[k][first] - center[first])
                for k in ids
            ]
            ring = [ids[j] for j in np.argsort(ang)]
            faces.append([(ring[j], ring[(j + 1) % 4]) for j in range(4)])
    return faces


def _segments_for_case(case: int, faces) -> list[tuple[int, int]]:
    """Directed contour segments (source edge id -> target edge id) on the
    cube surface for one sign pattern."""
    inside = [(case >> k) & 1 == 1 for k in range(8)]
    segments = []
    for boundary in faces:
        crossings = []  # (position, edge id, is_leave)
        for pos, (a, b) in enumerate(boundary):
            if inside[a] != inside[b]:
                crossings.append((pos, _EDGE_INDEX[frozenset((a, b))], inside[a]))
        # each inside->outside crossing pairs with the cyclically previous
        # outside->inside one; directing enter -> leave keeps the solid on
        # the right (outward triangle normals) and splits diagonal cases
        n = len(crossings)
        for j, (_, leave_edge, is_leave) in enumerate(crossings):
            if not is_leave:
                continue
            prev = crossings[(j - 1) % n]
            assert not prev[2], "crossings must alternate enter/leave"
            segments.append((prev[1], leave_edge))
    return segments


def _triangulate_case(case: int, faces) -> tuple[tuple[int, int, int], ...]:
    segments = _segments_for_case(case, faces)
    if not segments:
        return ()
    succ = {}
    for src, dst in segments:
        assert src not in succ, "edge used twice as segment source"
        succ[src] = dst
    triangles = []
    remaining = dict(succ)
    while remaining:
        start = next(iter(remaining))
        loop = [start]
        cur = remaining.pop(start)
        while cur != start:
            loop.append(cur)
            cur = remaining.pop(cur)
        assert len(loop) >= 3, "contour loop shorter than a triangle"
        for j in range(1, len(loop) - 1):
            triangles.append((loop[0], loop[j], loop[j + 1]))
    return tuple(triangles)


def _build_tri_table() -> tuple[tuple[tuple[int, int, int], ...], ...]:
    faces = _face_loops()
    return tuple(_triangulate_case(case, faces) for case in range(256))


TRI_TABLE = _build_tri_table()
