"""Contour forest of a binary mask.

Foreground is 8-connected and background 4-connected, so the adjacency graph
between foreground components and background components is a tree rooted at
the background that touches the image border.  Walking that tree gives the
parent/child hierarchy directly: foreground components touching the outer
background are top-level contours, the background components they enclose are
their hole children, and so on.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy import ndimage

from ..core import Contour, signed_area

_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)

# Moore neighborhood, clockwise on screen starting west: (dy, dx)
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))


def trace_boundary(region: np.ndarray) -> np.ndarray:
    """Ordered outer boundary pixels ``(x, y)`` of a connected region.

    Moore-neighbor tracing from the first pixel in raster order; stops when
    the walk is back at the start and about to repeat its first move.
    """
    ys, xs = np.nonzero(region)
    if len(ys) == 0:
        return np.zeros((0, 2), dtype=int)
    y0, x0 = ys.min(), xs.min()
    sub = np.pad(region[y0:ys.max() + 1, x0:xs.max() + 1], 1)
    start = tuple(int(v) for v in np.argwhere(sub)[0])
    pts = [start]
    cur, back = start, 0  # the west neighbor of the first raster pixel is background
    second = None
    for _ in range(4 * sub.size + 8):
        nxt, back_next = _moore_step(sub, cur, back)
        if nxt is None:
            break
        if cur == start and second is not None and nxt == second:
            break
        if second is None:
            second = nxt
        pts.append(nxt)
        cur, back = nxt, back_next
    if len(pts) > 1 and pts[-1] == start:
        pts.pop()
    return np.array([(p[1] - 1 + x0, p[0] - 1 + y0) for p in pts], dtype=int)


def _moore_step(sub, cur, back):
    for k in range(1, 9):
        d = (back + k) % 8
        ny, nx = cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]
        if sub[ny, nx]:
            prev = (back + k - 1) % 8
            py, px = cur[0] + _MOORE[prev][0], cur[1] + _MOORE[prev][1]
            return (ny, nx), _MOORE.index((py - ny, px - nx))
    return None, back


def _as_polygon(points: np.ndarray, hole: bool) -> np.ndarray:
    """Pad degenerate traces to 3 points and fix orientation.

    Outer contours run counterclockwise on screen, holes clockwise.
    """
    pts = np.asarray(points)
    if len(pts) < 3:
        pts = np.concatenate([pts, np.repeat(pts[-1:], 3 - len(pts), axis=0)])
    a = signed_area(pts)
    if (a < 0 and not hole) or (a > 0 and hole):
        pts = pts[::-1]
    return pts


class ContourForest(list):
    """List of :class:`Contour` with the component label maps kept around.

    ``fg_labels``/``bg_labels`` and ``sources`` let callers rebuild the exact
    pixel set behind each contour.
    """

    def __init__(self, contours=(), fg_labels=None, bg_labels=None, sources=()):
        super().__init__(contours)
        self.fg_labels = fg_labels
        self.bg_labels = bg_labels
        self.sources = list(sources)  # (is_hole, component label)

    def roots(self) -> list[int]:
        return [i for i, c in enumerate(self) if c.parent is None]

    def region(self, i: int) -> np.ndarray:
        """Pixels of contour ``i``'s own component (holes not filled)."""
        hole, lab = self.sources[i]
        return (self.bg_labels == lab) if hole else (self.fg_labels == lab)

    def filled(self, i: int) -> np.ndarray:
        """Pixels enclosed by contour ``i``, nested components included."""
        out = self.region(i).copy()
        stack = list(self[i].children)
        while stack:
            j = stack.pop()
            out |= self.region(j)
            stack.extend(self[j].children)
        return out


def find_contours(mask: np.ndarray) -> ContourForest:
    """Border-following contour forest of an 8-connected foreground mask.

    Contours are listed in discovery order (first pixel in raster order,
    outer and hole contours interleaved).  Top-level contours have
    ``parent=None``.
    """
    mask = np.asarray(mask, dtype=bool)
    fg, nfg = ndimage.label(mask, structure=_EIGHT)
    padded = np.pad(~mask, 1, constant_values=True)
    bgp, _ = ndimage.label(padded, structure=_FOUR)
    outside = bgp[0, 0]
    bg = bgp[1:-1, 1:-1]
    if nfg == 0:
        return ContourForest([], fg, bg, [])

    # fg/bg 4-adjacencies, on the padded grid so the outer ring counts
    fgp = np.pad(fg, 1)
    edges = set()
    for a_fg, a_bg in (
        (fgp[:, :-1], bgp[:, 1:]), (fgp[:, 1:], bgp[:, :-1]),
        (fgp[:-1, :], bgp[1:, :]), (fgp[1:, :], bgp[:-1, :]),
    ):
        sel = (a_fg > 0) & (a_bg > 0)
        pairs = np.unique(np.stack([a_fg[sel], a_bg[sel]], axis=1), axis=0)
        edges.update(map(tuple, pairs.tolist()))
    fg_nbrs: dict[int, list[int]] = {}
    bg_nbrs: dict[int, list[int]] = {}
    for f, b in sorted(edges):
        fg_nbrs.setdefault(f, []).append(b)
        bg_nbrs.setdefault(b, []).append(f)

    # BFS over the component tree from the outer background
    parent_of: dict[tuple, tuple] = {}
    queue = deque([(True, outside)])
    seen = {(True, outside)}
    while queue:
        node = queue.popleft()
        is_bg, lab = node
        nbrs = bg_nbrs.get(lab, []) if is_bg else fg_nbrs.get(lab, [])
        for other in nbrs:
            key = (not is_bg, other)
            if key not in seen:
                seen.add(key)
                parent_of[key] = node
                queue.append(key)

    # discovery order by first raster pixel of each component
    firsts = []
    flat_fg = fg.ravel()
    flat_bg = bg.ravel()
    lab_fg, idx_fg = np.unique(flat_fg, return_index=True)
    for lab, idx in zip(lab_fg.tolist(), idx_fg.tolist()):
        if lab > 0:
            firsts.append((idx, False, lab))
    lab_bg, idx_bg = np.unique(flat_bg, return_index=True)
    for lab, idx in zip(lab_bg.tolist(), idx_bg.tolist()):
        if lab > 0 and lab != outside:
            firsts.append((idx, True, lab))
    firsts.sort()

    ids = {(hole, lab): i for i, (_, hole, lab) in enumerate(firsts)}
    counts_fg = np.bincount(flat_fg, minlength=nfg + 1)
    counts_bg = np.bincount(flat_bg, minlength=int(bg.max()) + 1)
    parents, kids = {}, {i: [] for i in range(len(firsts))}
    for i, (_, hole, lab) in enumerate(firsts):
        par = parent_of.get((hole, lab))  # node keys are (is_background, label)
        if par is None or par == (True, outside):
            parents[i] = None
        else:
            parents[i] = ids[par]
            kids[parents[i]].append(i)

    # filled area: own pixels plus all descendants, computed bottom-up
    own = [int(counts_bg[lab] if hole else counts_fg[lab]) for _, hole, lab in firsts]
    filled = list(own)
    order = sorted(range(len(firsts)), key=lambda i: -_depth(i, parents))
    for i in order:
        if parents[i] is not None:
            filled[parents[i]] += filled[i]

    boxes_fg = ndimage.find_objects(fg)
    boxes_bg = ndimage.find_objects(bg)
    contours = []
    for i, (_, hole, lab) in enumerate(firsts):
        labels, box = (bg, boxes_bg[lab - 1]) if hole else (fg, boxes_fg[lab - 1])
        origin = np.array([box[1].start, box[0].start])
        pts = _as_polygon(trace_boundary(labels[box] == lab) + origin, hole)
        contours.append(Contour(points=pts, parent=parents[i], children=tuple(kids[i]),
                                is_hole=hole, area=filled[i]))
    return ContourForest(contours, fg, bg, [(hole, lab) for _, hole, lab in firsts])


def _depth(i, parents):
    d = 0
    while parents[i] is not None:
        i = parents[i]
        d += 1
    return d
