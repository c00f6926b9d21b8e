"""Thin-film cross-section domains and their structured triangulations.

The film occupies ``{(x, z) : 0 < x < L, 0 < z < h(x)}``.  The bottom ``z = 0``
is the friction wall (Gamma0), the graph of ``h`` the fixed top wall (Gamma1)
and the two verticals ``x = 0, L`` the lateral in/outflow sections (GammaL).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GAMMA0 = "Gamma0"
GAMMA1 = "Gamma1"
GAMMAL = "GammaL"
TAGS = (GAMMA0, GAMMA1, GAMMAL)

PROFILES = ("constant", "affine", "cosine")


@dataclass(frozen=True)
class ThinDomain:
    """Film of length ``L`` with thickness profile ``h``.

    ``profile`` selects the family:

    * ``constant``: ``h = h0``
    * ``affine``:   ``h = h0 + slope * x``
    * ``cosine``:   ``h = h0 + amp * cos(2 pi waves x / L)``
    """

    L: float = 1.0
    profile: str = "constant"
    h0: float = 1.0
    slope: float = 0.0
    amp: float = 0.0
    waves: float = 1.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if not self.L > 0:
            raise ValueError("domain length L must be positive")

    @classmethod
    def constant(cls, L=1.0, h0=1.0):
        return cls(L=L, profile="constant", h0=h0)

    @classmethod
    def affine(cls, L=1.0, h0=1.0, slope=0.0):
        return cls(L=L, profile="affine", h0=h0, slope=slope)

    @classmethod
    def cosine(cls, L=1.0, h0=1.0, amp=0.0, waves=1.0):
        return cls(L=L, profile="cosine", h0=h0, amp=amp, waves=waves)

    def h(self, x):
        x = np.asarray(x, dtype=float)
        if self.profile == "constant":
            return np.full_like(x, self.h0)
        if self.profile == "affine":
            return self.h0 + self.slope * x
        return self.h0 + self.amp * np.cos(2 * np.pi * self.waves * x / self.L)

    def dh(self, x):
        x = np.asarray(x, dtype=float)
        if self.profile == "constant":
            return np.zeros_like(x)
        if self.profile == "affine":
            return np.full_like(x, self.slope)
        k = 2 * np.pi * self.waves / self.L
        return -self.amp * k * np.sin(k * x)

    @property
    def h_min(self) -> float:
        if self.profile == "constant":
            return self.h0
        if self.profile == "affine":
            return min(self.h0, self.h0 + self.slope * self.L)
        # cos(s) over s in [0, 2 pi waves]
        top = 2 * np.pi * self.waves
        cmin = -1.0 if top >= np.pi else np.cos(top)
        return self.h0 + min(self.amp * cmin, self.amp * 1.0)

    @property
    def h_max(self) -> float:
        if self.profile == "constant":
            return self.h0
        if self.profile == "affine":
            return max(self.h0, self.h0 + self.slope * self.L)
        top = 2 * np.pi * self.waves
        cmin = -1.0 if top >= np.pi else np.cos(top)
        return self.h0 + max(self.amp * cmin, self.amp * 1.0)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with tagged boundary facets.

    ``facets[i]`` is a vertex pair, ``facet_tags[i]`` its boundary part and
    ``normals[i]`` the outward unit normal.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    normals: np.ndarray
    domain: ThinDomain | None = field(default=None)
    shape: tuple[int, int] | None = field(default=None)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def cell_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self) -> float:
        return float(self.cell_areas().sum())

    def facets_with_tag(self, tag: str) -> np.ndarray:
        if tag not in TAGS:
            raise ValueError(f"unknown boundary tag {tag!r}")
        return np.flatnonzero(self.facet_tags == tag)


def build_thin_mesh(domain: ThinDomain, nx: int, nz: int) -> Mesh:
    """Terrain-following grid of ``nx * nz`` quads, each cut into two triangles."""
    if nx < 1 or nz < 1:
        raise ValueError("nx and nz must be >= 1")
    if not domain.h_min > 0:
        raise ValueError(f"thickness must stay positive (h_min = {domain.h_min})")

    xs = np.linspace(0.0, domain.L, nx + 1)
    hs = domain.h(xs)
    # vertex (i, j) -> i * (nz + 1) + j, column i at x_i, level j
    vid = lambda i, j: i * (nz + 1) + j  # noqa: E731
    vertices = np.empty(((nx + 1) * (nz + 1), 2))
    for i in range(nx + 1):
        col = slice(vid(i, 0), vid(i, nz) + 1)
        vertices[col, 0] = xs[i]
        vertices[col, 1] = hs[i] * np.arange(nz + 1) / nz

    cells = []
    for i in range(nx):
        for j in range(nz):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, d))
    cells = np.array(cells, dtype=np.int64)

    facets, tags, normals = [], [], []
    for i in range(nx):
        facets.append((vid(i, 0), vid(i + 1, 0)))
        tags.append(GAMMA0)
        normals.append((0.0, -1.0))
    for i in range(nx):
        p, q = vid(i, nz), vid(i + 1, nz)
        dx, dz = vertices[q] - vertices[p]
        ln = np.hypot(dx, dz)
        facets.append((p, q))
        tags.append(GAMMA1)
        normals.append((-dz / ln, dx / ln))
    for j in range(nz):
        facets.append((vid(0, j), vid(0, j + 1)))
        tags.append(GAMMAL)
        normals.append((-1.0, 0.0))
    for j in range(nz):
        facets.append((vid(nx, j), vid(nx, j + 1)))
        tags.append(GAMMAL)
        normals.append((1.0, 0.0))

    return Mesh(
        vertices=vertices,
        cells=cells,
        facets=np.array(facets, dtype=np.int64),
        facet_tags=np.array(tags),
        normals=np.array(normals),
        domain=domain,
        shape=(nx, nz),
    )


def boundary_measure(mesh: Mesh, tag: str) -> float:
    idx = mesh.facets_with_tag(tag)
    seg = mesh.vertices[mesh.facets[idx, 1]] - mesh.vertices[mesh.facets[idx, 0]]
    return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: ``vertex x z``, ``cell i j k``, ``facet i j TAG`` records."""
    lines = [f"vertex {x:.17g} {z:.17g}" for x, z in mesh.vertices]
    lines += [f"cell {i} {j} {k}" for i, j, k in mesh.cells]
    lines += [f"facet {i} {j} {t}" for (i, j), t in zip(mesh.facets, mesh.facet_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    vertices, cells, facets, tags = [], [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        kind = parts[0]
        if kind == "vertex":
            vertices.append((float(parts[1]), float(parts[2])))
        elif kind == "cell":
            cells.append(tuple(int(s) for s in parts[1:4]))
        elif kind == "facet":
            if parts[3] not in TAGS:
                raise ValueError(f"{path}:{lineno}: unknown facet tag {parts[3]!r}")
            facets.append((int(parts[1]), int(parts[2])))
            tags.append(parts[3])
        else:
            raise ValueError(f"{path}:{lineno}: unknown record {kind!r}")
    vertices = np.array(vertices)
    facets = np.array(facets, dtype=np.int64).reshape(-1, 2)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    tags = np.array(tags)
    normals = _outward_normals(vertices, facets, cells)
    return Mesh(vertices=vertices, cells=cells, facets=facets, facet_tags=tags, normals=normals)


def _outward_normals(vertices, facets, cells):
    # the opposite vertex of the owning cell fixes the outward side
    owner = {}
    for c in cells:
        for k in range(3):
            key = frozenset((int(c[k]), int(c[(k + 1) % 3])))
            owner[key] = int(c[(k + 2) % 3])
    normals = np.empty((len(facets), 2))
    for n, (i, j) in enumerate(facets):
        t = vertices[j] - vertices[i]
        nrm = np.array([t[1], -t[0]]) / np.hypot(*t)
        if np.dot(vertices[owner[frozenset((int(i), int(j)))]] - vertices[i], nrm) > 0:
            nrm = -nrm
        normals[n] = nrm
    return normals
