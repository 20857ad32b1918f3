"""Indexed triangle meshes and their file formats (OBJ, STL)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import InvalidInputError


class MeshFormatError(InvalidInputError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Vertices in metres, faces as triples of vertex indices (CCW = outward)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidInputError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def __eq__(self, other):
        if not isinstance(other, TriMesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(self.faces, other.faces)

    __hash__ = None

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def triangles(self) -> np.ndarray:
        """Face corner coordinates, shape (m, 3, 3)."""
        return self.vertices[self.faces]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            raise InvalidInputError("empty mesh has no bounds")
        used = self.vertices[np.unique(self.faces)] if len(self.faces) else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def face_areas(self) -> np.ndarray:
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def volume(self) -> float:
        """Signed volume (positive for outward-oriented closed meshes)."""
        t = self.triangles()
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def transformed(self, matrix) -> "TriMesh":
        """Apply a 4x4 homogeneous transform."""
        m = np.asarray(matrix, dtype=float)
        v = self.vertices @ m[:3, :3].T + m[:3, 3]
        faces = self.faces
        if np.linalg.det(m[:3, :3]) < 0:
            faces = faces[:, ::-1]
        return TriMesh(v, faces)

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=float), self.faces)

    def scaled(self, factor: float) -> "TriMesh":
        return TriMesh(self.vertices * factor, self.faces)

    def edges(self) -> np.ndarray:
        """Directed half-edges, shape (3m, 2)."""
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    def unique_edges(self) -> np.ndarray:
        e = np.sort(self.edges(), axis=1)
        return np.unique(e, axis=0)

    def is_watertight(self) -> bool:
        """Closed, oriented 2-manifold edges: each half-edge has exactly one twin."""
        if self.is_empty:
            return False
        he = self.edges()
        n = len(self.vertices)
        fwd = he[:, 0] * n + he[:, 1]
        rev = he[:, 1] * n + he[:, 0]
        uniq, counts = np.unique(fwd, return_counts=True)
        if np.any(counts != 1):
            return False
        return bool(np.all(np.isin(rev, uniq, assume_unique=False)))

    def euler_characteristic(self) -> int:
        used = np.unique(self.faces)
        return int(len(used) - len(self.unique_edges()) + len(self.faces))

    def cleaned(self, weld_tol: float = 0.0) -> "TriMesh":
        """Weld coincident vertices, drop degenerate faces and unused vertices."""
        v = self.vertices
        if len(v) == 0:
            return TriMesh.empty()
        key = np.round(v / weld_tol) if weld_tol > 0 else v
        _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        f = inverse[self.faces]
        good = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 2] != f[:, 0])
        f = f[good]
        v = v[first]
        t = v[f]
        area2 = np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)
        f = f[area2 > 0]
        return TriMesh(v, f).compacted()

    def compacted(self) -> "TriMesh":
        """Drop vertices not referenced by any face, keeping first-use order."""
        if self.is_empty:
            return TriMesh.empty()
        used, inv = np.unique(self.faces.ravel(), return_inverse=True)
        return TriMesh(self.vertices[used], inv.reshape(-1, 3))

    def subdivided(self, levels: int = 1) -> "TriMesh":
        """Split every face into four at its edge midpoints, ``levels`` times.

        Shared edges share their midpoint, so closed meshes stay closed and
        flat regions keep their shape exactly.
        """
        v, f = self.vertices, self.faces
        for _ in range(levels):
            edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
            uniq, inv = np.unique(edges, axis=0, return_inverse=True)
            inv = inv.reshape(-1) + len(v)
            m = len(f)
            a, b, c = inv[:m], inv[m:2 * m], inv[2 * m:]
            v = np.vstack([v, v[uniq].mean(axis=1)])
            f = np.concatenate([
                np.stack([f[:, 0], a, c], 1), np.stack([f[:, 1], b, a], 1),
                np.stack([f[:, 2], c, b], 1), np.stack([a, b, c], 1),
            ])
        return TriMesh(v, f)

    def max_edge_length(self) -> float:
        if self.is_empty:
            return 0.0
        e = self.vertices[self.edges()]
        return float(np.linalg.norm(e[:, 1] - e[:, 0], axis=1).max())

    def sample_surface(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Area-uniform random surface points."""
        if self.is_empty:
            raise InvalidInputError("cannot sample an empty mesh")
        areas = self.face_areas()
        cdf = np.cumsum(areas)
        which = np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right")
        which = np.minimum(which, len(areas) - 1)
        r1 = np.sqrt(rng.random(count))
        r2 = rng.random(count)
        t = self.triangles()[which]
        return (1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]

    def contains(self, points) -> np.ndarray:
        """Parity inside test for a closed mesh (ray along a skewed direction)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        direction = np.array([0.5773502691896258, 0.5773502691896257, 0.5773502691896259])
        direction = direction + np.array([1.3e-4, -2.9e-4, 0.7e-4])
        direction /= np.linalg.norm(direction)
        tri = self.triangles()
        inside = np.zeros(len(pts), dtype=bool)
        for start in range(0, len(pts), 256):
            p = pts[start:start + 256]
            t, _, _ = ray_triangle_hits(p, np.broadcast_to(direction, p.shape), tri)
            inside[start:start + 256] = (np.isfinite(t) & (t > 0)).sum(axis=1) % 2 == 1
        return inside

    def save(self, path) -> None:
        save_mesh(path, self)

    @classmethod
    def load(cls, path) -> "TriMesh":
        return load_mesh(path)


def ray_triangle_hits(origins, directions, tri):
    """Moller-Trumbore for every (ray, triangle) pair.

    Returns ``(t, u, v)`` arrays of shape (rays, triangles); misses have ``t = inf``.
    """
    o = np.asarray(origins, dtype=float)[:, None, :]
    d = np.asarray(directions, dtype=float)[:, None, :]
    v0 = tri[None, :, 0]
    e1 = tri[None, :, 1] - v0
    e2 = tri[None, :, 2] - v0
    pvec = np.cross(d, e2)
    det = np.einsum("rtk,rtk->rt", np.broadcast_to(e1, pvec.shape), pvec)
    ok = np.abs(det) > 1e-15
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = o - v0
    u = np.einsum("rtk,rtk->rt", tvec, pvec) * inv
    qvec = np.cross(tvec, np.broadcast_to(e1, tvec.shape))
    v = np.einsum("rtk,rtk->rt", np.broadcast_to(d, qvec.shape), qvec) * inv
    t = np.einsum("rtk,rtk->rt", np.broadcast_to(e2, qvec.shape), qvec) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1)
    return np.where(hit, t, np.inf), u, v


# --- I/O --------------------------------------------------------------------

def save_obj(path, mesh: TriMesh) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path) -> TriMesh:
    verts, faces = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(tok.split("/")[0]) for tok in parts[1:]]
            if len(idx) != 3:
                raise MeshFormatError(f"{path}:{lineno}: only triangles are supported, got {len(idx)}-gon")
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    return TriMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_stl(path, mesh: TriMesh) -> None:
    """Binary STL."""
    tri = mesh.triangles().astype("<f4")
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.where(lens > 0, normals / np.where(lens > 0, lens, 1), 0).astype("<f4")
    rec = np.zeros(len(tri), dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    rec["n"] = normals
    rec["v"] = tri
    with open(path, "wb") as fh:
        fh.write(b"vtg binary stl".ljust(80, b" "))
        fh.write(struct.pack("<I", len(tri)))
        fh.write(rec.tobytes())


def _weld_soup(tris: np.ndarray) -> TriMesh:
    flat = tris.reshape(-1, 3)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    return TriMesh(uniq, inv.reshape(-1, 3))


def load_stl(path) -> TriMesh:
    data = Path(path).read_bytes()
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * count == len(data):
            rec = np.frombuffer(data, dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")],
                                count=count, offset=84)
            return _weld_soup(rec["v"].astype(float))
    text = data.decode("ascii", errors="replace")
    if not text.lstrip().startswith("solid"):
        raise MeshFormatError(f"{path}: not an STL file")
    verts = [[float(x) for x in line.split()[1:4]] for line in text.splitlines()
             if line.strip().startswith("vertex")]
    if len(verts) % 3:
        raise MeshFormatError(f"{path}: facet with a vertex count other than 3")
    return _weld_soup(np.array(verts, dtype=float).reshape(-1, 3, 3))


def load_mesh(path) -> TriMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return load_obj(path)
    if suffix == ".stl":
        return load_stl(path)
    raise MeshFormatError(f"unsupported mesh format {suffix!r}")


def save_mesh(path, mesh: TriMesh) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        save_obj(path, mesh)
    elif suffix == ".stl":
        save_stl(path, mesh)
    else:
        raise MeshFormatError(f"unsupported mesh format {suffix!r}")


# --- simple solids ------------------------------------------------------------

def box(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> TriMesh:
    """Axis-aligned box with outward-facing triangles."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corners = np.array([[(hi if (c >> a) & 1 else lo)[a] for a in range(3)] for c in range(8)])
    faces = np.array([
        [0, 2, 1], [1, 2, 3],  # z = lo
        [4, 5, 6], [5, 7, 6],  # z = hi
        [0, 1, 4], [1, 5, 4],  # y = lo
        [2, 6, 3], [3, 6, 7],  # y = hi
        [0, 4, 2], [2, 4, 6],  # x = lo
        [1, 3, 5], [3, 7, 5],  # x = hi
    ])
    return TriMesh(corners, faces)


def icosphere(subdivisions: int = 2, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    mesh = TriMesh(v, f).subdivided(subdivisions)
    v = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    return TriMesh(v * radius + np.asarray(center, dtype=float), mesh.faces)
