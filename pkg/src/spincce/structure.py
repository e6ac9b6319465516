"""Crystal cells, stochastic bath generation and structure-file parsers."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .constants import BOHR
from .isotopes import SpinType, isotope_lookup, spin_type

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """Malformed input file. ``line`` is 1-based, or None when not attributable."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class GeometryError(ValueError):
    pass


def rotation_to_z(direction):
    """Rotation matrix R such that R @ direction is along +z."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(d, z)
    c = float(d @ z)
    if np.linalg.norm(v) < 1e-12:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


@dataclass(frozen=True)
class UnitCell:
    """Unit cell with lattice vectors as rows (angstrom) and fractional sites."""
    lattice: np.ndarray
    sites: tuple  # ((element, (fx, fy, fz)), ...)

    def __post_init__(self):
        lat = np.array(self.lattice, dtype=float)
        if lat.shape != (3, 3):
            raise GeometryError(f"lattice must be 3x3, got shape {lat.shape}")
        if abs(np.linalg.det(lat)) < 1e-12:
            raise GeometryError("lattice vectors are singular")
        sites = []
        for el, frac in self.sites:
            frac = np.asarray(frac, dtype=float)
            if frac.shape != (3,) or np.any(frac < 0) or np.any(frac >= 1):
                raise GeometryError(f"fractional coordinates of {el} must lie in [0, 1): {frac}")
            sites.append((str(el), tuple(frac)))
        object.__setattr__(self, "lattice", lat)
        object.__setattr__(self, "sites", tuple(sites))

    @classmethod
    def cubic(cls, a, sites):
        return cls(np.eye(3) * a, sites)

    @classmethod
    def diamond(cls, a=3.567, element="C"):
        frac = [(0, 0, 0), (0.5, 0.5, 0), (0.5, 0, 0.5), (0, 0.5, 0.5),
                (0.25, 0.25, 0.25), (0.75, 0.75, 0.25), (0.75, 0.25, 0.75), (0.25, 0.75, 0.75)]
        return cls.cubic(a, [(element, f) for f in frac])

    def to_cartesian(self, frac):
        return np.asarray(frac, dtype=float) @ self.lattice


class BathArray:
    """Bath spins with positions relative to the central spin.

    Attributes:
        names (ndarray of str): Isotope names.
        positions (ndarray): Positions in angstrom, shape (n, 3).
        A (ndarray): Hyperfine tensors in kHz, shape (n, 3, 3).
        P (ndarray): Quadrupole tensors in kHz, shape (n, 3, 3).
        seed: Seed used to generate the bath, if any.
    """

    def __init__(self, names, positions, A=None, P=None, seed=None, types=None):
        self.names = np.asarray(names, dtype=str).reshape(-1)
        n = self.names.size
        self.positions = np.asarray(positions, dtype=float).reshape(n, 3)
        self.A = np.zeros((n, 3, 3)) if A is None else np.asarray(A, dtype=float).reshape(n, 3, 3)
        self.P = np.zeros((n, 3, 3)) if P is None else np.asarray(P, dtype=float).reshape(n, 3, 3)
        self.seed = seed
        self.types = dict(types or {})
        for name in np.unique(self.names):
            if name not in self.types:
                self.types[name] = spin_type(name)
        for label, t in (("A", self.A), ("P", self.P)):
            asym = np.abs(t - np.swapaxes(t, 1, 2)).max(initial=0.0)
            if asym > 1e-9 * max(1.0, np.abs(t).max(initial=0.0)):
                raise ValueError(f"{label} tensors must be symmetric (max asymmetry {asym:.3g})")
        self.spins = np.array([self.types[n].s for n in self.names], dtype=float)
        self.gammas = np.array([self.types[n].gamma for n in self.names], dtype=float)

    def __len__(self):
        return self.names.size

    def __repr__(self):
        counts = {n: int(c) for n, c in zip(*np.unique(self.names, return_counts=True))}
        return f"BathArray({len(self)} spins: {counts})"

    @property
    def dims(self):
        return np.rint(2 * self.spins + 1).astype(int)

    @property
    def distances(self):
        return np.linalg.norm(self.positions, axis=1)

    def subset(self, index):
        index = np.asarray(index)
        return BathArray(self.names[index], self.positions[index], self.A[index], self.P[index],
                         seed=self.seed, types=self.types)

    def with_tensors(self, A=None, P=None):
        return BathArray(self.names, self.positions, self.A if A is None else A,
                         self.P if P is None else P, seed=self.seed, types=self.types)


def _resolve_isotopes(element, isotopes):
    if isotopes is not None and element in isotopes:
        spec = isotopes[element]
        if isinstance(spec, dict):
            table = []
            for name, ab in spec.items():
                base = spin_type(name)
                table.append(SpinType(base.name, base.s, base.gamma, base.quadrupole_moment, float(ab)))
            return table
        return list(spec)
    return isotope_lookup(element)


def lattice_sites(cell, radius, center=(0, 0, 0)):
    """All sites of the periodic crystal within ``radius`` of ``center``.

    Returns:
        tuple: (elements, positions relative to center, lattice indices (n, 4)) in canonical
        order sorted by (i, j, k, site).
    """
    lat = cell.lattice
    c = cell.to_cartesian(center)
    recip_norms = np.linalg.norm(np.linalg.inv(lat), axis=0)
    cfrac = np.asarray(center, dtype=float)
    lo = np.floor(cfrac - radius * recip_norms).astype(int) - 1
    hi = np.ceil(cfrac + radius * recip_norms).astype(int) + 1
    grid = np.stack(np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(lo, hi)], indexing="ij"), -1)
    grid = grid.reshape(-1, 3)
    elements, positions, indices = [], [], []
    for k, (el, frac) in enumerate(cell.sites):
        pos = (grid + np.asarray(frac)) @ lat - c
        keep = np.einsum("ij,ij->i", pos, pos) <= radius ** 2
        elements.extend([el] * int(keep.sum()))
        positions.append(pos[keep])
        idx = np.column_stack([grid[keep], np.full(keep.sum(), k)])
        indices.append(idx)
    positions = np.concatenate(positions) if positions else np.empty((0, 3))
    indices = np.concatenate(indices) if indices else np.empty((0, 4), dtype=int)
    order = np.lexsort(indices.T[::-1])
    return np.asarray(elements, dtype=str)[order], positions[order], indices[order]


def generate_bath(cell, radius, seed, center=(0, 0, 0), isotopes=None, exclude=(),
                  exclude_radius=0.1, zdir=None):
    """Populate the lattice around ``center`` with spin-active isotopes.

    Every site within ``radius`` draws one uniform number from a generator seeded by
    ``seed``; the site hosts isotope k of its element when the number falls into the k-th
    abundance interval, so isotopes of one site are mutually exclusive.

    Args:
        cell (UnitCell): Crystal structure.
        radius (float): Generation radius in angstrom.
        seed (int): Random seed.
        center (array-like): Fractional coordinates of the central spin.
        isotopes (dict): Optional per-element override, ``{element: {isotope: abundance}}``.
        exclude (list): Fractional coordinates of extra sites to leave empty (e.g. the
            nitrogen of an NV center).
        exclude_radius (float): Sites closer than this to the center or to any entry of
            ``exclude`` are left empty; 0 disables the exclusion.
        zdir (array-like): Optional crystal direction (in lattice coordinates) rotated onto +z.

    Returns:
        BathArray
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    elements, positions, _ = lattice_sites(cell, radius, center)
    keep = np.ones(len(positions), dtype=bool)
    if exclude_radius > 0:
        keep &= np.linalg.norm(positions, axis=1) > exclude_radius
        for frac in exclude:
            p = cell.to_cartesian(frac) - cell.to_cartesian(center)
            keep &= np.linalg.norm(positions - p, axis=1) > exclude_radius
    elements, positions = elements[keep], positions[keep]

    rng = np.random.default_rng(seed)
    draws = rng.random(len(elements))
    names = np.full(len(elements), "", dtype=object)
    types = {}
    for el in np.unique(elements):
        table = _resolve_isotopes(el, isotopes)
        total = sum(t.abundance for t in table)
        if total > 1 + 1e-12:
            raise ValueError(f"abundances of {el} isotopes sum to {total} > 1")
        mask = elements == el
        edges = np.cumsum([t.abundance for t in table])
        which = np.searchsorted(edges, draws[mask], side="right")
        chosen = np.array([table[w].name if w < len(table) else "" for w in which], dtype=object)
        names[mask] = chosen
        types.update({t.name: t for t in table})
    occupied = names != ""
    positions = positions[occupied]
    if zdir is not None:
        rot = rotation_to_z(cell.to_cartesian(zdir))
        positions = positions @ rot.T
    return BathArray(names[occupied].astype(str), positions, seed=seed, types=types)


def populate_atoms(elements, positions, seed, isotopes=None):
    """Assign isotopes to explicit atoms.

    Atoms named by isotope (``'13C'``) are kept as-is; atoms named by element draw an
    isotope by abundance, like :func:`generate_bath`.
    """
    rng = np.random.default_rng(seed)
    names, keep, types = [], [], {}
    for el, pos in zip(elements, positions):
        u = rng.random()
        if el[0].isdigit():
            t = spin_type(el)
            types[t.name] = t
            names.append(el)
            keep.append(pos)
            continue
        acc = 0.0
        for t in _resolve_isotopes(el, isotopes):
            acc += t.abundance
            if u < acc:
                types[t.name] = t
                names.append(t.name)
                keep.append(pos)
                break
    return BathArray(names, np.reshape(keep, (-1, 3)), seed=seed, types=types)


def filter_r_bath(bath, r_bath):
    """Spins with distance from the central spin at most ``r_bath``; order preserved."""
    if r_bath <= 0:
        raise ValueError("r_bath must be positive")
    return bath.subset(np.flatnonzero(bath.distances <= r_bath))


def parse_xyz(text):
    """Parse an XYZ document into ``[(element, (x, y, z)), ...]`` in angstrom."""
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty XYZ input", 1)
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"atom count expected, got {lines[0].strip()!r}", 1) from None
    if count < 0:
        raise ParseError("negative atom count", 1)
    rows = lines[2:]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) != count:
        raise ParseError(f"declared {count} atoms but found {len(rows)} rows", min(len(lines), 3 + len(rows)))
    atoms = []
    for k, row in enumerate(rows, start=3):
        parts = row.split()
        if len(parts) < 4:
            raise ParseError(f"expected 'element x y z', got {row.strip()!r}", k)
        try:
            xyz = tuple(float(p) for p in parts[1:4])
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {row.strip()!r}", k) from None
        atoms.append((parts[0], xyz))
    return atoms


def format_xyz(atoms, comment=""):
    lines = [str(len(atoms)), comment]
    for el, (x, y, z) in atoms:
        lines.append(f"{el} {x!r} {y!r} {z!r}")
    return "\n".join(lines) + "\n"


@dataclass
class VolumetricData:
    """Scalar field on a (possibly skewed) regular grid, lengths in angstrom.

    ``data`` is expressed per cubic angstrom, so ``integral()`` is unit-independent.
    """
    origin: np.ndarray
    voxel: np.ndarray  # rows are the voxel step vectors
    data: np.ndarray  # shape (nx, ny, nz)
    atoms: list = field(default_factory=list)  # [(Z, charge, position)]
    comment: tuple = ("", "")

    @property
    def shape(self):
        return self.data.shape

    @property
    def voxel_volume(self):
        return abs(float(np.linalg.det(self.voxel)))

    def grid_points(self):
        idx = np.indices(self.data.shape).reshape(3, -1).T
        return self.origin + idx @ self.voxel

    def integral(self):
        return float(self.data.sum() * self.voxel_volume)

    def scaled(self, factor):
        return VolumetricData(self.origin, self.voxel, self.data * factor, self.atoms, self.comment)


def parse_cube(text):
    """Parse a Gaussian cube file.

    Positive voxel counts mean Bohr units, negative counts angstrom. Bohr inputs are
    converted to angstrom and values rescaled from per-bohr^3 to per-angstrom^3.
    """
    lines = text.splitlines()
    if len(lines) < 6:
        raise ParseError("truncated cube header", len(lines) + 1)

    def numbers(k, n, cast=float):
        parts = lines[k].split()
        if len(parts) < n:
            raise ParseError(f"expected {n} fields, got {len(parts)}", k + 1)
        try:
            return [cast(p) for p in parts[:n]], parts[n:]
        except ValueError:
            raise ParseError(f"non-numeric field in {lines[k].strip()!r}", k + 1) from None

    head, rest = numbers(2, 4)
    natoms = int(head[0])
    if natoms != head[0]:
        raise ParseError("atom count must be an integer", 3)
    nval = int(rest[0]) if rest else 1
    origin = np.array(head[1:4])
    counts, voxel = [], []
    for k in range(3, 6):
        row, _ = numbers(k, 4)
        if int(row[0]) != row[0] or row[0] == 0:
            raise ParseError("voxel count must be a non-zero integer", k + 1)
        counts.append(int(row[0]))
        voxel.append(row[1:4])
    bohr = counts[0] > 0
    if any((c > 0) != bohr for c in counts):
        raise ParseError("mixed Bohr/angstrom voxel counts", 4)
    shape = tuple(abs(c) for c in counts)
    scale = BOHR if bohr else 1.0
    voxel = np.array(voxel) * scale
    origin = origin * scale
    if abs(np.linalg.det(voxel)) <= 0:
        raise ParseError("voxel vectors are degenerate", 4)

    atoms = []
    k = 6
    for _ in range(abs(natoms)):
        if k >= len(lines):
            raise ParseError("truncated atom block", k + 1)
        row, _ = numbers(k, 5)
        atoms.append((int(row[0]), row[1], np.array(row[2:5]) * scale))
        k += 1
    if natoms < 0:
        if k >= len(lines):
            raise ParseError("missing dataset-id line", k + 1)
        ids = lines[k].split()
        try:
            nval = int(ids[0])
        except (ValueError, IndexError):
            raise ParseError("malformed dataset-id line", k + 1) from None
        k += 1

    values = []
    for j in range(k, len(lines)):
        try:
            values.extend(float(v) for v in lines[j].replace("D", "E").split())
        except ValueError:
            raise ParseError(f"non-numeric value in {lines[j].strip()!r}", j + 1) from None
    expected = shape[0] * shape[1] * shape[2] * nval
    if len(values) != expected:
        raise ParseError(f"expected {expected} grid values, found {len(values)}", len(lines))
    data = np.array(values).reshape(shape + (nval,))[..., 0]
    if bohr:
        data = data / BOHR ** 3
    return VolumetricData(origin, voxel, data, atoms, (lines[0], lines[1]))


def format_cube(volume, comment=("cube", "")):
    """Write a cube file in angstrom units (negative voxel counts)."""
    lines = list(comment[:2])
    lines.append(f"{len(volume.atoms):5d} " + " ".join(f"{v:.12e}" for v in volume.origin))
    for n, vec in zip(volume.shape, volume.voxel):
        lines.append(f"{-n:5d} " + " ".join(f"{v:.12e}" for v in vec))
    for z, q, pos in volume.atoms:
        lines.append(f"{z:5d} {q:.6f} " + " ".join(f"{v:.12e}" for v in pos))
    flat = volume.data.reshape(volume.shape[0] * volume.shape[1], volume.shape[2])
    for row in flat:
        for j in range(0, len(row), 6):
            lines.append(" ".join(f"{v:.12e}" for v in row[j:j + 6]))
    return "\n".join(lines) + "\n"
