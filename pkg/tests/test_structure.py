import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spincce.isotopes import ISOTOPES, SpinType, isotope_lookup, spin_type
from spincce.structure import (BathArray, GeometryError, ParseError, UnitCell, VolumetricData,
                               filter_r_bath, format_cube, format_xyz, generate_bath, lattice_sites,
                               parse_cube, parse_xyz, populate_atoms)
from spincce.constants import BOHR

# gamma/2pi (MHz/T), spin and natural abundance from standard NMR tables
PUBLISHED = {
    "1H": (0.5, 42.577478, 0.999885),
    "2H": (1.0, 6.535903, 0.000115),
    "13C": (0.5, 10.708395, 0.0107),
    "14N": (1.0, 3.077706, 0.99636),
    "15N": (0.5, -4.317266, 0.00364),
    "17O": (2.5, -5.774236, 0.00038),
    "29Si": (0.5, -8.465499, 0.04685),
    "31P": (0.5, 17.235, 1.0),
}


def test_isotope_table_matches_published_values():
    for name, (s, f, ab) in PUBLISHED.items():
        t = spin_type(name)
        assert t.s == s
        assert t.gamma == pytest.approx(2 * math.pi * f * 1e6 * 1e-4 * 1e-3, rel=1e-5)
        assert t.abundance == pytest.approx(ab, rel=1e-6)


def test_isotope_lookup_examples():
    c = {t.name: t for t in isotope_lookup("C")}
    assert c["13C"].s == 0.5
    si = {t.name: t for t in isotope_lookup("Si")}
    assert si["29Si"].s == 0.5 and si["29Si"].abundance == pytest.approx(0.047, abs=5e-4)
    assert {t.name: t for t in isotope_lookup("H")}["1H"].s == 0.5
    for el in ("H", "C", "N", "Si", "O", "P"):
        assert isotope_lookup(el)
    with pytest.raises(KeyError):
        isotope_lookup("Xx")


def test_abundances_per_element_at_most_one():
    for el, rows in ISOTOPES.items():
        assert sum(t.abundance for t in rows) <= 1 + 1e-12
        for t in rows:
            assert 0 <= t.abundance <= 1
            assert (2 * t.s) == int(2 * t.s)


def test_spin_type_validation():
    with pytest.raises(ValueError):
        SpinType("x", 0.5, 1.0, 0.0, 1.5)
    with pytest.raises(ValueError):
        SpinType("x", 0.3, 1.0, 0.0, 0.5)


def test_unit_cell_validation():
    with pytest.raises(GeometryError):
        UnitCell(np.zeros((3, 3)), [("C", (0, 0, 0))])
    with pytest.raises(GeometryError):
        UnitCell(np.eye(3), [("C", (1.0, 0, 0))])
    with pytest.raises(GeometryError):
        UnitCell(np.eye(3), [("C", (-0.1, 0, 0))])


def test_zero_abundance_gives_empty_bath():
    cell = UnitCell.diamond()
    bath = generate_bath(cell, 10, seed=1, isotopes={"C": {"13C": 0.0}})
    assert len(bath) == 0


def test_site_count_matches_brute_force():
    a, radius = 2.0, 3.0
    cell = UnitCell.cubic(a, [("C", (0, 0, 0))])
    bath = generate_bath(cell, radius, seed=0, isotopes={"C": {"13C": 1.0}}, exclude_radius=0.0)
    brute = sum(1 for i, j, k in itertools.product(range(-3, 4), repeat=3)
                if (a * i) ** 2 + (a * j) ** 2 + (a * k) ** 2 <= radius ** 2)
    assert len(bath) == brute == 19


def test_origin_exclusion_default():
    cell = UnitCell.cubic(2.0, [("C", (0, 0, 0))])
    bath = generate_bath(cell, 3.0, seed=0, isotopes={"C": {"13C": 1.0}})
    assert len(bath) == 18
    assert np.all(bath.distances > 0.1)


def test_natural_abundance_binomial_statistics():
    cell = UnitCell.diamond()
    n_sites = len(lattice_sites(cell, 40.0)[0]) - 1  # origin excluded
    p = 0.0107
    mean, sigma = n_sites * p, math.sqrt(n_sites * p * (1 - p))
    counts = [len(generate_bath(cell, 40.0, seed=s)) for s in range(20)]
    avg = np.mean(counts)
    assert abs(avg - mean) < 4 * sigma / math.sqrt(20)
    for c in counts:
        assert abs(c - mean) < 6 * sigma


def test_generation_is_deterministic():
    cell = UnitCell.diamond()
    a = generate_bath(cell, 20, seed=7)
    b = generate_bath(cell, 20, seed=7)
    assert np.array_equal(a.names, b.names) and np.array_equal(a.positions, b.positions)
    c = generate_bath(cell, 20, seed=8)
    assert not (len(a) == len(c) and np.array_equal(a.positions, c.positions))


def test_positions_within_radius_and_isotopes_exclusive():
    cell = UnitCell.diamond()
    bath = generate_bath(cell, 15, seed=3, isotopes={"C": {"13C": 0.3}})
    assert np.all(bath.distances <= 15 + 1e-12)
    assert len(np.unique(np.round(bath.positions, 9), axis=0)) == len(bath)


def test_translation_consistency():
    lat = np.array([[3.0, 0.2, 0.0], [0.1, 2.5, 0.0], [0.0, 0.3, 4.0]])
    frac = [(0.0, 0.0, 0.0), (0.5, 0.25, 0.5)]
    shift = np.array([0.3, 0.6, 0.1])
    cell_a = UnitCell(lat, [("C", f) for f in frac])
    cell_b = UnitCell(lat, [("C", tuple((np.array(f) + shift) % 1.0)) for f in frac])
    center = np.array([0.5, 0.25, 0.5])
    _, pa, _ = lattice_sites(cell_a, 9.0, center)
    _, pb, _ = lattice_sites(cell_b, 9.0, (center + shift) % 1.0)
    key = lambda p: p[np.lexsort(np.round(p, 6).T)]
    assert pa.shape == pb.shape
    assert np.allclose(key(pa), key(pb), atol=1e-9)


def test_exclude_and_zdir():
    cell = UnitCell.diamond()
    full = generate_bath(cell, 8, seed=0, isotopes={"C": {"13C": 1.0}})
    nv = generate_bath(cell, 8, seed=0, isotopes={"C": {"13C": 1.0}}, exclude=[(0.25, 0.25, 0.25)])
    assert len(full) - len(nv) == 1
    rotated = generate_bath(cell, 8, seed=0, isotopes={"C": {"13C": 1.0}}, zdir=(1, 1, 1))
    assert np.allclose(np.sort(rotated.distances), np.sort(full.distances), atol=1e-12)
    # the nearest neighbour along [111] ends up on the +z axis
    n111 = cell.to_cartesian((0.25, 0.25, 0.25))
    assert np.any(np.all(np.isclose(rotated.positions, [0, 0, np.linalg.norm(n111)], atol=1e-9), axis=1))


def test_filter_r_bath():
    rng = np.random.default_rng(0)
    pos = rng.uniform(-10, 10, size=(60, 3))
    bath = BathArray(["13C"] * 60, pos)
    sub = filter_r_bath(bath, 8.0)
    brute = [i for i in range(60) if math.sqrt(sum(v * v for v in pos[i])) <= 8.0]
    assert np.array_equal(sub.positions, pos[brute])
    assert len(filter_r_bath(bath, 100.0)) == 60
    assert len(filter_r_bath(bath, 1e-300)) == 0


def test_bath_array_tensor_symmetry():
    A = np.zeros((1, 3, 3))
    A[0, 0, 1] = 1.0
    with pytest.raises(ValueError):
        BathArray(["13C"], [[1, 0, 0]], A=A)
    with pytest.raises(KeyError):
        BathArray(["99Zz"], [[1, 0, 0]])


def test_populate_atoms():
    bath = populate_atoms(["13C", "C", "H"], [[1, 0, 0], [2, 0, 0], [3, 0, 0]], seed=0,
                          isotopes={"C": {"13C": 0.0}})
    assert list(bath.names) == ["13C", "1H"]


def test_parse_xyz_examples():
    assert parse_xyz("1\n\nC 0 0 0") == [("C", (0.0, 0.0, 0.0))]
    with pytest.raises(ParseError) as err:
        parse_xyz("2\ncomment\nC 0 0 0\n")
    assert err.value.line is not None
    with pytest.raises(ParseError) as err:
        parse_xyz("1\n\nC 0 x 0")
    assert err.value.line == 3
    with pytest.raises(ParseError):
        parse_xyz("two\n\n")


@given(st.lists(st.tuples(st.sampled_from(["C", "13C", "H", "Si"]),
                          st.tuples(*[st.floats(-1e12, 1e12, allow_nan=False)] * 3)), max_size=6))
def test_xyz_round_trip(atoms):
    parsed = parse_xyz(format_xyz(atoms, "round trip"))
    assert parsed == [(e, tuple(float(v) for v in p)) for e, p in atoms]


def test_xyz_scientific_notation_and_whitespace():
    atoms = parse_xyz("1\n\n   Si\t1.5e-3   -2.25E+01 7e0  \n")
    assert atoms == [("Si", (1.5e-3, -22.5, 7.0))]


def _cube_text(shape, voxel_rows, values, origin=(0, 0, 0), natoms=1, extra=""):
    lines = ["title", "comment", f"{natoms} {origin[0]} {origin[1]} {origin[2]}"]
    for n, row in zip(shape, voxel_rows):
        lines.append(f"{n} {row[0]} {row[1]} {row[2]}")
    for _ in range(abs(natoms)):
        lines.append("6 0.0 0.0 0.0 0.0")
    if extra:
        lines.append(extra)
    lines += [" ".join(str(v) for v in values[i:i + 6]) for i in range(0, len(values), 6)]
    return "\n".join(lines) + "\n"


def test_cube_integral_of_ones():
    text = _cube_text((-2, -2, -2), np.eye(3), [1.0] * 8)
    vol = parse_cube(text)
    assert vol.shape == (2, 2, 2)
    assert vol.integral() == pytest.approx(8.0, abs=1e-14)


def test_cube_bohr_units_preserve_integral():
    text = _cube_text((2, 2, 2), np.eye(3), [1.0] * 8)
    vol = parse_cube(text)
    assert np.allclose(vol.voxel, np.eye(3) * BOHR)
    assert vol.integral() == pytest.approx(8.0, rel=1e-12)


def test_cube_truncated_values():
    with pytest.raises(ParseError) as err:
        parse_cube(_cube_text((-2, -2, -2), np.eye(3), [1.0] * 7))
    assert err.value.line is not None
    with pytest.raises(ParseError):
        parse_cube("a\nb\n1 0 0 0\n")


def test_cube_negative_natoms_dataset_line():
    text = _cube_text((-1, -1, -2), np.eye(3), [2.0, 3.0], natoms=-1, extra="1 7")
    vol = parse_cube(text)
    assert np.array_equal(vol.data.reshape(-1), [2.0, 3.0])


def test_cube_z_fastest_ordering():
    values = list(range(12))
    vol = parse_cube(_cube_text((-2, -3, -2), np.eye(3), values))
    assert vol.data[1, 2, 0] == 1 * 6 + 2 * 2 + 0
    assert np.array_equal(vol.grid_points()[1], [0, 0, 1])


def test_cube_gaussian_integral():
    sigma, h, n = 0.6, 0.15, 41
    origin = -h * (n - 1) / 2
    g = origin + h * np.arange(n)
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    rho = np.exp(-(x ** 2 + y ** 2 + z ** 2) / (2 * sigma ** 2)) / (2 * np.pi * sigma ** 2) ** 1.5
    vol = VolumetricData(np.full(3, origin), np.eye(3) * h, rho)
    parsed = parse_cube(format_cube(vol))
    assert parsed.integral() == pytest.approx(1.0, abs=1e-3)


def test_cube_skewed_voxels():
    voxel = np.array([[0.5, 0.0, 0.0], [0.25, 0.5, 0.0], [0.0, 0.1, 0.4]])
    vol = parse_cube(_cube_text((-2, -2, -2), voxel, [1.0] * 8))
    assert vol.voxel_volume == pytest.approx(abs(np.linalg.det(voxel)))
    assert vol.integral() == pytest.approx(8 * abs(np.linalg.det(voxel)))
