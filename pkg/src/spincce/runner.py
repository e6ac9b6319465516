"""Job orchestration: bath generation, couplings, expansion runs, scans and outputs."""
import hashlib
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, set_key, validate_config
from .couplings import DonorModelParams, cube_hyperfine, donor_hyperfine, point_dipole_hyperfine
from .engine import CCEConfig, autocorrelation, ensemble_average, run_cce, run_mc_sampling
from .fitting import FitError, fit_t2
from .hamiltonian import CentralSpin
from .pulses import PulseSequence
from .structure import (UnitCell, filter_r_bath, format_xyz, generate_bath, parse_cube, parse_xyz,
                        populate_atoms)
from .tables import (atomic_write, attach_tensors, coherence_columns, format_columns,
                     format_tensor_table, parse_tensor_table)

MANIFEST_FORMAT = 1
DENSITY_TOLERANCE = 0.05


@dataclass
class JobResult:
    """Files written by a job and the in-memory results behind them."""
    out_dir: str
    files: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def member_seeds(seed, n):
    """Bath seeds of the ensemble members; a single member uses ``seed`` itself."""
    if n == 1:
        return [int(seed)]
    return [int(c.generate_state(1, np.uint32)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


def central_spin(cfg):
    c = cfg.central
    return CentralSpin(s=c.s, D=c.d_tensor(), gamma=np.asarray(c.gamma, dtype=float), B=c.B,
                       levels=c.levels, sz_levels=c.sz_levels)


def pulse_sequence(cfg):
    p = cfg.method.pulses
    if p.explicit is not None:
        return PulseSequence.explicit([(q.fraction, q.axis, q.angle) for q in p.explicit])
    return PulseSequence.uniform(p.n, p.axis, p.angle)


def cce_config(cfg):
    m = cfg.method
    return CCEConfig(order=m.order, r_bath=None, r_dipole=m.r_dipole, method=m.kind,
                     pulses=pulse_sequence(cfg), timegrid=m.timegrid.array(),
                     second_order=m.second_order, self_terms=m.self_terms,
                     magnitude=cfg.output.mode == "magnitude")


def build_structure(cfg, seed):
    """Bath spins without couplings, before the ``r_bath`` cut."""
    st = cfg.structure
    if st.cell is not None:
        cell = st.cell
        if cell.preset == "diamond":
            uc = UnitCell.diamond(cell.a if cell.a is not None else 3.567)
        else:
            uc = UnitCell(np.array(cell.lattice), [(s.element, s.frac) for s in cell.sites])
        return generate_bath(uc, st.radius, seed, center=st.center, isotopes=st.isotopes,
                             exclude=st.exclude, exclude_radius=st.exclude_radius, zdir=st.zdir)
    with open(cfg.resolve(st.xyz)) as fh:
        atoms = parse_xyz(fh.read())
    elements = [a[0] for a in atoms]
    positions = np.array([a[1] for a in atoms], dtype=float).reshape(-1, 3) - np.array(st.origin)
    keep = np.ones(len(positions), dtype=bool)
    if st.exclude_radius > 0:
        keep &= np.linalg.norm(positions, axis=1) > st.exclude_radius
    if st.radius is not None:
        keep &= np.linalg.norm(positions, axis=1) <= st.radius
    elements = [e for e, k in zip(elements, keep) if k]
    return populate_atoms(elements, positions[keep], seed, isotopes=st.isotopes)


def _density(cfg, warnings):
    with open(cfg.resolve(cfg.couplings.path)) as fh:
        vol = parse_cube(fh.read())
    total = vol.integral()
    if not math.isfinite(total) or total == 0:
        raise ConfigError("spin density integrates to zero", "couplings.path")
    expected = 2 * cfg.central.s
    if abs(total - expected) > DENSITY_TOLERANCE * expected:
        warnings.append(f"spin density integrates to {total:.6g}, expected {expected:g}; renormalized to 1")
    return vol.scaled(1.0 / total)


def build_bath(cfg, seed, warnings=None):
    """Bath with hyperfine tensors, cut to ``method.r_bath``."""
    warnings = [] if warnings is None else warnings
    bath = build_structure(cfg, seed)
    gamma_S = cfg.central.gamma_scalar()
    model = cfg.couplings.model
    if model == "tensor-table":
        with open(cfg.resolve(cfg.couplings.path)) as fh:
            rows = parse_tensor_table(fh.read())
        bath = bath.with_tensors(A=point_dipole_hyperfine(bath, gamma_S))
        try:
            bath = attach_tensors(bath, rows)
        except ValueError as exc:
            raise ConfigError(str(exc), "couplings.path") from None
    if cfg.method.r_bath is not None:
        bath = filter_r_bath(bath, cfg.method.r_bath)
    if model == "point-dipole":
        bath = bath.with_tensors(A=point_dipole_hyperfine(bath, gamma_S))
    elif model == "donor-kl":
        d = cfg.couplings.donor
        params = DonorModelParams(n=d.n, eta=d.eta, a=d.a, b=d.b, a_si=d.a_si, k0_factor=d.k0_factor)
        bath = bath.with_tensors(A=donor_hyperfine(bath.positions, gamma_S, bath.gammas, params))
    elif model == "cube":
        vol = _density(cfg, warnings)
        origin = np.array(cfg.couplings.cube_origin)
        A = np.zeros((len(bath), 3, 3))
        skipped = 0
        for i in range(len(bath)):
            A[i], n = cube_hyperfine(vol, origin + bath.positions[i], gamma_S, bath.gammas[i])
            skipped += n
        if skipped:
            warnings.append(f"{skipped} voxels coinciding with nuclei were excluded from the hyperfine sums")
        bath = bath.with_tensors(A=A)
    return bath


def _run_member(args):
    cfg, seed, sample_seed, kind = args
    warnings = []
    bath = build_bath(cfg, seed, warnings)
    cs = central_spin(cfg)
    config = cce_config(cfg)
    if kind == "autocorr":
        return autocorrelation(bath, cs, config), warnings
    if cfg.method.mean_field == "mc":
        return run_mc_sampling(bath, cs, config, cfg.method.n_samples, sample_seed), warnings
    return run_cce(bath, cs, config), warnings


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_run_member(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_member, jobs))


def _member_jobs(cfg, kind):
    n = cfg.output.ensemble
    seeds = member_seeds(cfg.structure.seed, n)
    sample_seeds = member_seeds(cfg.method.sample_seed, n)
    return [(cfg, s, ss, kind) for s, ss in zip(seeds, sample_seeds)], seeds, sample_seeds


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def assumptions(cfg):
    out = [f"magnetic field B = {list(cfg.central.B)} G in the frame of the bath coordinates",
           f"bath sites within {cfg.structure.exclude_radius} A of the central spin are left empty"]
    if cfg.structure.zdir is not None:
        out.append(f"crystal direction {list(cfg.structure.zdir)} is rotated onto +z")
    if cfg.method.r_bath is None:
        out.append("no r_bath cut: every generated spin is included")
    return out


def manifest(cfg, seeds, sample_seeds, files, warnings):
    return {
        "format": MANIFEST_FORMAT,
        "config": cfg.to_dict(),
        "base_dir": cfg.base_dir,
        "seeds": {"bath": seeds, "samples": sample_seeds if cfg.method.mean_field == "mc" else []},
        "inputs": {k: {"path": p, "sha256": _sha256(p)} for k, p in cfg.input_paths().items()},
        "assumptions": assumptions(cfg),
        "warnings": list(warnings),
        "outputs": files,
        "versions": {"spincce": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }


def config_from_manifest(data, check_inputs=True):
    """Configuration recorded in a manifest, verifying input file hashes."""
    try:
        cfg = validate_config(data["config"], data.get("base_dir", "."))
        inputs = data.get("inputs", {})
    except (KeyError, TypeError):
        raise ConfigError("not a run manifest") from None
    if check_inputs:
        for key, rec in inputs.items():
            if _sha256(rec["path"]) != rec["sha256"]:
                raise ConfigError(f"input file changed since the manifest was written: {rec['path']}", key)
    return cfg


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _fit(cfg, time, values):
    if not cfg.output.fit:
        return None
    try:
        return {"status": "ok", **fit_t2(time, values, cfg.output.fit_window).to_dict()}
    except FitError as exc:
        return {"status": "failed", "diagnostic": str(exc)}


def _coherence_outputs(cfg, results, prefix, res):
    curves = [r[0] for r in results]
    if len(curves) == 1:
        c = curves[0]
        cols = coherence_columns(curve=c)
        time, values = c.time, c.values
    else:
        ens = ensemble_average(curves)
        cols = coherence_columns(ensemble=ens)
        time, values = ens["time"], ens["mean"]
    path = os.path.join(res.out_dir, f"{prefix}coherence.csv")
    atomic_write(path, format_columns(cols))
    res.files[f"{prefix}coherence"] = os.path.basename(path)
    res.curves[prefix.rstrip("_") or "coherence"] = (time, values)
    fit = _fit(cfg, time, values)
    if fit is not None:
        fpath = os.path.join(res.out_dir, f"{prefix}fit.json")
        atomic_write(fpath, _json(fit))
        res.files[f"{prefix}fit"] = os.path.basename(fpath)
        res.fits[prefix.rstrip("_") or "coherence"] = fit


def _autocorr_outputs(results, prefix, res):
    vals = np.array([r[0].values for r in results])
    t = results[0][0].time
    cols = {"t_ms": t, "C_kHz2": vals.mean(axis=0)}
    if len(results) > 1:
        cols["C_stderr"] = vals.std(axis=0, ddof=1) / np.sqrt(len(results))
    path = os.path.join(res.out_dir, f"{prefix}autocorr.csv")
    atomic_write(path, format_columns(cols))
    res.files[f"{prefix}autocorr"] = os.path.basename(path)
    res.curves[f"{prefix}autocorr"] = (t, cols["C_kHz2"])


def _collect_warnings(cfg, results):
    seen = list(cfg.warnings)
    for r in results:
        for w in r[1]:
            if w not in seen:
                seen.append(w)
    return seen


def run_job(cfg, out_dir=None, coherence=True, autocorr=None):
    """Run a configuration and write its outputs.

    Writes ``coherence.csv`` (and ``fit.json``), ``autocorr.csv`` when requested, and
    ``manifest.json`` into ``out_dir`` (default: ``output.dir`` resolved against the config).

    Returns:
        JobResult
    """
    out_dir = cfg.resolve(cfg.output.dir) if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    res = JobResult(out_dir)
    autocorr = cfg.output.autocorr if autocorr is None else autocorr
    jobs, seeds, sample_seeds = _member_jobs(cfg, "coherence")
    results = []
    if coherence:
        results = _map(jobs, cfg.output.workers)
        _coherence_outputs(cfg, results, "", res)
    if autocorr:
        ajobs = [(c, s, ss, "autocorr") for c, s, ss, _ in jobs]
        aresults = _map(ajobs, cfg.output.workers)
        _autocorr_outputs(aresults, "", res)
        results = results + aresults
    res.warnings = _collect_warnings(cfg, results)
    res.files["manifest"] = "manifest.json"
    atomic_write(os.path.join(out_dir, "manifest.json"),
                 _json(manifest(cfg, seeds, sample_seeds, dict(res.files), res.warnings)))
    return res


def scan_label(parameter, value):
    return f"{parameter.split('.')[-1]}={value}"


def scan_configs(cfg, parameter=None, values=None):
    """Configurations of a convergence scan as ``[(label, config)]``."""
    if parameter is None:
        if cfg.scan is None:
            raise ConfigError("no scan parameter given", "scan")
        parameter, values = cfg.scan.parameter, cfg.scan.values
    base = cfg.to_dict()
    base.pop("scan", None)
    out = []
    for v in values:
        data = set_key(base, parameter, v)
        try:
            sub = validate_config(data, cfg.base_dir, check_files=False)
        except ConfigError as exc:
            raise ConfigError(f"scan value {v!r}: {exc}", "scan.values") from None
        out.append((scan_label(parameter, v), sub))
    return parameter, out


def run_scan(cfg, parameter=None, values=None, out_dir=None):
    """Run every point of a convergence scan into one directory.

    Each point writes ``<label>_coherence.csv`` and ``<label>_fit.json``; ``scan.csv``
    collects |L| of all points when they share a time grid.
    """
    parameter, points = scan_configs(cfg, parameter, values)
    out_dir = cfg.resolve(cfg.output.dir) if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    res = JobResult(out_dir)
    jobs, owners, seeds = [], [], {}
    for label, sub in points:
        member, s, ss = _member_jobs(sub, "coherence")
        jobs += member
        owners += [label] * len(member)
        seeds[label] = {"bath": s, "samples": ss if sub.method.mean_field == "mc" else []}
    results = _map(jobs, cfg.output.workers)
    for label, sub in points:
        mine = [r for r, o in zip(results, owners) if o == label]
        _coherence_outputs(sub, mine, f"{label}_", res)
    grids = [res.curves[label][0] for label, _ in points]
    if all(len(g) == len(grids[0]) and np.array_equal(g, grids[0]) for g in grids):
        cols = {"t_ms": grids[0]}
        for label, _ in points:
            cols[f"abs_L[{label}]"] = np.abs(res.curves[label][1])
        atomic_write(os.path.join(out_dir, "scan.csv"), format_columns(cols))
        res.files["scan"] = "scan.csv"
    res.warnings = _collect_warnings(cfg, results)
    man = manifest(cfg, [], [], dict(res.files), res.warnings)
    man["seeds"] = seeds
    man["scan"] = {"parameter": parameter, "labels": [label for label, _ in points],
                   "values": list(values if values is not None else cfg.scan.values)}
    res.files["manifest"] = "manifest.json"
    man["outputs"] = dict(res.files)
    atomic_write(os.path.join(out_dir, "manifest.json"), _json(man))
    return res


def write_bath(cfg, out_dir=None, member=0):
    """Generate one bath realization and write ``bath.xyz`` and ``tensors.txt``."""
    out_dir = cfg.resolve(cfg.output.dir) if out_dir is None else out_dir
    seed = member_seeds(cfg.structure.seed, cfg.output.ensemble)[member]
    warnings = list(cfg.warnings)
    bath = build_bath(cfg, seed, warnings)
    atoms = [(str(n), tuple(float(v) for v in p)) for n, p in zip(bath.names, bath.positions)]
    atomic_write(os.path.join(out_dir, "bath.xyz"), format_xyz(atoms, f"seed={seed}"))
    atomic_write(os.path.join(out_dir, "tensors.txt"), format_tensor_table(bath))
    return JobResult(out_dir, {"bath": "bath.xyz", "tensors": "tensors.txt"}, warnings=warnings)
