"""Text formats: per-spin tensor tables and coherence CSV files."""
import csv
import io
import os
import tempfile

import numpy as np

from .structure import ParseError

MATCH_TOL = 0.05  # angstrom


def parse_tensor_table(text):
    """Parse a tensor table.

    Each non-comment row is either ``index Axx Axy Axz Ayx ... Azz`` (10 columns) or
    ``x y z Axx ... Azz`` (12 columns, position in angstrom). Tensors are in kHz.

    Returns:
        list of dict: ``{"line", "index" or "position", "tensor"}``.
    """
    rows = []
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (10, 12):
            raise ParseError(f"expected 10 or 12 columns, got {len(parts)}", k)
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", k) from None
        row = {"line": k, "tensor": np.array(nums[-9:]).reshape(3, 3)}
        if len(parts) == 10:
            if nums[0] != int(nums[0]) or nums[0] < 0:
                raise ParseError("spin index must be a non-negative integer", k)
            row["index"] = int(nums[0])
        else:
            row["position"] = np.array(nums[:3])
        rows.append(row)
    return rows


def attach_tensors(bath, rows, tol=MATCH_TOL):
    """Hyperfine tensors of ``bath`` with table rows applied.

    Position rows match the unique spin within ``tol`` angstrom.

    Raises:
        ValueError: On unmatched or ambiguous rows.
    """
    A = bath.A.copy()
    for row in rows:
        if "index" in row:
            i = row["index"]
            if i >= len(bath):
                raise ValueError(f"tensor-table line {row['line']}: spin index {i} out of range")
        else:
            d = np.linalg.norm(bath.positions - row["position"], axis=1)
            hits = np.flatnonzero(d <= tol)
            if len(hits) == 0:
                raise ValueError(f"tensor-table line {row['line']}: no bath spin within {tol} A "
                                 f"of {row['position'].tolist()}")
            if len(hits) > 1:
                raise ValueError(f"tensor-table line {row['line']}: ambiguous match ({len(hits)} spins)")
            i = hits[0]
        A[i] = row["tensor"]
    return bath.with_tensors(A=A)


def format_tensor_table(bath, by_position=True):
    lines = ["# " + ("x y z " if by_position else "index ") + "Axx Axy Axz Ayx Ayy Ayz Azx Azy Azz (kHz)"]
    for i in range(len(bath)):
        head = [repr(float(v)) for v in bath.positions[i]] if by_position else [str(i)]
        lines.append(" ".join(head + [repr(float(v)) for v in bath.A[i].reshape(-1)]))
    return "\n".join(lines) + "\n"


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return repr(float(v))


def format_columns(columns):
    """CSV text from an ordered mapping of column name to 1D array (17 significant digits)."""
    names = list(columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    n = len(next(iter(columns.values())))
    for k in range(n):
        row = []
        for name in names:
            v = columns[name][k]
            row.append(str(int(v)) if isinstance(v, (bool, np.bool_, np.integer)) else _fmt(v))
        writer.writerow(row)
    return buf.getvalue()


def coherence_columns(curve=None, ensemble=None):
    if ensemble is not None:
        mean = ensemble["mean"]
        return {
            "t_ms": ensemble["time"], "re_L": mean.real, "im_L": mean.imag, "abs_L": np.abs(mean),
            "flagged": ensemble["flagged"].astype(int),
            "re_L_stderr": ensemble["re_stderr"], "im_L_stderr": ensemble["im_stderr"],
            "abs_L_mean": ensemble["abs_mean"], "abs_L_stderr": ensemble["abs_stderr"],
        }
    return {"t_ms": curve.time, "re_L": curve.values.real, "im_L": curve.values.imag,
            "abs_L": np.abs(curve.values), "flagged": curve.flagged.astype(int)}


def read_columns(text):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty CSV", 1) from None
    data = {h: [] for h in header}
    for k, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}", k)
        try:
            for h, v in zip(header, row):
                data[h].append(float(v))
        except ValueError:
            raise ParseError(f"non-numeric value in row {row}", k) from None
    return {h: np.array(v) for h, v in data.items()}


def read_coherence(text):
    """(time, complex L, flagged) from a coherence CSV."""
    cols = read_columns(text)
    for name in ("t_ms", "re_L", "im_L"):
        if name not in cols:
            raise ParseError(f"missing column {name!r}", 1)
    flagged = cols.get("flagged", np.zeros(len(cols["t_ms"])))
    return cols["t_ms"], cols["re_L"] + 1j * cols["im_L"], flagged
