"""File formats: permeability and partition files, SPE10 raw fields,
synthetic permeability generators, and CSV report writers.

All writers are atomic (write to a sibling temp file, then rename) so a
crashed run never leaves a truncated output behind.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .grid import Permeability

SPE10_SHAPE = (60, 220, 85)


def _atomic_write(path, text):
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, str(path))


# ---------------------------------------------------------------- PERM files

def write_perm(path, counts, k):
    """PERM file: header `PERM dim nx ny [nz]`, one `kx ky [kz]` line
    per cell in x-fastest order.  Values are written with shortest
    round-tripping floats so load/re-write is byte identical."""
    k = np.asarray(k, dtype=float)
    dim = len(counts)
    n_cells = int(np.prod(counts))
    if k.shape != (n_cells, dim):
        raise InvalidArgumentError(
            f"permeability shape {k.shape} does not match grid "
            f"{tuple(counts)}")
    lines = ["PERM %d %s" % (dim, " ".join(str(int(c)) for c in counts))]
    for row in k:
        lines.append(" ".join(repr(float(v)) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_perm(path):
    """Returns (counts, Permeability)."""
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "PERM":
            raise FormatError(f"{path}: missing PERM header")
        try:
            dim = int(header[1])
            counts = tuple(int(t) for t in header[2:2 + dim])
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: bad PERM header") from exc
        if dim not in (2, 3) or len(header) != 2 + dim:
            raise FormatError(f"{path}: bad PERM header")
        n_cells = int(np.prod(counts))
        try:
            k = np.loadtxt(fh, dtype=float, ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: bad permeability value") from exc
    if k.shape != (n_cells, dim):
        raise FormatError(
            f"{path}: expected {n_cells} rows of {dim} values, got "
            f"shape {k.shape}")
    if not np.isfinite(k).all() or (k <= 0).any():
        raise FormatError(f"{path}: permeability must be finite and > 0")
    return counts, Permeability(k=k)


# ---------------------------------------------------------------- PART files

def write_part(path, n_subdomains, part):
    part = np.asarray(part, dtype=int)
    lines = ["PART %d %d" % (n_subdomains, len(part))]
    lines.extend(str(int(p)) for p in part)
    _atomic_write(path, "\n".join(lines) + "\n")


def read_part(path):
    """Returns (n_subdomains, part array)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "PART":
            raise FormatError(f"{path}: missing PART header")
        try:
            n_sub, n_cells = int(header[1]), int(header[2])
        except ValueError as exc:
            raise FormatError(f"{path}: bad PART header") from exc
        try:
            part = np.loadtxt(fh, dtype=int, ndmin=1)
        except ValueError as exc:
            raise FormatError(f"{path}: bad partition id") from exc
    if len(part) != n_cells:
        raise FormatError(
            f"{path}: expected {n_cells} ids, got {len(part)}")
    if part.min() < 0 or part.max() >= n_sub:
        raise FormatError(f"{path}: partition ids outside [0,{n_sub})")
    return n_sub, part


# --------------------------------------------------------------- SPE10 input

def convert_spe10(raw_path, out_path, layer=None, box=None):
    """Slice the raw three-block SPE10 field into a PERM file.

    The raw ASCII layout is all kx values, then all ky, then all kz,
    each block x-fastest over the 60x220x85 grid.  `layer` (1-based)
    extracts one 2D layer with (kx, ky); `box` = ((x0, y0, z0),
    (nx, ny, nz)) with 0-based origin extracts a 3D cutout.
    """
    nx, ny, nz = SPE10_SHAPE
    n_cells = nx * ny * nz
    vals = []
    with open(raw_path) as fh:
        for line in fh:
            vals.extend(float(t) for t in line.split())
    if len(vals) != 3 * n_cells:
        raise FormatError(
            f"{raw_path}: expected {3 * n_cells} values, got {len(vals)}")
    k = np.array(vals).reshape(3, nz, ny, nx)  # k[comp, z, y, x]

    if (layer is None) == (box is None):
        raise InvalidArgumentError("pass exactly one of layer or box")
    if layer is not None:
        if not 1 <= layer <= nz:
            raise InvalidArgumentError(f"layer must be in [1,{nz}]")
        sl = k[:2, layer - 1]                  # (2, ny, nx)
        out = sl.reshape(2, -1).T              # x-fastest rows
        write_perm(out_path, (nx, ny), out)
        return (nx, ny)
    (x0, y0, z0), (bx, by, bz) = box
    if (x0 < 0 or y0 < 0 or z0 < 0 or x0 + bx > nx or y0 + by > ny
            or z0 + bz > nz or min(bx, by, bz) < 1):
        raise InvalidArgumentError("box outside the 60x220x85 field")
    cut = k[:, z0:z0 + bz, y0:y0 + by, x0:x0 + bx]
    out = cut.reshape(3, -1).T
    write_perm(out_path, (bx, by, bz), out)
    return (bx, by, bz)


# --------------------------------------------------------- synthetic fields

def synthetic_field(kind, counts, seed=None, **params):
    """Cell permeabilities (n_cells, dim) for a named generator.

    kinds: constant(value), checkerboard(contrast, blocks),
    log-uniform(orders), channels(orders, n_channels, width),
    smooth(orders, passes).  Deterministic given the seed.
    """
    counts = tuple(int(c) for c in counts)
    dim = len(counts)
    n_cells = int(np.prod(counts))
    rng = np.random.default_rng(seed)

    if kind == "constant":
        value = float(params.get("value", 1.0))
        return np.full((n_cells, dim), value)

    coords = np.empty((n_cells, dim), dtype=np.int64)
    rem = np.arange(n_cells)
    for a in range(dim):
        coords[:, a] = rem % counts[a]
        rem = rem // counts[a]

    if kind == "checkerboard":
        contrast = float(params.get("contrast", 1e6))
        blocks = params.get("blocks") or [max(c // 2, 1) for c in counts]
        parity = np.zeros(n_cells, dtype=np.int64)
        for a in range(dim):
            parity += coords[:, a] // int(blocks[a])
        scalar = np.where(parity % 2 == 0, 1.0, contrast)
    elif kind == "log-uniform":
        orders = float(params.get("orders", 6.0))
        scalar = 10.0 ** rng.uniform(-orders / 2, orders / 2, size=n_cells)
    elif kind == "channels":
        # high-permeability winding channels over a low background,
        # mimicking fluvial layers
        orders = float(params.get("orders", 4.0))
        n_channels = int(params.get("n_channels", 4))
        width = float(params.get("width", 1.5))
        long_ax = int(np.argmax(counts))
        tr_ax = 0 if long_ax != 0 else 1
        L, W = counts[long_ax], counts[tr_ax]
        log10k = np.full(n_cells, -orders / 2)
        log10k += 0.3 * rng.standard_normal(n_cells)
        t = coords[:, long_ax] / max(L - 1, 1)
        for _ in range(n_channels):
            x0 = rng.uniform(0, W)
            amp = rng.uniform(0.1, 0.35) * W
            freq = rng.uniform(0.5, 2.0)
            phase = rng.uniform(0, 2 * np.pi)
            center = x0 + amp * np.sin(2 * np.pi * freq * t + phase)
            center = np.mod(center, W)
            dist = np.abs(coords[:, tr_ax] - center)
            dist = np.minimum(dist, W - dist)
            in_chan = dist <= width
            log10k[in_chan] = orders / 2 + 0.3 * rng.standard_normal(
                int(in_chan.sum()))
        scalar = 10.0 ** log10k
    elif kind == "smooth":
        orders = float(params.get("orders", 3.0))
        passes = int(params.get("passes", 8))
        field = rng.standard_normal(counts[::-1])  # z-slowest array layout
        for _ in range(passes):
            for ax in range(dim):
                field = (field
                         + np.roll(field, 1, axis=ax)
                         + np.roll(field, -1, axis=ax)) / 3.0
        flat = field.reshape(-1)  # x-fastest after reversing shape
        span = flat.max() - flat.min()
        flat = (flat - flat.min()) / (span if span > 0 else 1.0) - 0.5
        scalar = 10.0 ** (orders * flat)
    else:
        raise InvalidArgumentError(f"unknown synthetic field kind: {kind}")
    return np.repeat(scalar[:, None], dim, axis=1)


# -------------------------------------------------------------- CSV reports

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isinf(v):
        return "inf"
    return repr(v)


def format_report_rows(rows):
    """rows: iterables/dicts with tau,eps0,eps_star,omega_tilde,n_c,it,kappa."""
    out = ["tau,eps0,eps_star,omega_tilde,n_c,it,kappa"]
    for r in rows:
        out.append(",".join([
            _fmt(r["tau"]), _fmt(r["eps0"]), _fmt(r["eps_star"]),
            _fmt(r["omega_tilde"]), str(int(r["n_c"])), str(int(r["it"])),
            _fmt(r["kappa"])]))
    return "\n".join(out) + "\n"


def write_report_csv(path, rows):
    _atomic_write(path, format_report_rows(rows))


def write_residuals_csv(path, relres):
    lines = ["iter,relres"]
    lines.extend(f"{i},{repr(float(r))}" for i, r in enumerate(relres))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_eigs_csv(path, pair_reports):
    """Per-pair spectra: i,j,rank,lambda with rank 1 = largest."""
    lines = ["i,j,rank,lambda"]
    for (i, j) in sorted(pair_reports):
        for rank, lam in enumerate(pair_reports[(i, j)].eigenvalues, 1):
            lines.append(f"{i},{j},{rank},{repr(float(lam))}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_spectrum_csv(path, eigenvalues):
    lines = ["i,lambda"]
    lines.extend(f"{i},{repr(float(v))}"
                 for i, v in enumerate(eigenvalues))
    _atomic_write(path, "\n".join(lines) + "\n")
