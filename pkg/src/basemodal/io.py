"""Deterministic artifact serialization: CSV tables, raw-trace dumps, compare.

Every CSV starts with a single header comment carrying the config hash and
the column names, so artifacts are self-describing and traceable to the
configuration that produced them. Float formatting uses %.17g for
byte-identical reproduction across runs.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np


class IoError(Exception):
    pass


class SchemaMismatch(IoError):
    """Compared CSV files have different column sets."""


def config_hash(config) -> str:
    """Short stable hash of a JSON-serializable configuration mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_table(path, columns, rows, cfg_hash=""):
    """Write a CSV table with a config-hash header comment.

    ``columns`` is a list of names, ``rows`` an iterable of equal-length
    value tuples (floats, ints or bools).
    """
    lines = [f"# config={cfg_hash} columns={','.join(columns)}"]
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise IoError("row length does not match column count")
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table(path):
    """Read a CSV written by write_table; returns (cfg_hash, columns, array)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# config="):
            raise IoError(f"{path}: missing config-hash header")
        cfg_hash = header.split("config=", 1)[1].split()[0]
        names = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size and data.shape[1] != len(names):
        raise IoError(f"{path}: column count mismatch")
    return cfg_hash, names, data


def spectrum_columns(nsens, H):
    """Column names of a flattened per-level spectrum block."""
    cols = []
    for s in range(nsens):
        for h in range(H + 1):
            cols += [f"s{s + 1}_h{h}_re", f"s{s + 1}_h{h}_im"]
    return cols


def write_test_record(path, record, cfg_hash=""):
    """Serialize a rig TestRecord: one row per level."""
    if not record.levels:
        raise IoError("empty test record")
    H = record.levels[0].spectrum.H
    nsens = record.levels[0].spectrum.coeffs.shape[1]
    cols = (["level", "Omega", "lock", "target_phase", "qb_re", "qb_im",
             "distortion", "amp_saturated"] + spectrum_columns(nsens, H))
    rows = []
    for lr in record.levels:
        row = [lr.level, lr.Omega, lr.lock, lr.target_phase,
               lr.qb_hat.real, lr.qb_hat.imag, lr.distortion, lr.amp_saturated]
        for s in range(nsens):
            for h in range(H + 1):
                c = lr.spectrum.coeffs[h, s]
                row += [c.real, c.imag]
        rows.append(row)
    write_table(path, cols, rows, cfg_hash)


def write_backbone(path, backbone, cfg_hash=""):
    """Serialize an EPMC backbone: amplitude, frequency, damping, shape.

    The mass-normalized complex modal coefficients of every harmonic are
    interleaved as re/im pairs per mode.
    """
    if not backbone.points:
        raise IoError("empty backbone")
    Hp1, nmod = backbone.points[0].vhat.shape
    cols = ["a", "omega", "D"]
    for j in range(nmod):
        for h in range(Hp1):
            cols += [f"v{j + 1}_h{h}_re", f"v{j + 1}_h{h}_im"]
    rows = []
    for p in backbone.points:
        row = [p.a, p.omega, p.D]
        for j in range(nmod):
            for h in range(Hp1):
                row += [p.vhat[h, j].real, p.vhat[h, j].imag]
        rows.append(row)
    write_table(path, cols, rows, cfg_hash)


def read_backbone_table(path):
    """Read a backbone CSV into (a, omega, D, v1) arrays for ROM building.

    ``v1`` is the complex fundamental block, shape (npts, nmod).
    """
    _, names, data = read_table(path)
    idx = {n: i for i, n in enumerate(names)}
    for req in ("a", "omega", "D"):
        if req not in idx:
            raise SchemaMismatch(f"{path}: missing column {req}")
    nmod = 0
    while f"v{nmod + 1}_h1_re" in idx:
        nmod += 1
    if nmod == 0:
        raise SchemaMismatch(f"{path}: no fundamental shape columns")
    v1 = np.empty((data.shape[0], nmod), complex)
    for j in range(nmod):
        v1[:, j] = (data[:, idx[f"v{j + 1}_h1_re"]]
                    + 1j * data[:, idx[f"v{j + 1}_h1_im"]])
    return data[:, idx["a"]], data[:, idx["omega"]], data[:, idx["D"]], v1


_TRACE_MAGIC = b"BMTRACE1"


def write_raw_trace(path, sample_rate, channels):
    """Binary trace dump, little-endian.

    Layout: 8-byte magic, float64 sample rate, uint32 channel count,
    uint64 sample count, then interleaved float64 samples (frame major).
    """
    channels = np.atleast_2d(np.asarray(channels, float))
    nch, nsamp = channels.shape
    with open(path, "wb") as fh:
        fh.write(_TRACE_MAGIC)
        fh.write(struct.pack("<dIQ", float(sample_rate), nch, nsamp))
        fh.write(np.ascontiguousarray(channels.T, dtype="<f8").tobytes())


def read_raw_trace(path):
    """Inverse of write_raw_trace; returns (sample_rate, channels (nch, n))."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _TRACE_MAGIC:
            raise IoError(f"{path}: not a raw trace file")
        sample_rate, nch, nsamp = struct.unpack("<dIQ", fh.read(20))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != nch * nsamp:
        raise IoError(f"{path}: truncated trace payload")
    return sample_rate, data.reshape(nsamp, nch).T.copy()


def compare_tables(ref_path, cand_path, tolerances, default_tol=None):
    """Column-wise relative-error report between two CSV artifacts.

    ``tolerances`` maps column name to allowed max relative error; columns
    without an entry use ``default_tol`` (or are skipped when it is None).
    Relative error is |cand - ref| / max(|ref|, tiny) per element.
    Returns (passed, report) where report lists per-column max errors.
    """
    _, names_r, ref = read_table(ref_path)
    _, names_c, cand = read_table(cand_path)
    if names_r != names_c:
        raise SchemaMismatch("column sets differ: "
                             f"{sorted(set(names_r) ^ set(names_c))}")
    if ref.shape != cand.shape:
        raise SchemaMismatch(f"row count differs: {ref.shape[0]} vs {cand.shape[0]}")
    report = []
    passed = True
    for i, name in enumerate(names_r):
        tol = tolerances.get(name, default_tol)
        if tol is None:
            continue
        scale = np.maximum(np.abs(ref[:, i]), 1e-300)
        err = float(np.max(np.abs(cand[:, i] - ref[:, i]) / scale)) if ref.size else 0.0
        ok = err <= tol
        passed &= ok
        report.append((name, err, tol, ok))
    return passed, report
