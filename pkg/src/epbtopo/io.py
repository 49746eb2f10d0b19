"""CSV and JSON readers/writers for every file the CLI emits.

Floats are written with ``repr`` so values round-trip exactly; rows and keys
come out in a fixed order, so equal inputs give byte-identical files.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .retrieval.synth import ResponseDataset

BERRY_TRACE_COLUMNS = ("step", "theta_partial_rad")
SURFACE_COLUMNS = ("p1", "p2", "re_w_plus", "im_w_plus", "re_w_minus", "im_w_minus")
FIELD_COLUMNS = ("p1", "p2", "d1", "d2", "norm")
DATASET_COLUMNS = ("point_index", "port_id", "freq_rad_s", "re_p", "im_p")


def _plain(obj):
    """Convert numpy scalars/arrays and complex numbers into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(obj.real), _plain(obj.imag)]
    return obj


def write_json(obj, path):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        json.dump(_plain(obj), f, indent=2)
        f.write("\n")
    return path


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path, columns, rows):
    """Write ``rows`` (iterable of tuples) under a header line."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    return path


def read_csv(path, columns=None):
    """Return ``{column: list of str}``; checks the header when ``columns`` is given."""
    with open(path, encoding="utf-8", newline="") as f:
        rd = csv.reader(f)
        header = next(rd, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        if columns is not None and tuple(header) != tuple(columns):
            raise ValueError(f"{path}: expected columns {','.join(columns)}, got {','.join(header)}")
        data = {h: [] for h in header}
        for r in rd:
            if len(r) != len(header):
                raise ValueError(f"{path}: row with {len(r)} fields, expected {len(header)}")
            for h, v in zip(header, r):
                data[h].append(v)
    return data


def _float_columns(path, columns):
    d = read_csv(path, columns)
    return {k: np.array(v, dtype=float) for k, v in d.items()}


# invariants

def write_berry_trace(trace, path):
    return write_csv(path, BERRY_TRACE_COLUMNS, ((i, float(t)) for i, t in enumerate(trace)))


def read_berry_trace(path):
    d = _float_columns(path, BERRY_TRACE_COLUMNS)
    return d["step"].astype(int), d["theta_partial_rad"]


# surfaces and fields

def write_surface(path, p1, p2, omega):
    """``omega`` has shape ``(len(p1), len(p2), 2)``; rows run over p1 then p2."""
    rows = (
        (p1[a], p2[b], w[0].real, w[0].imag, w[1].real, w[1].imag)
        for a in range(len(p1))
        for b in range(len(p2))
        for w in (omega[a, b],)
    )
    return write_csv(path, SURFACE_COLUMNS, rows)


def read_surface(path):
    """Returns ``(p1, p2, omega)`` with ``omega`` of shape ``(n1, n2, 2)``."""
    d = _float_columns(path, SURFACE_COLUMNS)
    p1 = np.unique(d["p1"])
    p2 = np.unique(d["p2"])
    w = np.stack([d["re_w_plus"] + 1j * d["im_w_plus"], d["re_w_minus"] + 1j * d["im_w_minus"]], axis=-1)
    return p1, p2, w.reshape(len(p1), len(p2), 2)


def write_field(path, fg):
    rows = (
        (fg.p1[a], fg.p2[b], fg.d1[a, b], fg.d2[a, b], fg.norm[a, b])
        for a in range(len(fg.p1))
        for b in range(len(fg.p2))
    )
    return write_csv(path, FIELD_COLUMNS, rows)


def read_field(path):
    """Returns ``(p1, p2, d1, d2, norm)``, the last three of shape ``(n1, n2)``."""
    d = _float_columns(path, FIELD_COLUMNS)
    p1 = np.unique(d["p1"])
    p2 = np.unique(d["p2"])
    shape = (len(p1), len(p2))
    return p1, p2, d["d1"].reshape(shape), d["d2"].reshape(shape), d["norm"].reshape(shape)


# datasets

def sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_dataset(ds, path, meta=None):
    """Write a response dataset as CSV plus a JSON sidecar (same stem).

    The sidecar records the point and port order, noise level and seed, and
    free-form metadata (loop name, constants, geometry).
    """
    path = Path(path)
    rows = (
        (int(ds.point_index[i]), ds.port_ids[m], ds.freqs[k], ds.responses[i, m, k].real, ds.responses[i, m, k].imag)
        for i in range(len(ds))
        for m in range(len(ds.port_ids))
        for k in range(ds.freqs.size)
    )
    write_csv(path, DATASET_COLUMNS, rows)
    side = {
        "data_file": path.name,
        "eta": ds.eta,
        "seed": ds.seed,
        "point_index": list(ds.point_index),
        "port_ids": list(ds.port_ids),
        "n_freq": int(ds.freqs.size),
    }
    side.update(ds.meta)
    side.update(meta or {})
    write_json(side, sidecar_path(path))
    return path


def read_dataset(path):
    """Inverse of :func:`write_dataset`."""
    path = Path(path)
    d = read_csv(path, DATASET_COLUMNS)
    sp = sidecar_path(path)
    side = read_json(sp) if sp.exists() else {}
    pidx = np.array(d["point_index"], dtype=int)
    ports = d["port_id"]
    f = np.array(d["freq_rad_s"], dtype=float)
    val = np.array(d["re_p"], dtype=float) + 1j * np.array(d["im_p"], dtype=float)

    points = side.get("point_index") or list(dict.fromkeys(pidx.tolist()))
    port_ids = side.get("port_ids") or list(dict.fromkeys(ports))
    freqs = np.unique(f)
    P, M, F = len(points), len(port_ids), freqs.size
    if val.size != P * M * F:
        raise ValueError(f"{path}: {val.size} rows do not fill {P} points x {M} ports x {F} freqs")
    pi = {p: i for i, p in enumerate(points)}
    mi = {m: i for i, m in enumerate(port_ids)}
    resp = np.full((P, M, F), np.nan + 0j)
    try:
        resp[[pi[p] for p in pidx.tolist()], [mi[m] for m in ports], np.searchsorted(freqs, f)] = val
    except KeyError as exc:
        raise ValueError(f"{path}: row refers to {exc} missing from the sidecar") from None
    meta = {k: v for k, v in side.items() if k not in ("data_file", "eta", "seed", "point_index", "port_ids", "n_freq")}
    return ResponseDataset(
        freqs, resp, port_ids, points, eta=float(side.get("eta", 0.0)), seed=side.get("seed"), meta=meta
    )
