"""File formats: panel/label CSVs, model text files, report CSV/JSON.

Every file is UTF-8 with LF line endings and `.` as the decimal point.
Floats are written with 17 significant digits, so write/read round trips
reproduce the in-memory values bit-exactly. Readers raise ValueError on
malformed content and OSError on filesystem problems; the CLI maps those to
its exit codes.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .pcafeat import PcaModel
from .scorer import ScoringNetwork

PCA_FORMAT_TAG = "panelscan-pca v1"
NET_FORMAT_TAG = "panelscan-net v1"
_FLOAT_FMT = ".17g"


def _fmt(value):
    return format(float(value), _FLOAT_FMT)


def _open_write(path):
    return open(path, "w", encoding="utf-8", newline="")


def _writer(handle):
    return csv.writer(handle, lineterminator="\n")


def _read_rows(path):
    with open(path, encoding="utf-8", newline="") as handle:
        return list(csv.reader(handle))


def _parse_float(text, path, what):
    try:
        return float(text)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed {what} {text!r}") from exc


# -- panels ------------------------------------------------------------------

def write_panel(path, prices, series_ids=None, fmt=_FLOAT_FMT):
    """Panel CSV: header series_id,t_1,...,t_T, one row per series."""
    prices = np.atleast_2d(np.asarray(prices))
    n, T = prices.shape
    if series_ids is None:
        series_ids = range(n)
    with _open_write(path) as handle:
        out = _writer(handle)
        out.writerow(["series_id"] + [f"t_{j}" for j in range(1, T + 1)])
        for sid, row in zip(series_ids, prices):
            out.writerow([sid] + [format(v, fmt) for v in row])


def read_panel(path):
    """Read a panel CSV back as (series_ids, prices)."""
    rows = _read_rows(path)
    if not rows or rows[0][:1] != ["series_id"]:
        raise ValueError(f"{path}: expected a panel CSV with a series_id header")
    T = len(rows[0]) - 1
    if rows[0][1:] != [f"t_{j}" for j in range(1, T + 1)]:
        raise ValueError(f"{path}: panel header columns must be t_1..t_{T}")
    series_ids = []
    prices = []
    for row in rows[1:]:
        if len(row) != T + 1:
            raise ValueError(f"{path}: row {row[:1]} has {len(row) - 1} values, expected {T}")
        series_ids.append(row[0])
        prices.append([_parse_float(v, path, "price") for v in row[1:]])
    if not prices:
        raise ValueError(f"{path}: panel has no series")
    return series_ids, np.asarray(prices)


def write_value_labels(path, labels, series_ids=None):
    """Value-level label matrix in the panel layout, integer cells."""
    labels = np.atleast_2d(np.asarray(labels, dtype=np.int64))
    write_panel(path, labels, series_ids=series_ids, fmt="d")


def read_value_labels(path):
    series_ids, values = read_panel(path)
    labels = values.astype(np.int64)
    if not np.array_equal(labels, values):
        raise ValueError(f"{path}: value labels must be integers")
    return series_ids, labels


def write_params(path, panel):
    """Per-series generating parameters: series_id,s0,mu,sigma."""
    with _open_write(path) as handle:
        out = _writer(handle)
        out.writerow(["series_id", "s0", "mu", "sigma"])
        for i in range(panel.n_stocks):
            out.writerow([i, _fmt(panel.s0[i]), _fmt(panel.mu[i]), _fmt(panel.sigma[i])])


def read_params(path):
    rows = _read_rows(path)
    if not rows or rows[0] != ["series_id", "s0", "mu", "sigma"]:
        raise ValueError(f"{path}: expected header series_id,s0,mu,sigma")
    cols = [[], [], []]
    for row in rows[1:]:
        if len(row) != 4:
            raise ValueError(f"{path}: params row needs 4 fields, got {len(row)}")
        for store, value, name in zip(cols, row[1:], ("s0", "mu", "sigma")):
            store.append(_parse_float(value, path, name))
    if not cols[0]:
        raise ValueError(f"{path}: params file has no series")
    return tuple(np.asarray(c) for c in cols)


def write_weights(path, weights, series_ids=None):
    """Portfolio weights CSV: series_id,weight."""
    weights = np.asarray(weights, dtype=float)
    if series_ids is None:
        series_ids = range(weights.size)
    with _open_write(path) as handle:
        out = _writer(handle)
        out.writerow(["series_id", "weight"])
        for sid, w in zip(series_ids, weights):
            out.writerow([sid, _fmt(w)])


def read_weights(path):
    rows = _read_rows(path)
    if not rows or rows[0] != ["series_id", "weight"]:
        raise ValueError(f"{path}: expected header series_id,weight")
    values = [_parse_float(row[1], path, "weight") for row in rows[1:] if row]
    if not values:
        raise ValueError(f"{path}: weights file has no rows")
    return np.asarray(values)


# -- window labels -----------------------------------------------------------

def write_labels(path, A, L):
    """Label CSV: row_id,A,L with an empty L cell for uncontaminated rows."""
    A = np.asarray(A, dtype=np.int64)
    L = np.asarray(L, dtype=np.int64)
    if A.shape != L.shape:
        raise ValueError("A and L must have the same length")
    with _open_write(path) as handle:
        out = _writer(handle)
        out.writerow(["row_id", "A", "L"])
        for row_id, (a, loc) in enumerate(zip(A, L)):
            out.writerow([row_id, int(a), int(loc) if a else ""])


def read_labels(path):
    rows = _read_rows(path)
    if not rows or rows[0] != ["row_id", "A", "L"]:
        raise ValueError(f"{path}: expected header row_id,A,L")
    A, L = [], []
    for row in rows[1:]:
        if len(row) != 3:
            raise ValueError(f"{path}: label row needs 3 fields, got {len(row)}")
        try:
            a = int(row[1])
            loc = int(row[2]) if row[2] != "" else 0
        except ValueError as exc:
            raise ValueError(f"{path}: malformed label row {row!r}") from exc
        if a not in (0, 1):
            raise ValueError(f"{path}: A must be 0 or 1, got {a}")
        if a == 1 and loc < 1:
            raise ValueError(f"{path}: contaminated rows need a 1-based location")
        A.append(a)
        L.append(loc if a else 0)
    return np.asarray(A, dtype=np.int64), np.asarray(L, dtype=np.int64)


# -- models ------------------------------------------------------------------

def _write_vector(handle, name, vector):
    handle.write(name + " " + " ".join(_fmt(v) for v in vector) + "\n")


def write_pca_model(path, model: PcaModel):
    """Structured text: tag, k, p, means, eigenvalues, omega row-major."""
    with _open_write(path) as handle:
        handle.write(PCA_FORMAT_TAG + "\n")
        handle.write(f"k {model.k}\n")
        handle.write(f"p {model.window_length}\n")
        _write_vector(handle, "mean", model.mean)
        _write_vector(handle, "eigenvalues", model.eigenvalues)
        handle.write("omega\n")
        for row in model.omega:
            handle.write(" ".join(_fmt(v) for v in row) + "\n")


def _split_tagged(line, tag, path, count=None):
    parts = line.split()
    if not parts or parts[0] != tag:
        raise ValueError(f"{path}: expected a {tag!r} line, got {line!r}")
    values = [_parse_float(v, path, tag) for v in parts[1:]]
    if count is not None and len(values) != count:
        raise ValueError(f"{path}: {tag} needs {count} values, got {len(values)}")
    return values


def read_pca_model(path) -> PcaModel:
    with open(path, encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle]
    if not lines or lines[0] != PCA_FORMAT_TAG:
        raise ValueError(f"{path}: not a {PCA_FORMAT_TAG} file")
    try:
        k = int(_split_tagged(lines[1], "k", path, 1)[0])
        p = int(_split_tagged(lines[2], "p", path, 1)[0])
        mean = np.asarray(_split_tagged(lines[3], "mean", path, p))
        eigenvalues = np.asarray(_split_tagged(lines[4], "eigenvalues", path, k))
        if lines[5] != "omega":
            raise ValueError(f"{path}: expected the omega section, got {lines[5]!r}")
        if len(lines) < 6 + k:
            raise ValueError(f"{path}: omega needs {k} rows")
        omega = []
        for i in range(k):
            row = [_parse_float(v, path, "omega") for v in lines[6 + i].split()]
            if len(row) != p:
                raise ValueError(f"{path}: omega row {i} has {len(row)} values, expected {p}")
            omega.append(row)
        omega = np.asarray(omega)
    except IndexError as exc:
        raise ValueError(f"{path}: truncated PCA model file") from exc
    if omega.shape != (k, p):
        raise ValueError(f"{path}: omega shape {omega.shape} != ({k}, {p})")
    return PcaModel(mean=mean, omega=omega, eigenvalues=eigenvalues, k=k)


def write_network(path, net: ScoringNetwork):
    """Structured text: tag, layer dims, tau, s, then W/b per layer."""
    with _open_write(path) as handle:
        handle.write(NET_FORMAT_TAG + "\n")
        handle.write("dims " + " ".join(str(int(d)) for d in net.layer_dims) + "\n")
        handle.write(f"tau {_fmt(net.temperature)}\n")
        handle.write(f"s {_fmt(net.cutoff)}\n")
        for index, (W, b) in enumerate(zip(net.weights, net.biases), start=1):
            handle.write(f"W{index}\n")
            for row in W:
                handle.write(" ".join(_fmt(v) for v in row) + "\n")
            _write_vector(handle, f"b{index}", b)


def read_network(path) -> ScoringNetwork:
    with open(path, encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle]
    if not lines or lines[0] != NET_FORMAT_TAG:
        raise ValueError(f"{path}: not a {NET_FORMAT_TAG} file")
    try:
        dims = [int(v) for v in _split_tagged(lines[1], "dims", path)]
        tau = _split_tagged(lines[2], "tau", path, 1)[0]
        s = _split_tagged(lines[3], "s", path, 1)[0]
        if len(dims) < 2 or dims[-1] != 1:
            raise ValueError(f"{path}: dims must end in 1, got {dims}")
        weights, biases = [], []
        cursor = 4
        for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:]), start=1):
            if lines[cursor] != f"W{layer}":
                raise ValueError(f"{path}: expected W{layer}, got {lines[cursor]!r}")
            cursor += 1
            W = np.asarray([
                [_parse_float(v, path, f"W{layer}") for v in lines[cursor + r].split()]
                for r in range(fan_out)
            ])
            cursor += fan_out
            if W.shape != (fan_out, fan_in):
                raise ValueError(f"{path}: W{layer} shape {W.shape} != ({fan_out}, {fan_in})")
            b = np.asarray(_split_tagged(lines[cursor], f"b{layer}", path, fan_out))
            cursor += 1
            weights.append(W)
            biases.append(b)
    except IndexError as exc:
        raise ValueError(f"{path}: truncated network file") from exc
    return ScoringNetwork(layer_dims=dims, weights=weights, biases=biases,
                          cutoff=s, temperature=tau)


# -- reports -----------------------------------------------------------------

def write_training_log(path, history):
    """Training log CSV: iter,loss,bce,auc_u,auc_c,s."""
    with _open_write(path) as handle:
        out = _writer(handle)
        out.writerow(["iter", "loss", "bce", "auc_u", "auc_c", "s"])
        for row in history:
            out.writerow([row.iteration, _fmt(row.loss), _fmt(row.bce),
                          _fmt(row.auc_u), _fmt(row.auc_c), _fmt(row.cutoff)])


def write_detect_report(path, reports):
    """Detection report CSV: row_id,pred_A,score,locations,iterations.

    Locations are 1-based window indices joined by ';', empty when none.
    """
    with _open_write(path) as handle:
        out = _writer(handle)
        out.writerow(["row_id", "pred_A", "score", "locations", "iterations"])
        for row_id, report in enumerate(reports):
            locs = ";".join(str(int(loc)) for loc in report.locations)
            out.writerow([row_id, report.pred_label, _fmt(report.score),
                          locs, report.iterations_used])


def read_detect_report(path):
    """Rows as dicts with parsed pred_A/score/locations/iterations."""
    rows = _read_rows(path)
    if not rows or rows[0] != ["row_id", "pred_A", "score", "locations", "iterations"]:
        raise ValueError(f"{path}: expected a detect report header")
    parsed = []
    for row in rows[1:]:
        if len(row) != 5:
            raise ValueError(f"{path}: report row needs 5 fields, got {len(row)}")
        locations = [int(v) for v in row[3].split(";")] if row[3] else []
        parsed.append({
            "row_id": int(row[0]),
            "pred_A": int(row[1]),
            "score": _parse_float(row[2], path, "score"),
            "locations": locations,
            "iterations": int(row[4]),
        })
    return parsed


def write_rows(path, header, rows):
    """Generic report table (PRC points, robustness sweep, buckets, curves)."""
    with _open_write(path) as handle:
        out = _writer(handle)
        out.writerow(list(header))
        for row in rows:
            out.writerow([v if isinstance(v, (str, int)) else _fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    return obj


def write_json(path, payload):
    with _open_write(path) as handle:
        json.dump(_jsonable(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON: {exc}") from exc
