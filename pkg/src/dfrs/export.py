"""Locale-independent CSV writers; reals are written with 17 significant digits."""

import csv
import hashlib
import io

import numpy as np


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v != v:
            return "nan"
        if v in (float("inf"), float("-inf")):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def coords(x):
    return " ".join(fmt(float(v)) for v in np.ravel(x))


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    text = csv_text(header, rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return sha256_file(path)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


RESULTS_HEADER = ["experiment_id", "t", "x_coords", "trials", "mse", "mse_stderr", "bias", "var",
                  "bound_local", "bound_global"]
SCALING_HEADER = ["N", "L", "M", "worst_mse", "bound", "slope_running"]


def results_rows(result):
    for t, x, trials, mse, se, bias, var, loc, glob in result.rows():
        yield [result.experiment_id, t, coords(x), trials, mse, se, bias, var, loc, glob]


def scaling_rows(table):
    for r in table.rows:
        yield [r.N, r.L, r.M, r.worst_mse, r.bound, r.slope_running]


def deployment_header(d):
    return ["sensor_id"] + [f"x_{i + 1}" for i in range(d)] + ["supercell", "subcell"]


def deployment_rows(dep):
    for i in range(dep.N):
        yield [i, *dep.positions[i].tolist(), int(dep.supercell[i]), int(dep.subcell[i])]


def schedule_rows(schedule):
    return schedule.rows()


def estimate_rows(estimate):
    for t in range(1, estimate.T + 1):
        for j, v in enumerate(estimate.supercell_values(t), start=1):
            yield [t, j, v]


def eval_grid_header(d):
    return ["t"] + [f"x_{i + 1}" for i in range(d)] + ["s_true", "s_hat", "abs_err"]


def eval_grid_rows(estimate, field_model, points, snapshots):
    for t in snapshots:
        s_hat = estimate.reconstruct_points(points, t)
        s_true = field_model.values(points, t)
        for x, st, sh in zip(points, s_true, s_hat):
            yield [t, *x.tolist(), st, sh, abs(sh - st)]
