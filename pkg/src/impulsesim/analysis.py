"""Monte Carlo error estimation: sup-norm errors, means across paths, and
log-log slope regression across noise scales.

Per path the noisy flow and the fluctuation process consume identical
Brownian increments, so path-wise differences reflect the strong error
bounds being verified.  Paths are batched into fixed-size chunks which may
run on several threads; the reduction order is fixed by path index, so the
report is bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .dynamics import ImpulseSchedule, Model
from .integrate import (
    CadlagTrajectory,
    IntegrationOverflowError,
    SampleGrid,
    integrate_deterministic,
    path_seed,
    sample_brownian,
)

_CHUNK_SIZE = 125  # fixed: chunking must not depend on the worker count


@dataclass(frozen=True)
class PathErrors:
    """Sup-norm errors of a single path at one noise scale."""

    eps: float
    lln_error: np.ndarray  # per-coordinate sup |X_i - x_i|
    clt_error: np.ndarray  # per-coordinate sup |X_i - x_i - eps*Z_i|
    lln_norm: float  # sup ||X - x||
    clt_norm: float  # sup ||X - x - eps*Z||
    seed: object


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-eps mean sup-norm errors and fitted log2-log2 slopes."""

    eps_exponents: tuple[int, ...]
    eps_list: np.ndarray
    n_paths: int
    mode: str
    mean_lln: np.ndarray  # (n_eps, d)
    mean_clt: np.ndarray
    mean_lln_norm: np.ndarray  # (n_eps,)
    mean_clt_norm: np.ndarray
    sem_lln: np.ndarray  # standard errors of the mean (diagnostic extension)
    sem_clt: np.ndarray
    sem_lln_norm: np.ndarray
    sem_clt_norm: np.ndarray
    slope_lln: np.ndarray  # (d,)
    slope_clt: np.ndarray
    slope_lln_norm: float
    slope_clt_norm: float
    r2_lln: np.ndarray
    r2_clt: np.ndarray
    r2_lln_norm: float
    r2_clt_norm: float
    # per-path sups, path axis in path-index order: (n_eps, n_paths, d)
    lln_paths: np.ndarray
    clt_paths: np.ndarray


def sup_error(
    a: CadlagTrajectory,
    b: CadlagTrajectory,
    shift: CadlagTrajectory | None = None,
    shift_scale: float = 1.0,
) -> np.ndarray:
    """Per-coordinate sup over grid nodes and recorded left limits of
    |a - b - shift_scale*shift|."""
    if a.grid.m != b.grid.m or a.grid.T != b.grid.T:
        raise ValueError("trajectories live on different grids")
    diff = a.values - b.values
    if shift is not None:
        if shift.grid.m != a.grid.m or shift.grid.T != a.grid.T:
            raise ValueError("shift trajectory lives on a different grid")
        diff = diff - shift_scale * shift.values
    sup = np.max(np.abs(diff), axis=0)
    # left limits participate; a trajectory continuous at a node has no
    # recorded jump there, so its node value stands in for the left limit
    a_pre, b_pre = a.pre_reset_map(), b.pre_reset_map()
    s_pre = shift.pre_reset_map() if shift is not None else {}
    impulse_nodes = {k: idx for k, idx in a.grid.impulse_indices}
    ks = set(a_pre) | set(b_pre) | set(s_pre)
    for k in ks:
        idx = impulse_nodes[k]
        av = a_pre.get(k, a.values[idx])
        bv = b_pre.get(k, b.values[idx])
        dv = av - bv
        if shift is not None:
            dv = dv - shift_scale * s_pre.get(k, shift.values[idx])
        sup = np.maximum(sup, np.abs(dv))
    return sup


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]):
    """Ordinary least squares of log2(ys) against xs.

    Returns (slope, intercept, r_squared).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d of equal length")
    if len(xs) < 2:
        raise ValueError("need at least 2 points to fit a slope")
    if np.any(ys <= 0):
        raise ValueError("ys must be strictly positive")
    ly = np.log2(ys)
    slope, intercept = np.polyfit(xs, ly, 1)
    resid = ly - (slope * xs + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def _prepare_along_path(model: Model, grid: SampleGrid, det: CadlagTrajectory):
    """Precompute Db, sigma along x(t) and Dh at the impulse left limits."""
    n = grid.n_steps
    db = np.empty((n, model.d, model.d))
    for i in range(n):
        db[i] = model.drift_jacobian(det.values[i])
    if model.diffusion_constant is not None:
        sig = np.broadcast_to(model.diffusion_constant, (n, model.d, model.r))
    else:
        sig = np.empty((n, model.d, model.r))
        for i in range(n):
            sig[i] = model.diffusion(det.values[i])
    det_pre = det.pre_reset_map()
    dh = {k: np.asarray(model.reset_jacobian(det_pre[k]), float)
          for k, _ in grid.impulse_indices}
    return db, sig, dh


def compute_path_errors(model, grid, det, epsilon, path) -> PathErrors:
    """Sup-norm errors for one path, via the per-path integrators."""
    from .integrate import integrate_fluctuation, integrate_sde

    noisy = integrate_sde(model, grid, det.values[0], epsilon, path)
    fluct = integrate_fluctuation(model, grid, det, path)
    lln = sup_error(noisy, det)
    clt = sup_error(noisy, det, shift=fluct, shift_scale=epsilon)
    lln_n = _sup_norm_error(noisy, det, None, 0.0)
    clt_n = _sup_norm_error(noisy, det, fluct, epsilon)
    return PathErrors(
        eps=epsilon,
        lln_error=lln,
        clt_error=clt,
        lln_norm=lln_n,
        clt_norm=clt_n,
        seed=path.seed,
    )


def _sup_norm_error(a, b, shift, shift_scale) -> float:
    diff = a.values - b.values
    if shift is not None:
        diff = diff - shift_scale * shift.values
    sup = float(np.max(np.linalg.norm(diff, axis=1)))
    a_pre, b_pre = a.pre_reset_map(), b.pre_reset_map()
    s_pre = shift.pre_reset_map() if shift is not None else {}
    impulse_nodes = {k: idx for k, idx in a.grid.impulse_indices}
    for k in set(a_pre) | set(b_pre) | set(s_pre):
        idx = impulse_nodes[k]
        dv = a_pre.get(k, a.values[idx]) - b_pre.get(k, b.values[idx])
        if shift is not None:
            dv = dv - shift_scale * s_pre.get(k, shift.values[idx])
        sup = max(sup, float(np.linalg.norm(dv)))
    return sup


def _chunk_errors(model, grid, det, db_along, sig_along, dh_at, eps, paths,
                  path_indices):
    """Sup errors for a chunk of paths, all noise scales in one sweep.

    Returns (lln, clt, lln_norm, clt_norm) with shapes
    (n_eps, n_chunk, d) and (n_eps, n_chunk).
    """
    d, r, dt = model.d, model.r, grid.dt
    n_eps, n_chunk = len(eps), len(paths)
    increments = np.stack([p.increments for p in paths])  # (n_chunk, n_steps, r)
    eps3 = eps[:, None, None]
    sigma_const = model.diffusion_constant

    X = np.empty((n_eps, n_chunk, d))
    X[:] = det.values[0]
    Z = np.zeros((n_chunk, d))
    lln = np.zeros((n_eps, n_chunk, d))
    clt = np.zeros((n_eps, n_chunk, d))
    lln_n2 = np.zeros((n_eps, n_chunk))
    clt_n2 = np.zeros((n_eps, n_chunk))
    impulses = grid.impulse_index_map()
    det_pre = det.pre_reset_map()

    def update_sups(x_ref, z):
        diff = X - x_ref
        a = np.abs(diff)
        np.maximum(lln, a, out=lln)
        np.maximum(lln_n2, np.einsum("epd,epd->ep", diff, diff), out=lln_n2)
        diffc = diff - eps3 * z
        a = np.abs(diffc)
        np.maximum(clt, a, out=clt)
        np.maximum(clt_n2, np.einsum("epd,epd->ep", diffc, diffc), out=clt_n2)

    for n in range(grid.n_steps):
        xn = det.values[n]
        dW = increments[:, n, :]
        if sigma_const is not None:
            noise = dW @ sigma_const.T
        else:
            noise = np.einsum("epij,pj->epi", np.asarray(model.diffusion(X), float), dW)
        X = X + np.asarray(model.drift(X), float) * dt + eps3 * noise
        Z = Z + (Z @ db_along[n].T) * dt + dW @ sig_along[n].T
        k = impulses.get(n + 1)
        if k is not None:
            # left limits participate in the sup before the reset applies
            update_sups(det_pre[k], Z)
            X = np.asarray(model.reset(X), float)
            Z = Z @ dh_at[k].T
        update_sups(det.values[n + 1], Z)

    bad = ~(np.isfinite(lln_n2) & np.isfinite(clt_n2))
    if np.any(bad):
        e_idx, p_idx = np.argwhere(bad)[0]
        raise IntegrationOverflowError(
            f"path overflow at eps={eps[e_idx]}, path index {path_indices[p_idx]}"
        )
    return lln, clt, np.sqrt(lln_n2), np.sqrt(clt_n2)


def run_convergence_study(
    model: Model,
    schedule: ImpulseSchedule,
    grid: SampleGrid,
    x0: np.ndarray,
    eps_exponents: Sequence[int],
    n_paths: int,
    base_seed: int,
    mode: str = "both",
    threads: int = 1,
) -> ConvergenceReport:
    """Estimate mean sup-norm errors per eps = 2^-i and fit log2-log2 slopes.

    Each path's seed derives from (base_seed, path index); the deterministic
    trajectory is shared across all paths and noise scales.
    """
    if mode not in ("lln", "clt", "both"):
        raise ValueError(f"mode must be lln, clt or both, got {mode!r}")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    eps_exponents = tuple(int(i) for i in eps_exponents)
    if any(i <= 0 for i in eps_exponents):
        raise ValueError("eps exponents must be positive")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    eps = np.array([2.0**-i for i in eps_exponents])
    det = integrate_deterministic(model, grid, x0)
    db_along, sig_along, dh_at = _prepare_along_path(model, grid, det)

    chunks = [
        range(lo, min(lo + _CHUNK_SIZE, n_paths))
        for lo in range(0, n_paths, _CHUNK_SIZE)
    ]

    def run_chunk(idx_range):
        paths = [
            sample_brownian(grid, model.r, path_seed(base_seed, j))
            for j in idx_range
        ]
        return _chunk_errors(
            model, grid, det, db_along, sig_along, dh_at, eps, paths,
            list(idx_range),
        )

    if threads == 1:
        results = [run_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, chunks))

    # assemble in path-index order; all downstream reductions see one array
    lln = np.concatenate([r[0] for r in results], axis=1)
    clt = np.concatenate([r[1] for r in results], axis=1)
    lln_norm = np.concatenate([r[2] for r in results], axis=1)
    clt_norm = np.concatenate([r[3] for r in results], axis=1)

    def mean_sem(arr):
        return arr.mean(axis=1), arr.std(axis=1, ddof=1) / np.sqrt(n_paths)

    mean_lln, sem_lln = mean_sem(lln)
    mean_clt, sem_clt = mean_sem(clt)
    mean_lln_norm, sem_lln_norm = mean_sem(lln_norm)
    mean_clt_norm, sem_clt_norm = mean_sem(clt_norm)

    xs = -np.array(eps_exponents, dtype=float)

    def slopes(means):  # means: (n_eps, d)
        out_s, out_r2 = [], []
        for j in range(means.shape[1]):
            s, _, r2 = fit_loglog_slope(xs, means[:, j])
            out_s.append(s)
            out_r2.append(r2)
        return np.array(out_s), np.array(out_r2)

    slope_lln, r2_lln = slopes(mean_lln)
    slope_clt, r2_clt = slopes(mean_clt)
    s_ln, _, r2_ln = fit_loglog_slope(xs, mean_lln_norm)
    s_cn, _, r2_cn = fit_loglog_slope(xs, mean_clt_norm)

    return ConvergenceReport(
        eps_exponents=eps_exponents,
        eps_list=eps,
        n_paths=n_paths,
        mode=mode,
        mean_lln=mean_lln,
        mean_clt=mean_clt,
        mean_lln_norm=mean_lln_norm,
        mean_clt_norm=mean_clt_norm,
        sem_lln=sem_lln,
        sem_clt=sem_clt,
        sem_lln_norm=sem_lln_norm,
        sem_clt_norm=sem_clt_norm,
        slope_lln=slope_lln,
        slope_clt=slope_clt,
        slope_lln_norm=s_ln,
        slope_clt_norm=s_cn,
        r2_lln=r2_lln,
        r2_clt=r2_clt,
        r2_lln_norm=r2_ln,
        r2_clt_norm=r2_cn,
        lln_paths=lln,
        clt_paths=clt,
    )


def write_report_csv(report: ConvergenceReport, out: IO[str]) -> None:
    """Report CSV: one row per eps, slope/r2 footer rows."""
    d = report.mean_lln.shape[1]

    def fmt(v) -> str:
        return f"{v:.17g}"

    cols = ["i", "eps"]
    cols += [f"e{j}_lln" for j in range(1, d + 1)] + ["norm_lln"]
    cols += [f"e{j}_clt" for j in range(1, d + 1)] + ["norm_clt"]
    cols += [f"se{j}_lln" for j in range(1, d + 1)] + ["se_norm_lln"]
    cols += [f"se{j}_clt" for j in range(1, d + 1)] + ["se_norm_clt"]
    out.write(",".join(cols) + "\n")
    for row, i in enumerate(report.eps_exponents):
        cells = [str(i), fmt(report.eps_list[row])]
        cells += [fmt(v) for v in report.mean_lln[row]] + [fmt(report.mean_lln_norm[row])]
        cells += [fmt(v) for v in report.mean_clt[row]] + [fmt(report.mean_clt_norm[row])]
        cells += [fmt(v) for v in report.sem_lln[row]] + [fmt(report.sem_lln_norm[row])]
        cells += [fmt(v) for v in report.sem_clt[row]] + [fmt(report.sem_clt_norm[row])]
        out.write(",".join(cells) + "\n")

    blank_tail = [""] * (2 * (d + 1))

    def footer(label, per_coord, norm_val, position):
        cells = [label, ""]
        lln_block = [""] * (d + 1)
        clt_block = [""] * (d + 1)
        block = [fmt(v) for v in per_coord] + [fmt(norm_val)]
        if position == "lln":
            lln_block = block
        else:
            clt_block = block
        out.write(",".join(cells + lln_block + clt_block + blank_tail) + "\n")

    footer("slope_lln", report.slope_lln, report.slope_lln_norm, "lln")
    footer("slope_clt", report.slope_clt, report.slope_clt_norm, "clt")
    footer("r2_lln", report.r2_lln, report.r2_lln_norm, "lln")
    footer("r2_clt", report.r2_clt, report.r2_clt_norm, "clt")
