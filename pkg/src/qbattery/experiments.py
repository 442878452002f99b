"""Scenario runners: trajectories, (theta0, tau) scans, N_A sweeps and the
figure data sets, written as deterministic CSV files.

Data files never carry timestamps; run metadata goes into a ``.meta.json``
sidecar next to each CSV so that re-running a config reproduces the data
byte for byte.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .closed_form import (
    F_INFINITY,
    ClosedFormModel,
    bessel_square_integral,
    catalan,
    coherent_power,
    f_of_x,
    incoherent_optimal_tau,
    incoherent_power,
    is_unphysical,
    jminus_mean,
    n_bar_discrete_series,
    power_upper_bound,
    ridge_tau,
    ridge_tau_linear,
)
from .collision import CollisionChannel, Trajectory, evolve, run_trajectory
from .config import ExperimentConfig
from .errors import BatteryError, NonCharging, ValidationError
from .observables import observe
from .operators import AtomEnsembleSpec, BatterySpec, basis_state

TRAJECTORY_COLUMNS = [
    "k", "k_tau", "n_bar", "energy", "power", "ergotropy", "ergotropy_power", "purity",
    "beta_re", "beta_im", "p0", "p_top", "n_bar_pred", "beta_pred_re", "beta_pred_im",
    "divergence",
]

SCAN_COLUMNS = [
    "theta0", "tau", "n_atoms", "coherence_factor", "k", "k_tau", "n_bar", "power",
    "power_scaled", "ergotropy_power", "ergotropy_power_scaled", "purity", "power_bound",
    "power_coherent_pred", "power_incoherent_pred", "k_est", "unphysical", "error",
]

FIG5_N_ATOMS = (1, 4)
FIG5_TAUS = (0.01, 0.1, 0.3)
FIG4A_N_ATOMS = (1, 2, 4)
FIG4B_N_ATOMS = (1, 2, 3, 4, 5, 6, 8, 10)
FIG4B_TAUS = (0.01, 0.3, 0.88)
FIG2_TAUS = (math.pi / 4, 0.01)
FIG2_SAMPLES = 8
P_INC_MAX_BAND = 0.72


# ---------------------------------------------------------------- output

def fmt(value) -> str:
    """12 significant digits; blanks for missing values; 0/1 for flags."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def write_csv(path: Path, header: list, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_meta(path: Path, config: ExperimentConfig, **extra) -> Path:
    """Sidecar ``<csv>.meta.json`` with the config snapshot and run metadata."""
    meta = {
        "package_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in config.as_dict().items()},
        **extra,
    }
    side = Path(str(path) + ".meta.json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return side


# ---------------------------------------------------------------- helpers

def resolve_steps(config: ExperimentConfig, battery: BatterySpec, atoms: AtomEnsembleSpec,
                  tau: float, default_budget: float | None = None) -> int:
    """Number of collisions: explicit ``steps``, ``k_tau_budget / tau`` or ``k_est``."""
    if config.steps == "k_est":
        return ClosedFormModel(battery, atoms, tau).k_est
    if config.steps is not None:
        return int(config.steps)
    budget = config.k_tau_budget if config.k_tau_budget is not None else default_budget
    if budget is None:
        return ClosedFormModel(battery, atoms, tau).k_est
    return max(1, int(round(budget / tau)))


def trajectory_rows(traj: Trajectory):
    for row, pred, div in zip(traj.rows, traj.predictions, traj.divergence):
        yield [row.k, row.k_tau, row.n_bar, row.energy, row.power, row.ergotropy,
               row.ergotropy_power, row.purity, row.beta.real, row.beta.imag, row.p0,
               row.p_top, pred.n_bar, pred.beta.real, pred.beta.imag, div]


# ---------------------------------------------------------------- trajectory

def run_single(config: ExperimentConfig, out_dir: Path) -> tuple[Trajectory, list[Path]]:
    battery, atoms, tau = config.battery, config.atoms, config.tau
    steps = resolve_steps(config, battery, atoms, tau)
    initial = basis_state(battery, config.initial_level)
    traj = run_trajectory(battery, atoms, tau, steps, initial,
                          record_every=config.record_every, spectral=config.spectral)
    path = write_csv(Path(out_dir) / "trajectory.csv", TRAJECTORY_COLUMNS, trajectory_rows(traj))
    side = write_meta(path, config, steps=steps, divergent_rows=int(sum(traj.divergence)))
    return traj, [path, side]


# ---------------------------------------------------------------- scans

def _scan_point(task: dict) -> dict:
    """Run one grid point; failures are reported in the ``error`` field."""
    battery = BatterySpec(task["n_levels_top"], task["energy_spacing"])
    atoms = AtomEnsembleSpec(task["n_atoms"], task["theta0"], task["azimuthal_angle"],
                             task["coherence_factor"])
    tau = task["tau"]
    n_a = atoms.n_atoms
    row = dict.fromkeys(SCAN_COLUMNS)
    row.update(theta0=task["theta0"], tau=tau, n_atoms=n_a,
               coherence_factor=atoms.coherence_factor,
               power_bound=power_upper_bound(atoms, tau),
               power_incoherent_pred=incoherent_power(tau, atoms),
               unphysical=is_unphysical(atoms.polar_angle, tau), error="")
    model = ClosedFormModel(battery, atoms, tau)
    try:
        row["k_est"] = model.k_est
    except NonCharging:
        pass
    try:
        if task["steps"] == "k_est":
            steps = model.k_est
        elif task["steps"] is not None:
            steps = int(task["steps"])
        else:
            budget = task["k_tau_budget"] if task["k_tau_budget"] is not None else 60 / n_a
            steps = max(1, int(round(budget / tau)))
        if steps < 1:
            raise ValidationError("a scan point needs at least one collision")
        rho = evolve(CollisionChannel(battery, atoms, tau), basis_state(battery, 0), steps)
        obs = observe(rho, steps, tau, battery, 0.0, spectral=task["spectral"])
        obs.check(battery.n_levels_top)
        row.update(k=steps, k_tau=steps * tau, n_bar=obs.n_bar, power=obs.power,
                   power_scaled=obs.power / n_a, ergotropy_power=obs.ergotropy_power,
                   ergotropy_power_scaled=obs.ergotropy_power / n_a, purity=obs.purity)
        if abs(jminus_mean(atoms)) > 0:
            row["power_coherent_pred"] = coherent_power(steps * tau, atoms)
    except BatteryError as exc:
        row["error"] = type(exc).__name__
    return row


def _scan_tasks(config: ExperimentConfig, thetas, taus, n_atoms_list):
    base = dict(n_levels_top=config.n_levels_top, energy_spacing=config.energy_spacing,
                azimuthal_angle=config.azimuthal_angle,
                coherence_factor=config.coherence_factor, steps=config.steps,
                k_tau_budget=config.k_tau_budget, spectral=config.spectral)
    return [dict(base, theta0=float(th), tau=float(t), n_atoms=int(na))
            for na in n_atoms_list for th in thetas for t in taus]


def run_points(tasks: list, threads: int = 1) -> list[dict]:
    """Evaluate grid points (optionally in a process pool) and sort them."""
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_scan_point, tasks))
    else:
        rows = [_scan_point(t) for t in tasks]
    rows.sort(key=lambda r: (r["n_atoms"], r["theta0"], r["tau"]))
    return rows


def theta_grid(config: ExperimentConfig) -> np.ndarray:
    return np.linspace(config.theta_min, config.theta_max, config.theta_count)


def tau_grid(config: ExperimentConfig) -> np.ndarray:
    if config.tau_list is not None:
        return np.array(sorted(config.tau_list))
    return np.linspace(config.tau_min, config.tau_max, config.tau_count)


def run_scan(config: ExperimentConfig, out_dir: Path) -> tuple[list[dict], list[Path]]:
    """(theta0, tau) grid at fixed ``n_atoms``; rows sorted by (theta0, tau)."""
    tasks = _scan_tasks(config, theta_grid(config), tau_grid(config), [config.n_atoms])
    rows = run_points(tasks, config.threads)
    path = write_csv(Path(out_dir) / "scan.csv", SCAN_COLUMNS,
                     ([r[c] for c in SCAN_COLUMNS] for r in rows))
    side = write_meta(path, config, points=len(rows),
                      failed_points=sum(1 for r in rows if r["error"]))
    return rows, [path, side]


def run_sweep(config: ExperimentConfig, out_dir: Path) -> tuple[list[dict], list[Path]]:
    """Final-step power versus ``n_atoms`` at fixed (theta0, tau)."""
    n_list = config.n_atoms_list or FIG4B_N_ATOMS
    tasks = _scan_tasks(config, [config.polar_angle], [config.tau], sorted(n_list))
    rows = run_points(tasks, config.threads)
    path = write_csv(Path(out_dir) / "sweep_na.csv", SCAN_COLUMNS,
                     ([r[c] for c in SCAN_COLUMNS] for r in rows))
    side = write_meta(path, config, points=len(rows),
                      failed_points=sum(1 for r in rows if r["error"]))
    return rows, [path, side]


# ---------------------------------------------------------------- figure 2

def figure2_sample_steps(k_est: int, steps: int, count: int = FIG2_SAMPLES) -> list[int]:
    """Evenly spaced collision numbers in ``[0, min(k_est, steps)]``."""
    top = min(k_est, steps)
    return sorted({int(round(x)) for x in np.linspace(0, top, count)})


def run_figure2(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    battery = config.battery
    taus = config.tau_list or FIG2_TAUS
    nbar_rows, dist_rows, marker_rows, samples = [], [], [], {}
    for tau in taus:
        budget = config.k_tau_budget or (100.0 if tau > 0.1 else 70.0)
        steps = max(1, int(round(budget / tau)))
        for c, label in ((1.0, "coherent"), (0.0, "incoherent")):
            atoms = AtomEnsembleSpec(config.n_atoms, config.polar_angle,
                                     config.azimuthal_angle, c)
            model = ClosedFormModel(battery, atoms, tau)
            k_est = model.k_est
            traj = run_trajectory(battery, atoms, tau, steps, spectral=False)
            eq16 = n_bar_discrete_series(steps, model.drift.alpha) if c else None
            for row, pred, div in zip(traj.rows, traj.predictions, traj.divergence):
                nbar_rows.append([label, c, tau, row.k, row.k_tau, row.n_bar, pred.n_bar,
                                  None if eq16 is None else eq16[row.k], div])
            ks = figure2_sample_steps(k_est, steps)
            samples[f"{label}@{tau:.6g}"] = ks
            peak_rate = model.drift.v + model.drift.omega
            for k in ks:
                p = traj.rows[k].p_dist
                scale = p.max()
                for n, pn in enumerate(p):
                    dist_rows.append([label, tau, k, k * tau, n, pn, pn / scale, peak_rate * k])
            n_bar = traj.column("n_bar")
            i = int(np.argmax(n_bar))
            marker_rows.append([label, tau, model.drift.v, model.drift.omega, k_est,
                                k_est * tau, i, i * tau, n_bar[i]])
    paths = [
        write_csv(out_dir / "figure2_nbar.csv",
                  ["protocol", "coherence_factor", "tau", "k", "k_tau", "n_bar", "n_bar_pred",
                   "n_bar_bessel", "divergence"], nbar_rows),
        write_csv(out_dir / "figure2_distributions.csv",
                  ["protocol", "tau", "k", "k_tau", "n", "p_n", "p_n_scaled", "peak_bound_n"],
                  dist_rows),
        write_csv(out_dir / "figure2_markers.csv",
                  ["protocol", "tau", "v", "omega", "k_est", "k_est_tau", "argmax_k",
                   "argmax_k_tau", "n_bar_max"], marker_rows),
    ]
    paths.append(write_meta(paths[1], config, sampled_steps=samples,
                            sampling="8 evenly spaced k in [0, min(k_est, steps)]"))
    return paths


# ---------------------------------------------------------------- figure 3

def figure3_table(x_max: float = 40.0, count: int = 81, h: float = 1e-3):
    """Rows ``(x, f, f + x f', integral of J1(2x')^2/x' ...)``."""
    rows = []
    for x in np.linspace(0.0, x_max, count):
        f = f_of_x(x)
        if x == 0:
            g = f
        else:
            lo = max(x - h, 0.0)
            deriv = (f_of_x(x + h) - f_of_x(lo)) / (x + h - lo)
            g = f + x * deriv
        rows.append([x, f, g, bessel_square_integral(x), F_INFINITY])
    return rows


def run_figure3(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [
        write_csv(out_dir / "figure3_f.csv",
                  ["x", "f", "f_plus_x_fprime", "f_plus_x_fprime_integral", "f_limit"],
                  figure3_table()),
        write_csv(out_dir / "figure3_catalan.csv", ["n", "catalan"],
                  [[n, catalan(n)] for n in range(11)]),
    ]
    paths.append(write_meta(paths[0], config, derivative="central difference, h=1e-3"))
    return paths


# ---------------------------------------------------------------- figure 4

def _power_row(battery, atoms, tau, steps):
    rho = evolve(CollisionChannel(battery, atoms, tau), basis_state(battery, 0), steps)
    obs = observe(rho, steps, tau, battery, 0.0, spectral=False)
    obs.check(battery.n_levels_top)
    return obs.power


def ridge_from_grid(taus: np.ndarray, powers: np.ndarray) -> float:
    """Grid argmax refined by a parabola through the neighbouring points."""
    i = int(np.nanargmax(powers))
    if 0 < i < len(taus) - 1:
        y0, y1, y2 = powers[i - 1:i + 2]
        x0, x1, x2 = taus[i - 1:i + 2]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        b = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / denom
        if a < 0:
            return float(-b / (2 * a))
    return float(taus[i])


def run_figure4(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    battery = config.battery
    paths = []

    # (a) power versus theta0 at tau = 0.01, k tau = 60 / N_A
    rows, curve = [], []
    tau = 0.01
    for n_a in FIG4A_N_ATOMS:
        steps = int(round(60 / n_a / tau))
        for th in np.linspace(0, math.pi, 9):
            atoms = AtomEnsembleSpec(n_a, float(th))
            p = _power_row(battery, atoms, tau, steps)
            pred = coherent_power(steps * tau, atoms) if abs(jminus_mean(atoms)) > 0 else 0.0
            rows.append([n_a, th, tau, steps, steps * tau, p, p / n_a, pred / n_a,
                         power_upper_bound(atoms, tau) / n_a])
        for th in np.linspace(0, math.pi, 181):
            atoms = AtomEnsembleSpec(n_a, float(th))
            pred = coherent_power(steps * tau, atoms) if abs(jminus_mean(atoms)) > 0 else 0.0
            curve.append([n_a, th, pred / n_a])
    paths.append(write_csv(out_dir / "figure4a.csv",
                           ["n_atoms", "theta0", "tau", "k", "k_tau", "power", "power_scaled",
                            "power_bessel_scaled", "power_bound_scaled"], rows))
    paths.append(write_csv(out_dir / "figure4a_curve.csv",
                           ["n_atoms", "theta0", "power_bessel_scaled"], curve))

    # (b) power versus N_A at theta0 = pi/8, plus the theta0 = pi/2 reference
    n_list = sorted(config.n_atoms_list or FIG4B_N_ATOMS)
    series = [(math.pi / 8, t) for t in (config.tau_list or FIG4B_TAUS)] + [(math.pi / 2, 0.01)]
    tasks = [dict(n_levels_top=battery.n_levels_top, energy_spacing=battery.energy_spacing,
                  azimuthal_angle=0.0, coherence_factor=1.0, steps=None, k_tau_budget=None,
                  spectral=False, theta0=th, tau=t, n_atoms=n)
             for th, t in series for n in n_list]
    pts = run_points(tasks, config.threads)
    pts.sort(key=lambda r: (r["theta0"], r["tau"], r["n_atoms"]))
    paths.append(write_csv(out_dir / "figure4b.csv",
                           ["theta0", "tau", "n_atoms", "k", "k_tau", "power", "power_scaled",
                            "power_bound_scaled", "error"],
                           [[r["theta0"], r["tau"], r["n_atoms"], r["k"], r["k_tau"], r["power"],
                             r["power_scaled"], r["power_bound"] / r["n_atoms"], r["error"]]
                            for r in pts]))

    # (c) numeric heatmap over (theta0, tau) for N_A = 10 and its ridge
    n_a = 10
    cfg_c = config.with_overrides(n_atoms=n_a, coherence_factor=1.0, steps=None,
                                  k_tau_budget=60 / n_a, spectral=False)
    thetas, taus = theta_grid(cfg_c), tau_grid(cfg_c)
    pts = run_points(_scan_tasks(cfg_c, thetas, taus, [n_a]), config.threads)
    paths.append(write_csv(out_dir / "figure4c.csv",
                           ["theta0", "tau", "k", "k_tau", "power_scaled", "power_bound_scaled",
                            "unphysical", "error"],
                           [[r["theta0"], r["tau"], r["k"], r["k_tau"], r["power_scaled"],
                             r["power_bound"] / n_a, r["unphysical"], r["error"]] for r in pts]))
    ridge = []
    for th in thetas:
        sel = [r for r in pts if r["theta0"] == float(th)]
        pw = np.array([np.nan if r["power_scaled"] is None else r["power_scaled"] for r in sel])
        ridge.append([th, ridge_from_grid(np.array([r["tau"] for r in sel]), pw),
                      ridge_tau(float(th)) if th <= math.pi / 2 else None,
                      ridge_tau_linear(float(th))])
    paths.append(write_csv(out_dir / "figure4c_ridge.csv",
                           ["theta0", "tau_ridge_numeric", "tau_ridge_bound", "tau_ridge_linear"],
                           ridge))

    # (d) analytic upper-bound heatmap with the unphysical region flagged
    rows = []
    for th in np.linspace(0, math.pi / 2, 46):
        for t in np.linspace(0.02, math.pi, 100):
            atoms = AtomEnsembleSpec(n_a, float(th))
            rows.append([th, t, power_upper_bound(atoms, float(t)) / n_a,
                         is_unphysical(float(th), float(t))])
    paths.append(write_csv(out_dir / "figure4d.csv",
                           ["theta0", "tau", "power_bound_scaled", "unphysical"], rows))
    paths.append(write_meta(paths[0], config, k_tau="60 / n_atoms", panel_b_series=series))
    return paths


# ---------------------------------------------------------------- figure 5

def run_figure5(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    battery = config.battery
    theta = config.polar_angle
    rows = []
    for n_a in sorted(config.n_atoms_list or FIG5_N_ATOMS):
        atoms = AtomEnsembleSpec(n_a, theta, 0.0, 1.0)
        for tau in sorted(config.tau_list or FIG5_TAUS):
            steps = max(1, int(round(60 / n_a / tau)))
            every = max(1, steps // 300)
            traj = run_trajectory(battery, atoms, tau, steps, record_every=every)
            p_inc_ref = math.sin(tau) ** 2 / tau
            for r in traj.rows[1:]:
                rows.append([n_a, tau, r.k, r.k_tau, r.power / n_a, r.ergotropy_power / n_a,
                             r.purity, coherent_power(r.k_tau, atoms) / n_a, p_inc_ref,
                             P_INC_MAX_BAND])
    path = write_csv(out_dir / "figure5.csv",
                     ["n_atoms", "tau", "k", "k_tau", "power_scaled", "ergotropy_power_scaled",
                      "purity", "power_bessel_scaled", "power_incoherent_ref_scaled",
                      "power_incoherent_max"], rows)
    return [path, write_meta(path, config, k_tau="60 / n_atoms",
                             incoherent_reference="sin(tau)^2/tau, theta0 = 0")]


# ---------------------------------------------------------------- optimal

def optimal_summary() -> dict:
    tau0 = incoherent_optimal_tau()
    return {
        "tau0": tau0,
        "p_inc_max": incoherent_power(tau0, AtomEnsembleSpec(2, 0.0, 0.0, 0.0)) / 2,
        "p_coh_max": F_INFINITY,
        "ridge": [(th, ridge_tau(th), ridge_tau_linear(th))
                  for th in (0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8, math.pi / 2)],
    }


RUNNERS = {
    "trajectory": lambda c, o: run_single(c, o)[1],
    "scan_theta_tau": lambda c, o: run_scan(c, o)[1],
    "sweep_na": lambda c, o: run_sweep(c, o)[1],
    "figure2": run_figure2,
    "figure3": run_figure3,
    "figure4": run_figure4,
    "figure5": run_figure5,
}

SCENARIO_DEFAULTS = {
    "figure5": {"polar_angle": math.pi / 2},
}


def run_scenario(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    return RUNNERS[config.scenario](config, Path(out_dir))


__all__ = [
    "RUNNERS", "SCAN_COLUMNS", "SCENARIO_DEFAULTS", "TRAJECTORY_COLUMNS",
    "figure2_sample_steps", "figure3_table", "fmt", "optimal_summary", "resolve_steps",
    "ridge_from_grid", "run_figure2", "run_figure3", "run_figure4", "run_figure5", "run_points",
    "run_scan", "run_scenario", "run_single", "run_sweep", "write_csv", "write_meta",
]
