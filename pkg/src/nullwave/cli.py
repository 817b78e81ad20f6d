"""Batch front-end: ``nullwave {analyze,radiation,reduce,simulate,compare} --config run.json``.

Exit codes: 0 ok, 2 configuration error, 3 runtime assertion (containment),
4 missing inputs for ``compare``.
"""
import argparse
import copy
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import _accel
from .algebra import PRESET_NAMES, check_null_condition, load_nonlinearity, verify_alinhac
from .analysis import extract_modified_V, extract_W, fit_energy_growth, fit_power_law, shell_energy_compare
from .profiles import build_A_of_W, classify, integrate_reduced_system
from .quadrature import angles_to_unit, direction_set, product_rule, unit_to_angles
from .radiation import (InitialData, ProfileGrid, default_sigma_grid, h0_norm, radiation_fields,
                        translation_representation)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_MISSING = 0, 2, 3, 4

DEFAULTS = {
    "nonlinearity": None,
    "data": [],
    "grid": {"L": 32.0, "h": 0.25, "dt": 0.0625, "t_max": 24.0},
    "eps": 0.05,
    "rays": [],
    "outputs": "out",
    "seed": 0,
    "analyze": {"samples": 2048, "alinhac_samples": 10000, "use_beta": True},
    "radiation": {"sigma_spacing": 0.05, "isometry_spacing": 0.005, "n_theta": 24, "n_phi": 48},
    "reduce": {"tau_end": 1.0, "dtau": 1e-3, "P0": "radiation", "sigma_spacing": 0.05,
               "n_theta": 6, "n_phi": 12, "record_every": 10},
    "simulate": {"energy_every": 1, "ray_every": 1, "ray_t_min": 2.0, "snapshot_times": [],
                 "backend": None, "abort_leak": 0.1},
    "compare": {"inputs": None, "late_fraction": 0.5, "fit_t_min": 4.0},
}

CONTAINMENT_RATIO = 1e-8


class ConfigError(ValueError):
    """Bad configuration; the message names the offending field."""


class MissingInputs(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, sets) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = _parse_value(text)
    return cfg


def load_config(path, sets=None) -> dict:
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path!r} not found")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, raw)
    return apply_overrides(cfg, sets)


def _number(cfg, path, positive=False, integer=False):
    node = cfg
    for p in path.split("."):
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"missing field {path!r}")
        node = node[p]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"field {path!r} must be a number")
    if integer and int(node) != node:
        raise ConfigError(f"field {path!r} must be an integer")
    if positive and not node > 0:
        raise ConfigError(f"field {path!r} must be positive")
    return int(node) if integer else float(node)


def resolve_nonlinearity(cfg):
    spec = cfg.get("nonlinearity")
    if spec is None:
        raise ConfigError("missing field 'nonlinearity'")
    if isinstance(spec, str) and spec not in PRESET_NAMES and not os.path.exists(spec):
        raise ConfigError(f"field 'nonlinearity': unknown preset or missing file {spec!r}")
    try:
        return load_nonlinearity(spec)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"field 'nonlinearity': {exc}")


def resolve_data(cfg, n_total):
    entries = cfg.get("data")
    if not isinstance(entries, list):
        raise ConfigError("field 'data' must be a list with one entry per component")
    if len(entries) != n_total:
        raise ConfigError(f"field 'data' has {len(entries)} entries, the system has {n_total} components")
    out = []
    for i, e in enumerate(entries):
        try:
            out.append(InitialData.from_dict(e if e is not None else {}))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"field 'data[{i}]': {exc}")
    return out


def resolve_rays(cfg):
    """Rays as (sigmas, omegas). Accepts a list of [sigma, theta, phi] or {sigma: [...], directions: [[theta, phi], ...]}."""
    spec = cfg.get("rays") or []
    if isinstance(spec, dict):
        try:
            sig = np.asarray(spec["sigma"], dtype=float).reshape(-1)
            ang = np.asarray(spec["directions"], dtype=float).reshape(-1, 2)
        except (KeyError, ValueError, TypeError):
            raise ConfigError("field 'rays' needs numeric 'sigma' and 'directions' lists")
        om = angles_to_unit(ang[:, 0], ang[:, 1])
        return np.repeat(sig, om.shape[0]), np.tile(om, (sig.size, 1))
    try:
        arr = np.asarray(spec, dtype=float).reshape(-1, 3)
    except (ValueError, TypeError):
        raise ConfigError("field 'rays' must be a list of [sigma, theta, phi]")
    return arr[:, 0], angles_to_unit(arr[:, 1], arr[:, 2])


def validate_grid(cfg, data):
    L = _number(cfg, "grid.L", positive=True)
    h = _number(cfg, "grid.h", positive=True)
    dt = _number(cfg, "grid.dt", positive=True)
    t_max = _number(cfg, "grid.t_max", positive=True)
    eps = _number(cfg, "eps", positive=True)
    n = 2 * L / h
    if abs(n - round(n)) > 1e-9:
        raise ConfigError("field 'grid.h': 2L/h must be an integer")
    if dt > 0.5 * h / math.sqrt(3.0) * (1 + 1e-12):
        raise ConfigError(f"field 'grid.dt': CFL requires dt <= h/(2 sqrt 3) = {0.5 * h / math.sqrt(3.0):.6g}")
    R = max((d.support_radius + float(np.linalg.norm(d.center)) for d in data), default=0.0)
    if t_max + R + 2 * h >= L:
        raise ConfigError(f"field 'grid.t_max': t_max + R + 2h = {t_max + R + 2 * h:g} must stay below L = {L:g}")
    return L, h, dt, t_max, eps


def validate_rays(cfg, sigmas, omegas, L, h, t_max):
    t_min = _number(cfg, "simulate.ray_t_min")
    if sigmas.size and np.any(t_min - h + sigmas <= 0):
        raise ConfigError("field 'rays': t + sigma must be positive from simulate.ray_t_min on")
    if sigmas.size and np.any(np.abs(omegas).max(axis=1) * (t_max + sigmas) >= L - 2 * h):
        raise ConfigError("field 'rays': a ray leaves the cube interior before t_max")


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    return repr(float(v))


def _fit_dict(fit):
    return {"fit_type": fit.fit_type, "params": fit.params, "r2": fit.r2, "window": list(fit.window)}


def _rate_dict(times, series):
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    rate, const = fit_power_law(times, series)
    ok = (times > 0) & (np.abs(series) > 0)
    r2 = None
    if np.sum(ok) >= 3:
        y = np.log(np.abs(series[ok]))
        pred = np.log(const) + rate * np.log(times[ok])
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    window = [float(times[0]), float(times[-1])] if times.size else [None, None]
    return {"fit_type": "power_in_t", "params": {"rate": rate, "constant": const}, "r2": r2, "window": window}


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(cfg, out):
    preset = resolve_nonlinearity(cfg)
    samples = _number(cfg, "analyze.samples", positive=True, integer=True)
    a_samples = _number(cfg, "analyze.alinhac_samples", positive=True, integer=True)
    seed = _number(cfg, "seed", integer=True)
    F = preset.F
    nc = check_null_condition(F, seed=seed)
    report = {"nonlinearity": preset.name, "n_total": F.n_total, "n_v": F.n_v,
              "null_condition": {"holds": nc.holds}}
    if nc.witness is not None:
        report["null_condition"]["witness"] = nc.witness
    if preset.alinhac is not None:
        ar = verify_alinhac(F, preset.alinhac, samples=a_samples, seed=seed)
        report["alinhac"] = {"residual_factor": ar.residual_factor, "residual_split": ar.residual_split,
                             "residual_kernel": ar.residual_kernel, "degenerate_beta": ar.degenerate_beta,
                             "samples": ar.n_samples, "passed": ar.passed()}
    rows = []
    if preset.g is not None:
        beta = None
        if cfg["analyze"].get("use_beta") and preset.alinhac is not None:
            beta = preset.alinhac.beta
        cr = classify(preset.g, beta=None, samples=samples, seed=seed)
        report["classification"] = {"verdict": cr.verdict, "max_real_part": cr.max_real_part,
                                    "b_norm_max": cr.b_norm_max, "counts": cr.counts,
                                    "predicts_asymptotically_free": cr.asymptotically_free}
        if beta is not None:
            crb = classify(preset.g, beta=beta, samples=samples, seed=seed)
            report["classification_projected"] = {"verdict": crb.verdict, "max_real_part": crb.max_real_part,
                                                  "b_norm_max": crb.b_norm_max, "counts": crb.counts}
        rows = cr.witnesses
        verdict = cr.verdict
    else:
        report["classification"] = {"verdict": "not_applicable",
                                    "reason": "no w/v block structure for the coupling matrix"}
        verdict = "null" if nc.holds else "not_applicable"
    write_json(os.path.join(out, "classification.json"), report)
    with open(os.path.join(out, "witnesses.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["type", "omega1", "omega2", "omega3", "xi", "eta", "eig_re", "eig_im"])
        for w in rows:
            for lam in np.atleast_1d(w["eigenvalues"]):
                wr.writerow([w["type"], *map(_fmt, w["omega"]), " ".join(map(_fmt, w["xi"])),
                             " ".join(map(_fmt, w["eta"])), _fmt(lam.real), _fmt(lam.imag)])
    print(f"{preset.name}: null_condition={'holds' if nc.holds else 'fails'} verdict={verdict}")
    return EXIT_OK


def cmd_radiation(cfg, out):
    preset = resolve_nonlinearity(cfg)
    data = resolve_data(cfg, preset.F.n_total)
    spacing = _number(cfg, "radiation.sigma_spacing", positive=True)
    sphere = product_rule(_number(cfg, "radiation.n_theta", positive=True, integer=True),
                          _number(cfg, "radiation.n_phi", positive=True, integer=True))
    R = max((d.support_radius + float(np.linalg.norm(d.center)) for d in data), default=0.0)
    sigma = default_sigma_grid(max(R, spacing), spacing)
    F0 = radiation_fields(data, sigma, sphere, derivative=0)
    dF0 = radiation_fields(data, sigma, sphere, derivative=1)
    F0.to_csv(os.path.join(out, "radiation.csv"))
    dF0.to_csv(os.path.join(out, "translation.csv"))
    # the L^2 check gets its own finer sigma grid; narrow profiles are under-resolved on the output grid
    fine = _number(cfg, "radiation.isometry_spacing", positive=True)
    sigma_fine = default_sigma_grid(max(R, fine), fine)
    comps = []
    worst = 0.0
    for i, d in enumerate(data):
        h0 = h0_norm(d)
        l2 = translation_representation(d, sigma_fine, sphere).l2_norm()
        rel = abs(l2 - h0) / h0 if h0 > 0 else abs(l2)
        worst = max(worst, rel)
        comps.append({"component": i + 1, "h0_norm": h0, "translation_l2": l2, "relative_mismatch": rel})
    write_json(os.path.join(out, "isometry.json"), {"components": comps, "max_relative_mismatch": worst})
    print(f"radiation fields for {len(data)} components; isometry mismatch {worst:.3g}")
    return EXIT_OK


def _reduce_initial(cfg, preset):
    spec = cfg["reduce"].get("P0", "radiation")
    N = preset.F.n_total
    spacing = _number(cfg, "reduce.sigma_spacing", positive=True)
    sphere = product_rule(_number(cfg, "reduce.n_theta", positive=True, integer=True),
                          _number(cfg, "reduce.n_phi", positive=True, integer=True))
    if spec == "radiation":
        data = resolve_data(cfg, N)
        for d in data:
            d.eps = 1.0
        R = max((d.support_radius + float(np.linalg.norm(d.center)) for d in data), default=0.0)
        sigma = default_sigma_grid(max(R, spacing), spacing)
        return radiation_fields(data, sigma, sphere, derivative=1)
    if isinstance(spec, dict) and "constant" in spec:
        vals = np.asarray(spec["constant"], dtype=float).reshape(-1)
        if vals.size != N:
            raise ConfigError(f"field 'reduce.P0.constant' needs {N} values")
        lo, hi = float(spec.get("sigma_min", -1.0)), float(spec.get("sigma_max", 1.0))
        if not hi > lo:
            raise ConfigError("field 'reduce.P0': sigma_max must exceed sigma_min")
        sigma = np.linspace(lo, hi, int(round((hi - lo) / spacing)) + 1)
        return ProfileGrid(sigma, sphere, np.broadcast_to(vals[:, None, None], (N, sigma.size, sphere.size)).copy())
    raise ConfigError("field 'reduce.P0' must be \"radiation\" or {\"constant\": [...]}")


def cmd_reduce(cfg, out):
    preset = resolve_nonlinearity(cfg)
    tau_end = _number(cfg, "reduce.tau_end")
    dtau = _number(cfg, "reduce.dtau", positive=True)
    every = _number(cfg, "reduce.record_every", positive=True, integer=True)
    if tau_end < 0:
        raise ConfigError("field 'reduce.tau_end' must be >= 0")
    P0 = _reduce_initial(cfg, preset)
    res = integrate_reduced_system(preset.F, P0, tau_end, dtau, record_every=every)
    with open(os.path.join(out, "reduce.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["tau", "max_abs_P"])
        for t, m in zip(res.history_tau, res.history_max):
            wr.writerow([_fmt(t), _fmt(m)])
    n0 = P0.l2_norm()
    n1 = res.P.l2_norm() if res.blowup_tau is None else float("inf")
    change = float(np.max(np.abs(res.P.values - P0.values))) if res.blowup_tau is None else None
    # pointwise |P| over the v-block, the conserved quantity of skew couplings
    nv = preset.F.n_v
    mag0 = np.sqrt(np.sum(P0.values[:nv] ** 2, axis=0))
    mag1 = np.sqrt(np.sum(res.P.values[:nv] ** 2, axis=0)) if res.blowup_tau is None else None
    summary = {"nonlinearity": preset.name, "tau_end": res.tau, "steps": res.steps,
               "blowup_tau": res.blowup_tau, "l2_norm_initial": n0, "l2_norm_final": n1,
               "max_abs_change": change,
               "v_magnitude_max_relative_change": (float(np.max(np.abs(mag1 - mag0)) / max(np.max(mag0), 1e-300))
                                                   if mag1 is not None else None)}
    write_json(os.path.join(out, "reduce.json"), summary)
    if res.blowup_tau is None:
        res.P.to_csv(os.path.join(out, "reduce_P.csv"))
        print(f"reduced system integrated to tau = {res.tau:g}; max change {change:.3g}")
    else:
        print(f"reduced system blew up at tau = {res.blowup_tau:.6g}")
    return EXIT_OK


def _write_rays(out, res, n_v, eps):
    rdir = os.path.join(out, "rays")
    os.makedirs(rdir, exist_ok=True)
    theta, phi = unit_to_angles(res.ray_omegas) if res.ray_sigmas.size else (np.zeros(0), np.zeros(0))
    index = {"eps": eps, "n_v": n_v, "rays": []}
    for i in range(res.ray_sigmas.size):
        name = f"ray_{i:04d}.csv"
        with open(os.path.join(rdir, name), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "sigma", "component", "ru", "rdu0", "rdu1", "rdu2", "rdu3"])
            for it, t in enumerate(res.ray_times):
                for c in range(res.rays.shape[2]):
                    wr.writerow([_fmt(t), _fmt(res.ray_sigmas[i]), c + 1, *map(_fmt, res.rays[it, i, c])])
        index["rays"].append({"file": name, "sigma": float(res.ray_sigmas[i]), "theta": float(theta[i]),
                              "phi": float(phi[i]), "omega": res.ray_omegas[i].tolist()})
    write_json(os.path.join(rdir, "index.json"), index)


def cmd_simulate(cfg, out):
    from . import solver
    preset = resolve_nonlinearity(cfg)
    data = resolve_data(cfg, preset.F.n_total)
    L, h, dt, t_max, eps = validate_grid(cfg, data)
    sig, om = resolve_rays(cfg)
    validate_rays(cfg, sig, om, L, h, t_max)
    sim = cfg["simulate"]
    e_every = _number(cfg, "simulate.energy_every", positive=True, integer=True)
    r_every = _number(cfg, "simulate.ray_every", positive=True, integer=True)
    abort = _number(cfg, "simulate.abort_leak", positive=True)
    snaps = [float(s) for s in sim.get("snapshot_times") or []]
    if any(s < 0 or s > t_max for s in snaps):
        raise ConfigError("field 'simulate.snapshot_times' must lie in [0, t_max]")
    backend = sim.get("backend")
    if backend not in (None, "numba", "numpy"):
        raise ConfigError("field 'simulate.backend' must be numba or numpy")
    snap_dir = os.path.join(out, "snapshots")
    if snaps:
        os.makedirs(snap_dir, exist_ok=True)
    write_json(os.path.join(out, "config.json"), cfg)
    t0 = time.time()
    try:
        res = solver.run(preset.F, data, L=L, h=h, dt=dt, t_max=t_max, eps=eps, ray_sigmas=sig, ray_omegas=om,
                         ray_t_min=_number(cfg, "simulate.ray_t_min"), ray_every=r_every, energy_every=e_every,
                         snapshot_times=snaps, snapshot_prefix=os.path.join(snap_dir, "snap") if snaps else None,
                         abort_leak=abort, backend=backend)
    except solver.ContainmentError as exc:
        print(f"containment violated: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    with open(os.path.join(out, "energy.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "E"] + [f"E_{i + 1}" for i in range(res.energies.shape[1])])
        for t, e in zip(res.times, res.energies):
            wr.writerow([_fmt(t), _fmt(np.sqrt(np.sum(e ** 2))), *map(_fmt, e)])
    _write_rays(out, res, preset.F.n_v, eps)
    summary = {"nonlinearity": preset.name, "steps": int(round(res.times[-1] / dt)) if res.times.size else 0,
               "t_final": float(res.times[-1]) if res.times.size else 0.0, "blowup_t": res.blowup_t,
               "max_leak_ratio": res.max_leak_ratio,
               "containment_within_1e-8": bool(res.max_leak_ratio <= CONTAINMENT_RATIO),
               "backend": backend or _accel.default_backend(), "wall_seconds": time.time() - t0}
    write_json(os.path.join(out, "simulate.json"), summary)
    tail = f", blow-up at t = {res.blowup_t:g}" if res.blowup_t is not None else ""
    print(f"simulated to t = {summary['t_final']:g}{tail}; leak ratio {res.max_leak_ratio:.3g}")
    return EXIT_OK


# compare --------------------------------------------------------------------


def read_energy_csv(path):
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1], arr[:, 2:]


def read_rays(rdir):
    with open(os.path.join(rdir, "index.json")) as fh:
        index = json.load(fh)
    entries = index["rays"]
    sig = np.array([e["sigma"] for e in entries], dtype=float)
    om = np.array([e["omega"] for e in entries], dtype=float).reshape(-1, 3)
    times, blocks = None, []
    for e in entries:
        arr = np.loadtxt(os.path.join(rdir, e["file"]), delimiter=",", skiprows=1, ndmin=2)
        t = np.unique(arr[:, 0])
        N = int(arr[:, 2].max())
        blocks.append(arr[:, 3:].reshape(t.size, N, 5))
        times = t
    rays = np.stack(blocks, axis=1) if blocks else np.zeros((0, 0, 0, 5))
    return times, rays, sig, om, index


def _series_csv(path, header, cols):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in zip(*cols):
            wr.writerow([_fmt(v) for v in row])


def cmd_compare(cfg, out):
    cmp_cfg = cfg["compare"]
    src = cmp_cfg.get("inputs") or out
    need = [os.path.join(src, "energy.csv"), os.path.join(src, "config.json")]
    missing = [p for p in need if not os.path.exists(p)]
    if missing:
        raise MissingInputs("missing simulate outputs: " + ", ".join(missing))
    with open(os.path.join(src, "config.json")) as fh:
        sim_cfg = _merge(DEFAULTS, json.load(fh))
    preset = resolve_nonlinearity(sim_cfg)
    data = resolve_data(sim_cfg, preset.F.n_total)
    eps = _number(sim_cfg, "eps", positive=True)
    late = _number(cfg, "compare.late_fraction", positive=True)
    t_fit = _number(cfg, "compare.fit_t_min", positive=True)
    summary = {"nonlinearity": preset.name, "eps": eps}

    # energy growth
    t, E, _ = read_energy_csv(os.path.join(src, "energy.csv"))
    m = t >= t_fit - 1e-9
    fits = {}
    for model in ("constant", "power_in_t", "log_linear"):
        try:
            fits[model] = _fit_dict(fit_energy_growth(t[m], E[m], model))
        except ValueError as exc:
            fits[model] = {"fit_type": model, "error": str(exc)}
    inc = {}
    if np.sum(m) > 3:
        tt, dE = t[m][1:], E[m][1:] - E[m][0]
        for model in ("power_in_t", "log_linear"):
            try:
                inc[model] = _fit_dict(fit_energy_growth(tt, dE, model))
            except ValueError as exc:
                inc[model] = {"fit_type": model, "error": str(exc)}
    write_json(os.path.join(out, "energy_fit.json"), {"energy": fits, "energy_increment": inc})
    summary["energy_relative_range"] = float((E[m].max() - E[m].min()) / E[m][0]) if np.any(m) and E[m][0] else 0.0
    summary["energy_monotone_increasing"] = bool(np.all(np.diff(E[m]) > 0)) if np.sum(m) > 1 else False

    # rays
    rdir = os.path.join(src, "rays")
    if os.path.exists(os.path.join(rdir, "index.json")):
        times, rays, sig, om, _ = read_rays(rdir)
        if sig.size and times.size >= 4:
            for d in data:
                d.eps = 1.0
            sph = direction_set(np.unique(np.round(om, 12), axis=0))
            ref = radiation_fields(data, np.unique(sig), sph, derivative=0)
            allc = list(range(preset.F.n_total))
            wx = extract_W(times, rays, sig, om, allc, eps, reference=ref, late_fraction=late)
            _series_csv(os.path.join(out, "residual.csv"), ["t", "residual"], [wx.times, wx.residual])
            summary["free_residual_fit"] = _rate_dict(wx.times, wx.residual)
            nv, N = preset.F.n_v, preset.F.n_total
            if preset.g is not None and nv < N:
                wcomps = list(range(nv, N))
                wref = ProfileGrid(ref.sigma, ref.sphere, ref.values[nv:])
                wex = extract_W(times, rays, sig, om, wcomps, eps, reference=wref, late_fraction=late)
                wex.W.to_csv(os.path.join(out, "W.csv"))
                summary["W_residual_fit"] = _rate_dict(wex.times, wex.residual)
                try:
                    A = build_A_of_W(preset.g, wex.W, eps)
                    summary["A_source"] = "extracted_W"
                except ValueError:
                    A = build_A_of_W(preset.g, wref, eps)
                    summary["A_source"] = "radiation_field"
                vx = extract_modified_V(times, rays, sig, om, list(range(nv)), eps, A, late_fraction=late)
                vx.dV.to_csv(os.path.join(out, "dV.csv"))
                vm, vu = vx.late_variance(late)
                th, ph = unit_to_angles(om)
                _series_csv(os.path.join(out, "variance.csv"),
                            ["sigma", "theta", "phi", "var_modified", "var_unmodified"], [sig, th, ph, vm, vu])
                ratio = vu / np.where(vm > 0, vm, np.nan)
                summary["variance_ratio_min"] = float(np.nanmin(ratio)) if np.any(np.isfinite(ratio)) else None
                summary["variance_ratio_median"] = float(np.nanmedian(ratio)) if np.any(np.isfinite(ratio)) else None

    # shells
    snap_dir = os.path.join(src, "snapshots")
    if os.path.isdir(snap_dir):
        from .solver import read_snapshot
        sides = sorted(f for f in os.listdir(snap_dir) if f.endswith(".json"))
        snaps = [read_snapshot(os.path.join(snap_dir, f)) for f in sides]
        snaps.sort(key=lambda s: s.t)
        if snaps:
            for d in data:
                d.eps = 1.0
            R = max((d.support_radius + float(np.linalg.norm(d.center)) for d in data), default=1.0)
            sph = product_rule(16, 32)
            sigma = default_sigma_grid(max(R, 0.05), 0.05)
            dF = radiation_fields(data, sigma, sph, derivative=1)
            F0 = radiation_fields(data, sigma, sph, derivative=0)
            nv, N = preset.F.n_v, preset.F.n_total
            shells = {}
            v_part = ProfileGrid(sigma, sph, dF.values[:nv])
            free = shell_energy_compare(snaps, list(range(nv)), v_part, eps)
            shells["v_free_prediction"] = free
            if preset.g is not None and nv < N:
                A = build_A_of_W(preset.g, ProfileGrid(sigma, sph, F0.values[nv:]), eps)
                shells["v_modified_prediction"] = shell_energy_compare(snaps, list(range(nv)), v_part, eps, A)
                shells["w_free_prediction"] = shell_energy_compare(
                    snaps, list(range(nv, N)), ProfileGrid(sigma, sph, dF.values[nv:]), eps)
            rows = {}
            for k, sc in shells.items():
                rows[k] = {"fit_type": "power_in_t", "params": {"rate": sc.rate, "constant": sc.constant},
                           "window": [float(sc.times[0]), float(sc.times[-1])], "r2": None,
                           "residual": sc.residual.tolist(), "reference_norm": sc.reference_norm.tolist()}
                _series_csv(os.path.join(out, f"shell_{k}.csv"), ["t", "residual", "reference_norm"],
                            [sc.times, sc.residual, sc.reference_norm])
            summary["shells"] = rows
            if "w_free_prediction" in shells:
                rw = shells["w_free_prediction"].rate
                rv = shells["v_free_prediction"].rate
                summary["non_asymptotically_free_signature"] = bool(rw < -0.3 and rv > rw + 0.3)
    write_json(os.path.join(out, "compare.json"), summary)
    print(f"comparison written to {out}")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "radiation": cmd_radiation, "reduce": cmd_reduce,
            "simulate": cmd_simulate, "compare": cmd_compare}


def build_parser():
    p = argparse.ArgumentParser(prog="nullwave", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides 'outputs')")
    p.add_argument("--threads", type=int, default=None, help="kernel threads (default: all cores)")
    p.add_argument("--set", action="append", default=[], metavar="K=V", help="override a config key")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            _accel.set_threads(args.threads)
        out = args.out or cfg.get("outputs") or "out"
        if not isinstance(out, str):
            raise ConfigError("field 'outputs' must be a path")
        os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInputs as exc:
        print(f"missing inputs: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except AssertionError as exc:
        print(f"runtime assertion: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
