"""Configuration-driven experiment runner with reproducible run archives.

A run archive is a directory holding the config snapshot, a manifest with the
seeds and completed-task ledger, the raw per-realization CSV, the aggregated
sweep points and the power-law fits.  Reruns with an identical config produce
byte-identical CSVs regardless of thread count; interrupted runs resume from
the manifest.
"""

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import __version__, analytic, fitting, kernels, operators, spectral
from . import sdp as sdp_mod
from .ensembles import EnsembleSpec, min_pair_distance, sample_configuration
from .ensembles import close_pair_probability_1d
from .errors import ArchiveError, ConfigError
from .seeding import derive_seed

SCHEMA_VERSION = 1
EXPERIMENTS = ("spectrum", "sweep", "directional-sweep", "sdp-sweep", "pattern",
               "pairs", "product-state", "fit", "validate")

_TOP_KEYS = {
    "schema_version", "experiment", "ensemble", "kernel", "n_list", "realizations",
    "master_seed", "output_dir", "threads", "theta_d_list", "direction", "pairs",
    "pattern", "fit", "sdp", "eig_tol",
}
_ENSEMBLE_KEYS = {"dimension", "shape", "spacing", "wavelength"}
_KERNEL_KEYS = {"variant", "gamma0", "k0", "polarization", "k_c", "gamma_1d",
                "pattern", "axis", "half_angle", "quadrature_order"}
_PAIRS_KEYS = {"d_c_list", "trials"}
_PATTERN_KEYS = {"kind", "dimension", "mode", "m", "k0L", "theta_points", "n_1d", "spacing"}
_FIT_KEYS = {"input", "observables"}
_SDP_KEYS = {"tol", "max_iter", "restarts"}


# ------------------------------------------------------------------ validation

def validate_config(cfg):
    """Return a list of human-readable diagnostics; empty means valid."""
    diags = []
    if not isinstance(cfg, dict):
        return ["config must be a JSON object"]
    for key in cfg:
        if key not in _TOP_KEYS:
            diags.append(f"unknown key {key!r}")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        diags.append(f"schema_version must be {SCHEMA_VERSION}")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        diags.append(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    needs_ensemble = exp in ("spectrum", "sweep", "directional-sweep", "sdp-sweep",
                             "pairs", "product-state")
    if needs_ensemble:
        diags += _validate_ensemble(cfg.get("ensemble"))
        nl = cfg.get("n_list")
        if not isinstance(nl, list) or not nl:
            diags.append("n_list must be a nonempty list")
        elif any(not isinstance(n, int) or n < 1 for n in nl):
            diags.append("n_list entries must be positive integers")
        elif sorted(nl) != nl or len(set(nl)) != len(nl):
            diags.append("n_list must be strictly ascending")
        reals = cfg.get("realizations")
        if not isinstance(reals, int) or reals < 1:
            diags.append("realizations must be a positive integer")
    if exp in ("spectrum", "sweep", "directional-sweep", "sdp-sweep", "product-state"):
        diags += _validate_kernel(cfg.get("kernel"), exp)
    if exp == "directional-sweep":
        tds = cfg.get("theta_d_list")
        if not isinstance(tds, list) or not tds:
            diags.append("directional-sweep needs a nonempty theta_d_list")
        elif any(not (0.0 < float(t) <= math.pi) for t in tds):
            diags.append("theta_d_list entries must lie in (0, pi]")
    if exp == "product-state":
        d = cfg.get("direction")
        if not (isinstance(d, list) and len(d) == 3):
            diags.append("product-state needs a 3-vector direction")
    if exp == "pairs":
        p = cfg.get("pairs")
        if not isinstance(p, dict):
            diags.append("pairs experiment needs a pairs section")
        else:
            diags += [f"pairs: unknown key {k!r}" for k in p if k not in _PAIRS_KEYS]
            if not p.get("d_c_list"):
                diags.append("pairs.d_c_list must be nonempty")
            if not isinstance(p.get("trials", 0), int) or p.get("trials", 0) < 100:
                diags.append("pairs.trials must be an integer >= 100")
    if exp == "pattern":
        p = cfg.get("pattern")
        if not isinstance(p, dict):
            diags.append("pattern experiment needs a pattern section")
        else:
            diags += [f"pattern: unknown key {k!r}" for k in p if k not in _PATTERN_KEYS]
            if p.get("kind") not in ("cloud", "array"):
                diags.append("pattern.kind must be 'cloud' or 'array'")
    if exp == "fit":
        f = cfg.get("fit")
        if not isinstance(f, dict) or "input" not in f:
            diags.append("fit experiment needs fit.input")
        elif f:
            diags += [f"fit: unknown key {k!r}" for k in f if k not in _FIT_KEYS]
    if "sdp" in cfg:
        diags += [f"sdp: unknown key {k!r}" for k in cfg["sdp"] if k not in _SDP_KEYS]
    if "master_seed" in cfg and not isinstance(cfg["master_seed"], int):
        diags.append("master_seed must be an integer")
    if "threads" in cfg:
        t = cfg["threads"]
        if not (t == "auto" or (isinstance(t, int) and t >= 1)):
            diags.append("threads must be a positive integer or 'auto'")
    if exp != "validate" and not cfg.get("output_dir"):
        diags.append("output_dir is required")
    return diags


def _validate_ensemble(e):
    if not isinstance(e, dict):
        return ["ensemble section is required"]
    diags = [f"ensemble: unknown key {k!r}" for k in e if k not in _ENSEMBLE_KEYS]
    if e.get("dimension") not in (1, 2, 3):
        diags.append("ensemble.dimension must be 1, 2 or 3")
    from .ensembles import SHAPES

    if e.get("shape") not in SHAPES:
        diags.append(f"ensemble.shape must be one of {SHAPES}")
    if not isinstance(e.get("spacing"), (int, float)) or e.get("spacing", 0) <= 0:
        diags.append("ensemble.spacing must be positive")
    return diags


def _validate_kernel(k, exp):
    if not isinstance(k, dict):
        return ["kernel section is required"]
    diags = [f"kernel: unknown key {x!r}" for x in k if x not in _KERNEL_KEYS]
    variant = k.get("variant")
    if variant not in ("scalar", "tensor", "cavity", "waveguide", "directional"):
        diags.append(f"kernel.variant invalid: {variant!r}")
        return diags
    if variant == "tensor" and len(k.get("polarization", [])) != 3:
        diags.append("tensor kernel needs a 3-vector polarization")
    if variant in ("cavity", "waveguide") and "k_c" not in k:
        diags.append(f"{variant} kernel needs k_c")
    if variant == "directional":
        if exp != "directional-sweep" and not (0.0 < k.get("half_angle", 0.0) <= math.pi):
            diags.append("directional kernel needs half_angle in (0, pi]")
        if k.get("pattern", "isotropic") not in ("isotropic", "linear"):
            diags.append("directional kernel pattern must be 'isotropic' or 'linear'")
        if k.get("pattern") == "linear" and len(k.get("polarization", [])) != 3:
            diags.append("linear pattern needs a 3-vector polarization")
        if len(k.get("axis", [])) != 3:
            diags.append("directional kernel needs a 3-vector axis")
        if k.get("quadrature_order", 16) < 8:
            diags.append("quadrature_order must be >= 8")
    if exp == "sdp-sweep" and variant == "directional":
        diags.append("sdp-sweep needs a real-symmetric kernel")
    if exp == "product-state" and variant not in ("scalar", "tensor"):
        diags.append("product-state needs a scalar or tensor kernel")
    return diags


# ------------------------------------------------------------------ construction

def ensemble_for(cfg, n):
    e = cfg["ensemble"]
    shape = e["shape"]
    per_axis = shape in ("lattice", "uniform-box", "gaussian")
    return EnsembleSpec(
        dimension=e["dimension"], shape=shape, spacing=float(e["spacing"]),
        n_1d=n if per_axis else None, n_total=None if per_axis else n,
        wavelength=float(e.get("wavelength", 1.0)))


def kernel_for(cfg, half_angle=None):
    k = cfg["kernel"]
    variant = k["variant"]
    g0 = float(k.get("gamma0", 1.0))
    k0 = float(k.get("k0", kernels.TWO_PI))
    if variant == "scalar":
        return kernels.ScalarKernel(g0, k0)
    if variant == "tensor":
        return kernels.TensorKernel(np.asarray(k["polarization"], dtype=float), g0, k0)
    if variant == "cavity":
        return kernels.CavityKernel(float(k["k_c"]), float(k.get("gamma_1d", 1.0)))
    if variant == "waveguide":
        return kernels.WaveguideKernel(float(k["k_c"]), float(k.get("gamma_1d", 1.0)))
    pattern = kernels.DipolePattern(
        k.get("pattern", "isotropic"),
        np.asarray(k["polarization"], dtype=float) if k.get("pattern") == "linear" else None)
    return kernels.DirectionalKernel(
        pattern, np.asarray(k["axis"], dtype=float),
        float(half_angle if half_angle is not None else k["half_angle"]),
        int(k.get("quadrature_order", 16)), g0, k0)


def pick_operator(config, kernel):
    """Fastest exact representation for the spectral observables."""
    n = config.n_atoms
    if isinstance(kernel, kernels.ScalarKernel):
        if n <= spectral.DENSE_EIG_MAX:
            return operators.DenseOperator(kernels.build_matrix(config, kernel))
        rmax = float(np.linalg.norm(config.positions, axis=1).max())
        if operators.factor_column_count(kernel.k0 * rmax) < 0.6 * n or n > kernels.DENSE_LIMIT:
            return operators.ScalarFactorOperator(config.positions, kernel.gamma0, kernel.k0)
        return operators.DenseOperator(kernels.build_matrix(config, kernel))
    if n <= kernels.DENSE_LIMIT:
        return operators.DenseOperator(kernels.build_matrix(config, kernel))
    return operators.make_operator(config, kernel)


def directional_gamma_max(positions, kernel, rel_tol=1e-8, max_escalations=3):
    """Largest eigenvalue of the directional matrix, order-escalated.

    half_angle = pi reduces exactly to the free-space kernel.  Otherwise the
    eigenvalue is computed from the quadrature Gram factor (through the K x K
    cross-Gram when that side is smaller) and accepted once a 1.5x order
    refinement moves it by less than rel_tol relatively.
    """
    n = positions.shape[0]
    if kernel.half_angle >= math.pi - 1e-12:
        if kernel.pattern.kind == "isotropic":
            g = kernels.scalar_entries(positions, kernel.gamma0, kernel.k0)
        else:
            g = kernels.tensor_entries(positions, kernel.pattern.axis, kernel.gamma0, kernel.k0)
        return spectral.principal_eigenpair(
            kernels.DissipativeMatrix(g, "real-symmetric", kernel.gamma0, kernel.k0)).value

    def top_eig(np_, na_):
        A = kernels.directional_factor(positions, kernel, np_, na_)
        if A.shape[1] <= max(n, 2048):
            gram = A.conj().T @ A
            return float(np.linalg.eigvalsh(gram)[-1])
        mat = kernels.DissipativeMatrix(A @ A.conj().T, "complex-hermitian",
                                        kernel.gamma0, kernel.k0)
        return spectral.principal_eigenpair(mat).value

    n_pol, n_az = kernels._cap_orders(kernel, positions)
    val = top_eig(n_pol, n_az)
    from .errors import QuadratureFailure

    for _ in range(max_escalations):
        n_pol = int(math.ceil(1.5 * n_pol))
        n_az = int(math.ceil(1.5 * n_az))
        val2 = top_eig(n_pol, n_az)
        if abs(val2 - val) <= rel_tol * max(abs(val2), 1e-300):
            return val2
        val = val2
    raise QuadratureFailure("directional eigenvalue did not converge under order escalation")


# ------------------------------------------------------------------ tasks

def enumerate_tasks(cfg):
    exp = cfg["experiment"]
    if exp in ("spectrum", "sweep", "sdp-sweep", "product-state"):
        return [(n, r) for n in cfg["n_list"] for r in range(cfg["realizations"])]
    if exp == "directional-sweep":
        return [(ti, n, r) for ti in range(len(cfg["theta_d_list"]))
                for n in cfg["n_list"] for r in range(cfg["realizations"])]
    if exp == "pairs":
        return [(i,) for i in range(len(cfg["pairs"]["d_c_list"]))]
    return [(0,)]  # pattern, fit: single task


def run_task(cfg, task):
    """Compute the raw CSV row(s) for one task.  Pure given (cfg, task)."""
    exp = cfg["experiment"]
    seed_master = cfg.get("master_seed", 0)
    if exp in ("spectrum", "sweep", "sdp-sweep", "product-state"):
        n, r = task
        seed = derive_seed(seed_master, n, r)
        config = sample_configuration(ensemble_for(cfg, n), seed)
        kernel = kernel_for(cfg)
        g0 = kernels.kernel_gamma0(kernel)
        d = cfg["ensemble"]["spacing"]
        if exp == "sdp-sweep":
            matrix = kernels.build_matrix(config, kernel)
            opts = cfg.get("sdp", {})
            res = sdp_mod.solve_sdp(matrix, tol=float(opts.get("tol", 1e-9)),
                                    max_iter=int(opts.get("max_iter", 10000)),
                                    restarts=int(opts.get("restarts", 2)), seed=seed)
            monotone = bool(np.all(np.diff(res.objective_history) >= 0.0))
            return [{"realization": r, "seed": seed, "n": config.n_atoms, "d_over_lambda": d,
                     "r_sdp": res.value / g0, "sandwich_lo": res.sandwich[0] / g0,
                     "sandwich_hi": res.sandwich[1] / g0, "restarts": res.restarts_used,
                     "iterations": res.iterations, "converged": int(res.converged),
                     "monotone": int(monotone)}]
        if exp == "product-state":
            op = pick_operator(config, kernel)
            rate = spectral.product_state_rate_from_operator(
                op, config.positions, kernel.k0, kernel.gamma0, cfg["direction"])
            return [{"realization": r, "seed": seed, "n": config.n_atoms, "d_over_lambda": d,
                     "r_psi": rate / g0}]
        op = pick_operator(config, kernel)
        tol = float(cfg.get("eig_tol", 1e-10))
        res = spectral.spectral_result(op, gamma0=g0, tol=tol)
        return [{"realization": r, "seed": seed, "n": config.n_atoms, "d_over_lambda": d,
                 "kernel": kernels.kernel_tag(kernel), "gamma_max": res.gamma_max / g0,
                 "l1_sq": res.l1_sq, "lower": res.lower_bound / g0,
                 "upper": res.upper_bound / g0, "residual": res.residual,
                 "iterations": res.iterations}]
    if exp == "directional-sweep":
        ti, n, r = task
        theta_d = float(cfg["theta_d_list"][ti])
        seed = derive_seed(seed_master, n, r)
        config = sample_configuration(ensemble_for(cfg, n), seed)
        kernel = kernel_for(cfg, half_angle=theta_d)
        val = directional_gamma_max(config.positions, kernel)
        return [{"theta_index": ti, "theta_d": theta_d, "realization": r, "seed": seed,
                 "n": config.n_atoms, "d_over_lambda": cfg["ensemble"]["spacing"],
                 "gamma_max_na": val / kernel.gamma0}]
    if exp == "pairs":
        (i,) = task
        d_c = float(cfg["pairs"]["d_c_list"][i])
        trials = int(cfg["pairs"]["trials"])
        n = cfg["n_list"][0]
        spec = ensemble_for(cfg, n)
        from .ensembles import close_pair_probability

        p, se = close_pair_probability(spec, d_c, trials, seed=derive_seed(seed_master, i))
        row = {"index": i, "d_c": d_c, "trials": trials, "p_mc": p, "stderr": se}
        if spec.dimension == 1 and spec.shape in ("uniform-line", "uniform-box"):
            row["p_exact_1d"] = close_pair_probability_1d(spec.n_atoms, d_c, spec.length)
        return [row]
    if exp == "pattern":
        return _pattern_rows(cfg)
    if exp == "fit":
        return []
    raise ConfigError(f"experiment {exp!r} cannot be run")


def _pattern_rows(cfg):
    p = cfg["pattern"]
    npts = int(p.get("theta_points", 721))
    thetas = np.linspace(0.0, math.pi, npts)
    rows = []
    if p["kind"] == "cloud":
        dim = int(p["dimension"])
        k0L = float(p["k0L"])
        mode = int(p.get("mode", 0))
        mu = analytic.cloud_emission_pattern(dim, mode, k0L, thetas, m=p.get("m"))
        approx = analytic.cloud_emission_pattern_approx(k0L, thetas) if dim == 2 else None
        for i, th in enumerate(thetas):
            row = {"theta": float(th), "phi": 0.0, "mu": float(mu[i])}
            if approx is not None:
                row["mu_approx"] = float(approx[i])
            rows.append(row)
    else:
        dim = int(p["dimension"])
        n1d = int(p["n_1d"])
        spacing = float(p["spacing"])
        mu = analytic.array_emission_pattern(dim, n1d, spacing, thetas, 0.0)
        for i, th in enumerate(thetas):
            rows.append({"theta": float(th), "phi": 0.0, "mu": float(mu[i])})
    return rows


# ------------------------------------------------------------------ archive

def _format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_format_value(row.get(h, "")) for h in header])


def _config_digest(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


class RunArchive:
    def __init__(self, outdir):
        self.dir = Path(outdir)

    @property
    def manifest_path(self):
        return self.dir / "manifest.json"

    def read_manifest(self):
        try:
            with open(self.manifest_path) as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None
        except json.JSONDecodeError as exc:
            raise ArchiveError(f"corrupt manifest: {exc}") from exc

    def write_manifest(self, manifest):
        tmp = self.manifest_path.with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self.manifest_path)


_RAW_HEADERS = {
    "spectrum": ["realization", "seed", "n", "d_over_lambda", "kernel", "gamma_max",
                 "l1_sq", "lower", "upper", "residual", "iterations"],
    "sweep": ["realization", "seed", "n", "d_over_lambda", "kernel", "gamma_max",
              "l1_sq", "lower", "upper", "residual", "iterations"],
    "sdp-sweep": ["realization", "seed", "n", "d_over_lambda", "r_sdp", "sandwich_lo",
                  "sandwich_hi", "restarts", "iterations", "converged", "monotone"],
    "product-state": ["realization", "seed", "n", "d_over_lambda", "r_psi"],
    "directional-sweep": ["theta_index", "theta_d", "realization", "seed", "n",
                          "d_over_lambda", "gamma_max_na"],
    "pairs": ["index", "d_c", "trials", "p_mc", "stderr", "p_exact_1d"],
    "pattern": ["theta", "phi", "mu", "mu_approx"],
    "fit": ["observable"],
}

_FIT_OBSERVABLES = {
    "sweep": ["gamma_max", "l1_sq", "lower", "upper"],
    "sdp-sweep": ["r_sdp"],
    "product-state": ["r_psi"],
}


def run(cfg, resume=False, _stop_after=None):
    """Execute a configured experiment and persist its archive.

    Returns the archive directory path.  Raises ConfigError on invalid
    configuration and ArchiveError on resume inconsistencies.
    """
    diags = validate_config(cfg)
    if diags:
        raise ConfigError("; ".join(diags))
    exp = cfg["experiment"]
    if exp == "validate":
        return None
    arch = RunArchive(cfg["output_dir"])
    arch.dir.mkdir(parents=True, exist_ok=True)
    digest = _config_digest(cfg)
    manifest = arch.read_manifest()
    tasks = enumerate_tasks(cfg)
    done_rows = {}
    if resume:
        if manifest is None:
            raise ArchiveError("nothing to resume: no manifest in output_dir")
        if manifest.get("config_sha256") != digest:
            raise ArchiveError("resume refused: config differs from the archived run")
        done = {tuple(t) for t in manifest.get("completed", [])}
        done_rows = _read_raw_rows(arch.dir / "raw.csv", exp, done, cfg)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "experiment": exp,
        "master_seed": cfg.get("master_seed", 0),
        "config_sha256": digest,
        "tasks_total": len(tasks),
        "completed": sorted(done_rows),
        "complete": False,
    }
    with open(arch.dir / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    arch.write_manifest(manifest)

    pending = [t for t in tasks if t not in done_rows]
    if _stop_after is not None:
        pending = pending[:_stop_after]
    threads = cfg.get("threads", 1)
    if threads == "auto":
        threads = os.cpu_count() or 1
    raw_path = arch.dir / "raw.csv"
    header = _RAW_HEADERS[exp]
    # heal any rows written after the last manifest update, then append
    kept = [row for t in sorted(done_rows) for row in done_rows[t]]
    _write_csv(raw_path, header, kept)
    append = open(raw_path, "a", newline="")
    writer = csv.writer(append, lineterminator="\n")

    def record(task, rows):
        done_rows[task] = rows
        for row in rows:
            writer.writerow([_format_value(row.get(h, "")) for h in header])
        append.flush()
        manifest["completed"] = sorted(done_rows)
        arch.write_manifest(manifest)

    try:
        if threads > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                futures = {pool.submit(run_task, cfg, t): t for t in pending}
                for fut in as_completed(futures):
                    record(futures[fut], fut.result())
        else:
            for t in pending:
                record(t, run_task(cfg, t))
    finally:
        append.close()

    if _stop_after is not None and len(done_rows) < len(tasks):
        return arch.dir  # intentionally partial

    # deterministic rewrite: rows in task order regardless of scheduling
    ordered = [row for t in sorted(done_rows) for row in done_rows[t]]
    _write_csv(raw_path, header, ordered)
    _finalize(cfg, arch, ordered)
    manifest["completed"] = sorted(done_rows)
    manifest["complete"] = True
    arch.write_manifest(manifest)
    return arch.dir


def _read_raw_rows(path, exp, done, cfg):
    """Recover completed rows from a partial raw.csv keyed by task."""
    if not path.exists():
        if done:
            raise ArchiveError("manifest lists completed tasks but raw.csv is missing")
        return {}
    seed_to_task = {}
    if exp in ("spectrum", "sweep", "sdp-sweep", "product-state", "directional-sweep"):
        ms = cfg.get("master_seed", 0)
        seed_to_task = {derive_seed(ms, n, r): (n, r)
                        for n in cfg["n_list"] for r in range(cfg["realizations"])}
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = _task_key_of_row(exp, row, seed_to_task)
            rows.setdefault(key, []).append({k: _parse(v) for k, v in row.items()})
    missing = done - set(rows)
    if missing:
        raise ArchiveError(f"raw.csv lacks rows for completed tasks {sorted(missing)[:3]}...")
    return {k: v for k, v in rows.items() if k in done}


def _task_key_of_row(exp, row, seed_to_task):
    if exp in ("spectrum", "sweep", "sdp-sweep", "product-state"):
        return seed_to_task[int(row["seed"])]
    if exp == "directional-sweep":
        return (int(row["theta_index"]),) + seed_to_task[int(row["seed"])]
    if exp == "pairs":
        return (int(row["index"]),)
    return (0,)


def _parse(v):
    try:
        return int(v)
    except (TypeError, ValueError):
        try:
            return float(v)
        except (TypeError, ValueError):
            return v


def _finalize(cfg, arch, rows):
    exp = cfg["experiment"]
    if exp == "fit":
        _finalize_fit(cfg, arch)
        return
    observables = _FIT_OBSERVABLES.get(exp)
    if exp == "directional-sweep":
        _finalize_directional(cfg, arch, rows)
        return
    if observables is None:
        return
    by_n = {}
    for row in rows:
        by_n.setdefault(int(row["n"]), []).append(row)
    agg_rows, fit_points = [], {obs: [] for obs in observables}
    for n in sorted(by_n):
        for obs in observables:
            vals = np.array([float(r[obs]) for r in by_n[n]])
            pt = fitting.average_over_realizations(n, vals)
            agg_rows.append({"n": n, "observable": obs, "mean": pt.mean,
                             "std": pt.std, "realizations": pt.realizations})
            fit_points[obs].append(pt)
    _write_csv(arch.dir / "aggregated.csv",
               ["n", "observable", "mean", "std", "realizations"], agg_rows)
    fit_rows = []
    for obs in observables:
        if len(fit_points[obs]) >= 3 and all(p.mean > 0 for p in fit_points[obs]):
            fr = fitting.fit_power_law(fit_points[obs])
            fit_rows.append(_fit_row(cfg, obs, fr))
    if fit_rows:
        _write_csv(arch.dir / "fits.csv",
                   ["observable", "kernel", "d_over_lambda", "theta_d", "alpha",
                    "sigma_alpha", "beta", "r_squared"], fit_rows)


def _fit_row(cfg, obs, fr, theta_d=""):
    return {"observable": obs, "kernel": cfg.get("kernel", {}).get("variant", ""),
            "d_over_lambda": cfg.get("ensemble", {}).get("spacing", ""),
            "theta_d": theta_d, "alpha": fr.alpha, "sigma_alpha": fr.sigma_alpha,
            "beta": fr.beta, "r_squared": fr.r_squared}


def _finalize_directional(cfg, arch, rows):
    agg_rows, fit_rows = [], []
    by_key = {}
    for row in rows:
        by_key.setdefault((float(row["theta_d"]), int(row["n"])), []).append(
            float(row["gamma_max_na"]))
    thetas = sorted({k[0] for k in by_key})
    for td in thetas:
        pts = []
        for (t, n), vals in sorted(by_key.items()):
            if t != td:
                continue
            pt = fitting.average_over_realizations(n, np.array(vals))
            pts.append(pt)
            agg_rows.append({"theta_d": td, "n": n, "observable": "gamma_max_na",
                             "mean": pt.mean, "std": pt.std,
                             "realizations": pt.realizations})
        if len(pts) >= 3:
            fr = fitting.fit_power_law(pts)
            fit_rows.append(_fit_row(cfg, "gamma_max_na", fr, theta_d=td))
    _write_csv(arch.dir / "aggregated.csv",
               ["theta_d", "n", "observable", "mean", "std", "realizations"], agg_rows)
    if fit_rows:
        _write_csv(arch.dir / "fits.csv",
                   ["observable", "kernel", "d_over_lambda", "theta_d", "alpha",
                    "sigma_alpha", "beta", "r_squared"], fit_rows)


def _finalize_fit(cfg, arch):
    src = Path(cfg["fit"]["input"])
    if not src.exists():
        raise ConfigError(f"fit.input {src} does not exist")
    wanted = cfg["fit"].get("observables")
    by_obs = {}
    with open(src, newline="") as fh:
        for row in csv.DictReader(fh):
            obs = row.get("observable", "value")
            if wanted and obs not in wanted:
                continue
            by_obs.setdefault(obs, []).append(fitting.SweepPoint(
                int(row["n"]), float(row["mean"]), float(row["std"]),
                int(row["realizations"])))
    fit_rows = []
    for obs, pts in sorted(by_obs.items()):
        if len(pts) >= 3:
            fr = fitting.fit_power_law(pts)
            fit_rows.append(_fit_row(cfg, obs, fr))
    _write_csv(arch.dir / "fits.csv",
               ["observable", "kernel", "d_over_lambda", "theta_d", "alpha",
                "sigma_alpha", "beta", "r_squared"], fit_rows)
