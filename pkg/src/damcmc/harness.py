"""Run orchestration and diagnostics: pilot -> main run -> trace/metadata
artifacts on disk, effective-sample-size estimation, and acceptance-rate
summaries."""

from __future__ import annotations

import copy
import math
import time
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .kdtree import KdTree, TreeStats, save_entries
from .kernels import (
    MixtureSchedule,
    PilotResult,
    ProposalSpec,
    Trace,
    pilot_run,
    run_da_mh,
    run_da_psmmh,
)
from .surrogate import SurrogateConfig, merge_radius, save_whitening
from . import models

__all__ = [
    "RunConfig",
    "Diagnostics",
    "ess",
    "multi_ess",
    "summarize",
    "run_experiment",
    "sweep",
    "parse_config",
    "format_config",
    "read_config_file",
]

SAMPLERS = ("mh", "psmmh", "da-mh", "da-psmmh")


@dataclass
class RunConfig:
    """Flat description of one experiment; every field is echoed verbatim
    into the run metadata."""

    model: str = "ar-d1"                 # lv | ar-d1 | ar-d2
    dataset: str = ""                    # CSV path; empty = simulate from model id
    sampler: str = "da-mh"               # mh | psmmh | da-mh | da-psmmh
    beta: float = 0.05
    xi: float = 1.0
    c: float = 0.001                     # adaptation rate; inf = never adapt
    k: int = 5
    b: int = 10
    epsilon: float = float("nan")        # explicit merge radius, or...
    expected_n: int = 0                  # ...calibrate from (expected_n, e_target)
    e_target: float = 0.5
    m: int = 200                         # particles (psmmh samplers only)
    n_iters: int = 10000
    max_expensive: int = 0               # 0 = unlimited
    budget_seconds: float = 0.0          # 0 = no wall-clock budget
    n_pilot: int = 1000
    pilot_scale: float = 0.01            # variance of the pre-pilot proposal
    lam: float = 0.0                     # V_fixed scaling; 0 = model default
    truncate_obs: int = 0                # use only the first N observations
    adapt_mode: str = "reciprocal"       # reciprocal | every-other
    data_seed: int = 0                   # seed for simulated datasets
    seed: int = -1                       # chain seed; mandatory for `run`
    out: str = "runs/out"

    def validate(self) -> None:
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.sampler in ("psmmh", "da-psmmh") and self.m < 1:
            raise ValueError("particle count m must be >= 1 for pseudo-marginal samplers")
        if self.sampler in ("da-mh", "da-psmmh") and not (0.0 < self.beta < 1.0):
            raise ValueError("beta must lie in (0, 1) for delayed-acceptance samplers")
        if math.isnan(self.epsilon) and self.expected_n <= 0:
            raise ValueError("give either epsilon or expected_n for the merge radius")
        if self.seed < 0:
            raise ValueError("a non-negative seed is required")


_BOOL = {"true": True, "false": False}


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse flat ``key = value`` lines (# comments, no nesting)."""
    cfg = base if base is not None else RunConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        t = types[key]
        if t is bool:
            setattr(cfg, key, _BOOL[value.lower()])
        elif t is float:
            setattr(cfg, key, float(value))
        elif t is int:
            setattr(cfg, key, int(value))
        else:
            setattr(cfg, key, value)
    return cfg


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def read_config_file(path, base: RunConfig | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), base)


# ----------------------------------------------------------------------
# diagnostics

def ess(chain: np.ndarray) -> float:
    """Effective sample size ``n / (1 + 2 sum rho_t)`` with autocorrelations
    truncated by Geyer's initial-positive-sequence rule (sum consecutive
    pairs while their sum stays positive)."""
    x = np.asarray(chain, dtype=float)
    if x.ndim != 1:
        raise ValueError("ess expects a scalar series")
    n = len(x)
    if n < 100:
        raise ValueError(f"chain too short for ESS ({n} < 100)")
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        warnings.warn("constant chain: reporting ESS = 0")
        return 0.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    tau = -1.0
    for j in range(0, n - 1, 2):
        gamma = rho[j] + rho[j + 1]
        if gamma <= 0.0:
            break
        tau += 2.0 * gamma
    tau = max(tau, 1e-12)
    return float(n / tau)


def multi_ess(thetas: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-component ESS and their minimum (the mESS efficiency metric)."""
    per = np.array([ess(thetas[:, j]) for j in range(thetas.shape[1])])
    return per, float(per.min())


@dataclass
class Diagnostics:
    """Summary of one run; trace-derived fields are pure functions of the
    trace file."""

    n_iters: int
    ess_per_param: np.ndarray
    mess: float
    alpha1: float | None
    alpha2: float | None
    overall_acceptance: float
    expensive_evals: int
    tree_stats: TreeStats | None = None
    wall_time: float | None = None

    def to_mapping(self) -> dict:
        out = {
            "n_iters": self.n_iters,
            "mess": self.mess,
            "alpha1": "" if self.alpha1 is None else self.alpha1,
            "alpha2": "" if self.alpha2 is None else self.alpha2,
            "overall_acceptance": self.overall_acceptance,
            "expensive_evals": self.expensive_evals,
        }
        for j, v in enumerate(self.ess_per_param):
            out[f"ess_{j + 1}"] = v
        if self.tree_stats is not None:
            ts = self.tree_stats
            out.update(
                tree_entries=ts.entry_count,
                tree_leaves=ts.leaf_count,
                tree_mean_depth=ts.mean_leaf_depth,
                tree_min_depth=ts.min_leaf_depth,
                tree_max_depth=ts.max_leaf_depth,
                tree_depth99_lo=ts.depth_range_99[0],
                tree_depth99_hi=ts.depth_range_99[1],
            )
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out


def summarize(trace: Trace, tree: KdTree | None = None, wall_time: float | None = None) -> Diagnostics:
    """Diagnostics from a trace: per-parameter ESS, mESS, the Stage-1 rate
    (passes / DA-branch iterations), the Stage-2 rate (accepts / Stage-2
    attempts), overall acceptance, and the expensive-evaluation count.
    Traces too short for the autocorrelation machinery get NaN ESS fields."""
    n = len(trace)
    d = trace.thetas.shape[1] if n else 0
    if n >= 100:
        per, mess = multi_ess(trace.thetas)
    else:
        per, mess = np.full(d, np.nan), float("nan")
    da = trace.branch == 1
    n_da = int(da.sum())
    stage2 = trace.stage == 2
    n_stage2 = int(stage2.sum())
    alpha1 = (n_stage2 / n_da) if n_da > 0 else None
    alpha2 = (float(trace.accepted[stage2].mean())) if n_stage2 > 0 else None
    return Diagnostics(
        n_iters=n,
        ess_per_param=per,
        mess=mess,
        alpha1=alpha1,
        alpha2=alpha2,
        overall_acceptance=float(trace.accepted.mean()) if n else 0.0,
        expensive_evals=int(trace.i_n[-1]) if n else 0,
        tree_stats=tree.tree_stats() if tree is not None and len(tree) else None,
        wall_time=wall_time,
    )


def write_key_value(path, mapping: dict) -> None:
    with open(path, "w") as fh:
        for key, value in mapping.items():
            fh.write(f"{key} = {value!r}\n" if isinstance(value, float) else f"{key} = {value}\n")


# ----------------------------------------------------------------------
# orchestration

def _load_dataset(cfg: RunConfig) -> models.Dataset:
    if cfg.dataset:
        ds = models.load_dataset(cfg.dataset)
    else:
        ds = models.simulate_dataset(cfg.model, cfg.data_seed)
    if cfg.truncate_obs > 0:
        ds = ds.truncate(cfg.truncate_obs)
    return ds


def _make_target(cfg: RunConfig, dataset):
    if cfg.model == "lv":
        target = models.make_lv_psm_target(dataset, m=cfg.m)
        stochastic = True
        lam = models.LV_LAMBDA
        theta0 = models.lv_true_theta()
    elif cfg.model in ("ar-d1", "ar-d2"):
        target = models.make_ar_lna_target(dataset)
        stochastic = False
        lam = models.AR_LAMBDA
        theta0 = models.ar_true_theta()
    else:
        raise ValueError(f"unknown model {cfg.model!r}")
    return target, stochastic, lam, theta0


def run_experiment(cfg: RunConfig, out_dir=None) -> dict:
    """Pilot, main run, and artifacts: trace.csv, meta.txt, diagnostics.txt,
    tree.csv, whitening.csv under the output directory.  Returns the paths
    plus the in-memory trace and diagnostics."""
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.monotonic()

    dataset = _load_dataset(cfg)
    target, stochastic, default_lam, theta0 = _make_target(cfg, dataset)
    wants_stochastic = cfg.sampler in ("psmmh", "da-psmmh")
    if wants_stochastic != stochastic:
        raise ValueError(
            f"sampler {cfg.sampler!r} does not match model {cfg.model!r} "
            f"({'stochastic' if stochastic else 'exact'} target)"
        )
    lam = cfg.lam if cfg.lam > 0 else default_lam

    seq = np.random.SeedSequence(cfg.seed)
    pilot_seed, main_seed, tree_seed = (s.generate_state(1)[0] for s in seq.spawn(3))
    pilot_rng = np.random.default_rng(pilot_seed)
    d = target.dim
    pilot = pilot_run(
        target,
        ProposalSpec(cfg.pilot_scale * np.eye(d)),
        cfg.n_pilot,
        pilot_rng,
        theta0,
        stochastic=stochastic,
        lam=lam,
        b=cfg.b,
        tree_seed=int(tree_seed),
    )

    epsilon = cfg.epsilon
    if math.isnan(epsilon):
        epsilon = merge_radius(cfg.expected_n, d, cfg.e_target)
    surrogate_cfg = SurrogateConfig(k=cfg.k, epsilon=epsilon)
    beta = cfg.beta if cfg.sampler.startswith("da-") else 1.0
    schedule = MixtureSchedule(beta=beta, c=cfg.c, mode=cfg.adapt_mode)
    spec = ProposalSpec(pilot.v_fixed, xi=cfg.xi)
    runner = run_da_psmmh if stochastic else run_da_mh
    deadline = (t_start + cfg.budget_seconds) if cfg.budget_seconds > 0 else None
    trace = runner(
        target,
        pilot.tree,
        pilot.transform,
        spec,
        schedule,
        surrogate_cfg,
        cfg.n_iters,
        np.random.default_rng(main_seed),
        pilot.theta_last,
        pilot.log_last,
        max_expensive=cfg.max_expensive or None,
        deadline=deadline,
    )
    wall = time.monotonic() - t_start
    diag = summarize(trace, tree=pilot.tree, wall_time=wall)

    paths = {
        "trace": out / "trace.csv",
        "meta": out / "meta.txt",
        "diagnostics": out / "diagnostics.txt",
        "tree": out / "tree.csv",
        "whitening": out / "whitening.csv",
    }
    trace.write_csv(paths["trace"])
    meta = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
    meta.update(
        epsilon_used=epsilon,
        lambda_used=lam,
        pilot_alpha=pilot.alpha_ref,
        d=d,
        n_obs=len(dataset.times),
    )
    write_key_value(paths["meta"], meta)
    write_key_value(paths["diagnostics"], diag.to_mapping())
    save_entries(pilot.tree, paths["tree"])
    save_whitening(pilot.transform, paths["whitening"])
    return {"paths": paths, "trace": trace, "diagnostics": diag, "pilot": pilot}


def sweep(cfg: RunConfig, xi_grid=None, c_grid=None, k_grid=None, b_grid=None, out_dir=None) -> list[dict]:
    """Grid of runs over the tuning parameters; each combination lands in
    its own subdirectory named by the varied values."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    xi_grid = list(xi_grid) if xi_grid else [cfg.xi]
    c_grid = list(c_grid) if c_grid else [cfg.c]
    k_grid = list(k_grid) if k_grid else [cfg.k]
    b_grid = list(b_grid) if b_grid else [cfg.b]
    results = []
    for xi in xi_grid:
        for c in c_grid:
            for k in k_grid:
                for b in b_grid:
                    sub = out / f"xi{xi:g}_c{c:g}_k{k}_b{b}"
                    case = copy.copy(cfg)
                    case.xi, case.c, case.k, case.b = float(xi), float(c), int(k), int(b)
                    case.out = str(sub)
                    results.append(run_experiment(case, sub))
    return results
