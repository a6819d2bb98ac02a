"""Deterministic data generators and Monte-Carlo replication studies.

Randomness runs through a counter-based generator (Philox) keyed by a
documented mixing of the design seed and a stream index: stream ``r`` uses
``SeedSequence(entropy=seed, spawn_key=(r,))``.  Stream 0 generates the
dataset itself; replicate ``r`` of a study uses stream ``r``.  Gaussian
variates are produced by applying the inverse normal CDF to uniforms from
the counter stream, so output depends only on (seed, stream, draw order) and
is byte-identical across runs and across worker counts.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .data import Dataset
from .distributions import HALF_NORMAL_MEAN_COEF
from .errors import CausalSfaError, ConvergenceError, DomainError

KINDS = (
    "cross_section",
    "two_group",
    "did_2x2",
    "staggered",
    "rdd_sharp",
    "rdd_fuzzy",
    "endogenous",
)

# Desk-scale default designs; the CLI exposes these and accepts overrides.
DEFAULTS: dict[str, dict] = {
    "cross_section": dict(
        n=500, beta0=1.0, sigma_v=0.3, sigma_u=0.5, x_coefs=(0.6,)
    ),
    "two_group": dict(
        n=2000, alpha=1.0, tau=0.5, sigma_v=0.3, sigma_u0=0.4, gamma1=0.5, p_treat=0.5
    ),
    "did_2x2": dict(
        n_per_cell=1000,
        beta0=1.0, beta1=0.3, beta2=0.2, beta3=0.5,
        gamma1=0.4, gamma2=-0.2, gamma3=-0.6,
        sigma_u=0.5, sigma_v=0.3,
    ),
    "staggered": dict(
        cohort_periods=(2.0, 4.0, math.inf),
        cohort_sizes=(200, 200, 400),
        n_periods=6,
        sigma_v=0.3, sigma_u=0.4, sigma_unit=0.3, time_trend=0.05,
        tech=(0.4, 0.5, 0.6, 0.6),
        gamma=(0.5, 0.5, 0.5, 0.5),
    ),
    "rdd_sharp": dict(
        n=4000,
        alpha=1.0, beta1=0.8, beta2=0.5, beta3=-0.3, curvature=0.0,
        scale_base=0.5, rho1=0.6, rho2=0.2, rho3=-0.2,
        sigma_v=0.3, cutoff=0.0, z_half_width=1.0,
    ),
    "rdd_fuzzy": dict(
        n=4000,
        alpha=1.0, tau=0.8, slope=0.5, curvature=0.0,
        p_left=0.2, p_right=0.8,
        sigma_v=0.3, cutoff=0.0, z_half_width=1.0,
    ),
    "endogenous": dict(
        n=2000,
        beta0=1.0, beta2=0.7, delta0=0.5, gamma_w=(1.0,),
        sigma_v=0.4, sigma_u=0.6, sigma_eta=1.5, cov_veta=0.5,
    ),
}

_SIZE_KEYS = ("n", "n_per_cell", "n_periods")
_TUPLE_KEYS = ("x_coefs", "cohort_periods", "cohort_sizes", "tech", "gamma", "gamma_w")


@dataclass(frozen=True)
class SimDesign:
    """A named data-generating process with its true parameter values.

    ``params`` overrides entries of the kind's default block; unknown keys
    are rejected.  The merged block is stored, so ``design.params`` always
    holds the complete truth.
    """

    kind: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown design kind {self.kind!r}; known: {', '.join(KINDS)}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise DomainError("seed must be a non-negative integer")
        merged = dict(DEFAULTS[self.kind])
        for key, val in self.params.items():
            if key not in merged:
                raise DomainError(
                    f"unknown parameter {key!r} for design {self.kind!r}; "
                    f"known: {', '.join(sorted(merged))}"
                )
            if key in _TUPLE_KEYS:
                val = tuple(float(v) for v in np.atleast_1d(val))
            elif key in _SIZE_KEYS:
                val = int(val)
            else:
                val = float(val)
            merged[key] = val
        for key in _SIZE_KEYS:
            if key in merged and merged[key] <= 0:
                raise DomainError(f"{key} must be positive")
        for key, val in merged.items():
            vals = val if key in _TUPLE_KEYS else (val,)
            for v in vals:
                if key == "cohort_periods" and math.isinf(v):
                    continue  # inf marks the never-treated cohort
                if not math.isfinite(v):
                    raise DomainError(f"parameter {key!r} must be finite")
        object.__setattr__(self, "params", merged)


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """The package-wide RNG convention: Philox keyed by (seed, stream)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))
    )


def _gaussian(rng: np.random.Generator, size) -> np.ndarray:
    # inverse-CDF sampling keeps the draw a pure function of the uniform stream
    u = rng.random(size)
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    return ndtri(u)


def _half_normal(rng: np.random.Generator, sigma, size) -> np.ndarray:
    return np.abs(np.asarray(sigma) * _gaussian(rng, size))


def generate(design: SimDesign, stream: int = 0) -> Dataset:
    """Draw one dataset from the design, using the given stream index."""
    rng = stream_rng(design.seed, stream)
    p = design.params
    kind = design.kind
    if kind == "cross_section":
        return _gen_cross_section(rng, p)
    if kind == "two_group":
        return _gen_two_group(rng, p)
    if kind == "did_2x2":
        return _gen_did(rng, p)
    if kind == "staggered":
        return _gen_staggered(rng, p)
    if kind == "rdd_sharp":
        return _gen_rdd_sharp(rng, p)
    if kind == "rdd_fuzzy":
        return _gen_rdd_fuzzy(rng, p)
    if kind == "endogenous":
        return _gen_endogenous(rng, p)
    raise DomainError(f"unknown design kind {kind!r}")


def _gen_cross_section(rng, p) -> Dataset:
    n = p["n"]
    coefs = np.asarray(p["x_coefs"])
    X = _gaussian(rng, (n, coefs.size)) if coefs.size else np.empty((n, 0))
    v = p["sigma_v"] * _gaussian(rng, n)
    u = _half_normal(rng, p["sigma_u"], n)
    y = p["beta0"] + X @ coefs + v - u
    cols = {"y": y}
    for j in range(coefs.size):
        cols[f"x{j + 1}"] = X[:, j]
    return Dataset(cols)


def _gen_two_group(rng, p) -> Dataset:
    n = p["n"]
    d = (rng.random(n) < p["p_treat"]).astype(float)
    su = p["sigma_u0"] * np.exp(p["gamma1"] * d)
    v = p["sigma_v"] * _gaussian(rng, n)
    u = _half_normal(rng, su, n)
    y = p["alpha"] + p["tau"] * d + v - u
    return Dataset({"y": y, "d": d})


def _gen_did(rng, p) -> Dataset:
    m = p["n_per_cell"]
    d = np.repeat([0.0, 1.0, 0.0, 1.0], m)
    t = np.repeat([0.0, 0.0, 1.0, 1.0], m)
    n = 4 * m
    scale = p["sigma_u"] * np.exp(p["gamma1"] * d + p["gamma2"] * t + p["gamma3"] * d * t)
    v = p["sigma_v"] * _gaussian(rng, n)
    u = _half_normal(rng, scale, n)
    y = p["beta0"] + p["beta1"] * d + p["beta2"] * t + p["beta3"] * d * t + v - u
    return Dataset({"y": y, "d": d, "t": t})


def _rel_effect(values: tuple, ell: int) -> float:
    # effect profile over relative periods 0, 1, ...; flat beyond the last entry
    if not values:
        return 0.0
    return values[min(ell, len(values) - 1)]


def _gen_staggered(rng, p) -> Dataset:
    periods = p["cohort_periods"]
    sizes = tuple(int(s) for s in p["cohort_sizes"])
    if len(periods) != len(sizes):
        raise DomainError("cohort_periods and cohort_sizes must align")
    T = p["n_periods"]
    units_cohort = np.concatenate(
        [np.full(s, e, dtype=float) for e, s in zip(periods, sizes)]
    )
    N = units_cohort.size
    theta = p["sigma_unit"] * _gaussian(rng, N)
    unit = np.repeat(np.arange(N, dtype=float), T)
    t = np.tile(np.arange(T, dtype=float), N)
    cohort = np.repeat(units_cohort, T)
    rel = t - cohort  # -inf for never treated
    treated = rel >= 0.0
    tech = np.zeros(N * T)
    lscale = np.zeros(N * T)
    idx = np.where(treated)[0]
    for i in idx:
        ell = int(rel[i])
        tech[i] = _rel_effect(p["tech"], ell)
        lscale[i] = _rel_effect(p["gamma"], ell)
    scale = p["sigma_u"] * np.exp(lscale)
    v = p["sigma_v"] * _gaussian(rng, N * T)
    u = _half_normal(rng, scale, N * T)
    y = np.repeat(theta, T) + p["time_trend"] * t + tech + v - u
    return Dataset({"unit": unit, "t": t, "cohort": cohort, "y": y})


def _gen_rdd_sharp(rng, p) -> Dataset:
    n = p["n"]
    c, w = p["cutoff"], p["z_half_width"]
    z = c - w + 2.0 * w * rng.random(n)
    zc = z - c
    d = (z >= c).astype(float)
    scale = p["scale_base"] * np.exp(p["rho1"] * d + p["rho2"] * zc + p["rho3"] * d * zc)
    v = p["sigma_v"] * _gaussian(rng, n)
    u = _half_normal(rng, scale, n) if p["scale_base"] > 0.0 else np.zeros(n)
    y = (
        p["alpha"] + p["beta1"] * d + p["beta2"] * zc + p["beta3"] * d * zc
        + p["curvature"] * zc * zc + v - u
    )
    return Dataset({"y": y, "d": d, "z": z})


def _gen_rdd_fuzzy(rng, p) -> Dataset:
    if p["p_left"] > p["p_right"]:
        raise DomainError("p_left must not exceed p_right (monotone compliance)")
    n = p["n"]
    c, w = p["cutoff"], p["z_half_width"]
    z = c - w + 2.0 * w * rng.random(n)
    zc = z - c
    r = rng.random(n)
    always = r < p["p_left"]
    complier = (r >= p["p_left"]) & (r < p["p_right"])
    d = (always | (complier & (z >= c))).astype(float)
    v = p["sigma_v"] * _gaussian(rng, n)
    y = p["alpha"] + p["slope"] * zc + p["curvature"] * zc * zc + p["tau"] * d + v
    return Dataset({"y": y, "d": d, "z": z})


def _gen_endogenous(rng, p) -> Dataset:
    n = p["n"]
    gw = np.asarray(p["gamma_w"])
    if p["sigma_eta"] ** 2 <= p["cov_veta"] ** 2 / p["sigma_v"] ** 2:
        raise DomainError("cov_veta too large for the (v, eta) covariance to be positive definite")
    W = _gaussian(rng, (n, gw.size))
    z1 = _gaussian(rng, n)
    z2 = _gaussian(rng, n)
    v = p["sigma_v"] * z1
    eta = (p["cov_veta"] / p["sigma_v"]) * z1 + math.sqrt(
        p["sigma_eta"] ** 2 - (p["cov_veta"] / p["sigma_v"]) ** 2
    ) * z2
    u = _half_normal(rng, p["sigma_u"], n)
    x2 = p["delta0"] + W @ gw + eta
    y = p["beta0"] + p["beta2"] * x2 + v - u
    cols = {"y": y, "x1": x2}
    for j in range(gw.size):
        cols[f"w{j + 1}"] = W[:, j]
    return Dataset(cols)


def truth(design: SimDesign) -> dict[str, float]:
    """True values keyed by the estimator output names for this design."""
    p = design.params
    kind = design.kind
    if kind == "cross_section":
        out = {"const": p["beta0"], "sigma_v": p["sigma_v"], "sigma_u": p["sigma_u"]}
        for j, c in enumerate(p["x_coefs"]):
            out[f"x{j + 1}"] = c
        return out
    if kind == "two_group":
        su1 = p["sigma_u0"] * math.exp(p["gamma1"])
        indirect = HALF_NORMAL_MEAN_COEF * (su1 - p["sigma_u0"])
        return {
            "alpha": p["alpha"], "tau": p["tau"], "sigma_v": p["sigma_v"],
            "sigma_u0": p["sigma_u0"], "gamma1": p["gamma1"],
            "direct": p["tau"], "indirect": indirect, "total": p["tau"] - indirect,
            "naive_difference": p["tau"] - indirect,
        }
    if kind == "did_2x2":
        from .did import DidSfaParams, decompose_did, naive_did_plim, two_step_oracle_score_did

        dp = DidSfaParams(
            beta0=p["beta0"], beta1=p["beta1"], beta2=p["beta2"], beta3=p["beta3"],
            gamma1=p["gamma1"], gamma2=p["gamma2"], gamma3=p["gamma3"],
            sigma_u=p["sigma_u"], sigma_v=p["sigma_v"],
        )
        dec = decompose_did(dp)
        out = {
            "beta0": p["beta0"], "beta1": p["beta1"], "beta2": p["beta2"],
            "beta3": p["beta3"], "gamma1": p["gamma1"], "gamma2": p["gamma2"],
            "gamma3": p["gamma3"], "sigma_u": p["sigma_u"], "sigma_v": p["sigma_v"],
            "direct": dec.direct, "indirect": dec.indirect, "total": dec.total,
            "naive_did": naive_did_plim(dp),
            "score_did": two_step_oracle_score_did(dp),
        }
        return out
    if kind == "staggered":
        out = {}
        T = p["n_periods"]
        for e in p["cohort_periods"]:
            if math.isinf(e):
                continue
            e = int(e)
            for t in range(T):
                ell = t - e
                if ell == -1:
                    continue
                if ell < 0:
                    tech, ind = 0.0, 0.0
                else:
                    tech = _rel_effect(p["tech"], ell)
                    ind = HALF_NORMAL_MEAN_COEF * p["sigma_u"] * (
                        math.exp(_rel_effect(p["gamma"], ell)) - 1.0
                    )
                out[f"catt_e{e}_l{ell}"] = tech - ind
                out[f"tech_e{e}_l{ell}"] = tech
                out[f"indirect_e{e}_l{ell}"] = ind
        return out
    if kind == "rdd_sharp":
        indirect = HALF_NORMAL_MEAN_COEF * p["scale_base"] * (math.exp(p["rho1"]) - 1.0)
        out = {
            "const": p["alpha"], "d": p["beta1"], "z": p["beta2"], "d_z": p["beta3"],
            "rho1": p["rho1"], "rho2": p["rho2"], "rho3": p["rho3"],
            "sigma_v": p["sigma_v"],
            "direct": p["beta1"], "indirect": indirect, "total": p["beta1"] - indirect,
            "jump": p["beta1"] - indirect,
        }
        if p["scale_base"] > 0.0:
            out["rho0"] = math.log(p["scale_base"])
        return out
    if kind == "rdd_fuzzy":
        return {
            "wald": p["tau"],
            "outcome_jump": p["tau"] * (p["p_right"] - p["p_left"]),
            "prob_jump": p["p_right"] - p["p_left"],
        }
    if kind == "endogenous":
        return {
            "const": p["beta0"], "x1": p["beta2"],
            "sigma_v": p["sigma_v"], "sigma_u": p["sigma_u"],
        }
    raise DomainError(f"unknown design kind {kind!r}")


# --- estimator registry -----------------------------------------------------

def _est_sfa_mle(data: Dataset) -> dict[str, float]:
    from .sfa import fit_sfa_mle

    return fit_sfa_mle(data, compute_se=False).param_dict()


def _est_sfa_cols(data: Dataset) -> dict[str, float]:
    from .sfa import fit_sfa_cols

    return fit_sfa_cols(data).param_dict()


def _with_decomposition(out: dict, dec) -> dict:
    out["total"] = dec.total
    out["direct"] = dec.direct
    out["indirect"] = dec.indirect
    return out


def _est_two_group(data: Dataset, method: str, compute_se: bool = False) -> dict[str, float]:
    from .random_assignment import fit_two_group

    fit = fit_two_group(data, method=method, compute_se=compute_se)
    return _with_decomposition(fit.param_dict(), fit.decomposition)


def _est_naive_difference(data: Dataset) -> dict[str, float]:
    from .random_assignment import naive_mean_difference

    return {"naive_difference": naive_mean_difference(data)}


def _est_did_sfa(data: Dataset) -> dict[str, float]:
    from .did import fit_did_sfa

    fit = fit_did_sfa(data, compute_se=False)
    return _with_decomposition(fit.param_dict(), fit.decomposition)


def _est_naive_did(data: Dataset) -> dict[str, float]:
    from .did import naive_did

    return {"naive_did": naive_did(data).estimate}


def _est_catt_iw(data: Dataset) -> dict[str, float]:
    from .staggered import CohortPanel, catt_iw

    panel = CohortPanel.from_dataset(data)
    return {
        f"catt_e{int(c.cohort)}_l{int(c.rel_period)}": c.estimate
        for c in catt_iw(panel)
    }


def _est_srd_local_linear(data: Dataset) -> dict[str, float]:
    from .rdd import RddSpec, srd_local_linear

    fit = srd_local_linear(data, RddSpec())
    return {"jump": fit.jump}


def _est_srd_sfa(data: Dataset, method: str) -> dict[str, float]:
    from .rdd import RddSpec, fit_srd_sfa

    fit = fit_srd_sfa(data, RddSpec(), method=method, compute_se=False)
    return _with_decomposition(fit.param_dict(), fit.decomposition)


def _est_frd_wald(data: Dataset) -> dict[str, float]:
    from .rdd import RddSpec, frd_wald

    fit = frd_wald(data, RddSpec())
    return {
        "wald": fit.estimate,
        "outcome_jump": fit.outcome_jump,
        "prob_jump": fit.prob_jump,
    }


def _default_endo_spec(data: Dataset):
    from .endogeneity import EndoSpec

    return EndoSpec(
        exogenous_cols=(),
        endogenous_cols=("x1",),
        instrument_cols=data.instrument_cols(),
    )


def _est_cols_naive_endog(data: Dataset) -> dict[str, float]:
    # deliberately ignores endogeneity; the benchmark the corrections beat
    from .sfa import FrontierSpec, fit_sfa_cols

    return fit_sfa_cols(data, FrontierSpec(input_cols=("x1",))).param_dict()


def _est_c2sls(data: Dataset) -> dict[str, float]:
    from .endogeneity import c2sls_fit

    return c2sls_fit(data, _default_endo_spec(data)).param_dict()


def _est_gmm(data: Dataset) -> dict[str, float]:
    from .endogeneity import gmm_fit

    return gmm_fit(data, _default_endo_spec(data)).param_dict()


def _est_aps_mle(data: Dataset) -> dict[str, float]:
    from .endogeneity import fit_aps_mle

    fit = fit_aps_mle(data, _default_endo_spec(data), compute_se=False)
    return fit.param_dict()


ESTIMATORS: dict[str, callable] = {
    "sfa_mle": _est_sfa_mle,
    "sfa_cols": _est_sfa_cols,
    "two_group_mle": lambda d: _est_two_group(d, "mle"),
    "two_group_cols": lambda d: _est_two_group(d, "cols"),
    "naive_difference": _est_naive_difference,
    "did_sfa": _est_did_sfa,
    "naive_did": _est_naive_did,
    "catt_iw": _est_catt_iw,
    "srd_local_linear": _est_srd_local_linear,
    "srd_sfa_mle": lambda d: _est_srd_sfa(d, "mle"),
    "srd_sfa_nls": lambda d: _est_srd_sfa(d, "nls"),
    "frd_wald": _est_frd_wald,
    "cols_naive_endog": _est_cols_naive_endog,
    "c2sls": _est_c2sls,
    "gmm": _est_gmm,
    "aps_mle": _est_aps_mle,
}


@dataclass
class ParamSummary:
    name: str
    truth: float | None
    mean: float
    sd: float
    mc_se: float
    bias: float | None


@dataclass
class StudyResult:
    """Replication study output: per-parameter estimate vectors and summaries."""

    design: SimDesign
    estimator: str
    reps: int
    estimates: dict[str, np.ndarray]
    truths: dict[str, float]
    n_failures: int
    failure_streams: tuple[int, ...]
    elapsed: float

    def summary(self) -> list[ParamSummary]:
        rows = []
        for name in self.estimates:
            est = self.estimates[name]
            true_val = self.truths.get(name)
            mean = float(est.mean())
            sd = float(est.std(ddof=1)) if est.size > 1 else 0.0
            rows.append(
                ParamSummary(
                    name=name,
                    truth=true_val,
                    mean=mean,
                    sd=sd,
                    mc_se=sd / math.sqrt(est.size) if est.size else float("nan"),
                    bias=None if true_val is None else mean - true_val,
                )
            )
        return rows

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["param", "truth", "mean", "sd", "mc_se", "bias"])
            for row in self.summary():
                writer.writerow(
                    [
                        row.name,
                        "" if row.truth is None else repr(float(row.truth)),
                        repr(float(row.mean)),
                        repr(float(row.sd)),
                        repr(float(row.mc_se)),
                        "" if row.bias is None else repr(float(row.bias)),
                    ]
                )


def map_replicates(fn, reps: int, n_workers: int = 1) -> list:
    """Run ``fn(stream)`` for streams 1..reps, aggregated in stream order.

    The stream index fully determines each replicate's randomness, so the
    result does not depend on ``n_workers``.
    """
    streams = list(range(1, reps + 1))
    if n_workers <= 1:
        return [fn(s) for s in streams]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, streams))


def replicate_study(
    design: SimDesign,
    reps: int,
    estimator: str,
    *,
    n_workers: int = 1,
) -> StudyResult:
    """Simulate-and-fit ``reps`` times and summarize parameter recovery.

    Failed replicates (estimator raising a package error) are counted and
    dropped; more than 20 percent failures raises :class:`ConvergenceError`.
    """
    if estimator not in ESTIMATORS:
        raise DomainError(
            f"unknown estimator {estimator!r}; known: {', '.join(sorted(ESTIMATORS))}"
        )
    if reps < 1:
        raise DomainError("reps must be >= 1")
    fit_fn = ESTIMATORS[estimator]
    start = time.perf_counter()

    def one(stream: int):
        data = generate(design, stream=stream)
        try:
            return stream, fit_fn(data)
        except (CausalSfaError, np.linalg.LinAlgError) as exc:
            return stream, exc

    results = map_replicates(one, reps, n_workers)
    estimates: dict[str, list[float]] = {}
    failures: list[int] = []
    for stream, res in results:
        if isinstance(res, Exception):
            failures.append(stream)
            continue
        for name, val in res.items():
            estimates.setdefault(name, []).append(float(val))
    if len(failures) > 0.2 * reps:
        raise ConvergenceError(
            f"{len(failures)} of {reps} replicates failed (> 20%); "
            f"first failing streams: {failures[:5]}"
        )
    return StudyResult(
        design=design,
        estimator=estimator,
        reps=reps,
        estimates={k: np.asarray(v) for k, v in estimates.items()},
        truths=truth(design),
        n_failures=len(failures),
        failure_streams=tuple(failures),
        elapsed=time.perf_counter() - start,
    )
