"""Event-study estimation under staggered treatment adoption.

Units adopt treatment at different periods (their cohort ``e``); never-treated
units carry ``cohort = inf``.  The cohort-level effect at relative period
``l`` is estimated by the interaction-weighted contrast

    delta(e, l) = mean_{i in cohort e} [Y_{i, e+l} - Y_{i, e-1}]
                - mean_{i in control} [Y_{i, e+l} - Y_{i, e-1}],

with relative period -1 as the baseline.  When treatment also moves the
inefficiency scale, delta(e, l) converges to the frontier effect minus the
mean-inefficiency shift, i.e. the total rather than the direct effect; the
``confounding_audit`` quantifies that gap against a simulation design.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .distributions import HALF_NORMAL_MEAN_COEF
from .errors import DomainError, IdentificationError
from .simulate import SimDesign, _rel_effect, generate, map_replicates

CONTROL_NEVER_TREATED = "never_treated"
CONTROL_LAST_TREATED = "last_treated"


@dataclass(frozen=True)
class CohortPanel:
    """Balanced view of a long panel: one row per unit, one column per period.

    Built from a dataset with columns ``unit``, ``t``, ``y``, ``cohort``.
    Periods must be consecutive integers; every unit must be observed once
    per period.  Treatment is absorbing by construction: a unit is treated
    from its cohort period onward.
    """

    outcomes: np.ndarray          # (n_units, n_periods)
    cohorts: np.ndarray           # (n_units,), inf = never treated
    periods: np.ndarray           # (n_periods,), consecutive integers

    @classmethod
    def from_dataset(cls, data: Dataset) -> "CohortPanel":
        data.require("unit", "t", "y", "cohort")
        unit = data.col("unit")
        t = data.col("t")
        y = data.col("y")
        cohort = data.col("cohort")
        if not np.all(t == np.round(t)):
            raise DomainError("column 't' must hold integer periods")
        finite_cohort = cohort[np.isfinite(cohort)]
        if finite_cohort.size and not np.all(finite_cohort == np.round(finite_cohort)):
            raise DomainError("column 'cohort' must hold integer periods or inf")
        units, unit_idx = np.unique(unit, return_inverse=True)
        periods, period_idx = np.unique(t, return_inverse=True)
        p_int = periods.astype(int)
        if not np.array_equal(p_int, np.arange(p_int[0], p_int[0] + p_int.size)):
            raise DomainError("periods must be consecutive integers")
        n_units, n_periods = units.size, periods.size
        if data.n != n_units * n_periods:
            raise IdentificationError("panel is not balanced: unit/period grid has gaps")
        seen = np.zeros((n_units, n_periods), dtype=bool)
        outcomes = np.zeros((n_units, n_periods))
        outcomes[unit_idx, period_idx] = y
        seen[unit_idx, period_idx] = True
        if not seen.all():
            raise IdentificationError("panel is not balanced: duplicate or missing cells")
        cohorts = np.full(n_units, np.inf)
        first = np.full(n_units, -1)
        for i, c in zip(unit_idx, cohort):
            if first[i] == -1:
                cohorts[i] = c
            elif cohorts[i] != c and not (math.isinf(cohorts[i]) and math.isinf(c)):
                raise DomainError("cohort varies within a unit")
            first[i] = 1
        return cls(outcomes=outcomes, cohorts=cohorts, periods=p_int.astype(float))

    @property
    def n_units(self) -> int:
        return self.outcomes.shape[0]

    def finite_cohorts(self) -> np.ndarray:
        vals = np.unique(self.cohorts[np.isfinite(self.cohorts)])
        return vals


@dataclass(frozen=True)
class CattEstimate:
    cohort: float
    rel_period: float
    estimate: float
    n_cohort: int
    n_control: int


def _resolve_control(panel: CohortPanel, control: str):
    if control == CONTROL_NEVER_TREATED:
        mask = np.isinf(panel.cohorts)
        if not mask.any():
            raise IdentificationError(
                "no never-treated units; pass control='last_treated' to use "
                "the last-adopting cohort instead"
            )
        return mask, np.inf
    if control == CONTROL_LAST_TREATED:
        finite = panel.finite_cohorts()
        if finite.size < 2:
            raise IdentificationError("need at least two adoption cohorts for last-treated control")
        last = float(finite.max())
        return panel.cohorts == last, last
    raise DomainError(
        f"unknown control set {control!r}; use '{CONTROL_NEVER_TREATED}' or '{CONTROL_LAST_TREATED}'"
    )


def catt_iw(
    panel: CohortPanel,
    control: str = CONTROL_NEVER_TREATED,
    rel_periods: tuple[int, ...] | None = None,
) -> list[CattEstimate]:
    """Cohort-by-relative-period treatment effects on the outcome.

    Parameters
    ----------
    panel : CohortPanel
    control : str
        ``"never_treated"`` (default) or ``"last_treated"``.  With a
        last-treated control, contrasts are only formed for calendar periods
        before that cohort adopts, where it is still a valid comparison.
    rel_periods : tuple of int, optional
        Restrict to these relative periods; default is every feasible one
        except -1 (the baseline).  Negative values give placebo contrasts.

    Returns
    -------
    list of CattEstimate
        Ordered by cohort then relative period.  Raises
        :class:`IdentificationError` when a requested contrast has no
        cohort or control units with both periods observed.
    """
    ctrl_mask, ctrl_cohort = _resolve_control(panel, control)
    p0 = int(panel.periods[0])
    pT = int(panel.periods[-1])
    out: list[CattEstimate] = []
    for e in panel.finite_cohorts():
        if e == ctrl_cohort:
            continue
        base = int(e) - 1
        if base < p0:
            continue  # no pre-period to baseline against
        cohort_mask = panel.cohorts == e
        feasible = []
        for t in range(p0, pT + 1):
            ell = t - int(e)
            if ell == -1:
                continue
            if math.isfinite(ctrl_cohort) and t >= int(ctrl_cohort):
                continue  # control becomes treated; contrast no longer clean
            feasible.append(ell)
        wanted = feasible if rel_periods is None else [l for l in feasible if l in rel_periods]
        for ell in wanted:
            t = int(e) + ell
            ti = t - p0
            bi = base - p0
            n_cohort = int(cohort_mask.sum())
            n_control = int(ctrl_mask.sum())
            if n_cohort == 0 or n_control == 0:
                raise IdentificationError(f"empty contrast for cohort {e}, relative period {ell}")
            diff_cohort = panel.outcomes[cohort_mask, ti] - panel.outcomes[cohort_mask, bi]
            diff_control = panel.outcomes[ctrl_mask, ti] - panel.outcomes[ctrl_mask, bi]
            out.append(
                CattEstimate(
                    cohort=float(e),
                    rel_period=float(ell),
                    estimate=float(diff_cohort.mean() - diff_control.mean()),
                    n_cohort=n_cohort,
                    n_control=n_control,
                )
            )
    if not out:
        raise IdentificationError("no feasible (cohort, relative period) contrasts")
    return out


@dataclass(frozen=True)
class AuditRow:
    cohort: int
    rel_period: int
    mean_estimate: float
    true_tech: float
    true_indirect: float
    gap: float
    mc_se: float


@dataclass
class AuditTable:
    """Replicated event-study estimates against the design's true channels.

    ``gap = mean_estimate - (true_tech - true_indirect)`` measures whether
    the estimator recovers the total effect; it should sit within Monte-Carlo
    noise of zero even when the two channels are separately large.
    """

    rows: list[AuditRow]
    reps: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["cohort", "rel_period", "mean_estimate", "true_tech",
                 "true_indirect", "gap", "mc_se"]
            )
            for r in self.rows:
                writer.writerow(
                    [r.cohort, r.rel_period,
                     repr(r.mean_estimate), repr(r.true_tech), repr(r.true_indirect),
                     repr(r.gap), repr(r.mc_se)]
                )


def confounding_audit(
    design: SimDesign,
    reps: int,
    *,
    control: str = CONTROL_NEVER_TREATED,
    n_workers: int = 1,
) -> AuditTable:
    """Monte-Carlo audit of the event-study estimator's confounding.

    Simulates ``reps`` panels from the staggered design, estimates every
    feasible cohort/relative-period effect, and tabulates the mean estimate
    against the design's true frontier (tech) and inefficiency (indirect)
    channels.
    """
    if design.kind != "staggered":
        raise DomainError("confounding_audit requires a staggered design")
    if reps < 2:
        raise DomainError("reps must be >= 2 to estimate Monte-Carlo error")

    def one(stream: int):
        panel = CohortPanel.from_dataset(generate(design, stream=stream))
        return catt_iw(panel, control=control)

    results = map_replicates(one, reps, n_workers)
    keys = [(int(c.cohort), int(c.rel_period)) for c in results[0]]
    stacks: dict[tuple[int, int], list[float]] = {k: [] for k in keys}
    for res in results:
        for c in res:
            stacks[(int(c.cohort), int(c.rel_period))].append(c.estimate)

    p = design.params
    rows = []
    for (e, ell), vals in stacks.items():
        arr = np.asarray(vals)
        if ell < 0:
            tech, indirect = 0.0, 0.0
        else:
            tech = _rel_effect(p["tech"], ell)
            indirect = HALF_NORMAL_MEAN_COEF * p["sigma_u"] * (
                math.exp(_rel_effect(p["gamma"], ell)) - 1.0
            )
        mean_est = float(arr.mean())
        rows.append(
            AuditRow(
                cohort=e,
                rel_period=ell,
                mean_estimate=mean_est,
                true_tech=tech,
                true_indirect=indirect,
                gap=mean_est - (tech - indirect),
                mc_se=float(arr.std(ddof=1) / math.sqrt(arr.size)),
            )
        )
    rows.sort(key=lambda r: (r.cohort, r.rel_period))
    return AuditTable(rows=rows, reps=reps)
