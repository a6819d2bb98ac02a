"""Command-line interface.

Five subcommands cover the package workflow end to end:

* ``simulate``: draw a dataset from a named design and write it as CSV;
* ``fit``: estimate a named model on a CSV dataset and write JSON;
* ``test``: likelihood-ratio test of the inefficiency channel in the
  2x2 difference-in-differences design;
* ``audit``: Monte-Carlo replication study; for staggered designs, the
  event-study confounding audit table;
* ``bench``: one-dataset comparison of the naive double difference, the
  fit-then-regress benchmark, and the joint fit against their population
  values.

Exit codes: 0 success, 1 usage error, 2 data or identification error,
3 non-convergence.  A non-converged fit still writes its (flagged) output.
Outputs contain no timestamps, so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .data import Dataset
from .did import (
    DidSfaParams,
    decompose_did,
    fit_did_sfa,
    lr_test_indirect,
    naive_did,
    naive_did_plim,
    two_step_benchmark,
    two_step_oracle_score_did,
)
from .endogeneity import EndoSpec, c2sls_fit, fit_aps_mle, gmm_fit
from .errors import (
    CausalSfaError,
    CollinearityError,
    ConvergenceError,
    DomainError,
    EvaluationError,
    IdentificationError,
    SchemaError,
)
from .random_assignment import fit_two_group, naive_mean_difference
from .rdd import RddSpec, fit_srd_sfa, frd_wald, srd_local_linear
from .sfa import FrontierSpec, fit_sfa_cols, fit_sfa_mle
from .simulate import KINDS, ESTIMATORS, SimDesign, generate, replicate_study
from .staggered import (
    CONTROL_LAST_TREATED,
    CONTROL_NEVER_TREATED,
    CohortPanel,
    catt_iw,
    confounding_audit,
)

FIT_MODELS = (
    "sfa_mle",
    "sfa_cols",
    "two_group_mle",
    "two_group_cols",
    "naive_difference",
    "did_sfa",
    "naive_did",
    "catt_iw",
    "srd_local_linear",
    "srd_sfa_mle",
    "srd_sfa_nls",
    "frd_wald",
    "c2sls",
    "gmm",
    "aps_mle",
)


def _jsonable(value):
    """Plain-Python mirror of a payload: NaN to null, arrays to lists."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return None if math.isnan(v) else v
    return value


def _emit_json(payload, out_path) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)


def _se_dict(names, se):
    if se is None:
        return None
    return {name: float(v) for name, v in zip(names, se)}


def _decomposition_dict(d):
    return {"total": d.total, "direct": d.direct, "indirect": d.indirect}


def _param_pair(text: str):
    key, sep, raw = text.partition("=")
    key = key.strip()
    raw = raw.strip()
    if not sep or not key or not raw:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        if "," in raw:
            value = tuple(float(tok) for tok in raw.split(",") if tok.strip())
        else:
            value = float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"could not parse value in {text!r}") from None
    return key, value


def _design_from_args(args) -> SimDesign:
    return SimDesign(kind=args.design, seed=args.seed, params=dict(args.param or []))


def _rdd_spec(args) -> RddSpec:
    return RddSpec(cutoff=args.cutoff, bandwidth=args.bandwidth)


def cmd_simulate(args) -> int:
    data = generate(_design_from_args(args))
    data.to_csv(args.out)
    return 0


def _fit_payload(args, data) -> tuple[dict, bool]:
    """Model-specific JSON payload and whether the fit converged."""
    model = args.model
    if model in ("sfa_mle", "sfa_cols"):
        if model == "sfa_mle":
            fit = fit_sfa_mle(data)
        else:
            fit = fit_sfa_cols(data)
        names = fit.coef_names + ("sigma_v", "sigma_u")
        return {
            "estimates": fit.param_dict(),
            "loglik": fit.loglik,
            "n": fit.n,
            "method": fit.method,
            "se": _se_dict(names, fit.se),
            "flags": list(fit.flags),
            "converged": fit.converged,
        }, fit.converged
    if model in ("two_group_mle", "two_group_cols"):
        fit = fit_two_group(data, method=model.split("_")[-1])
        return {
            "estimates": fit.param_dict(),
            "decomposition": _decomposition_dict(fit.decomposition),
            "loglik": fit.loglik,
            "n_control": fit.n0,
            "n_treated": fit.n1,
            "method": fit.method,
            "se": _se_dict(fit.se_names, fit.se),
            "flags": list(fit.flags),
            "converged": fit.converged,
        }, fit.converged
    if model == "naive_difference":
        return {"estimate": naive_mean_difference(data)}, True
    if model == "did_sfa":
        fit = fit_did_sfa(data)
        return {
            "estimates": fit.param_dict(),
            "decomposition": _decomposition_dict(fit.decomposition),
            "loglik": fit.loglik,
            "n": fit.n,
            "se": _se_dict(fit.se_names, fit.se),
            "flags": list(fit.flags),
            "converged": fit.converged,
        }, fit.converged
    if model == "naive_did":
        nd = naive_did(data)
        return {
            "estimate": nd.estimate,
            "ols_estimate": nd.ols_estimate,
            "cell_means": {f"d{d}t{t}": m for (d, t), m in sorted(nd.cell_means.items())},
        }, True
    if model == "catt_iw":
        panel = CohortPanel.from_dataset(data)
        rows = catt_iw(panel, control=args.control)
        return {
            "control": args.control,
            "effects": [
                {
                    "cohort": c.cohort,
                    "rel_period": c.rel_period,
                    "estimate": c.estimate,
                    "n_cohort": c.n_cohort,
                    "n_control": c.n_control,
                }
                for c in rows
            ],
        }, True
    if model == "srd_local_linear":
        fit = srd_local_linear(data, _rdd_spec(args))
        return {
            "jump": fit.jump,
            "left_intercept": fit.left_intercept,
            "left_slope": fit.left_slope,
            "right_intercept": fit.right_intercept,
            "right_slope": fit.right_slope,
            "bandwidth": fit.bandwidth,
            "n_left": fit.n_left,
            "n_right": fit.n_right,
        }, True
    if model in ("srd_sfa_mle", "srd_sfa_nls"):
        fit = fit_srd_sfa(data, _rdd_spec(args), method=model.split("_")[-1])
        return {
            "estimates": fit.param_dict(),
            "decomposition": _decomposition_dict(fit.decomposition),
            "objective": fit.objective,
            "method": fit.method,
            "bandwidth": fit.bandwidth,
            "n_left": fit.n_left,
            "n_right": fit.n_right,
            "local_linear_jump": fit.local_linear_jump,
            "se": _se_dict(fit.se_names, fit.se),
            "flags": list(fit.flags),
            "converged": fit.converged,
        }, fit.converged
    if model == "frd_wald":
        fit = frd_wald(data, _rdd_spec(args))
        return {
            "estimate": fit.estimate,
            "outcome_jump": fit.outcome_jump,
            "prob_jump": fit.prob_jump,
            "bandwidth": fit.bandwidth,
            "n_left": fit.n_left,
            "n_right": fit.n_right,
        }, True
    if model in ("c2sls", "gmm", "aps_mle"):
        spec = EndoSpec(
            exogenous_cols=(),
            endogenous_cols=data.input_cols(),
            instrument_cols=data.instrument_cols(),
        )
        if model == "c2sls":
            fit = c2sls_fit(data, spec)
            names = fit.coef_names + ("sigma_v", "sigma_u")
            return {
                "estimates": fit.param_dict(),
                "loglik": fit.loglik,
                "n": fit.n,
                "first_stage_r2": list(fit.first_stage_r2),
                "se": _se_dict(names, fit.se),
                "flags": list(fit.flags),
            }, True
        if model == "gmm":
            fit = gmm_fit(data, spec)
            return {
                "estimates": fit.param_dict(),
                "n": fit.n,
                "moments": fit.moments,
                "j_stat": fit.j_stat,
                "flags": list(fit.flags),
                "converged": fit.converged,
            }, fit.converged
        fit = fit_aps_mle(data, spec)
        return {
            "estimates": fit.param_dict(),
            "loglik": fit.loglik,
            "n": fit.n,
            "se": _se_dict(fit.se_names, fit.se),
            "flags": list(fit.flags),
            "converged": fit.converged,
        }, fit.converged
    raise DomainError(f"unknown model {model!r}")


def cmd_fit(args) -> int:
    data = Dataset.from_csv(args.in_path)
    payload, converged = _fit_payload(args, data)
    payload["model"] = args.model
    _emit_json(payload, args.out)
    return 0 if converged else 3


def cmd_test(args) -> int:
    data = Dataset.from_csv(args.in_path)
    res = lr_test_indirect(data, restriction=args.restriction)
    _emit_json(
        {
            "statistic": res.statistic,
            "df": res.df,
            "pvalue": res.pvalue,
            "loglik_unrestricted": res.loglik_unrestricted,
            "loglik_restricted": res.loglik_restricted,
            "restriction": res.restriction,
        },
        args.out,
    )
    return 0


def cmd_audit(args) -> int:
    design = _design_from_args(args)
    if args.estimator is None:
        table = confounding_audit(
            design, args.reps, control=args.control, n_workers=args.workers
        )
        table.to_csv(args.out)
        return 0
    study = replicate_study(design, args.reps, args.estimator, n_workers=args.workers)
    study.to_csv(args.out)
    return 0


def cmd_bench(args) -> int:
    design = _design_from_args(args)
    if design.kind != "did_2x2":
        raise DomainError("bench requires the did_2x2 design")
    p = design.params
    true_params = DidSfaParams(
        beta0=p["beta0"], beta1=p["beta1"], beta2=p["beta2"], beta3=p["beta3"],
        gamma1=p["gamma1"], gamma2=p["gamma2"], gamma3=p["gamma3"],
        sigma_u=p["sigma_u"], sigma_v=p["sigma_v"],
    )
    data = generate(design)
    nd = naive_did(data)
    bench = two_step_benchmark(data, oracle_score_did=two_step_oracle_score_did(true_params))
    fit = fit_did_sfa(data, compute_se=False)
    payload = {
        "naive_did": {
            "estimate": nd.estimate,
            "plim": naive_did_plim(true_params),
        },
        "two_step": {
            "score_did": bench.score_did,
            "oracle_score_did": bench.oracle_score_did,
            "gap": bench.gap,
        },
        "joint_fit": {
            "estimates": fit.param_dict(),
            "decomposition": _decomposition_dict(fit.decomposition),
            "flags": list(fit.flags),
            "converged": fit.converged,
        },
        "truth": {
            "decomposition": _decomposition_dict(decompose_did(true_params)),
        },
    }
    _emit_json(payload, args.out)
    return 0 if fit.converged else 3


def _add_design_options(sub, kinds=KINDS):
    sub.add_argument("--design", required=True, choices=kinds, help="design kind")
    sub.add_argument("--seed", required=True, type=int, help="master seed")
    sub.add_argument(
        "--param",
        action="append",
        type=_param_pair,
        metavar="KEY=VALUE",
        help="override a design parameter (repeatable; tuples as comma lists)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalsfa",
        description="Treatment-effect estimators for stochastic frontier models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a dataset from a named design")
    _add_design_options(p_sim)
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit a model to a CSV dataset")
    p_fit.add_argument("--model", required=True, choices=FIT_MODELS)
    p_fit.add_argument("--in", dest="in_path", required=True, help="input CSV path")
    p_fit.add_argument("--out", help="output JSON path (default: stdout)")
    p_fit.add_argument("--cutoff", type=float, default=0.0, help="threshold location")
    p_fit.add_argument("--bandwidth", type=float, help="window half-width around the cutoff")
    p_fit.add_argument(
        "--control",
        choices=(CONTROL_NEVER_TREATED, CONTROL_LAST_TREATED),
        default=CONTROL_NEVER_TREATED,
        help="control group for the event-study estimator",
    )
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="likelihood-ratio test of the inefficiency channel")
    p_test.add_argument("--in", dest="in_path", required=True, help="input CSV path")
    p_test.add_argument("--restriction", choices=("gamma3", "all"), default="gamma3")
    p_test.add_argument("--out", help="output JSON path (default: stdout)")
    p_test.set_defaults(func=cmd_test)

    p_audit = sub.add_parser("audit", help="Monte-Carlo replication study")
    _add_design_options(p_audit)
    p_audit.add_argument("--reps", required=True, type=int, help="number of replications")
    p_audit.add_argument("--workers", type=int, default=1, help="thread count")
    p_audit.add_argument(
        "--estimator",
        choices=sorted(ESTIMATORS),
        help="summarize this estimator instead of the staggered confounding audit",
    )
    p_audit.add_argument(
        "--control",
        choices=(CONTROL_NEVER_TREATED, CONTROL_LAST_TREATED),
        default=CONTROL_NEVER_TREATED,
        help="control group for the confounding audit",
    )
    p_audit.add_argument("--out", required=True, help="output CSV path")
    p_audit.set_defaults(func=cmd_audit)

    p_bench = sub.add_parser(
        "bench", help="naive and two-step benchmarks against the joint fit"
    )
    _add_design_options(p_bench, kinds=("did_2x2",))
    p_bench.add_argument("--out", help="output JSON path (default: stdout)")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (SchemaError, IdentificationError, CollinearityError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CausalSfaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
