"""Command-line front end tying solvers, approximations, moments, and
simulators together.

Subcommands: solve, compare, simulate, moments, ht, ld, invert.  Every
subcommand is deterministic given (model, flags, seed): reruns produce
byte-identical output files.  OVQ_THREADS caps simulator parallelism and
OVQ_NO_NUMBA=1 selects the pure-numpy kernel path.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

import argparse
import importlib.resources
import json
import sys
from pathlib import Path

import numpy as np

from . import endogenous, heavy_traffic, qbd, transient
from .errors import ModelSpecError, NumericalError
from .flows import flow_moments, ld_variance, ld_variance_closed_form
from .models import (
    ClockLaw,
    EndogenousSpec,
    GeneralResampledSpec,
    MMQueueSpec,
    RateLawFinite,
    ResampledSpec,
    load_model_spec,
    parse_model_doc,
)
from .sim import SimConfig, simulate_endogenous, simulate_general_resampled, simulate_modulated

_PRESETS = {"table1": "table1.json", "figure1": "figure1.json",
            "appendix-demo": "appendix_demo.json"}


def _json_text(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _load_jobs(args):
    """[(label, descriptor)] plus preset params from --model or --preset."""
    if (args.model is None) == (args.preset is None):
        raise ModelSpecError("exactly one of --model or --preset is required")
    if args.model is not None:
        return [(Path(args.model).stem, load_model_spec(args.model))], {}
    if args.preset not in _PRESETS:
        raise ModelSpecError(
            f"unknown preset {args.preset!r}; available: {sorted(_PRESETS)}")
    ref = importlib.resources.files("ovqueue.presets") / _PRESETS[args.preset]
    doc = json.loads(ref.read_text(encoding="utf-8"))
    jobs = [(job["label"], parse_model_doc(job["model"])) for job in doc["jobs"]]
    return jobs, doc.get("params", {})


def _out_dir(args) -> Path:
    out = Path(args.out)
    if not out.is_dir():
        raise ModelSpecError(f"output directory {out} does not exist")
    return out


def _dist_csv(probs):
    lines = ["n,p_n"]
    for n, p in enumerate(probs):
        lines.append(f"{n},{p:.12g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------

def cmd_solve(args):
    jobs, params = _load_jobs(args)
    out = _out_dir(args)
    n_max = args.n_max if args.n_max is not None else params.get("n_max", 200)
    summary = []
    for label, spec in jobs:
        if isinstance(spec, (ResampledSpec, MMQueueSpec)):
            mm = spec.to_mm() if isinstance(spec, ResampledSpec) else spec
            sol = qbd.solve_r_matrix(mm)
            probs = sol.marginal(n_max)
            meta = {
                "label": label,
                "rho": mm.rho,
                "R": [[float(x) for x in row] for row in sol.R],
                "zeta0": [float(x) for x in sol.zeta0],
                "solver_residual": sol.residual,
                "iterations": sol.iterations,
                "spectral_radius": sol.spectral_radius,
            }
            if isinstance(spec, ResampledSpec) and spec.law.d == 2:
                two = transient.solve_two_point_stationary(spec.law, spec.q)
                tv = 0.5 * float(np.abs(two.probabilities(n_max) - probs).sum())
                meta["two_point_cross_check_tv"] = tv
        elif isinstance(spec, EndogenousSpec):
            chain = endogenous.make_embedded_chain(spec)
            probs = chain.probabilities(n_max)
            meta = {
                "label": label,
                "rho": spec.rho,
                "p0": 1.0 - spec.rho,
                "offspring_second_factorial_moment": spec.offspring_second_factorial_moment,
            }
        else:
            raise ModelSpecError(
                "no exact solver for general-support resampling; "
                "use simulate, ht, or moments")
        _write(out / f"solve_{label}.csv", _dist_csv(probs))
        summary.append(meta)
    _write(out / "solve_summary.json", _json_text(summary))
    return 0


def _resampled_ht_mean(spec, rho):
    """Tail-approximation mean at the given load (closed form, unscaled)."""
    scaled_law = spec.law.scaled_arrivals(rho / spec.law.rho)
    return heavy_traffic.ht_mean_resampled(scaled_law, spec.q,
                                           rescale_to_critical=False).mean


def cmd_compare(args):
    jobs, params = _load_jobs(args)
    out = _out_dir(args)
    n_max = args.n_max if args.n_max is not None else params.get("n_max", 400)
    rho_list = args.rho if args.rho else None
    summary = []
    for label, spec in jobs:
        if isinstance(spec, ResampledSpec):
            base_rho = spec.rho
        elif isinstance(spec, MMQueueSpec):
            base_rho = spec.rho
        else:
            raise ModelSpecError("compare needs a finite resampled or modulated model")
        rhos = rho_list if rho_list is not None else [base_rho]
        for rho in rhos:
            if not 0.0 < rho < 1.0:
                raise ModelSpecError(
                    f"load {rho} outside (0,1); the exponential approximation "
                    "is meaningless there")
            if isinstance(spec, ResampledSpec):
                law = spec.law.scaled_arrivals(rho / base_rho)
                mm = ResampledSpec(law, spec.q).to_mm()
                m = _resampled_ht_mean(spec, rho)
            else:
                mm = spec.scaled_to_rho(rho)
                m = heavy_traffic.ht_mean_modulated(mm).mean
            sol = qbd.solve_r_matrix(mm)
            exact = qbd.tail_probabilities(sol, n_max)
            # align the continuous ccdf with P(Q > n) = P(Q >= n+1)
            approx = heavy_traffic.aligned_exp_tail(m, rho, n_max)
            gap = float(np.max(np.abs(exact - approx)))
            tag = f"{label}_rho{rho:g}"
            lines = ["n,p_exact,p_ht"]
            for n in range(n_max + 1):
                lines.append(f"{n},{exact[n]:.12g},{approx[n]:.12g}")
            _write(out / f"compare_{tag}.csv", "\n".join(lines) + "\n")
            summary.append({"label": label, "rho": rho, "ht_mean": m,
                            "sup_norm_gap": gap})
    _write(out / "compare_summary.json", _json_text(summary))
    return 0


def cmd_simulate(args):
    jobs, _ = _load_jobs(args)
    out = _out_dir(args)
    cfg = SimConfig(
        horizon_events=args.events,
        horizon_time=args.time,
        warmup_fraction=args.warmup,
        replications=args.reps,
        seed=args.seed,
        scaled_t_grid=tuple(args.t_grid) if args.t_grid else (),
        flow_t_grid=tuple(args.flow_grid) if args.flow_grid else (),
    )
    for label, spec in jobs:
        if isinstance(spec, (ResampledSpec, MMQueueSpec)):
            res = simulate_modulated(spec, cfg)
        elif isinstance(spec, GeneralResampledSpec):
            res = simulate_general_resampled(spec, cfg)
        elif isinstance(spec, EndogenousSpec):
            res = simulate_endogenous(spec, cfg)
        else:
            raise ModelSpecError(f"cannot simulate {type(spec).__name__}")
        _write(out / f"simulate_{label}.json", _json_text(res.to_json_dict()))
        _write(out / f"simulate_{label}_hist.csv", res.histogram_csv())
        if res.scaled_samples is not None:
            _write(out / f"simulate_{label}_traj.csv", res.trajectories_csv())
    return 0


def _as_flow_inputs(spec):
    if isinstance(spec, GeneralResampledSpec):
        return spec.law, spec.clock
    if isinstance(spec, ResampledSpec):
        # exponential-clock resampling is the q-rate special case
        return spec.law, ClockLaw("exponential", {"rate": spec.q})
    raise ModelSpecError("flow moments need a resampled model (finite or general)")


def cmd_moments(args):
    jobs, _ = _load_jobs(args)
    out = _out_dir(args)
    t_grid = args.t_grid if args.t_grid else [1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
    for label, spec in jobs:
        law, clock = _as_flow_inputs(spec)
        fm = flow_moments(law, clock)
        _write(out / f"moments_{label}.csv", fm.csv(t_grid))
        _write(out / f"moments_{label}.json", _json_text({
            "label": label,
            "asymptotic_var_arrival": fm.asymptotic_var_arrival,
            "asymptotic_var_service": fm.asymptotic_var_service,
            "asymptotic_cov": fm.asymptotic_cov,
        }))
    return 0


def cmd_ht(args):
    jobs, _ = _load_jobs(args)
    out = _out_dir(args)
    for label, spec in jobs:
        if isinstance(spec, ResampledSpec):
            approx = heavy_traffic.ht_mean_resampled(spec.law, spec.q)
            doc = {"kind": approx.kind, "mean": approx.mean,
                   "sigma_sq": approx.variance,
                   "mean_at_load": _resampled_ht_mean(spec, spec.rho),
                   "source": approx.source}
        elif isinstance(spec, MMQueueSpec):
            approx = heavy_traffic.ht_mean_modulated(spec)
            doc = {"kind": approx.kind, "mean": approx.mean, "source": approx.source}
        elif isinstance(spec, GeneralResampledSpec):
            approx = heavy_traffic.ht_rbm_params_general(spec.law, spec.clock)
            doc = {"kind": approx.kind, "drift": approx.drift,
                   "variance": approx.variance,
                   "stationary_mean": approx.stationary_mean,
                   "source": approx.source}
        else:
            approx = heavy_traffic.ht_mean_endogenous(
                spec.arrival_law.mean, spec.arrival_law.second_moment,
                spec.service.mean, spec.service.second_moment)
            doc = {"kind": approx.kind, "mean": approx.mean, "source": approx.source}
        doc["label"] = label
        print(f"{label}: {doc}")
        _write(out / f"ht_{label}.json", _json_text(doc))
    return 0


def _finite_law_of(law):
    """Recover a finite-support law from a general one, when it has atoms."""
    if isinstance(law, RateLawFinite):
        return law
    doc = getattr(law, "_doc", None)
    if doc and doc.get("family") == "finite":
        rows = doc["atoms"]
        return RateLawFinite([a["lambda"] for a in rows],
                             [a["mu"] for a in rows],
                             [a["pi"] for a in rows])
    raise ModelSpecError("the large-deviations route needs a finite-support law")


def cmd_ld(args):
    jobs, params = _load_jobs(args)
    out = _out_dir(args)
    alphas = args.alpha if args.alpha else params.get("alphas", [0.0, 0.5, 1.0])
    for label, spec in jobs:
        law, clock = _as_flow_inputs(spec)
        law = _finite_law_of(law)
        fm = flow_moments(law, clock)
        rows = []
        for alpha in alphas:
            res = ld_variance(law, clock, alpha)
            rows.append({"alpha": alpha, "variance": res.variance,
                         "variance_closed_form": ld_variance_closed_form(law, clock, alpha),
                         "third_cumulant": res.third_cumulant})
        doc = {"label": label, "results": rows,
               "combination_check": {
                   "v_half_from_constants": 0.25 * fm.asymptotic_var_arrival
                                            + 0.25 * fm.asymptotic_var_service
                                            + 0.5 * fm.asymptotic_cov}}
        _write(out / f"ld_{label}.json", _json_text(doc))
    return 0


def cmd_invert(args):
    jobs, params = _load_jobs(args)
    out = _out_dir(args)
    n_max = args.n_max if args.n_max is not None else params.get("n_max", 200)
    for label, spec in jobs:
        if isinstance(spec, ResampledSpec) and spec.law.d == 2:
            sol = transient.solve_two_point_stationary(spec.law, spec.q)
            probs = sol.probabilities(n_max)
        elif isinstance(spec, EndogenousSpec):
            probs = endogenous.make_embedded_chain(spec).probabilities(n_max)
        else:
            raise ModelSpecError(
                "invert supports two-point resampled and endogenous models")
        _write(out / f"invert_{label}.csv", _dist_csv(probs))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _float_list(text):
    return [float(x) for x in text.split(",") if x]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ovq",
        description="Queues with resampled (overdispersed) arrival and "
                    "service rates: exact solvers, heavy-traffic "
                    "approximations, flow moments, and simulation oracles.",
        epilog="Environment: OVQ_THREADS caps simulator parallelism; "
               "OVQ_NO_NUMBA=1 selects the pure-numpy kernel path.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n_max=False, seed=False):
        p.add_argument("--model", metavar="PATH", help="model spec JSON file")
        p.add_argument("--preset", metavar="NAME",
                       help=f"built-in preset: {', '.join(sorted(_PRESETS))}")
        p.add_argument("--out", metavar="PATH", default=".",
                       help="output directory (must exist)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="primary output format (both are written where applicable)")
        if n_max:
            p.add_argument("--n-max", type=int, default=None,
                           help="largest queue length to tabulate")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="master RNG seed")

    p = sub.add_parser("solve", help="exact stationary distribution")
    common(p, n_max=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="exact tail vs exponential approximation")
    common(p, n_max=True)
    p.add_argument("--rho", type=_float_list, default=None,
                   help="comma-separated loads to rescale the model to")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="discrete-event simulation")
    common(p, seed=True)
    p.add_argument("--events", type=int, default=None,
                   help="event/step horizon (CTMC and embedded models)")
    p.add_argument("--time", type=float, default=None,
                   help="time horizon (renewal-resampled model)")
    p.add_argument("--reps", type=int, default=1, help="replication count")
    p.add_argument("--warmup", type=float, default=0.1,
                   help="warmup fraction of the horizon")
    p.add_argument("--t-grid", type=_float_list, default=None,
                   help="scaled times for trajectory recording")
    p.add_argument("--flow-grid", type=_float_list, default=None,
                   help="absolute times for flow-count recording")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("moments", help="cumulative-flow variance/covariance")
    common(p)
    p.add_argument("--t-grid", type=_float_list, default=None,
                   help="times at which to tabulate the finite-t moments")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("ht", help="heavy-traffic approximation parameters")
    common(p)
    p.set_defaults(func=cmd_ht)

    p = sub.add_parser("ld", help="asymptotic flow variance via the "
                                  "large-deviations route")
    common(p)
    p.add_argument("--alpha", type=_float_list, default=None,
                   help="comma-separated mixing weights")
    p.set_defaults(func=cmd_ld)

    p = sub.add_parser("invert", help="distribution from transform inversion")
    common(p, n_max=True)
    p.set_defaults(func=cmd_invert)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
