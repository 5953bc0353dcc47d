"""Command-line front end: ``noise-loom {sample,evolve,stats,validate,exact}``.

Exit codes: 0 success, 1 domain error, 2 I/O or format error.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import envmodel, noisestats, opensim, quasiprob, sampler
from .errors import FormatError, NoiseLoomError
from .sampler import format_decimal


def _model_from_args(args):
    if getattr(args, "model", None):
        return envmodel.load_model(args.model)
    if args.gamma is None or args.omega is None:
        raise NoiseLoomError("give --model or both --gamma and --omega")
    return envmodel.build_rtn_env(args.gamma, args.omega)


def cmd_sample(args):
    for name in ("dt", "steps", "ensemble", "seed", "output"):
        if getattr(args, name) is None:
            raise NoiseLoomError(f"--{name} is required (no implicit defaults for runs)")
    model = _model_from_args(args)
    ens = sampler.sample_ensemble(model, args.dt, args.steps, args.ensemble, args.seed,
                                  workers=args.workers)
    sampler.save_ensemble(ens, args.output)
    freq = np.bincount(ens.indices.ravel(), minlength=len(ens.omega_values)) / ens.indices.size
    marg = ", ".join(f"{format_decimal(v)}: {f:.4f}" for v, f in zip(ens.omega_values, freq))
    print(f"wrote {args.output}: N_e={ens.n} k={ens.k} dt={ens.dt} model={model.label}")
    print(f"empirical marginals {{{marg}}}")
    return 0


def _system_from_arg(value):
    if value == "pure-dephasing":
        return opensim.pure_dephasing_system(), True
    with open(value, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{value}: invalid JSON ({exc})") from None
    try:
        mats = [envmodel.decode_matrix(spec[key], key) for key in ("H", "V", "rho")]
    except KeyError as exc:
        raise FormatError(f"{value}: system file missing key {exc}") from None
    return opensim.SystemSpec(*mats), False


def _rtn_params(args, ens):
    gamma, omega = args.gamma, args.omega
    if (gamma is None or omega is None) and ens.model and ens.model.get("type") == "rtn":
        gamma = ens.model["gamma"] if gamma is None else gamma
        omega = ens.model["omega"] if omega is None else omega
    if gamma is None or omega is None:
        return None
    if not np.allclose(np.sort(ens.omega_values), np.sort([-omega / 2, omega / 2]), atol=1e-12):
        return None
    return gamma, omega


def _load_ensemble(path):
    if not path:
        raise FormatError("empty ensemble path")
    return sampler.load_ensemble(path)


def cmd_evolve(args):
    ens = _load_ensemble(args.ensemble)
    system, builtin = _system_from_arg(args.system)
    element = tuple(int(x) for x in args.element.split(","))
    report = opensim.simulate_ensemble(system, ens, args.integrator, n=args.n, element=element)
    params = _rtn_params(args, ens)
    if builtin and element == (0, 1) and params is not None:
        report.reference = opensim.exact_rtn_coherence(*params, report.times - ens.t0)
    report.check()
    report.to_csv(args.output)
    msg = f"wrote {args.output}: {len(report.times)} times, N_e={report.n_e}, {args.integrator}"
    errs = report.errors()
    if errs is not None:
        msg += f", rms={errs[0]:.4g} max={errs[1]:.4g}"
    print(msg)
    return 0


def cmd_stats(args):
    ens = _load_ensemble(args.ensemble)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    max_lag = args.max_lag if args.max_lag is not None else (ens.k - 1) // 2
    lags, c, se = noisestats.pooled_autocorrelation(ens, max_lag)
    noisestats.write_columns(outdir / "acf.csv", ["lag", "C", "stderr"], [lags, c, se])
    psd = noisestats.estimate_psd(ens, max_lag)
    psd.to_csv(outdir / "psd.csv")
    print(f"wrote {outdir / 'acf.csv'} and {outdir / 'psd.csv'} (max lag {max_lag})")
    return 0


DEMOS = {
    "commuting": envmodel.commuting_demo_env,
    "noncommuting": envmodel.noncommuting_demo_env,
}


def cmd_validate(args):
    if args.demo:
        model = DEMOS[args.demo]()
    elif args.model:
        model = envmodel.load_model(args.model)
    else:
        raise NoiseLoomError("give --model or --demo")
    results = []
    for k in range(1, args.k + 1):
        grid = quasiprob.TimeGrid.uniform(k, args.dt, args.t0)
        offdiag, residual = quasiprob.validity_witness(model, grid, args.budget)
        results.append({
            "k": k,
            "offdiag_mass": offdiag,
            "kolmogorov_residual": residual,
            "eigensum_discrepancy": quasiprob.eigensum_discrepancy(model, grid, args.budget),
        })
    print(json.dumps({"model": model.label, "fingerprint": model.fingerprint, "dt": args.dt,
                      "t0": args.t0, "results": results}, indent=1))
    return 0


def cmd_exact(args):
    t = np.linspace(0.0, args.tmax, args.points)
    coh = opensim.exact_rtn_coherence(args.gamma, args.omega, t)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        _write_rows(out, ["t", "coherence"], zip(t, np.atleast_1d(coh)))
    finally:
        if args.output:
            out.close()
    return 0


def _write_rows(fh, header, rows):
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(format_decimal(v) for v in row) + "\n")


def build_parser():
    p = argparse.ArgumentParser(prog="noise-loom", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file of option defaults (flags override)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample a trajectory ensemble by sequential measurement")
    s.add_argument("--model", help="model definition JSON")
    s.add_argument("--gamma", type=float, help="telegraph switching rate")
    s.add_argument("--omega", type=float, help="telegraph coupling strength")
    s.add_argument("--dt", type=float)
    s.add_argument("--steps", type=int)
    s.add_argument("--ensemble", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("evolve", help="replay an ensemble through an open system")
    e.add_argument("ensemble")
    e.add_argument("--system", default="pure-dephasing",
                   help="'pure-dephasing' or a JSON file with H, V, rho")
    e.add_argument("--integrator", choices=opensim.INTEGRATORS, default="rk4")
    e.add_argument("--n", type=int, default=None, help="use the first n trajectories")
    e.add_argument("--element", default="0,1", help="tracked matrix element 'i,j'")
    e.add_argument("--gamma", type=float, help="override the telegraph rate for the reference")
    e.add_argument("--omega", type=float, help="override the telegraph strength for the reference")
    e.add_argument("-o", "--output", default="report.csv")
    e.set_defaults(func=cmd_evolve)

    st = sub.add_parser("stats", help="autocorrelation and PSD of an ensemble")
    st.add_argument("ensemble")
    st.add_argument("--max-lag", type=int, default=None)
    st.add_argument("--outdir", default=".")
    st.set_defaults(func=cmd_stats)

    v = sub.add_parser("validate", help="noise-representation witness of an exact model")
    v.add_argument("--model")
    v.add_argument("--demo", choices=sorted(DEMOS))
    v.add_argument("--k", type=int, default=3)
    v.add_argument("--dt", type=float, default=0.5)
    v.add_argument("--t0", type=float, default=0.0)
    v.add_argument("--budget", type=int, default=quasiprob.DEFAULT_BUDGET)
    v.set_defaults(func=cmd_validate)

    x = sub.add_parser("exact", help="closed-form telegraph dephasing coherence")
    x.add_argument("--gamma", type=float, default=1.0)
    x.add_argument("--omega", type=float, default=2.0)
    x.add_argument("--tmax", type=float, default=10.0)
    x.add_argument("--points", type=int, default=101)
    x.add_argument("-o", "--output")
    x.set_defaults(func=cmd_exact)
    return p


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{known.config}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise FormatError(f"{known.config}: config must be a JSON object")
    defaults = {key.replace("-", "_"): val for key, val in cfg.items()}
    for action in parser._subparsers._group_actions:
        for subparser in action.choices.values():
            subparser.set_defaults(**defaults)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except FormatError as exc:
        print(f"FormatError: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"IoError: {exc}", file=sys.stderr)
        return 2
    except NoiseLoomError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
