"""Command-line entry point: deconvolve, lr, regress, h2, diagnose."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .flags import version_profile
from .genotype_space import genotype_pdf_tsv
from .harness import (diagnose_case, emit_scatter, errors_csv, h2_battery, load_case_file,
                      load_manifest, run_case, run_regression)
from .lr_engine import HpdConfig, ThetaSpec, hpd_interval, log10_report
from .mcmc import McmcConfig


def _mcmc_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--post-burn", type=int, default=50_000)


def _mcmc(args) -> McmcConfig:
    return McmcConfig(burn_in=args.burn_in, post_burn=args.post_burn, chains=args.chains,
                      seed=args.seed)


def _write(path, text) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _summary_json(lr) -> str:
    s = lr.summary
    out = {
        "per_population_log10": {k: f"{log10_report(v):.4g}" for k, v in s["per_population"].items()},
        "stratified_sub_source": f"{s['stratified']:.3E}",
        "stratified_log10": f"{lr.log10:.4g}",
        "minimum_log10": f"{log10_report(s['minimum']):.4g}",
    }
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def cmd_deconvolve(args) -> int:
    loaded = load_case_file(args.case).load()
    flags = version_profile(args.config)
    run = run_case(loaded, flags, _mcmc(args), args.seed)
    result = run.deconvolution
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "report.json"), result.report_json())
        for locus, lw in result.weights.items():
            _write(os.path.join(args.out, f"{locus}.pdf.tsv"), genotype_pdf_tsv(lw, result.noc))
    else:
        _write(None, result.report_json())
    return 0


def cmd_lr(args) -> int:
    loaded = load_case_file(args.case).load()
    if args.poi:
        loaded.case = replace(loaded.case, poi=args.poi)
        if args.poi not in loaded.references:
            raise SystemExit(f"reference {args.poi!r} not in the case references")
    if args.theta is not None:
        loaded.case = replace(loaded.case, theta=args.theta)
    flags = version_profile(args.config)
    run = run_case(loaded, flags, _mcmc(args), args.seed)
    text = "".join(f"# population {pop}\n{rep.to_csv()}" for pop, rep in run.lr.reports.items())
    summary = _summary_json(run.lr)
    if args.hpd:
        lower, point, upper = hpd_interval(
            run.deconvolution.weights, list(loaded.evidence.loci), loaded.propositions(),
            loaded.freqs, ThetaSpec(loaded.case.theta), HpdConfig(n_samples=args.hpd,
                                                                   cap=flags.hpd_cap,
                                                                   seed=args.seed),
            chain_weights=run.deconvolution.chain_weights, populations=loaded.populations)
        data = json.loads(summary)
        data["hpd_log10"] = {"lower": f"{lower:.4g}", "point": f"{point:.4g}",
                             "upper": f"{upper:.4g}"}
        summary = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "lr.csv"), text)
        _write(os.path.join(args.out, "summary.json"), summary)
    else:
        _write(None, text + summary)
    return 0


def cmd_regress(args) -> int:
    cases = load_manifest(args.manifest)
    a, b = version_profile(args.config_a), version_profile(args.config_b)
    report = run_regression(cases, a, b, args.seed, _mcmc(args), workers=args.workers,
                            tolerance_eq=args.tolerance)
    os.makedirs(args.out, exist_ok=True)
    emit_scatter(report, os.path.join(args.out, "scatter.csv"),
                 os.path.join(args.out, "bands.dat"))
    _write(os.path.join(args.out, "errors.csv"), errors_csv(report))
    meta = {"config_a": a.to_dict(), "config_b": b.to_dict(), "summary": report.summary()}
    _write(os.path.join(args.out, "summary.json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if args.diagnose != "none":
        by_id = {c.case_id: c for c in cases}
        wanted = report.divergent() if args.diagnose == "divergent" else list(report.runs)
        for cid in wanted:
            diag = diagnose_case(by_id[cid].load(), a, b, _mcmc(args), args.seed,
                                 args.tolerance, runs=report.runs[cid])
            diag.write(os.path.join(args.out, "diagnostics", cid))
    s = report.summary()
    print(f"on_line={s['on_line']} within_band={s['within_band']} "
          f"divergent={s['divergent']} errors={s['errors']}")
    for o in report.errors:
        print(f"error {o.case_id}: {o.error}", file=sys.stderr)
    return 1 if report.errors else 0


def cmd_h2(args) -> int:
    loaded = load_case_file(args.case).load()
    flags = version_profile(args.config)
    values = h2_battery(loaded, args.n, flags, _mcmc(args), args.seed)
    text = "non_donor,log10lr\n" + "".join(f"ND{i + 1},{v:.4g}\n" for i, v in enumerate(values))
    _write(args.out, text)
    return 0


def cmd_diagnose(args) -> int:
    loaded = load_case_file(args.case).load()
    diag = diagnose_case(loaded, version_profile(args.config_a), version_profile(args.config_b),
                         _mcmc(args), args.seed)
    for path in diag.write(args.out):
        print(path)
    print(f"max |delta log10 LR| locus: {diag.max_locus}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deconvolve", help="run the MCMC and write genotype weights")
    p.add_argument("case")
    p.add_argument("--config", default="v2.9-like")
    p.add_argument("--out")
    _mcmc_args(p)
    p.set_defaults(func=cmd_deconvolve)

    p = sub.add_parser("lr", help="LR for a person of interest")
    p.add_argument("case")
    p.add_argument("--poi")
    p.add_argument("--config", default="v2.9-like")
    p.add_argument("--theta", type=float)
    p.add_argument("--hpd", type=int, default=0, help="number of HPD resamples (0 = point only)")
    p.add_argument("--out")
    _mcmc_args(p)
    p.set_defaults(func=cmd_lr)

    p = sub.add_parser("regress", help="compare two profiles over a manifest of cases")
    p.add_argument("manifest")
    p.add_argument("--config-a", required=True)
    p.add_argument("--config-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tolerance", type=float, default=0.1)
    p.add_argument("--diagnose", choices=("divergent", "all", "none"), default="divergent")
    _mcmc_args(p)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("h2", help="LRs for random non-donors")
    p.add_argument("case")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--config", default="v2.9-like")
    p.add_argument("--out")
    _mcmc_args(p)
    p.set_defaults(func=cmd_h2)

    p = sub.add_parser("diagnose", help="per-locus comparison of two profiles")
    p.add_argument("case")
    p.add_argument("--config-a", default="v2.5-like")
    p.add_argument("--config-b", default="v2.9-like")
    p.add_argument("--out", default="diagnostics")
    _mcmc_args(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"pgreg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
