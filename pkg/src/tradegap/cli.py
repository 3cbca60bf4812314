"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 invalid model,
3 certificate not confirmed (or a lemma check failed).
"""
from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .approximation import ensemble_grid, measure_convergence
from .certification import (CertificateReport, best_mu_example1, certify_example1, event_probability,
                            example2_certificate, format_value, lemma1_verify, lemma2_verify, lemma3_verify)
from .config import build_model, dump_config, load_config, run_id
from .economy import solve_equilibrium, validate_model
from .errors import ConfigError, DomainError, ModelValidityError
from .mathkit import RNG_ALGORITHM, generate_paths

log = logging.getLogger("tradegap")

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_CERTIFICATE = 0, 1, 2, 3


class Run:
    """Output directory and report writer for one invocation."""

    def __init__(self, cfg: dict, name: str, out: str | None, rid: str | None):
        self.cfg = cfg
        self.name = name
        self.id = rid or run_id(cfg, name)
        base = Path(out or cfg["output"]["dir"])
        self.dir = base / f"{name}-{self.id}"
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from None
        self.figures = bool(cfg["output"]["figures"])
        self.sections: list[str] = []

    def section(self, title: str, body: str):
        self.sections.append(f"{title}\n{'-' * len(title)}\n{body.rstrip()}\n")

    def write(self, filename: str, text: str) -> Path:
        path = self.dir / filename
        path.write_text(text)
        return path

    def finish(self) -> Path:
        head = (f"tradegap {self.name} report\nrun id: {self.id}\nrng: {RNG_ALGORITHM}\n\n"
                f"resolved configuration\n----------------------\n{dump_config(self.cfg)}\n")
        return self.write("report.txt", head + "\n".join(self.sections))


def keyvalue(pairs) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in pairs)


def _model(cfg: dict, asset=None):
    model = build_model(cfg, asset)
    validate_model(model)
    return model


def cmd_equilibrium(cfg: dict, run: Run) -> int:
    model = _model(cfg)
    eq = solve_equilibrium(model, tol=cfg["equilibrium"]["tol"])
    pairs = [("gamma", eq.gamma), ("a", eq.a), ("a0", eq.a0), ("state_price", eq.state_price),
             ("foc_residual", eq.foc_residual), ("budget_residual_1", eq.budget_residuals[0]),
             ("budget_residual_2", eq.budget_residuals[1]), ("closed_form_a", (1 + eq.gamma) / 2)]
    text = keyvalue(pairs)
    print(text, end="")
    run.write("equilibrium.kv", text)
    run.section("equilibrium", text + f"normalization: {eq.state_price_normalization}\n")
    if run.figures:
        from .plotting import plot_equilibrium
        plot_equilibrium(model, eq, run.dir / "equilibrium.png")
    return EXIT_OK


def _verdict_code(report: CertificateReport) -> int:
    if report.verdict == "gap_confirmed":
        return EXIT_OK
    log.error("certificate verdict: %s", report.verdict)
    return EXIT_CERTIFICATE


def cmd_certify_example1(cfg: dict, run: Run) -> int:
    p = cfg["certify"]["example1"]
    model = _model(cfg)
    eq = solve_equilibrium(model, tol=cfg["equilibrium"]["tol"])
    report, results = certify_example1(model, eq, p["mu"], t_star=p["t_star_fraction"] * model.T,
                                       cells=tuple(p["cells"]), budget=p["budget"], seeds=p["seeds"],
                                       diagnostic_cells=p["diagnostic_cells"])
    if p["mu_sweep"]:
        mu_best, eps_best = best_mu_example1(model, eq)
        report.extras["mu_maximizing_gap"] = mu_best
        report.extras["epsilon_star_at_best_mu"] = eps_best
    print(f"epsilon_star = {report.epsilon_star:.6f}  best feasible distance = {report.best_feasible_distance:.6f}  "
          f"verdict = {report.verdict}")
    run.write("example1.kv", report.to_keyvalue())
    run.section("example 1 certificate", report.to_text("constants and search"))
    if report.verdict == "gap_violated":
        rows = ["cells,distance"] + [f"{L},{d!r}" for L, r in results.items() for d in r.log_distances.tolist()]
        run.write("search_log.csv", "\n".join(rows) + "\n")
    if run.figures:
        from .plotting import plot_search
        plot_search({L: r.min_logged_distance for L, r in results.items()}, report.epsilon_star,
                    report.extras["diagnostic_distance"], run.dir / "example1_search.png")
    return _verdict_code(report)


def cmd_certify_example2(cfg: dict, run: Run) -> int:
    p = cfg["certify"]["example2"]
    model = _model(cfg, p["asset"])
    eq = solve_equilibrium(model, tol=cfg["equilibrium"]["tol"])
    t_grid = np.linspace(0.0, model.T, p["t_grid_points"])
    try:
        report, info = example2_certificate(model, eq, p["mu"], t_grid=t_grid, partition_leads=p["partition_leads"],
                                            max_cells=p["max_cells"], budget=p["budget"], seed=p["seed"])
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    print(f"printed bound = {report.extras['printed_bound']:.6f}  min conditional distance^2 = "
          f"{report.extras['min_conditional_distance2']:.6f}  verdict = {report.verdict}")
    run.write("example2.kv", report.to_keyvalue())
    run.section("example 2 certificate", report.to_text("conditional constants and search"))
    if report.verdict == "gap_violated":
        rows = ["partition_time,distance"]
        for d, res, _ in info["results"]:
            rows += [f"{res.best.t_star!r},{x!r}" for x in res.log_distances.tolist()]
        run.write("search_log.csv", "\n".join(rows) + "\n")
    if run.figures:
        from .plotting import plot_event_probability
        ts = t_grid[t_grid > 0]
        probs = [event_probability(report.lambda1, report.lambda2, float(t)) for t in ts]
        plot_event_probability(ts, probs, report.extras["t_star"], report.prob_F, run.dir / "example2_event.png")
    return _verdict_code(report)


def cmd_certify_lemmas(cfg: dict, run: Run) -> int:
    p = cfg["certify"]["lemmas"]
    base = _model(cfg)
    convex = build_model(cfg, p["asset"])
    t_grid = np.linspace(0.0, base.T, p["t_grid_points"])
    l1 = lemma1_verify(base, p["epsilon"], t_grid=t_grid)
    try:
        l2 = lemma2_verify(convex)
        l3 = [lemma3_verify(convex, e) for e in p["lemma3_epsilons"]]
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    ok1 = l1.t_witness < base.T and l1.sup_deviation < p["epsilon"]
    ok2 = l2.min_slack >= -1e-9
    ok3 = all(r.max_equal < e and r.max_below < e for r, e in zip(l3, p["lemma3_epsilons"]))
    pairs = [("lemma1_epsilon", p["epsilon"]), ("lemma1_t_witness", l1.t_witness),
             ("lemma1_sup_deviation", l1.sup_deviation), ("lemma1_monotone", l1.monotone), ("lemma1_pass", ok1),
             ("lemma2_min_slack", l2.min_slack), ("lemma2_pass", ok2)]
    for r, e in zip(l3, p["lemma3_epsilons"]):
        pairs += [(f"lemma3_eps_{e:g}_c_witness", r.c_witness), (f"lemma3_eps_{e:g}_c_sup", r.c_sup),
                  (f"lemma3_eps_{e:g}_max_equal", r.max_equal), (f"lemma3_eps_{e:g}_max_below", r.max_below)]
    pairs.append(("lemma3_pass", ok3))
    text = keyvalue(pairs)
    print(f"t(eps) = {l1.t_witness:g}  " + "  ".join(f"c({e:g}) = {r.c_witness:.6g}" for r, e in zip(l3, p["lemma3_epsilons"])))
    run.write("lemmas.kv", text)
    run.section("lemma checks", text)
    if run.figures:
        from .plotting import plot_deviation
        keep = l1.deviations > 0
        plot_deviation(l1.t_grid[keep], l1.deviations[keep], p["epsilon"], l1.t_witness, run.dir / "lemma1_deviation.png")
    if ok1 and ok2 and ok3:
        return EXIT_OK
    log.error("lemma checks failed: lemma1=%s lemma2=%s lemma3=%s", ok1, ok2, ok3)
    return EXIT_CERTIFICATE


def cmd_hedge(cfg: dict, run: Run) -> int:
    p = cfg["hedge"]
    model = _model(cfg)
    eq = solve_equilibrium(model, tol=cfg["equilibrium"]["tol"])
    grid = ensemble_grid(p["Ns"], p["scheme"], model.T)
    ensemble = generate_paths(model.T, grid, p["n_paths"], p["seed"])
    table = measure_convergence(model, eq, p["Ns"], ensemble, p["scheme"])
    lines = []
    for r in table.rows:
        line = (f"N={r.N:<5d} l2_error={r.l2_error:.6f} viol_prob={r.viol_prob:.6f} "
                f"worst_viol={r.worst_viol:.6f} mean_viol={r.mean_viol:.3e} self_financing_residual={r.self_financing_residual:.1e}")
        print(line)
        lines.append(line)
    run.write("convergence.csv", table.to_csv())
    slope = table.loglog_slope()
    run.section("hedging convergence", "\n".join(lines) + f"\nlog-log slope of l2_error: {format_value(slope) if not math.isnan(slope) else 'n/a'}\n")
    if run.figures:
        from .plotting import plot_convergence
        plot_convergence(table, run.dir / "convergence.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file (defaults are built in)")
    common.add_argument("--out", help="output directory (default: output.dir from the config)")
    common.add_argument("--seed", type=int, help="override the seed(s) of the command")
    common.add_argument("--budget", type=int, help="override search budgets")
    common.add_argument("--run-id", help="name the run directory instead of hashing the configuration")
    common.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tradegap", description="Gap certificates and hedging experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("equilibrium", parents=[common], help="solve the Walrasian equilibrium")
    cert = sub.add_parser("certify", parents=[common], help="run a certificate")
    cert.add_argument("which", choices=("example1", "example2", "lemmas"))
    hedge = sub.add_parser("hedge", parents=[common], help="discrete hedging convergence table")
    hedge.add_argument("--ns", help="comma-separated rebalance counts, e.g. 1,4,16")
    return parser


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        e1 = cfg["certify"]["example1"]
        e1["seeds"] = [args.seed + i for i in range(len(e1["seeds"]))]
        cfg["certify"]["example2"]["seed"] = args.seed
        cfg["hedge"]["seed"] = args.seed
    if args.budget is not None:
        if args.budget < 1:
            raise ConfigError("--budget must be positive")
        cfg["certify"]["example1"]["budget"] = args.budget
        cfg["certify"]["example2"]["budget"] = args.budget
    if getattr(args, "ns", None):
        try:
            cfg["hedge"]["Ns"] = [int(v) for v in args.ns.split(",")]
        except ValueError:
            raise ConfigError(f"--ns must be comma-separated integers, got {args.ns!r}") from None
    if args.no_figures:
        cfg["output"]["figures"] = False
    if args.out:
        cfg["output"]["dir"] = args.out
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        from .config import validate
        cfg = _apply_overrides(load_config(args.config), args)
        validate(cfg)
        name = args.command if args.command != "certify" else f"certify-{args.which}"
        run = Run(cfg, name, cfg["output"]["dir"], args.run_id)
        if args.command == "equilibrium":
            code = cmd_equilibrium(cfg, run)
        elif args.command == "hedge":
            code = cmd_hedge(cfg, run)
        else:
            code = {"example1": cmd_certify_example1, "example2": cmd_certify_example2,
                    "lemmas": cmd_certify_lemmas}[args.which](cfg, run)
        path = run.finish()
        log.info("report written to %s", path)
        print(f"report: {path}")
        return code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelValidityError as exc:
        print(f"invalid model: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
