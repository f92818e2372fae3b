"""Command-line front end.

::

    securedoc run --case 3 --out results/
    securedoc run --scenario my.yaml [--case 1|2|3] [--dt 0.001] [--out DIR]
    securedoc check --scenario my.yaml
    securedoc acceptance

``run`` writes ``trace.csv``, ``report.txt`` and, unless ``--no-plots`` is
given, three SVG figures.  Its exit code is 0 exactly when the run reached
the horizon.  ``check`` validates a scenario without running it and exits
with 2, naming the violated invariant, when it is invalid.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .cyber import consensus_optimum
from .graph import components, laplacian, prune
from .scenario import PRESETS, build_scenario, deep_merge, load_document
from .sim import ScenarioConfig, ScenarioError, Trace, run
from .traceio import write_csv

EXIT_OK, EXIT_RUN_FAILED, EXIT_BAD_CONFIG = 0, 1, 2


@dataclass
class RunReport:
    """Summary of a finished run, taken from the last recorded sample.

    Attributes
    ----------
    outputs : ndarray, shape (N, m)
        Final physical outputs ``x1``.
    targets : ndarray, shape (N, m)
        Optimum of the problem of the healthy component a node belongs to,
        or ``y_s`` for flagged nodes.
    errors : ndarray, shape (N,)
        Max-component distance of each output from its target.
    consensus : float
        ``||L_H y_H||`` over the healthy subgraph.
    """

    name: str
    status: str
    message: str
    t_end: float
    horizon: float
    outputs: np.ndarray
    targets: np.ndarray
    errors: np.ndarray
    consensus: float
    t_detect: List[Optional[float]]
    flags: np.ndarray
    max_ratio: np.ndarray
    wall: float
    warnings: List[str] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.status == "ok" and self.t_end >= self.horizon - 1e-9

    @classmethod
    def from_trace(cls, cfg: ScenarioConfig, tr: Trace) -> "RunReport":
        y = tr.positions()[-1]
        flags = tr["flag"][-1, :, 0] > 0.5
        healthy = np.flatnonzero(~flags)
        targets = np.full_like(y, np.nan)
        gh = prune(cfg.graph, np.flatnonzero(flags)) if flags.any() and healthy.size else cfg.graph
        # a quarantine may split the healthy nodes; each part has its own optimum
        for comp in (components(gh) if healthy.size else []):
            idx = healthy[comp]
            targets[idx] = consensus_optimum([cfg.nodes[j].objective for j in idx])
        if flags.any() and cfg.security is not None:
            ys = np.broadcast_to(cfg.security.y_s, y.shape)
            targets[flags] = ys[flags]
        errors = np.abs(y - targets).max(axis=1)
        cons = float(np.linalg.norm(laplacian(gh) @ y[healthy])) if healthy.size else 0.0
        return cls(cfg.name, tr.status, tr.message, float(tr.t_end), float(cfg.horizon), y,
                   targets, errors, cons, list(tr.t_detect), flags,
                   np.asarray(tr.max_ratio), float(tr.wall), list(tr.warnings))

    def to_text(self) -> str:
        fmt = lambda a: "(" + ", ".join(f"{v:.4f}" for v in a) + ")"
        lines = [f"scenario: {self.name}",
                 f"status: {self.status}" + (f" - {self.message}" if self.message else ""),
                 f"simulated: {self.t_end:.4g} s of {self.horizon:.4g} s "
                 f"({'completed' if self.completed else 'incomplete'})",
                 f"wall clock: {self.wall:.2f} s",
                 f"consensus residual ||L_H y_H||: {self.consensus:.3e}",
                 "nodes:"]
        for j in range(len(self.outputs)):
            td = self.t_detect[j]
            lines.append(f"  {j + 1}: y = {fmt(self.outputs[j])}  target = {fmt(self.targets[j])}  "
                         f"error = {self.errors[j]:.4f}  "
                         f"T_d = {'-' if td is None else f'{td:.4f} s'}  "
                         f"flag = {int(self.flags[j])}  max |z1|/delta = {self.max_ratio[j]:.3f}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines) + "\n"


# -- plots -------------------------------------------------------------------

def write_plots(tr: Trace, out: Path) -> List[Path]:
    """SVG line plots of outputs and inputs, plus residuals against their thresholds."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    N = tr.n_nodes
    y = tr.positions()
    m = y.shape[-1]
    paths = []

    fig, axes = plt.subplots(m, 1, figsize=(7, 1.8 * m + 1), sharex=True, squeeze=False)
    for s in range(m):
        ax = axes[s, 0]
        for j in range(N):
            ax.plot(tr.t, y[:, j, s], lw=1, label=f"node {j + 1}")
        ax.set_ylabel(f"y[{s}]")
    axes[0, 0].legend(fontsize=7, ncol=N)
    axes[-1, 0].set_xlabel("t (s)")
    fig.tight_layout()
    paths.append(out / "outputs.svg")
    fig.savefig(paths[-1])
    plt.close(fig)

    fig, axes = plt.subplots(N, 2, figsize=(9, 1.8 * N + 1), sharex=True, squeeze=False)
    for j in range(N):
        for c, (e, th) in enumerate((("e_r", "thr_r"), ("e_v", "thr_v"))):
            ax = axes[j, c]
            ax.semilogy(tr.t, np.linalg.norm(tr[e][:, j], axis=1) + 1e-16, lw=1, label=f"||{e}||")
            ax.semilogy(tr.t, tr[th][:, j, 0], "--", lw=1, label=th)
            ax.set_ylabel(f"node {j + 1}")
    axes[0, 0].legend(fontsize=7)
    axes[0, 1].legend(fontsize=7)
    for ax in axes[-1]:
        ax.set_xlabel("t (s)")
    fig.tight_layout()
    paths.append(out / "residuals.svg")
    fig.savefig(paths[-1])
    plt.close(fig)

    u = tr["u_I"] + tr["u_O"]
    fig, axes = plt.subplots(m, 1, figsize=(7, 1.8 * m + 1), sharex=True, squeeze=False)
    for s in range(m):
        for j in range(N):
            axes[s, 0].plot(tr.t, u[:, j, s], lw=1, label=f"node {j + 1}")
        axes[s, 0].set_ylabel(f"u[{s}]")
    axes[0, 0].legend(fontsize=7, ncol=N)
    axes[-1, 0].set_xlabel("t (s)")
    fig.tight_layout()
    paths.append(out / "inputs.svg")
    fig.savefig(paths[-1])
    plt.close(fig)
    return paths


# -- commands ---------------------------------------------------------------

def _document(args) -> dict:
    doc = {}
    if args.case is not None:
        doc = {"preset": f"rov-case{args.case}"}
    if args.scenario:
        doc = deep_merge(doc, load_document(args.scenario))
    if not doc:
        raise ScenarioError("give --scenario and/or --case")
    if getattr(args, "dt", None) is not None:
        doc["dt"] = args.dt
    if getattr(args, "horizon", None) is not None:
        doc["horizon"] = args.horizon
    if getattr(args, "stride", None) is not None:
        doc["record_stride"] = args.stride
    return doc


def _config(args) -> ScenarioConfig:
    cfg = build_scenario(_document(args))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cfg.validate()
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _config(args)
    except (ScenarioError, ValueError, TypeError, KeyError) as e:
        print(f"error: invalid scenario: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tr = run(cfg, validate=False)
    rep = RunReport.from_trace(cfg, tr)
    write_csv(tr, out / "trace.csv")
    (out / "report.txt").write_text(rep.to_text())
    if not args.no_plots:
        write_plots(tr, out)
    sys.stdout.write(rep.to_text())
    return EXIT_OK if rep.completed else EXIT_RUN_FAILED


def cmd_check(args) -> int:
    try:
        cfg = _config(args)
    except (ScenarioError, ValueError, TypeError, KeyError) as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    print(f"ok: {cfg.name} ({cfg.n_nodes} nodes, eta = {cfg.eta}, dt = {cfg.dt}, "
          f"horizon = {cfg.horizon})")
    return EXIT_OK


def cmd_acceptance(args) -> int:
    from .acceptance import RunCache, run_all

    seeds = range(args.generic) if args.generic is not None else None
    cache = RunCache() if seeds is None else RunCache(seeds)
    results = run_all(cache, echo=lambda s: print(s, flush=True))
    failed = [r.key for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_OK if not failed else EXIT_RUN_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="securedoc", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_args(p, dt=True):
        p.add_argument("--scenario", help="YAML scenario file")
        p.add_argument("--case", type=int, choices=(1, 2, 3),
                       help="vehicle rendezvous preset (the scenario file overrides it)")
        if dt:
            p.add_argument("--dt", type=float, help="integration step (s)")
            p.add_argument("--horizon", type=float, help="final time (s)")
            p.add_argument("--stride", type=int, help="record every k-th step")

    p = sub.add_parser("run", help="simulate a scenario")
    scenario_args(p)
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--no-plots", action="store_true", help="skip the SVG figures")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="validate a scenario without running it")
    scenario_args(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("acceptance", help="run the acceptance suite")
    p.add_argument("--generic", type=int, help="number of random generic scenarios (default 20)")
    p.set_defaults(func=cmd_acceptance)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["RunReport", "main", "build_parser", "write_plots", "PRESETS"]
